//! Recall, mean absolute error and paired comparisons between runs.

use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::records::{ResultsFile, Status};

pub const DEFAULT_THRESHOLD_DEG: f64 = 10.0;

/// Normal quantile for a two-sided 95 % interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    /// Fraction of errors strictly below the threshold.
    pub recall: f64,
    pub mae: f64,
    /// Half-width of the normal-approximation 95 % interval of the MAE.
    pub mae_ci95: f64,
    pub n: usize,
}

fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * var.sqrt() / n.sqrt())
}

pub fn summarize(errors: &[f64], threshold_deg: f64) -> Result<EvalSummary> {
    if errors.is_empty() {
        return Err(Error::Empty("no errors to summarize".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(0.0..=180.0).contains(*e)) {
        return Err(Error::OutOfRange(format!("angular error {e} outside [0, 180]")));
    }
    let hits = errors.iter().filter(|&&e| e < threshold_deg).count();
    let (mae, mae_ci95) = mean_and_half_width(errors);
    Ok(EvalSummary {
        recall: hits as f64 / errors.len() as f64,
        mae,
        mae_ci95,
        n: errors.len(),
    })
}

/// Exact two-sided McNemar test on paired hit indicators.
pub fn mcnemar(hits_a: &[bool], hits_b: &[bool]) -> Result<f64> {
    if hits_a.len() != hits_b.len() {
        return Err(Error::LengthMismatch {
            left: hits_a.len(),
            right: hits_b.len(),
        });
    }
    let b = hits_a.iter().zip(hits_b).filter(|(a, b)| **a && !**b).count() as u64;
    let c = hits_a.iter().zip(hits_b).filter(|(a, b)| !**a && **b).count() as u64;
    mcnemar_counts(b, c)
}

/// Exact McNemar p-value from the discordant counts.
pub fn mcnemar_counts(b: u64, c: u64) -> Result<f64> {
    let n = b + c;
    if n == 0 {
        return Ok(1.0);
    }
    let dist = Binomial::new(0.5, n).map_err(|e| Error::Precondition(format!("binomial: {e}")))?;
    let (lo, hi) = (b.min(c), b.max(c));
    let lower = dist.cdf(lo);
    let upper = if hi == 0 { 1.0 } else { dist.sf(hi - 1) };
    Ok((lower + upper).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDifference {
    /// Mean of `a - b`.
    pub mean: f64,
    pub ci95: f64,
}

impl PairedDifference {
    pub fn significant(&self) -> bool {
        self.mean.abs() > self.ci95
    }
}

pub fn paired_mae_ci(errors_a: &[f64], errors_b: &[f64]) -> Result<PairedDifference> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::LengthMismatch {
            left: errors_a.len(),
            right: errors_b.len(),
        });
    }
    if errors_a.is_empty() {
        return Err(Error::Empty("no paired errors".into()));
    }
    let diffs: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let (mean, ci95) = mean_and_half_width(&diffs);
    Ok(PairedDifference { mean, ci95 })
}

/// One results file in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub summary: EvalSummary,
    /// Rows that failed and are excluded.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Samples present and successful in both runs.
    pub n: usize,
    pub recall_a: f64,
    pub recall_b: f64,
    pub mcnemar_p: f64,
    /// MAE of `a` minus MAE of `b` over the paired samples.
    pub mae_difference: PairedDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub threshold_deg: f64,
    pub rows: Vec<ReportRow>,
    pub comparisons: Vec<Comparison>,
}

fn successful(r: &ResultsFile) -> Vec<(&str, f64)> {
    r.rows
        .iter()
        .filter(|row| row.status == Status::Ok)
        .map(|row| (row.id.as_str(), row.error_deg))
        .collect()
}

/// Summaries of every run and all pairwise comparisons on shared ids.
pub fn build_report(runs: &[(String, ResultsFile)], threshold_deg: f64) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::Empty("no results files".into()));
    }
    let mut rows = Vec::new();
    for (name, r) in runs {
        let ok = successful(r);
        let errors: Vec<f64> = ok.iter().map(|(_, e)| *e).collect();
        let summary = summarize(&errors, threshold_deg).map_err(|e| Error::Precondition(format!("{name}: {e}")))?;
        rows.push(ReportRow {
            name: name.clone(),
            summary,
            failed: r.rows.len() - ok.len(),
        });
    }
    let mut comparisons = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let (na, ra) = &runs[i];
            let (nb, rb) = &runs[j];
            let b_errors: std::collections::HashMap<&str, f64> = successful(rb).into_iter().collect();
            let pairs: Vec<(f64, f64)> = successful(ra)
                .into_iter()
                .filter_map(|(id, ea)| b_errors.get(id).map(|&eb| (ea, eb)))
                .collect();
            if pairs.is_empty() {
                return Err(Error::Precondition(format!(
                    "{na} and {nb} share no successful sample ids"
                )));
            }
            let ea: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let eb: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ha: Vec<bool> = ea.iter().map(|&e| e < threshold_deg).collect();
            let hb: Vec<bool> = eb.iter().map(|&e| e < threshold_deg).collect();
            let frac = |h: &[bool]| h.iter().filter(|&&x| x).count() as f64 / h.len() as f64;
            comparisons.push(Comparison {
                a: na.clone(),
                b: nb.clone(),
                n: pairs.len(),
                recall_a: frac(&ha),
                recall_b: frac(&hb),
                mcnemar_p: mcnemar(&ha, &hb)?,
                mae_difference: paired_mae_ci(&ea, &eb)?,
            });
        }
    }
    Ok(Report {
        threshold_deg,
        rows,
        comparisons,
    })
}

impl Comparison {
    /// The same comparison with the roles of `a` and `b` exchanged.
    pub fn swapped(&self) -> Comparison {
        Comparison {
            a: self.b.clone(),
            b: self.a.clone(),
            n: self.n,
            recall_a: self.recall_b,
            recall_b: self.recall_a,
            mcnemar_p: self.mcnemar_p,
            mae_difference: PairedDifference {
                mean: -self.mae_difference.mean,
                ci95: self.mae_difference.ci95,
            },
        }
    }
}

/// Minimum recall advantage of the naive run, as a fraction.
pub const TREND_RECALL_GAP: f64 = 0.10;
/// Minimum MAE advantage of the naive run, in degrees.
pub const TREND_MAE_GAP_DEG: f64 = 4.0;
pub const TREND_SIGNIFICANCE: f64 = 0.05;
/// Admissible recall of the naive run.
pub const TREND_NAIVE_RECALL: (f64, f64) = (0.60, 0.90);

/// Expected ordering between a naive-mode run and an advanced-mode run:
/// the naive data are easier for the estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub naive: String,
    pub advanced: String,
    pub recall_gap: f64,
    pub mcnemar_p: f64,
    /// MAE(advanced) - MAE(naive).
    pub mae_gap: f64,
    pub mae_gap_ci95: f64,
    pub naive_recall: f64,
    pub recall_ok: bool,
    pub mae_ok: bool,
    pub naive_recall_ok: bool,
}

impl TrendCheck {
    pub fn passed(&self) -> bool {
        self.recall_ok && self.mae_ok && self.naive_recall_ok
    }
}

/// Evaluate the trend on a comparison whose `a` run is naive and `b` run is
/// advanced.
pub fn trend_check(c: &Comparison) -> TrendCheck {
    let recall_gap = c.recall_a - c.recall_b;
    let mae_gap = -c.mae_difference.mean;
    let ci = c.mae_difference.ci95;
    TrendCheck {
        naive: c.a.clone(),
        advanced: c.b.clone(),
        recall_gap,
        mcnemar_p: c.mcnemar_p,
        mae_gap,
        mae_gap_ci95: ci,
        naive_recall: c.recall_a,
        recall_ok: recall_gap >= TREND_RECALL_GAP && c.mcnemar_p < TREND_SIGNIFICANCE,
        mae_ok: mae_gap >= TREND_MAE_GAP_DEG && c.mae_difference.significant(),
        naive_recall_ok: (TREND_NAIVE_RECALL.0..=TREND_NAIVE_RECALL.1).contains(&c.recall_a),
    }
}

/// One line per trend condition.
pub fn render_trend(t: &TrendCheck) -> String {
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut out = String::new();
    let _ = writeln!(out, "trend {} (naive) vs {} (advanced)", t.naive, t.advanced);
    let _ = writeln!(
        out,
        "  {} recall gap {:+.1} points (>= {:.0}), McNemar p={:.4} (< {})",
        mark(t.recall_ok),
        100.0 * t.recall_gap,
        100.0 * TREND_RECALL_GAP,
        t.mcnemar_p,
        TREND_SIGNIFICANCE
    );
    let _ = writeln!(
        out,
        "  {} MAE gap {:+.2} ± {:.2} deg (>= {}, CI excluding 0)",
        mark(t.mae_ok),
        t.mae_gap,
        t.mae_gap_ci95,
        TREND_MAE_GAP_DEG
    );
    let _ = writeln!(
        out,
        "  {} naive recall {:.1}% (within [{:.0}%, {:.0}%])",
        mark(t.naive_recall_ok),
        100.0 * t.naive_recall,
        100.0 * TREND_NAIVE_RECALL.0,
        100.0 * TREND_NAIVE_RECALL.1
    );
    out
}

/// Plain-text table: one row per run with Recall and MAE ± CI, then the
/// pairwise tests.
pub fn render_report(report: &Report) -> String {
    let width = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>9}  {:>16}  {:>6}",
        "run",
        "n",
        format!("Recall@{}", report.threshold_deg),
        "MAE (deg)",
        "failed"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>8.1}%  {:>7.2} ± {:<6.2}  {:>6}",
            r.name,
            r.summary.n,
            100.0 * r.summary.recall,
            r.summary.mae,
            r.summary.mae_ci95,
            r.failed
        );
    }
    if !report.comparisons.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "paired comparisons (a vs b on shared samples)");
        for c in &report.comparisons {
            let d = &c.mae_difference;
            let _ = writeln!(
                out,
                "{} vs {}: n={} recall {:.1}% vs {:.1}%, McNemar p={:.4}; MAE diff {:+.2} ± {:.2} deg ({})",
                c.a,
                c.b,
                c.n,
                100.0 * c.recall_a,
                100.0 * c.recall_b,
                c.mcnemar_p,
                d.mean,
                d.ci95,
                if d.significant() {
                    "significant"
                } else {
                    "not significant"
                }
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::ResultRow;

    fn comparison(recall_a: f64, recall_b: f64, p: f64, mean: f64, ci95: f64) -> Comparison {
        Comparison {
            a: "naive".into(),
            b: "advanced".into(),
            n: 200,
            recall_a,
            recall_b,
            mcnemar_p: p,
            mae_difference: PairedDifference { mean, ci95 },
        }
    }

    #[test]
    fn trend_conditions() {
        let t = trend_check(&comparison(0.75, 0.5, 0.001, -9.7, 3.0));
        assert!(t.passed());
        assert!((t.mae_gap - 9.7).abs() < 1e-12);
        assert!(!trend_check(&comparison(0.75, 0.7, 0.001, -9.7, 3.0)).recall_ok);
        assert!(!trend_check(&comparison(0.75, 0.5, 0.06, -9.7, 3.0)).recall_ok);
        assert!(!trend_check(&comparison(0.75, 0.5, 0.001, -3.9, 1.0)).mae_ok);
        assert!(!trend_check(&comparison(0.75, 0.5, 0.001, -5.0, 6.0)).mae_ok);
        assert!(!trend_check(&comparison(0.95, 0.5, 0.001, -9.7, 3.0)).naive_recall_ok);
        let back = comparison(0.75, 0.5, 0.001, -9.7, 3.0).swapped().swapped();
        assert_eq!(back, comparison(0.75, 0.5, 0.001, -9.7, 3.0));
    }

    #[test]
    fn summarize_small_example() {
        let s = summarize(&[5.0, 15.0, 8.0], 10.0).unwrap();
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.mae - 28.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.n, 3);
        let z = summarize(&[0.0; 7], 10.0).unwrap();
        assert_eq!((z.recall, z.mae, z.mae_ci95), (1.0, 0.0, 0.0));
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(summarize(&[10.0], 10.0).unwrap().recall, 0.0);
        assert_eq!(summarize(&[9.999], 10.0).unwrap().recall, 1.0);
    }

    #[test]
    fn summarize_rejects_bad_input() {
        assert!(matches!(summarize(&[], 10.0), Err(Error::Empty(_))));
        assert!(summarize(&[181.0], 10.0).is_err());
        assert!(summarize(&[f64::NAN], 10.0).is_err());
    }

    #[test]
    fn mcnemar_reference_values() {
        let a = vec![true, false, true, true];
        assert_eq!(mcnemar(&a, &a).unwrap(), 1.0);
        let p = mcnemar_counts(10, 0).unwrap();
        assert!((p - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert_eq!(mcnemar_counts(5, 5).unwrap(), 1.0);
        assert!(matches!(mcnemar(&[true], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn paired_difference_cases() {
        let a = [1.0, 4.0, 9.0, 2.0];
        let same = paired_mae_ci(&a, &a).unwrap();
        assert_eq!((same.mean, same.ci95), (0.0, 0.0));
        let b: Vec<f64> = a.iter().map(|v| v + 2.0).collect();
        let d = paired_mae_ci(&a, &b).unwrap();
        assert!((d.mean + 2.0).abs() < 1e-12 && d.ci95 < 1e-12);
        assert!(paired_mae_ci(&a, &b[..3]).is_err());
    }

    fn results(errors: &[f64]) -> ResultsFile {
        ResultsFile {
            header: vec![],
            rows: errors
                .iter()
                .enumerate()
                .map(|(i, &e)| ResultRow {
                    id: format!("{i:06}"),
                    doa_true: 90.0,
                    doa_hat: 90.0 + e,
                    error_deg: e,
                    status: Status::Ok,
                })
                .collect(),
        }
    }

    #[test]
    fn report_on_identical_runs() {
        let r = results(&[1.0, 20.0, 3.0, 40.0]);
        let rep = build_report(&[("x".into(), r.clone()), ("y".into(), r)], 10.0).unwrap();
        assert_eq!(rep.comparisons.len(), 1);
        assert_eq!(rep.comparisons[0].mcnemar_p, 1.0);
        assert_eq!(rep.comparisons[0].mae_difference.mean, 0.0);
        let text = render_report(&rep);
        assert!(text.contains("McNemar p=1.0000"));
    }

    #[test]
    fn report_on_one_run_has_no_tests() {
        let mut r = results(&[1.0, 2.0]);
        r.rows[1].status = Status::Error("missing".into());
        let rep = build_report(&[("only".into(), r)], 10.0).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].failed, 1);
        assert_eq!(rep.rows[0].summary.n, 1);
        assert!(rep.comparisons.is_empty());
    }
}
