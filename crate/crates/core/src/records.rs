//! Line-oriented dataset manifest and results files.
//!
//! Both formats share one layout: a magic line, `# key=value` provenance
//! lines, a `#fields` line naming the tab-separated columns, then one record
//! per line. Floats are written in shortest round-trip form.
//!
//! ```text
//! # ISMF-MAN v1
//! # profile=voicehome
//! #fields id  wav  fs  doa_true  snr_db  mode  scene_digest  seed  split
//! 000000  audio/000000.wav  16000  63.25  41.7  advanced  9f1c...  1234  train
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ism::SimulationMode;

pub const MANIFEST_MAGIC: &str = "# ISMF-MAN v1";
pub const RESULTS_MAGIC: &str = "# ISMF-RES v1";

pub const MANIFEST_FIELDS: [&str; 9] = [
    "id",
    "wav",
    "fs",
    "doa_true",
    "snr_db",
    "mode",
    "scene_digest",
    "seed",
    "split",
];
pub const RESULTS_FIELDS: [&str; 5] = ["id", "doa_true", "doa_hat", "error_deg", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub wav: String,
    pub fs: u32,
    pub doa_true: f64,
    /// Infinite when noise is disabled.
    pub snr_db: f64,
    pub mode: SimulationMode,
    pub scene_digest: String,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// Provenance `key=value` pairs in file order.
    pub header: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub id: String,
    pub doa_true: f64,
    /// NaN when the row failed.
    pub doa_hat: f64,
    pub error_deg: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsFile {
    pub header: Vec<(String, String)>,
    pub rows: Vec<ResultRow>,
}

impl ResultsFile {
    /// Header value for `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.header, key)
    }
}

impl Manifest {
    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.header, key)
    }
}

fn lookup<'a>(header: &'a [(String, String)], key: &str) -> Option<&'a str> {
    header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
        .collect()
}

fn write_header(out: &mut String, magic: &str, header: &[(String, String)], fields: &[&str]) {
    out.push_str(magic);
    out.push('\n');
    for (k, v) in header {
        let _ = writeln!(out, "# {}={}", sanitize(k), sanitize(v));
    }
    let _ = writeln!(out, "#fields {}", fields.join("\t"));
}

pub fn manifest_to_string(m: &Manifest) -> String {
    let mut out = String::new();
    write_header(&mut out, MANIFEST_MAGIC, &m.header, &MANIFEST_FIELDS);
    for e in &m.entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.id,
            e.wav,
            e.fs,
            fmt_f64(e.doa_true),
            fmt_f64(e.snr_db),
            e.mode,
            e.scene_digest,
            e.seed,
            e.split.as_str()
        );
    }
    out
}

pub fn results_to_string(r: &ResultsFile) -> String {
    let mut out = String::new();
    write_header(&mut out, RESULTS_MAGIC, &r.header, &RESULTS_FIELDS);
    for row in &r.rows {
        let status = match &row.status {
            Status::Ok => "ok".to_string(),
            Status::Error(msg) => format!("error:{}", sanitize(msg)),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.id,
            fmt_f64(row.doa_true),
            fmt_f64(row.doa_hat),
            fmt_f64(row.error_deg),
            status
        );
    }
    out
}

/// Header lines and data lines (with their 1-based line numbers).
type Sections<'a> = (Vec<(String, String)>, Vec<(usize, Vec<&'a str>)>);

fn split_sections<'a>(text: &'a str, magic: &str, fields: &[&str], path: Option<&Path>) -> Result<Sections<'a>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == magic => {}
        _ => return Err(Error::format(path, 1, format!("expected {magic:?}"))),
    }
    let mut header = Vec::new();
    let mut saw_fields = false;
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#fields") {
            let got: Vec<&str> = rest.trim().split('\t').collect();
            if got != fields {
                return Err(Error::format(
                    path,
                    n,
                    format!("expected fields {:?}, got {got:?}", fields),
                ));
            }
            saw_fields = true;
        } else if let Some(rest) = line.strip_prefix('#') {
            if saw_fields {
                continue;
            }
            let (k, v) = rest
                .trim_start()
                .split_once('=')
                .ok_or_else(|| Error::format(path, n, "header line is not key=value"))?;
            header.push((k.to_string(), v.to_string()));
        } else {
            if !saw_fields {
                return Err(Error::format(path, n, "record before #fields line"));
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != fields.len() {
                return Err(Error::format(
                    path,
                    n,
                    format!("expected {} fields, got {}", fields.len(), cols.len()),
                ));
            }
            rows.push((n, cols));
        }
    }
    if !saw_fields {
        return Err(Error::format(path, text.lines().count().max(1), "missing #fields line"));
    }
    Ok((header, rows))
}

fn parse_f64(s: &str, what: &str, path: Option<&Path>, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::format(path, line, format!("{what}: not a number: {s:?}")))
}

pub fn parse_manifest(text: &str, path: Option<&Path>) -> Result<Manifest> {
    let (header, rows) = split_sections(text, MANIFEST_MAGIC, &MANIFEST_FIELDS, path)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (n, c) in rows {
        let doa_true = parse_f64(c[3], "doa_true", path, n)?;
        if !(0.0..=180.0).contains(&doa_true) {
            return Err(Error::format(path, n, format!("doa_true {doa_true} outside [0, 180]")));
        }
        entries.push(ManifestEntry {
            id: c[0].to_string(),
            wav: c[1].to_string(),
            fs: c[2]
                .parse()
                .map_err(|_| Error::format(path, n, format!("fs: not an integer: {:?}", c[2])))?,
            doa_true,
            snr_db: parse_f64(c[4], "snr_db", path, n)?,
            mode: c[5]
                .parse()
                .map_err(|_| Error::format(path, n, format!("unknown mode {:?}", c[5])))?,
            scene_digest: c[6].to_string(),
            seed: c[7]
                .parse()
                .map_err(|_| Error::format(path, n, format!("seed: not an integer: {:?}", c[7])))?,
            split: match c[8] {
                "train" => Split::Train,
                "val" => Split::Validation,
                other => return Err(Error::format(path, n, format!("unknown split {other:?}"))),
            },
        });
    }
    Ok(Manifest { header, entries })
}

pub fn parse_results(text: &str, path: Option<&Path>) -> Result<ResultsFile> {
    let (header, rows) = split_sections(text, RESULTS_MAGIC, &RESULTS_FIELDS, path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (n, c) in rows {
        let status = match c[4] {
            "ok" => Status::Ok,
            s => match s.strip_prefix("error:") {
                Some(msg) => Status::Error(msg.to_string()),
                None => return Err(Error::format(path, n, format!("unknown status {s:?}"))),
            },
        };
        out.push(ResultRow {
            id: c[0].to_string(),
            doa_true: parse_f64(c[1], "doa_true", path, n)?,
            doa_hat: parse_f64(c[2], "doa_hat", path, n)?,
            error_deg: parse_f64(c[3], "error_deg", path, n)?,
            status,
        });
    }
    Ok(ResultsFile { header, rows: out })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    parse_manifest(&read_text(path)?, Some(path))
}

pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    write_text(path, &manifest_to_string(m))
}

pub fn load_results(path: &Path) -> Result<ResultsFile> {
    parse_results(&read_text(path)?, Some(path))
}

pub fn save_results(r: &ResultsFile, path: &Path) -> Result<()> {
    write_text(path, &results_to_string(r))
}
