//! Thin helpers around `realfft` with a per-thread planner cache.

use std::cell::RefCell;

use num_complex::Complex64;
use realfft::RealFftPlanner;

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// Unnormalized forward real DFT; consumes `input` as scratch.
pub fn forward_real(input: &mut [f64]) -> Vec<Complex64> {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(input.len()));
    let mut out = plan.make_output_vec();
    plan.process(input, &mut out).expect("buffer sizes match plan");
    out
}

/// Unnormalized inverse real DFT of an `n/2 + 1` bin spectrum. The imaginary
/// parts of the DC and Nyquist bins are discarded.
pub fn inverse_real(spectrum: &mut [Complex64], n: usize) -> Vec<f64> {
    assert_eq!(spectrum.len(), n / 2 + 1, "spectrum length must be n/2 + 1");
    spectrum[0].im = 0.0;
    if n.is_multiple_of(2) {
        spectrum[n / 2].im = 0.0;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    let mut out = plan.make_output_vec();
    plan.process(spectrum, &mut out).expect("buffer sizes match plan");
    out
}

/// Linear convolution of two real signals.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    let n = len.next_power_of_two();
    let mut pa = a.to_vec();
    pa.resize(n, 0.0);
    let mut pb = b.to_vec();
    pb.resize(n, 0.0);
    let fa = forward_real(&mut pa);
    let fb = forward_real(&mut pb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = inverse_real(&mut prod, n);
    out.truncate(len);
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}
