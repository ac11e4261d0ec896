//! Reference implementations shared by the integration and acceptance
//! tests. Each one is written from first principles and shares no code path
//! with the engine beyond the public data types.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

use ismf_core::directivity::OrientedPattern;
use ismf_core::geometry::{Shoebox, Surface, Vec3};
use ismf_core::ism::{RirRequest, SimulationMode, SPEED_OF_SOUND};
use ismf_core::materials;

/// Image positions and orders in the Allen and Berkley parametrisation:
/// per axis `x = (1 - 2q) s + 2 m L` with `q` in {0, 1}, reflecting
/// `|m - q| + |m|` times.
pub fn allen_berkley(room: &Shoebox, source: Vec3, max_order: u32) -> Vec<([f64; 3], u32)> {
    let n = max_order as i64;
    let dims = [room.dims.x, room.dims.y, room.dims.z];
    let src = [source.x, source.y, source.z];
    let mut out = Vec::new();
    for q in 0..8u32 {
        let qs = [(q & 1) as i64, ((q >> 1) & 1) as i64, ((q >> 2) & 1) as i64];
        for mx in -n..=n + 1 {
            for my in -n..=n + 1 {
                for mz in -n..=n + 1 {
                    let ms = [mx, my, mz];
                    let mut order = 0;
                    let mut pos = [0.0; 3];
                    for a in 0..3 {
                        order += (ms[a] - qs[a]).abs() + ms[a].abs();
                        pos[a] = (1 - 2 * qs[a]) as f64 * src[a] + 2.0 * ms[a] as f64 * dims[a];
                    }
                    if order <= n {
                        out.push((pos, order as u32));
                    }
                }
            }
        }
    }
    out
}

/// Reflections off each surface for an image with lattice indices `n`,
/// counted by walking the unfolded path: index `+k` crosses walls
/// high, low, high, ... and `-k` crosses low, high, low, ...
pub fn walk_counts(lattice: [i32; 3]) -> [u32; 6] {
    let mut counts = [0u32; 6];
    for (axis, &n) in lattice.iter().enumerate() {
        let (first, second) = if n > 0 {
            (2 * axis + 1, 2 * axis)
        } else {
            (2 * axis, 2 * axis + 1)
        };
        for step in 0..n.unsigned_abs() {
            counts[if step % 2 == 0 { first } else { second }] += 1;
        }
    }
    counts
}

/// Position of lattice image `n` by successive mirroring of the source.
pub fn mirrored_position(room: &Shoebox, source: Vec3, lattice: [i32; 3]) -> Vec3 {
    let dims = [room.dims.x, room.dims.y, room.dims.z];
    let mut p = [source.x, source.y, source.z];
    for a in 0..3 {
        let n = lattice[a];
        // Mirror across x = L, then x = 2L (i.e. about 0 of the next cell), ...
        let mut lo = 0.0;
        let mut hi = dims[a];
        for _ in 0..n.unsigned_abs() {
            if n > 0 {
                p[a] = 2.0 * hi - p[a];
                let w = hi - lo;
                lo = hi;
                hi += w;
            } else {
                p[a] = 2.0 * lo - p[a];
                let w = hi - lo;
                hi = lo;
                lo -= w;
            }
        }
    }
    Vec3::new(p[0], p[1], p[2])
}

/// Transfer function by direct evaluation of every image at every bin:
/// delay, spherical spreading, air, compound reflection and both
/// directivities, with no table reuse and no vectorised kernels.
pub fn brute_force_transfer(req: &RirRequest, n_fft: usize) -> Vec<Vec<Complex64>> {
    let bins = n_fft / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * req.fs / n_fft as f64).collect();
    let naive = req.mode == SimulationMode::Naive;
    let flat = (1.0 - req.surfaces.broadband_alpha(&req.room)).max(0.0).sqrt();
    let spectra = materials::surface_spectra(&req.surfaces, n_fft, req.fs).unwrap();
    let n = req.max_order as i32;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); bins]; req.array.mics.len()];
    for lx in -n..=n {
        for ly in -(n - lx.abs())..=(n - lx.abs()) {
            let rem = n - lx.abs() - ly.abs();
            for lz in -rem..=rem {
                let lattice = [lx, ly, lz];
                let order = lx.abs() + ly.abs() + lz.abs();
                let pos = mirrored_position(&req.room, req.source, lattice);
                let counts = walk_counts(lattice);
                for (m, spectrum) in out.iter_mut().enumerate() {
                    let mic = req.mic_position(m);
                    let delta = pos - mic;
                    let r = delta.norm();
                    let arrival = delta / r;
                    // Leaving the source: reverse the travel direction and
                    // undo one mirror per odd lattice axis.
                    let travel = -arrival;
                    let sgn = |k: i32| if k % 2 == 0 { 1.0 } else { -1.0 };
                    let departure = Vec3::new(travel.x * sgn(lx), travel.y * sgn(ly), travel.z * sgn(lz));
                    let mic_pattern = if naive {
                        OrientedPattern::omni()
                    } else {
                        OrientedPattern::new(req.array.mics[m].directivity.pattern.clone(), req.mic_orientation(m))
                    };
                    for (k, &f) in freqs.iter().enumerate() {
                        let mut h = Complex64::from_polar(1.0 / r, -2.0 * PI * f * r / SPEED_OF_SOUND);
                        if req.air_absorption {
                            h *= materials::air_attenuation(r, f);
                        }
                        if naive {
                            h *= flat.powi(order);
                        } else {
                            for s in Surface::ALL {
                                let c = counts[s.index()];
                                if c > 0 {
                                    h *= spectra[s.index()].gains[k].powi(c as i32);
                                }
                            }
                            h *= req.source_directivity.eval(departure, f).unwrap();
                            h *= mic_pattern.eval(arrival, f).unwrap();
                        }
                        spectrum[k] += h;
                    }
                }
            }
        }
    }
    out
}

/// Band-limited unit impulse delayed by `delay` samples and wrapped on an
/// `n`-sample circle: the sum over all periods of `sinc(t - delay - p n)`.
pub fn periodic_sinc(t: f64, delay: f64, n: usize) -> f64 {
    let x = t - delay;
    let nf = n as f64;
    let s = (PI * x).sin();
    let d = nf * (PI * x / nf).tan();
    if d.abs() < 1e-12 {
        // Removable singularity at x = p n; the limit is 1 for even n.
        return 1.0;
    }
    s / d
}

/// Non-periodic band-limited delay `sinc(t - delay)`.
pub fn sinc_delay(t: f64, delay: f64) -> f64 {
    let x = PI * (t - delay);
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `10 log10(|a - b|^2 / |b|^2)`.
pub fn relative_error_db(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    10.0 * (num / den).log10()
}

pub fn relative_error_complex(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Reverberation time from the Schroeder backward integral, by a
/// least-squares line through the decay between `from_db` and `to_db`
/// (both negative), extrapolated to -60 dB.
pub fn schroeder_t60(h: &[f64], fs: f64, from_db: f64, to_db: f64) -> f64 {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let total = edc[0];
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db <= from_db && db >= to_db {
            let t = i as f64 / fs;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
            n += 1.0;
        }
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -60.0 / slope
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Convolution by direct summation.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}
