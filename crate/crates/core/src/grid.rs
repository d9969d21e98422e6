//! Frequency grids and synthetic measurement noise.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::netparams::ComplexTrace;

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Grid around a series resonance wide enough to hold the antiresonance
/// and some off-resonance background on both sides.
pub fn resonance_window(fs: f64, fp: f64, count: usize) -> Vec<f64> {
    let span = (fp - fs).max(0.01 * fs);
    linspace(fs - 1.5 * span, fp + 1.5 * span, count)
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median of `|v|` over the trace.
pub fn median_magnitude(trace: &ComplexTrace) -> f64 {
    median(trace.magnitudes())
}

/// Adds circular complex white Gaussian noise whose RMS magnitude is
/// `level_db` relative to the trace's median magnitude. Deterministic for a
/// given `seed`.
pub fn add_complex_noise(trace: &ComplexTrace, level_db: f64, seed: u64) -> ComplexTrace {
    let sigma = median_magnitude(trace) * 10f64.powf(level_db / 20.0) / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite noise level");
    let values = trace
        .values
        .iter()
        .map(|&v| v + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    ComplexTrace {
        freqs: trace.freqs.clone(),
        values,
    }
}
