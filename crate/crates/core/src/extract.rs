//! Fit-free estimators: resonance detection, static capacitance, phase-slope
//! Q, and the seed model handed to the fitter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mbvd::{MbvdModel, ModelError, MotionalBranch, Q_CAP};
use crate::netparams::ComplexTrace;

/// Lowest quality factor the phase-slope window is sized for.
pub const Q_FLOOR: f64 = 10.0;
pub const DEFAULT_THRESHOLD_DB: f64 = 3.0;
pub const MIN_DETECT_POINTS: usize = 16;

const SEED_RESISTANCE_RANGE: (f64, f64) = (1e-3, 1e6);
/// `cm/c0` assumed for candidates without an antiresonance.
const FALLBACK_CAPACITANCE_RATIO: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("trace has {len} points, at least {min} required")]
    TooShort { len: usize, min: usize },
    #[error("only {available} off-resonance points, at least {required} required")]
    NotEnoughBackground { available: usize, required: usize },
    #[error("off-resonance susceptance slope {slope:e} F is not capacitive")]
    InductiveBackground { slope: f64 },
    #[error("frequency {f0} Hz lies outside the trace")]
    OutsideGrid { f0: f64 },
    #[error("only {found} points near {f0} Hz, at least 5 required")]
    TooFewPoints { f0: f64, found: usize },
    #[error("phase unwrap is ambiguous near {freq} Hz, densify the grid")]
    UnwrapAmbiguity { freq: f64 },
    #[error("no resonance candidates")]
    NoCandidates,
    #[error("seed model rejected: {0}")]
    Model(Box<ModelError>),
}

impl From<ModelError> for ExtractError {
    fn from(e: ModelError) -> Self {
        ExtractError::Model(Box::new(e))
    }
}

/// A detected admittance peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCandidate {
    /// Hz
    pub fs_est: f64,
    /// Hz, from the |Y| minimum that follows the peak.
    pub fp_est: Option<f64>,
    /// dB above the higher of the two surrounding bases.
    pub prominence_db: f64,
    pub peak_index: usize,
    pub fp_index: Option<usize>,
    /// Inclusive grid index range dominated by this resonance.
    pub span: (usize, usize),
}

fn magnitude_db(trace: &ComplexTrace) -> Vec<f64> {
    trace
        .values
        .iter()
        .map(|v| 20.0 * v.norm().max(f64::MIN_POSITIVE).log10())
        .collect()
}

fn prominence(y: &[f64], i: usize) -> f64 {
    let peak = y[i];
    let mut left_min = peak;
    for &v in y[..i].iter().rev() {
        if v > peak {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    for &v in &y[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Local maxima of |Y| whose prominence reaches `threshold_db`, each paired
/// with the deepest |Y| minimum before the next detected peak. Sorted by
/// frequency.
pub fn detect_resonances(
    trace: &ComplexTrace,
    threshold_db: f64,
) -> Result<Vec<ResonanceCandidate>, ExtractError> {
    let n = trace.len();
    if n < MIN_DETECT_POINTS {
        return Err(ExtractError::TooShort {
            len: n,
            min: MIN_DETECT_POINTS,
        });
    }
    let y = magnitude_db(trace);
    let peaks: Vec<(usize, f64)> = (1..n - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .map(|i| (i, prominence(&y, i)))
        .filter(|&(_, p)| p >= threshold_db)
        .collect();

    let mut out = Vec::with_capacity(peaks.len());
    for (k, &(i, prom)) in peaks.iter().enumerate() {
        let end = peaks.get(k + 1).map_or(n - 1, |&(j, _)| j);
        let valley = (i + 1..=end).min_by(|&a, &b| y[a].total_cmp(&y[b]));
        let fp_index = valley.filter(|&v| v < n - 1 && v < end);

        let half = y[i] - 3.0;
        let mut wl = i;
        while wl > 0 && y[wl - 1] > half {
            wl -= 1;
        }
        let mut wr = i;
        while wr + 1 < n && y[wr + 1] > half {
            wr += 1;
        }
        let margin = 2 * (wr - wl).max(1) + 2;
        let left = i.saturating_sub(margin);
        let right = (fp_index.unwrap_or(i) + margin).min(n - 1);

        out.push(ResonanceCandidate {
            fs_est: trace.freqs[i],
            fp_est: fp_index.map(|j| trace.freqs[j]),
            prominence_db: prom,
            peak_index: i,
            fp_index,
            span: (left, right),
        });
    }
    Ok(out)
}

fn background_indices(n: usize, exclusion: &[(usize, usize)]) -> Vec<usize> {
    (0..n)
        .filter(|&i| !exclusion.iter().any(|&(a, b)| a <= i && i <= b))
        .collect()
}

fn required_background(n: usize) -> usize {
    n.div_ceil(10).max(2)
}

/// Static capacitance as the through-origin least-squares slope of
/// `Im(Y)` against `ω`, using only points outside every exclusion span.
pub fn c0_from_offresonance(
    trace: &ComplexTrace,
    exclusion: &[(usize, usize)],
) -> Result<f64, ExtractError> {
    let idx = background_indices(trace.len(), exclusion);
    let required = required_background(trace.len());
    if idx.len() < required {
        return Err(ExtractError::NotEnoughBackground {
            available: idx.len(),
            required,
        });
    }
    let (num, den) = idx.iter().fold((0.0, 0.0), |(num, den), &i| {
        let w = 2.0 * PI * trace.freqs[i];
        (num + w * trace.values[i].im, den + w * w)
    });
    let slope = num / den;
    if !(slope > 0.0) {
        return Err(ExtractError::InductiveBackground { slope });
    }
    Ok(slope)
}

/// `Q = (f0/2)·|dφ/df|` from a centered 5-point least-squares slope of the
/// unwrapped phase. Pass an admittance trace for `Q_s` and an impedance
/// trace for `Q_p`. Returns `INFINITY` above [`Q_CAP`] and for purely
/// reactive traces that pass through a zero.
pub fn q_from_phase_slope(trace: &ComplexTrace, f0: f64) -> Result<f64, ExtractError> {
    let n = trace.len();
    let (Some(&lo), Some(&hi)) = (trace.freqs.first(), trace.freqs.last()) else {
        return Err(ExtractError::OutsideGrid { f0 });
    };
    if f0 < lo || f0 > hi {
        return Err(ExtractError::OutsideGrid { f0 });
    }
    let window = f0 / (2.0 * Q_FLOOR);
    let near = trace.freqs.iter().filter(|&&f| (f - f0).abs() <= window).count();
    if n < 5 || near < 5 {
        return Err(ExtractError::TooFewPoints { f0, found: near });
    }

    let nearest = trace
        .freqs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - f0).abs().total_cmp(&(b.1 - f0).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let center = nearest.clamp(2, n - 3);
    let pts = center - 2..=center + 2;
    let values = &trace.values[pts.clone()];
    let freqs = &trace.freqs[pts];

    let reactive = values.iter().all(|v| v.re.abs() <= 1e-12 * v.norm());
    if reactive && values.windows(2).any(|w| w[0].im * w[1].im < 0.0) {
        return Ok(f64::INFINITY);
    }

    let mut phases = Vec::with_capacity(5);
    let mut prev_raw = values[0].arg();
    let mut acc = prev_raw;
    phases.push(acc);
    for (v, &f) in values[1..].iter().zip(&freqs[1..]) {
        let raw = v.arg();
        let d = raw - prev_raw;
        let d = d - 2.0 * PI * (d / (2.0 * PI)).round();
        if d.abs() > 0.5 * PI {
            return Err(ExtractError::UnwrapAmbiguity { freq: f });
        }
        acc += d;
        phases.push(acc);
        prev_raw = raw;
    }

    let fm = freqs.iter().sum::<f64>() / 5.0;
    let pm = phases.iter().sum::<f64>() / 5.0;
    let (num, den) = freqs
        .iter()
        .zip(&phases)
        .fold((0.0, 0.0), |(num, den), (&f, &p)| {
            (num + (f - fm) * (p - pm), den + (f - fm) * (f - fm))
        });
    let q = 0.5 * f0 * (num / den).abs();
    Ok(if q > Q_CAP { f64::INFINITY } else { q })
}

fn scaled_span(c: &ResonanceCandidate, factor: f64) -> (usize, usize) {
    let core_hi = c.fp_index.unwrap_or(c.peak_index);
    let left = (c.peak_index - c.span.0) as f64 * factor;
    let right = (c.span.1 - core_hi) as f64 * factor;
    (c.peak_index - left.round() as usize, core_hi + right.round() as usize)
}

/// Seed model: `c0` from the off-resonance background, one motional branch
/// per candidate, `r0 = rs = 0`.
pub fn initial_guess(
    trace: &ComplexTrace,
    candidates: &[ResonanceCandidate],
) -> Result<MbvdModel, ExtractError> {
    if candidates.is_empty() {
        return Err(ExtractError::NoCandidates);
    }
    // Broad low-Q resonances can swallow the whole window; narrow the
    // margins around [fs, fp] until enough background remains.
    let mut shrink = 1.0;
    let (spans, c0_raw) = loop {
        let spans: Vec<(usize, usize)> = candidates.iter().map(|c| scaled_span(c, shrink)).collect();
        match c0_from_offresonance(trace, &spans) {
            Err(ExtractError::NotEnoughBackground { .. }) if shrink > 0.1 => shrink *= 0.5,
            res => break (spans, res?),
        }
    };

    // cm/c0 per candidate, from the fs/fp spacing when fp is known
    let ratios: Vec<f64> = candidates
        .iter()
        .map(|c| match c.fp_est {
            Some(fp) if fp > c.fs_est => (fp / c.fs_est).powi(2) - 1.0,
            _ => FALLBACK_CAPACITANCE_RATIO,
        })
        .collect();

    // Refine c0 with the lossless contribution of each motional branch in
    // the regressor; the raw slope is biased by their off-resonance capacitance.
    let c0 = {
        let idx = background_indices(trace.len(), &spans);
        let (num, den) = idx.iter().fold((0.0, 0.0), |(num, den), &i| {
            let f = trace.freqs[i];
            let g = 2.0
                * PI
                * f
                * (1.0
                    + candidates
                        .iter()
                        .zip(&ratios)
                        .map(|(c, rho)| rho * c.fs_est * c.fs_est / (c.fs_est * c.fs_est - f * f))
                        .sum::<f64>());
            (num + g * trace.values[i].im, den + g * g)
        });
        let refined = num / den;
        if refined > 0.0 && refined.is_finite() {
            refined
        } else {
            c0_raw
        }
    };

    let mut branches = Vec::with_capacity(candidates.len());
    for (c, rho) in candidates.iter().zip(&ratios) {
        let cm = rho * c0;
        let ws = 2.0 * PI * c.fs_est;
        let lm = 1.0 / (ws * ws * cm);
        let peak = trace.values[c.peak_index] - num_complex::Complex64::new(0.0, ws * c0);
        let rm = (1.0 / peak.norm()).clamp(SEED_RESISTANCE_RANGE.0, SEED_RESISTANCE_RANGE.1);
        branches.push(MotionalBranch::new(rm, lm, cm)?);
    }
    let mut model = MbvdModel {
        c0,
        r0: 0.0,
        rs: 0.0,
        branches,
    };
    model.sort_branches();
    model.validate()?;
    Ok(model)
}
