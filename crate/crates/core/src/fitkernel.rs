//! Levenberg–Marquardt fitting of [`MbvdModel`] to a complex admittance trace.
//!
//! Parameters live in log space,
//! `θ = (ln c0, ln r0, ln rs, [ln rm, ln fs, ln cm] per branch)`, so every
//! circuit value stays positive and steps are relative. Branch frequency
//! replaces `lm` to decorrelate the `lm`/`cm` pair. Bounds are boxes in θ;
//! a parameter with `lo == hi` is frozen.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{initial_guess, ExtractError, ResonanceCandidate};
use crate::grid::median_magnitude;
use crate::mbvd::{MbvdModel, ModelError, MotionalBranch};
use crate::netparams::ComplexTrace;

/// Floor used for `r0`/`rs` seeds of zero, and the default resistance lower bound.
pub const RESISTANCE_FLOOR: f64 = 1e-3;
const RESISTANCE_CEIL: f64 = 1e6;
const STATIC_PARAMS: usize = 3;
const BRANCH_PARAMS: usize = 3;
/// Relative improvement below which an extra branch is not worth keeping.
const PARSIMONY_GAIN: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("cost is not finite at the seed model")]
    NonFiniteSeed,
    #[error("non-finite step at iteration {iteration}")]
    NonFiniteCost { iteration: usize },
    #[error("invalid fit options: {0}")]
    Options(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `[Re ΔY, Im ΔY] / median|Y_meas|`
    #[default]
    Complex,
    /// `[Δ ln|Y|, Δ arg Y]`
    LogMagPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative cost decrease (actual and predicted) that ends the fit.
    pub ftol: f64,
    /// Largest log-parameter step (a relative change) that ends the fit.
    pub xtol: f64,
    pub weighting: Weighting,
    /// Natural-unit `[lo, hi]` per parameter in θ order. `None` derives the
    /// defaults from the seed: `fs` ±10 %, `c0` ×/÷ 3, resistances in
    /// `[1e-3, 1e6]` Ω, `cm` within `[1e-6, 1e3]` × seed.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub lambda0: f64,
    /// Extra fits from deterministic perturbations of the seed; best cost wins.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            weighting: Weighting::Complex,
            bounds: None,
            lambda0: 1e-3,
            restarts: 0,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<(), FitError> {
        if self.max_iter < 1 {
            return Err(FitError::Options("max_iter must be at least 1".into()));
        }
        if !(self.ftol > 0.0 && self.xtol > 0.0 && self.lambda0 > 0.0) {
            return Err(FitError::Options("tolerances and lambda0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Ftol,
    Xtol,
    MaxIter,
    PerfectFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MbvdModel,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Covariance of θ (log parameters), absent when `JᵀJ` is singular.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub residual_rms: f64,
    /// Cost after the seed and after every accepted step.
    pub cost_trace: Vec<f64>,
    /// Index of the branch with the largest `cm`.
    pub dominant: usize,
    pub warnings: Vec<String>,
}

/// Names of the θ entries for a model with `branches` motional branches.
pub fn parameter_names(branches: usize) -> Vec<String> {
    let mut names = vec!["ln_c0".to_string(), "ln_r0".to_string(), "ln_rs".to_string()];
    for k in 0..branches {
        names.push(format!("ln_rm{k}"));
        names.push(format!("ln_fs{k}"));
        names.push(format!("ln_cm{k}"));
    }
    names
}

/// θ of `model`, ordered as [`parameter_names`].
pub fn to_params(model: &MbvdModel) -> Vec<f64> {
    let mut theta = vec![model.c0.ln(), model.r0.ln(), model.rs.ln()];
    for b in &model.branches {
        theta.extend([b.rm.ln(), b.series_resonance().ln(), b.cm.ln()]);
    }
    theta
}

/// Inverse of [`to_params`].
pub fn from_params(theta: &[f64]) -> MbvdModel {
    let branches = theta[STATIC_PARAMS..]
        .chunks_exact(BRANCH_PARAMS)
        .map(|p| {
            let (rm, fs, cm) = (p[0].exp(), p[1].exp(), p[2].exp());
            let ws = 2.0 * PI * fs;
            MotionalBranch {
                rm,
                lm: 1.0 / (ws * ws * cm),
                cm,
            }
        })
        .collect();
    MbvdModel {
        c0: theta[0].exp(),
        r0: theta[1].exp(),
        rs: theta[2].exp(),
        branches,
    }
}

/// Default natural-unit bounds around a seed model.
pub fn default_bounds(seed: &MbvdModel) -> Vec<(f64, f64)> {
    let mut b = vec![
        (seed.c0 / 3.0, seed.c0 * 3.0),
        (RESISTANCE_FLOOR, RESISTANCE_CEIL),
        (RESISTANCE_FLOOR, RESISTANCE_CEIL),
    ];
    for br in &seed.branches {
        let fs = br.series_resonance();
        b.push((RESISTANCE_FLOOR, RESISTANCE_CEIL));
        b.push((0.9 * fs, 1.1 * fs));
        b.push((br.cm * 1e-6, br.cm * 1e3));
    }
    b
}

fn log_bounds(bounds: &[(f64, f64)], n: usize) -> Result<Vec<(f64, f64)>, FitError> {
    if bounds.len() != n {
        return Err(FitError::Options(format!(
            "{} bounds given for {n} parameters",
            bounds.len()
        )));
    }
    bounds
        .iter()
        .map(|&(lo, hi)| {
            if lo > 0.0 && hi >= lo && hi.is_finite() {
                Ok((lo.ln(), hi.ln()))
            } else {
                Err(FitError::Options(format!("bad bound [{lo}, {hi}]")))
            }
        })
        .collect()
}

struct Problem<'a> {
    trace: &'a ComplexTrace,
    weighting: Weighting,
    keep: Vec<usize>,
    scale: f64,
}

impl<'a> Problem<'a> {
    fn new(trace: &'a ComplexTrace, weighting: Weighting, warnings: &mut Vec<String>) -> Self {
        let keep: Vec<usize> = match weighting {
            Weighting::Complex => (0..trace.len()).collect(),
            Weighting::LogMagPhase => (0..trace.len())
                .filter(|&i| trace.values[i].norm() > 0.0)
                .collect(),
        };
        let dropped = trace.len() - keep.len();
        if dropped > 0 {
            warnings.push(format!(
                "{dropped} zero-magnitude points dropped under log weighting"
            ));
        }
        let scale = match weighting {
            Weighting::Complex => {
                let m = median_magnitude(trace);
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
            Weighting::LogMagPhase => 1.0,
        };
        Self {
            trace,
            weighting,
            keep,
            scale,
        }
    }

    fn rows(&self) -> usize {
        2 * self.keep.len()
    }

    fn residuals(&self, model: &MbvdModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows());
        for &i in &self.keep {
            let fit = model.admittance(self.trace.freqs[i]);
            let meas = self.trace.values[i];
            match self.weighting {
                Weighting::Complex => {
                    let d = (fit - meas) / self.scale;
                    out.extend([d.re, d.im]);
                }
                Weighting::LogMagPhase => {
                    let dp = fit.arg() - meas.arg();
                    let dp = dp - 2.0 * PI * (dp / (2.0 * PI)).round();
                    out.extend([fit.norm().ln() - meas.norm().ln(), dp]);
                }
            }
        }
        out
    }

    /// Analytic ∂r/∂θ.
    fn jacobian(&self, model: &MbvdModel) -> DMatrix<f64> {
        let n = STATIC_PARAMS + BRANCH_PARAMS * model.branches.len();
        let mut jac = DMatrix::zeros(self.rows(), n);
        let j = Complex64::i();
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        for (row, &i) in self.keep.iter().enumerate() {
            let w = 2.0 * PI * self.trace.freqs[i];
            let yc = j * (w * model.c0);
            let den0 = 1.0 + model.r0 * yc;
            let ys = yc / den0;
            let mut s = ys;
            d[0] = yc / (den0 * den0);
            d[1] = -model.r0 * ys * ys;
            for (k, b) in model.branches.iter().enumerate() {
                let zb = Complex64::new(b.rm, w * b.lm - 1.0 / (w * b.cm));
                let yb = zb.inv();
                s += yb;
                let base = STATIC_PARAMS + BRANCH_PARAMS * k;
                let y2 = -yb * yb;
                d[base] = y2 * b.rm;
                d[base + 1] = y2 * (-2.0 * j * w * b.lm);
                d[base + 2] = y2 * (j * (1.0 / (w * b.cm) - w * b.lm));
            }
            let outer = 1.0 + model.rs * s;
            let y = s / outer;
            let g = (outer * outer).inv();
            for (col, v) in d.iter_mut().enumerate() {
                if col != 2 {
                    *v *= g;
                }
            }
            d[2] = -model.rs * y * y;

            for (col, &dy) in d.iter().enumerate() {
                let dr = match self.weighting {
                    Weighting::Complex => dy / self.scale,
                    Weighting::LogMagPhase => dy / y,
                };
                jac[(2 * row, col)] = dr.re;
                jac[(2 * row + 1, col)] = dr.im;
            }
        }
        jac
    }
}

/// Residual vector of `model` against `trace`, two entries per kept point.
pub fn residuals(model: &MbvdModel, trace: &ComplexTrace, weighting: Weighting) -> Vec<f64> {
    Problem::new(trace, weighting, &mut Vec::new()).residuals(model)
}

/// Analytic Jacobian of [`residuals`] with respect to θ.
pub fn jacobian(model: &MbvdModel, trace: &ComplexTrace, weighting: Weighting) -> DMatrix<f64> {
    Problem::new(trace, weighting, &mut Vec::new()).jacobian(model)
}

/// [`jacobian`] with the columns of frozen parameters (`lo == hi`) zeroed.
pub fn jacobian_with_bounds(
    model: &MbvdModel,
    trace: &ComplexTrace,
    weighting: Weighting,
    bounds: &[(f64, f64)],
) -> DMatrix<f64> {
    let mut jac = jacobian(model, trace, weighting);
    for (col, &(lo, hi)) in bounds.iter().enumerate().take(jac.ncols()) {
        if lo == hi {
            jac.column_mut(col).fill(0.0);
        }
    }
    jac
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn clamp_into(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

fn solve_damped(a: &DMatrix<f64>, g: &DVector<f64>, free: &[usize], lambda: f64) -> Option<DVector<f64>> {
    let m = free.len();
    let max_diag = free.iter().map(|&i| a[(i, i)]).fold(0.0_f64, f64::max);
    let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);
    let mut sys = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (r, &i) in free.iter().enumerate() {
        for (c, &k) in free.iter().enumerate() {
            sys[(r, c)] = a[(i, k)];
        }
        sys[(r, r)] += lambda * a[(i, i)].max(floor);
        rhs[r] = -g[i];
    }
    sys.clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| sys.lu().solve(&rhs))
}

fn covariance(jac: &DMatrix<f64>, cost: f64, frozen: &[bool]) -> Option<Vec<Vec<f64>>> {
    let n = jac.ncols();
    let free: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
    let dof = jac.nrows().checked_sub(free.len()).filter(|&d| d > 0)?;
    let a = jac.transpose() * jac;
    let mut sub = DMatrix::zeros(free.len(), free.len());
    for (r, &i) in free.iter().enumerate() {
        for (c, &k) in free.iter().enumerate() {
            sub[(r, c)] = a[(i, k)];
        }
    }
    let inv = sub.cholesky()?.inverse();
    let s2 = cost / dof as f64;
    let mut out = vec![vec![0.0; n]; n];
    for (r, &i) in free.iter().enumerate() {
        for (c, &k) in free.iter().enumerate() {
            out[i][k] = inv[(r, c)] * s2;
        }
    }
    Some(out)
}

fn fit_once(
    problem: &Problem<'_>,
    seed: &MbvdModel,
    options: &FitOptions,
    warnings: Vec<String>,
) -> Result<FitResult, FitError> {
    let mut theta = to_params(&MbvdModel {
        r0: seed.r0.max(RESISTANCE_FLOOR),
        rs: seed.rs.max(RESISTANCE_FLOOR),
        ..seed.clone()
    });
    let n = theta.len();
    let bounds = match &options.bounds {
        Some(b) => log_bounds(b, n)?,
        None => log_bounds(&default_bounds(seed), n)?,
    };
    let frozen: Vec<bool> = bounds.iter().map(|&(lo, hi)| lo == hi).collect();
    clamp_into(&mut theta, &bounds);

    let mut model = from_params(&theta);
    let mut r = problem.residuals(&model);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(FitError::NonFiniteSeed);
    }
    let mut cost_trace = vec![cost];
    let jac_of = |m: &MbvdModel| {
        let mut jac = problem.jacobian(m);
        for (col, &f) in frozen.iter().enumerate() {
            if f {
                jac.column_mut(col).fill(0.0);
            }
        }
        jac
    };
    let mut jac = jac_of(&model);
    let mut lambda = options.lambda0;
    let mut iterations = 0;
    let mut termination = if cost == 0.0 {
        Some(Termination::PerfectFit)
    } else {
        None
    };

    while termination.is_none() && iterations < options.max_iter {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let a = jac.transpose() * &jac;
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let (lo, hi) = bounds[i];
                !frozen[i] && !(theta[i] <= lo && g[i] > 0.0) && !(theta[i] >= hi && g[i] < 0.0)
            })
            .collect();
        if free.is_empty() {
            termination = Some(Termination::Xtol);
            break;
        }
        let Some(delta) = solve_damped(&a, &g, &free, lambda) else {
            lambda *= 10.0;
            continue;
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFiniteCost { iteration: iterations });
        }
        let mut trial = theta.clone();
        for (k, &i) in free.iter().enumerate() {
            trial[i] += delta[k];
        }
        clamp_into(&mut trial, &bounds);
        let step: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let step_norm = step.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

        let trial_model = from_params(&trial);
        let trial_r = problem.residuals(&trial_model);
        let trial_cost = sum_sq(&trial_r);

        if trial_cost.is_finite() && trial_cost < cost {
            let linear = &rv + &jac * DVector::from_vec(step);
            let predicted = (cost - linear.norm_squared()) / cost;
            let actual = (cost - trial_cost) / cost;
            theta = trial;
            model = trial_model;
            r = trial_r;
            cost = trial_cost;
            cost_trace.push(cost);
            jac = jac_of(&model);
            lambda = (lambda / 3.0).max(1e-15);
            if cost == 0.0 {
                termination = Some(Termination::PerfectFit);
            } else if actual <= options.ftol && predicted.abs() <= options.ftol {
                termination = Some(Termination::Ftol);
            } else if step_norm <= options.xtol {
                termination = Some(Termination::Xtol);
            }
        } else {
            lambda *= 10.0;
            if step_norm <= options.xtol {
                termination = Some(Termination::Xtol);
            }
        }
    }

    let converged = termination.is_some();
    let rows = problem.rows().max(1);
    model.sort_branches();
    model.validate()?;
    let dominant = model.dominant_branch().unwrap_or(0);
    Ok(FitResult {
        covariance: covariance(&jac, cost, &frozen),
        residual_rms: (cost / rows as f64).sqrt(),
        model,
        cost,
        iterations,
        converged,
        termination: termination.unwrap_or(Termination::MaxIter),
        cost_trace,
        dominant,
        warnings,
    })
}

fn perturbed_seed(seed: &MbvdModel, restart: usize) -> MbvdModel {
    // 1, -1, 2, -2, ...
    let mag = restart.div_ceil(2) as f64;
    let s = if restart % 2 == 1 { mag } else { -mag };
    let mut m = seed.clone();
    m.c0 *= 1.0 - 0.05 * s;
    for b in &mut m.branches {
        let fs = b.series_resonance() * (1.0 + 0.003 * s);
        b.cm *= 1.0 + 0.25 * s.abs() * s.signum();
        if b.cm <= 0.0 {
            b.cm = seed.branches[0].cm * 0.5;
        }
        let ws = 2.0 * PI * fs;
        b.lm = 1.0 / (ws * ws * b.cm);
    }
    m
}

/// Fits `seed` to `trace`. Deterministic: identical inputs give identical results.
pub fn fit(trace: &ComplexTrace, seed: &MbvdModel, options: &FitOptions) -> Result<FitResult, FitError> {
    options.validate()?;
    if trace.is_empty() {
        return Err(FitError::EmptyTrace);
    }
    seed.validate()?;
    let mut warnings = Vec::new();
    let problem = Problem::new(trace, options.weighting, &mut warnings);
    let mut best = fit_once(&problem, seed, options, warnings.clone())?;
    for restart in 1..=options.restarts {
        let alt_seed = perturbed_seed(seed, restart);
        if alt_seed.validate().is_err() {
            continue;
        }
        let alt_options = FitOptions {
            bounds: options.bounds.clone().or_else(|| Some(default_bounds(seed))),
            ..options.clone()
        };
        if let Ok(alt) = fit_once(&problem, &alt_seed, &alt_options, warnings.clone()) {
            if alt.cost < best.cost {
                best = alt;
            }
        }
    }
    Ok(best)
}

/// Fits 1..=K branches seeded from the most prominent candidates and keeps
/// the smallest count after which one more branch improves the residual RMS
/// by less than 10 %.
pub fn select_branch_count(
    trace: &ComplexTrace,
    candidates: &[ResonanceCandidate],
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    if candidates.is_empty() {
        return Err(FitError::Extract(ExtractError::NoCandidates));
    }
    let mut ranked: Vec<&ResonanceCandidate> = candidates.iter().collect();
    ranked.sort_by(|a, b| {
        b.prominence_db
            .total_cmp(&a.prominence_db)
            .then(a.fs_est.total_cmp(&b.fs_est))
    });

    let mut best: Option<FitResult> = None;
    for k in 1..=ranked.len() {
        let mut subset: Vec<ResonanceCandidate> = ranked[..k].iter().map(|&c| c.clone()).collect();
        subset.sort_by(|a, b| a.fs_est.total_cmp(&b.fs_est));
        let attempt = initial_guess(trace, &subset)
            .map_err(FitError::from)
            .and_then(|seed| fit(trace, &seed, options));
        let result = match (attempt, &best) {
            (Ok(r), _) => r,
            (Err(_), Some(_)) => break,
            (Err(e), None) => return Err(e),
        };
        if let Some(prev) = &best {
            if prev.residual_rms == 0.0 || result.residual_rms > (1.0 - PARSIMONY_GAIN) * prev.residual_rms {
                break;
            }
        }
        best = Some(result);
    }
    Ok(best.expect("at least one fit attempted"))
}
