//! Modified Butterworth-Van Dyke equivalent circuit.
//!
//! Topology: `rs` in series with the parallel combination of the static
//! branch (`r0` in series with `c0`) and any number of motional
//! `rm`–`lm`–`cm` branches. Plain BVD is the `r0 = rs = 0` special case.
//!
//! The electromechanical coupling convention used for every reported
//! number is `k_t² = (π²/8)·(f_p² − f_s²)/f_p²`, and the figure of merit is
//! `FoM = Q_s·k_t²`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{self, ExtractError};
use crate::netparams::ComplexTrace;

/// Quality factors above this are reported as `f64::INFINITY`.
pub const Q_CAP: f64 = 1e6;

/// Smallest motional capacitance accepted from [`branch_from_metrics`].
pub const MIN_MOTIONAL_CAPACITANCE: f64 = 1e-21;

/// Serialized model topology tag.
pub const TOPOLOGY_TAG: &str = "mbvd-v1";

const KT2_SCALE: f64 = PI * PI / 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("coupling k_t² = {kt2} is non-physical (k_t²·8/π² must stay below 1)")]
    NonPhysicalCoupling { kt2: f64 },
    #[error("motional capacitance {cm:e} F is below the degenerate-coupling floor")]
    DegenerateCoupling { cm: f64 },
    #[error("motional branch series resonances must be strictly increasing")]
    BranchOrder,
    #[error("model has no motional branch")]
    NoBranches,
    #[error("unknown model topology tag {0:?}")]
    TopologyTag(String),
    #[error("model JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

/// One acoustic mode: series `rm`, `lm`, `cm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionalBranch {
    /// Ω
    pub rm: f64,
    /// H
    pub lm: f64,
    /// F
    pub cm: f64,
}

impl MotionalBranch {
    pub fn new(rm: f64, lm: f64, cm: f64) -> Result<Self, ModelError> {
        let b = Self { rm, lm, cm };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        non_negative("rm", self.rm)?;
        positive("lm", self.lm)?;
        positive("cm", self.cm)
    }

    pub fn series_resonance(&self) -> f64 {
        1.0 / (2.0 * PI * (self.lm * self.cm).sqrt())
    }

    /// Mechanical quality factor `2π·fs·lm/rm`.
    pub fn qm(&self) -> f64 {
        2.0 * PI * self.series_resonance() * self.lm / self.rm
    }

    pub fn admittance(&self, omega: f64) -> Complex64 {
        Complex64::new(self.rm, omega * self.lm - 1.0 / (omega * self.cm)).inv()
    }
}

/// Static branch, lead resistance and motional branches sorted by series resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbvdModel {
    /// F
    pub c0: f64,
    /// Ω, in series with `c0`.
    pub r0: f64,
    /// Ω, in series with the whole network.
    pub rs: f64,
    pub branches: Vec<MotionalBranch>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    topology: String,
    c0_f: f64,
    r0_ohm: f64,
    rs_ohm: f64,
    branches: Vec<BranchDoc>,
}

#[derive(Serialize, Deserialize)]
struct BranchDoc {
    rm_ohm: f64,
    lm_h: f64,
    cm_f: f64,
}

impl MbvdModel {
    pub fn new(
        c0: f64,
        r0: f64,
        rs: f64,
        branches: Vec<MotionalBranch>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            c0,
            r0,
            rs,
            branches,
        };
        m.validate()?;
        Ok(m)
    }

    /// Plain BVD: one branch, no static or lead resistance.
    pub fn bvd(c0: f64, branch: MotionalBranch) -> Result<Self, ModelError> {
        Self::new(c0, 0.0, 0.0, vec![branch])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("c0", self.c0)?;
        non_negative("r0", self.r0)?;
        non_negative("rs", self.rs)?;
        for b in &self.branches {
            b.validate()?;
        }
        if self
            .branches
            .windows(2)
            .any(|w| w[0].series_resonance() >= w[1].series_resonance())
        {
            return Err(ModelError::BranchOrder);
        }
        Ok(())
    }

    /// Sorts branches by series resonance.
    pub fn sort_branches(&mut self) {
        self.branches
            .sort_by(|a, b| a.series_resonance().total_cmp(&b.series_resonance()));
    }

    /// Branch with the largest motional capacitance (strongest coupling).
    pub fn dominant_branch(&self) -> Option<usize> {
        self.branches
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cm.total_cmp(&b.1.cm))
            .map(|(i, _)| i)
    }

    pub fn is_lossless(&self) -> bool {
        self.r0 == 0.0 && self.rs == 0.0 && self.branches.iter().all(|b| b.rm == 0.0)
    }

    pub fn static_admittance(&self, omega: f64) -> Complex64 {
        let yc = Complex64::new(0.0, omega * self.c0);
        if self.r0 == 0.0 {
            yc
        } else {
            yc / (1.0 + self.r0 * yc)
        }
    }

    /// Admittance of the parallel core (everything except `rs`).
    pub fn core_admittance(&self, omega: f64) -> Complex64 {
        self.branches
            .iter()
            .fold(self.static_admittance(omega), |acc, b| acc + b.admittance(omega))
    }

    /// Device admittance at `freq` Hz.
    pub fn admittance(&self, freq: f64) -> Complex64 {
        let core = self.core_admittance(2.0 * PI * freq);
        if self.rs == 0.0 {
            core
        } else {
            core / (1.0 + self.rs * core)
        }
    }

    /// Static capacitance seen by branch `k` near its series resonance: `c0`
    /// plus the lossless susceptance of every other branch expressed as a
    /// capacitance.
    pub fn effective_c0(&self, k: usize) -> f64 {
        let wk2 = 1.0 / (self.branches[k].lm * self.branches[k].cm);
        self.branches
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, b)| {
                let wj2 = 1.0 / (b.lm * b.cm);
                b.cm * wj2 / (wj2 - wk2)
            })
            .sum::<f64>()
            + self.c0
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            topology: TOPOLOGY_TAG.to_string(),
            c0_f: self.c0,
            r0_ohm: self.r0,
            rs_ohm: self.rs,
            branches: self
                .branches
                .iter()
                .map(|b| BranchDoc {
                    rm_ohm: b.rm,
                    lm_h: b.lm,
                    cm_f: b.cm,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        if doc.topology != TOPOLOGY_TAG {
            return Err(ModelError::TopologyTag(doc.topology));
        }
        let branches = doc
            .branches
            .iter()
            .map(|b| MotionalBranch::new(b.rm_ohm, b.lm_h, b.cm_f))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.c0_f, doc.r0_ohm, doc.rs_ohm, branches)
    }
}

/// Samples the model admittance on `freqs` (Hz, positive, increasing).
pub fn synthesize_admittance(model: &MbvdModel, freqs: &[f64]) -> ComplexTrace {
    ComplexTrace {
        freqs: freqs.to_vec(),
        values: freqs.iter().map(|&f| model.admittance(f)).collect(),
    }
}

/// Coupling conventions in circulation. Only [`Kt2Convention::Standard`]
/// feeds reported metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kt2Convention {
    /// `(π²/8)·(fp² − fs²)/fp²`
    #[default]
    Standard,
    /// `(fp² − fs²)/fp²`
    Effective,
    /// `(π/2)(fs/fp) / tan((π/2)(fs/fp))`
    Ieee,
}

impl Kt2Convention {
    pub fn from_frequencies(self, fs: f64, fp: f64) -> f64 {
        let ratio = (fp * fp - fs * fs) / (fp * fp);
        match self {
            Kt2Convention::Standard => KT2_SCALE * ratio,
            Kt2Convention::Effective => ratio,
            Kt2Convention::Ieee => {
                let x = 0.5 * PI * fs / fp;
                x / x.tan()
            }
        }
    }
}

/// Standard-convention coupling of a lossless single branch: `(π²/8)·cm/(c0 + cm)`.
pub fn branch_kt2(c0: f64, cm: f64) -> f64 {
    KT2_SCALE * cm / (c0 + cm)
}

/// Motional branch reproducing the published columns `(fs, Q_m, k_t², C_0)`.
pub fn branch_from_metrics(fs: f64, qm: f64, kt2: f64, c0: f64) -> Result<MotionalBranch, ModelError> {
    positive("fs", fs)?;
    positive("qm", qm)?;
    positive("kt2", kt2)?;
    positive("c0", c0)?;
    let r = kt2 / KT2_SCALE;
    if r >= 1.0 {
        return Err(ModelError::NonPhysicalCoupling { kt2 });
    }
    let cm = c0 * r / (1.0 - r);
    if cm < MIN_MOTIONAL_CAPACITANCE {
        return Err(ModelError::DegenerateCoupling { cm });
    }
    let ws = 2.0 * PI * fs;
    let lm = 1.0 / (ws * ws * cm);
    let rm = ws * lm / qm;
    MotionalBranch::new(rm, lm, cm)
}

/// Series and parallel resonance of one motional branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePair {
    pub fs: f64,
    /// Closed form `fs·√(1 + cm/c0_eff)`; absent when `c0_eff ≤ 0`.
    pub fp: Option<f64>,
    /// Upward zero crossing of `Im(Y)` above `fs`; absent for overdamped branches.
    pub fp_numeric: Option<f64>,
}

fn imag_root_above(model: &MbvdModel, fs: f64, upper: f64) -> Option<f64> {
    const SCAN: usize = 4000;
    let im = |f: f64| model.admittance(f).im;
    let step = (upper - fs) / SCAN as f64;
    let mut prev_f = fs;
    let mut prev = im(fs);
    for i in 1..=SCAN {
        let f = fs + step * i as f64;
        let v = im(f);
        if prev < 0.0 && v >= 0.0 {
            let (mut lo, mut hi) = (prev_f, f);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if im(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_f = f;
        prev = v;
    }
    None
}

/// Closed-form resonances of every branch, with a numeric antiresonance
/// cross-check from the full admittance.
pub fn resonance_frequencies(model: &MbvdModel) -> Result<Vec<ResonancePair>, ModelError> {
    if model.branches.is_empty() {
        return Err(ModelError::NoBranches);
    }
    let pairs = model
        .branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let fs = b.series_resonance();
            let c0_eff = model.effective_c0(k);
            let fp = (c0_eff > 0.0).then(|| fs * (1.0 + b.cm / c0_eff).sqrt());
            let next_fs = model.branches.get(k + 1).map(MotionalBranch::series_resonance);
            let mut upper = fp.map_or(2.0 * fs, |fp| fs + 3.0 * (fp - fs));
            if let Some(next) = next_fs {
                upper = upper.min(next);
            }
            // start just above the series zero crossing
            let start = fs * (1.0 + 1e-9);
            ResonancePair {
                fs,
                fp,
                fp_numeric: imag_root_above(model, start, upper),
            }
        })
        .collect();
    Ok(pairs)
}

/// Reasons a metrics report is incomplete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    /// The analysis grid does not span `[fs, fp]`.
    NotBracketed,
    /// The dominant branch has no antiresonance.
    NoAntiresonance,
}

/// Per-branch summary; `kt2` has no inter-branch correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub fs: f64,
    pub qm: f64,
    pub kt2: f64,
}

/// One table row worth of resonator metrics. `qs`/`qp` of `INFINITY` mean lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorMetrics {
    /// Hz
    pub fs: f64,
    /// Hz
    pub fp: Option<f64>,
    pub qs: f64,
    pub qp: Option<f64>,
    pub qm: f64,
    /// Fraction, not percent.
    pub kt2: Option<f64>,
    /// F
    pub c0: f64,
    pub fom: Option<f64>,
    /// Hz, numeric cross-check of `fp`.
    pub fp_numeric: Option<f64>,
    pub branches: Vec<BranchReport>,
    pub flags: Vec<MetricFlag>,
}

/// Phase-slope Q of the model at `f0`, on a dense 5-point trace resampled
/// from the model itself. `impedance` selects `Z = 1/Y` instead of `Y`.
pub fn model_phase_q(model: &MbvdModel, f0: f64, impedance: bool, q_hint: f64) -> Result<f64, ExtractError> {
    if model.is_lossless() {
        return Ok(f64::INFINITY);
    }
    let resolution = |q: f64| f0 * 1e-4 / q.clamp(extract::Q_FLOOR, Q_CAP);
    let mut h = resolution(q_hint);
    let mut q = 0.0;
    for _ in 0..4 {
        let freqs: Vec<f64> = (-2..=2).map(|i| f0 + h * i as f64).collect();
        let mut trace = synthesize_admittance(model, &freqs);
        if impedance {
            trace = trace.reciprocal();
        }
        q = extract::q_from_phase_slope(&trace, f0)?;
        if !q.is_finite() {
            return Ok(q);
        }
        let refined = resolution(q);
        if refined >= 0.5 * h {
            break;
        }
        h = refined;
    }
    Ok(q)
}

/// Table metrics of the dominant branch. `grid` is the analysis frequency
/// grid and must bracket `[fs, fp]` for the antiresonance-derived values.
pub fn metrics_from_model(model: &MbvdModel, grid: &[f64]) -> Result<ResonatorMetrics, ModelError> {
    let pairs = resonance_frequencies(model)?;
    let dom = model.dominant_branch().ok_or(ModelError::NoBranches)?;
    let branch = model.branches[dom];
    let pair = pairs[dom];
    let fs = pair.fs;
    let qm = branch.qm();
    let mut flags = Vec::new();

    let qs = model_phase_q(model, fs, false, qm)?;
    let mut fp = pair.fp;
    if fp.is_none() {
        flags.push(MetricFlag::NoAntiresonance);
    }
    let bracketed = match (grid.first(), grid.last(), fp) {
        (Some(&lo), Some(&hi), Some(fp)) => lo <= fs && fp <= hi,
        _ => false,
    };
    if fp.is_some() && !bracketed {
        flags.push(MetricFlag::NotBracketed);
        fp = None;
    }
    let qp = match fp {
        Some(fp) => Some(model_phase_q(model, fp, true, qm)?),
        None => None,
    };
    let kt2 = fp.map(|fp| Kt2Convention::Standard.from_frequencies(fs, fp));
    let fom = kt2.map(|k| qs * k);

    let branches = model
        .branches
        .iter()
        .map(|b| BranchReport {
            fs: b.series_resonance(),
            qm: b.qm(),
            kt2: branch_kt2(model.c0, b.cm),
        })
        .collect();

    Ok(ResonatorMetrics {
        fs,
        fp,
        qs,
        qp,
        qm,
        kt2,
        c0: model.c0,
        fom,
        fp_numeric: pair.fp_numeric,
        branches,
        flags,
    })
}
