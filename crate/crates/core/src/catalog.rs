//! Published device rows: four families of X-cut lithium niobate lateral
//! resonators (S0/SH0, LVR/d-LVR), 22 devices in total.

use serde::{Deserialize, Serialize};

use crate::designkit::{AcousticMode, DeviceGeometry, Topology};
use crate::mbvd::{branch_from_metrics, model_phase_q, resonance_frequencies, MbvdModel, ModelError};

/// Tolerance used when checking `FoM = Q_s·k_t²` against the printed value.
pub const FOM_TOLERANCE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub label: char,
    pub mode: AcousticMode,
    pub topology: Topology,
    pub lambda_nm: f64,
    pub fs_ghz: f64,
    pub qs: f64,
    pub qp: f64,
    pub qm: f64,
    /// Percent.
    pub kt2_pct: f64,
    pub c0_ff: f64,
    pub fom: f64,
}

macro_rules! row {
    ($l:literal, $m:ident, $t:ident, $lam:literal, $fs:literal, $qs:literal, $qp:literal, $qm:literal, $k:literal, $c0:literal, $fom:literal) => {
        PublishedRow {
            label: $l,
            mode: AcousticMode::$m,
            topology: Topology::$t,
            lambda_nm: $lam,
            fs_ghz: $fs,
            qs: $qs,
            qp: $qp,
            qm: $qm,
            kt2_pct: $k,
            c0_ff: $c0,
            fom: $fom,
        }
    };
}

pub const ROWS: [PublishedRow; 22] = [
    row!('A', S0, Lvr, 1800.0, 2.99, 261.0, 549.0, 997.0, 18.4, 17.6, 48.0),
    row!('B', S0, Lvr, 1200.0, 4.54, 288.0, 84.0, 316.0, 15.9, 28.2, 46.0),
    row!('C', S0, Lvr, 900.0, 6.12, 234.0, 82.0, 247.0, 12.7, 23.8, 30.0),
    row!('D', S0, Lvr, 720.0, 7.65, 187.0, 197.0, 230.0, 8.5, 50.7, 13.0),
    row!('E', S0, Dlvr, 1800.0, 3.00, 316.0, 1383.0, 1318.0, 19.9, 93.6, 63.0),
    row!('F', S0, Dlvr, 1200.0, 4.56, 321.0, 393.0, 505.0, 18.8, 89.8, 60.0),
    row!('G', S0, Dlvr, 900.0, 6.15, 277.0, 297.0, 335.0, 16.0, 93.1, 44.0),
    row!('H', S0, Dlvr, 720.0, 7.77, 259.0, 245.0, 230.0, 11.7, 79.7, 30.0),
    row!('I', S0, Dlvr, 560.0, 9.74, 101.0, 100.0, 105.0, 6.9, 148.0, 7.0),
    row!('J', S0, Dlvr, 480.0, 14.47, 105.0, 56.0, 121.0, 4.0, 31.4, 4.0),
    row!('K', S0, Dlvr, 400.0, 16.21, 55.0, 56.0, 71.0, 5.8, 71.7, 3.0),
    row!('L', Sh0, Lvr, 1800.0, 1.87, 477.0, 588.0, 1143.0, 29.7, 51.4, 142.0),
    row!('M', Sh0, Lvr, 1200.0, 2.83, 301.0, 228.0, 548.0, 24.4, 28.2, 73.0),
    row!('N', Sh0, Lvr, 900.0, 3.84, 242.0, 750.0, 490.0, 19.5, 35.5, 58.0),
    row!('O', Sh0, Lvr, 720.0, 4.99, 158.0, 107.0, 196.0, 13.7, 24.0, 22.0),
    row!('P', Sh0, Dlvr, 1800.0, 1.87, 400.0, 481.0, 1750.0, 32.7, 99.2, 137.0),
    row!('Q', Sh0, Dlvr, 1200.0, 2.86, 262.0, 212.0, 1368.0, 29.3, 111.7, 77.0),
    row!('R', Sh0, Dlvr, 900.0, 3.92, 332.0, 1374.0, 1219.0, 23.7, 86.1, 78.0),
    row!('S', Sh0, Dlvr, 720.0, 5.00, 277.0, 335.0, 904.0, 20.1, 103.6, 56.0),
    row!('T', Sh0, Dlvr, 560.0, 6.50, 299.0, 488.0, 694.0, 14.0, 41.7, 42.0),
    row!('U', Sh0, Dlvr, 480.0, 7.57, 239.0, 199.0, 285.0, 11.1, 22.5, 27.0),
    row!('V', Sh0, Dlvr, 400.0, 8.98, 163.0, 244.0, 244.0, 9.2, 106.1, 15.0),
];

/// Rows whose printed FoM disagrees with `Q_s·k_t²` by more than the tolerance.
pub const FOM_OUTLIERS: [char; 3] = ['D', 'N', 'P'];

pub fn row(label: char) -> Option<&'static PublishedRow> {
    ROWS.iter().find(|r| r.label == label.to_ascii_uppercase())
}

pub fn rows_for(mode: AcousticMode, topology: Topology) -> impl Iterator<Item = &'static PublishedRow> {
    ROWS.iter().filter(move |r| r.mode == mode && r.topology == topology)
}

/// `(λ [m], fs [Hz])` of the LVR rows for `mode`, the built-in velocity
/// calibration set.
pub fn calibration_set(mode: AcousticMode) -> Vec<(f64, f64)> {
    rows_for(mode, Topology::Lvr).map(|r| (r.lambda(), r.fs())).collect()
}

/// Outcome of rebuilding a row as a circuit with matched `Q_s`/`Q_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedModel {
    pub model: MbvdModel,
    /// Branch `Q_m` actually used.
    pub qm: f64,
    /// `Q_s` exceeded what the published `Q_m` allows even with `rs = 0`,
    /// so the branch `Q_m` was raised to reach it.
    pub qm_raised: bool,
    /// `Q_p` not reachable with `r0 = 0`; `r0` left at zero.
    pub qp_clamped: bool,
}

impl PublishedRow {
    pub fn lambda(&self) -> f64 {
        self.lambda_nm * 1e-9
    }

    pub fn fs(&self) -> f64 {
        self.fs_ghz * 1e9
    }

    pub fn kt2(&self) -> f64 {
        self.kt2_pct / 100.0
    }

    pub fn c0(&self) -> f64 {
        self.c0_ff * 1e-15
    }

    pub fn fom_computed(&self) -> f64 {
        self.qs * self.kt2()
    }

    pub fn fom_matches(&self) -> bool {
        (self.fom_computed() - self.fom).abs() <= FOM_TOLERANCE
    }

    /// Nominal geometry: coverage 0.5, 100 nm film, 20 nm metal,
    /// `L_e = 10λ`, `N_p = 80`, `N = 2·N_p`.
    pub fn geometry(&self) -> DeviceGeometry {
        DeviceGeometry {
            lambda: self.lambda(),
            topology: self.topology,
            mode: self.mode,
            n_elements: 160,
            n_pairs: 80,
            aperture: 10.0 * self.lambda(),
            coverage: 0.5,
            film_h: 100e-9,
            metal_tm: 20e-9,
            angle_theta: match self.mode {
                AcousticMode::S0 => 30.0,
                AcousticMode::Sh0 => 10.0,
            },
        }
    }

    /// Lossless-lead BVD model (`rs = r0 = 0`) with the row's `fs`, `Q_m`,
    /// `k_t²` and `C_0`.
    pub fn ideal_model(&self) -> Result<MbvdModel, ModelError> {
        let branch = branch_from_metrics(self.fs(), self.qm, self.kt2(), self.c0())?;
        MbvdModel::bvd(self.c0(), branch)
    }

    /// BVD model whose `rs` and `r0` are tuned so that the phase-slope
    /// `Q_s`/`Q_p` match the row. The published `Q_s`/`Q_p` and `Q_m` come
    /// from different fits; when `Q_s` exceeds what `Q_m` permits, `Q_m` is
    /// raised instead.
    pub fn matched_model(&self) -> Result<MatchedModel, ModelError> {
        let with_qm = |qm: f64| -> Result<MbvdModel, ModelError> {
            MbvdModel::bvd(self.c0(), branch_from_metrics(self.fs(), qm, self.kt2(), self.c0())?)
        };
        let qs_at = |m: &MbvdModel, qm: f64| model_phase_q(m, self.fs(), false, qm);

        // Q_s ≈ Q_m at rs = 0, so a fixed-point step on Q_m converges fast.
        let mut qm = self.qm;
        let mut base = with_qm(qm)?;
        let qm_raised = qs_at(&base, qm)? < self.qs;
        if qm_raised {
            for _ in 0..8 {
                qm *= self.qs / qs_at(&base, qm)?;
                base = with_qm(qm)?;
            }
        }
        let fp = resonance_frequencies(&base)?[0]
            .fp
            .ok_or(ModelError::NonPhysicalCoupling { kt2: self.kt2() })?;
        let qp_at = |m: &MbvdModel| model_phase_q(m, fp, true, qm);
        let rm = base.branches[0].rm;

        let mut model = base;
        let mut qp_clamped = false;
        // rs mostly moves Q_s and r0 mostly moves Q_p; a few alternating passes settle both.
        for _ in 0..4 {
            model.rs = solve_decreasing(|rs| qs_at(&MbvdModel { rs, ..model.clone() }, qm), self.qs, 100.0 * rm)?
                .unwrap_or(0.0);
            match solve_decreasing(|r0| qp_at(&MbvdModel { r0, ..model.clone() }), self.qp, 1e4 * rm)? {
                Some(r0) => {
                    model.r0 = r0;
                    qp_clamped = false;
                }
                None => {
                    model.r0 = 0.0;
                    qp_clamped = true;
                }
            }
        }
        Ok(MatchedModel {
            model,
            qm,
            qm_raised,
            qp_clamped,
        })
    }
}

/// Root of `q(x) = target` on `[0, hi]` for `q` decreasing in `x`.
/// `None` when `q(0)` is already below the target.
fn solve_decreasing<F>(q: F, target: f64, hi: f64) -> Result<Option<f64>, ModelError>
where
    F: Fn(f64) -> Result<f64, crate::extract::ExtractError>,
{
    if q(0.0)? < target * (1.0 - 1e-9) {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, hi);
    if q(hi)? > target {
        return Ok(Some(hi));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if q(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
