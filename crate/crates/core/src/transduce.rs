//! One-dimensional electrode-sampling model of lateral plate modes.
//!
//! A free-edge plate of width `W` carries standing waves `u_n = cos(nπx/W)`.
//! Each mode couples to the electrode pattern through the overlap of the
//! polarity-weighted metallization `w(x)` with `u_n`; the squared overlap,
//! normalized over the retained modes, is the coupling weight `eta_n`.
//! Integrating `w·du_n/dx` by parts against the piecewise-constant drive
//! gives the same edge-sampled sum, so the choice is a matter of bookkeeping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::designkit::{DeviceGeometry, Topology};
use crate::mbvd::{branch_from_metrics, MbvdModel, ModelError, MIN_MOTIONAL_CAPACITANCE};

/// Modes weaker than this fraction of the strongest are dropped.
pub const PRUNE_RATIO: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TransduceError {
    #[error("need at least 2 electrodes, got {0}")]
    TooFewElectrodes(usize),
    #[error("coverage {0} outside (0, 1)")]
    Coverage(f64),
    #[error("wavelength must be positive, got {0}")]
    Wavelength(f64),
    #[error("phase velocity must be positive, got {0}")]
    Velocity(f64),
    #[error("n_max {n_max} below twice the design index {design}")]
    NMaxTooSmall { n_max: usize, design: usize },
    #[error("no mode couples to the layout")]
    NoCoupling,
    #[error("sweep is empty or not ascending")]
    BadSweep,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    /// m
    pub center: f64,
    /// m
    pub width: f64,
    pub polarity: i8,
}

impl Electrode {
    pub fn interval(&self) -> (f64, f64) {
        (self.center - self.width / 2.0, self.center + self.width / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub plate_width: f64,
    pub electrodes: Vec<Electrode>,
    pub lambda: f64,
    pub coverage: f64,
    pub topology: Topology,
}

impl ElectrodeLayout {
    /// Mode index whose wavenumber equals `2π/λ`.
    pub fn design_index(&self) -> usize {
        (2.0 * self.plate_width / self.lambda).round() as usize
    }
}

/// Electrode pattern of an LVR or d-LVR with `geom.n_elements` fingers at
/// λ/2 pitch and alternating polarity. LVR edge fingers are half width and
/// sit flush with the plate edges.
pub fn build_layout(geom: &DeviceGeometry) -> Result<ElectrodeLayout, TransduceError> {
    let n = geom.n_elements;
    if n < 2 {
        return Err(TransduceError::TooFewElectrodes(n));
    }
    if !(geom.coverage > 0.0 && geom.coverage < 1.0) {
        return Err(TransduceError::Coverage(geom.coverage));
    }
    if !(geom.lambda > 0.0 && geom.lambda.is_finite()) {
        return Err(TransduceError::Wavelength(geom.lambda));
    }
    let lambda = geom.lambda;
    let full = geom.coverage * lambda / 2.0;
    let pitch = lambda / 2.0;
    let polarity = |i: usize| if i % 2 == 0 { 1 } else { -1 };
    let (plate_width, electrodes) = match geom.topology {
        Topology::Lvr => {
            let w = (n - 1) as f64 * pitch;
            let els = (0..n)
                .map(|i| {
                    let edge = i == 0 || i == n - 1;
                    if edge {
                        let half = full / 2.0;
                        let center = if i == 0 { half / 2.0 } else { w - half / 2.0 };
                        Electrode {
                            center,
                            width: half,
                            polarity: polarity(i),
                        }
                    } else {
                        Electrode {
                            center: i as f64 * pitch,
                            width: full,
                            polarity: polarity(i),
                        }
                    }
                })
                .collect();
            (w, els)
        }
        Topology::Dlvr => {
            let w = n as f64 * pitch;
            let els = (0..n)
                .map(|i| Electrode {
                    center: lambda / 4.0 + i as f64 * pitch,
                    width: full,
                    polarity: polarity(i),
                })
                .collect();
            (w, els)
        }
    };
    Ok(ElectrodeLayout {
        plate_width,
        electrodes,
        lambda,
        coverage: geom.coverage,
        topology: geom.topology,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralMode {
    pub n: usize,
    /// rad/m
    pub k_x: f64,
    /// Hz
    pub f_n: f64,
    pub eta: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub modes: Vec<LateralMode>,
    pub design_index: usize,
    /// `v_p/λ`, Hz
    pub design_frequency: f64,
    /// Weight kept by pruning, before renormalization.
    pub retained: f64,
}

impl ModeSpectrum {
    /// Modes sorted by descending weight, ties to lower `n`.
    pub fn ranked(&self) -> Vec<LateralMode> {
        let mut m = self.modes.clone();
        m.sort_by(|a, b| b.eta.total_cmp(&a.eta).then(a.n.cmp(&b.n)));
        m
    }

    pub fn get(&self, n: usize) -> Option<&LateralMode> {
        self.modes.iter().find(|m| m.n == n)
    }

    /// CSV with columns `N, n, f_n_Hz, eta_n, nodes`.
    pub fn to_csv(&self, n_elements: usize) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "n", "f_n_Hz", "eta_n", "nodes"]).expect("in-memory write");
        for m in &self.modes {
            w.write_record([
                n_elements.to_string(),
                m.n.to_string(),
                format!("{:e}", m.f_n),
                format!("{:e}", m.eta),
                m.nodes.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Electrode weighting shape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectrodeShape {
    /// Uniform over the metallized width.
    #[default]
    TopHat,
    /// Point source at the electrode center carrying the electrode width.
    Delta,
}

/// Overlap of the polarity-weighted electrode pattern with `cos(nπx/W)`.
pub fn overlap(layout: &ElectrodeLayout, n: usize, shape: ElectrodeShape) -> f64 {
    let k = n as f64 * PI / layout.plate_width;
    layout
        .electrodes
        .iter()
        .map(|e| {
            let p = f64::from(e.polarity);
            match shape {
                ElectrodeShape::TopHat => {
                    let (a, b) = e.interval();
                    if n == 0 {
                        p * (b - a)
                    } else {
                        p * ((k * b).sin() - (k * a).sin()) / k
                    }
                }
                ElectrodeShape::Delta => p * e.width * (k * e.center).cos(),
            }
        })
        .sum()
}

/// Coupling weights of modes `1..=n_max`, pruned below [`PRUNE_RATIO`] of
/// the strongest and renormalized to sum to one. `f_n = n·v_p/(2W)`.
pub fn mode_couplings(
    layout: &ElectrodeLayout,
    v_p: f64,
    n_max: usize,
    shape: ElectrodeShape,
) -> Result<ModeSpectrum, TransduceError> {
    if !(v_p > 0.0 && v_p.is_finite()) {
        return Err(TransduceError::Velocity(v_p));
    }
    let design = layout.design_index();
    if n_max < 2 * design {
        return Err(TransduceError::NMaxTooSmall { n_max, design });
    }
    let raw: Vec<(usize, f64)> = (1..=n_max)
        .map(|n| (n, overlap(layout, n, shape).powi(2)))
        .collect();
    let total: f64 = raw.iter().map(|r| r.1).sum();
    let peak = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(TransduceError::NoCoupling);
    }
    let kept: Vec<(usize, f64)> = raw.into_iter().filter(|r| r.1 >= PRUNE_RATIO * peak).collect();
    let kept_sum: f64 = kept.iter().map(|r| r.1).sum();
    let w = layout.plate_width;
    let modes = kept
        .into_iter()
        .map(|(n, e)| LateralMode {
            n,
            k_x: n as f64 * PI / w,
            f_n: n as f64 * v_p / (2.0 * w),
            eta: e / kept_sum,
            nodes: n,
        })
        .collect();
    Ok(ModeSpectrum {
        modes,
        design_index: design,
        design_frequency: v_p / layout.lambda,
        retained: kept_sum / total,
    })
}

/// Multi-branch model with one branch per mode, `kt2_n = eta_n·kt2_total`,
/// all branches sharing `q_assumed`. Modes too weak for a branch
/// (`cm` under [`MIN_MOTIONAL_CAPACITANCE`]) are left out.
pub fn spectrum_to_mbvd(
    spec: &ModeSpectrum,
    c0: f64,
    kt2_total: f64,
    q_assumed: f64,
) -> Result<MbvdModel, TransduceError> {
    let mut branches = Vec::with_capacity(spec.modes.len());
    for m in &spec.modes {
        match branch_from_metrics(m.f_n, q_assumed, m.eta * kt2_total, c0) {
            Ok(b) => branches.push(b),
            Err(ModelError::DegenerateCoupling { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if branches.is_empty() {
        return Err(TransduceError::NoCoupling);
    }
    debug_assert!(branches.iter().all(|b| b.cm >= MIN_MOTIONAL_CAPACITANCE));
    Ok(MbvdModel::new(c0, 0.0, 0.0, branches)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub n: usize,
    pub f_n: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n_elements: usize,
    pub design_frequency: f64,
    pub dominant: ModeSummary,
    pub partner: Option<ModeSummary>,
    /// `|f_dominant − v_p/λ| / (v_p/λ)`
    pub dominant_offset: f64,
    /// Largest offset of the two strongest modes.
    pub pair_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStudy {
    pub topology: Topology,
    pub lambda: f64,
    pub v_p: f64,
    pub rows: Vec<StudyRow>,
}

fn summary(m: &LateralMode) -> ModeSummary {
    ModeSummary {
        n: m.n,
        f_n: m.f_n,
        eta: m.eta,
    }
}

/// Dominant modes as the electrode count sweeps over `counts` (ascending).
/// `n_max` is raised to twice the design index where it falls short.
pub fn split_study(
    base: &DeviceGeometry,
    counts: &[usize],
    v_p: f64,
    n_max: usize,
    shape: ElectrodeShape,
) -> Result<SplitStudy, TransduceError> {
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TransduceError::BadSweep);
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let geom = DeviceGeometry {
            n_elements: n,
            ..base.clone()
        };
        let layout = build_layout(&geom)?;
        let spec = mode_couplings(&layout, v_p, n_max.max(2 * layout.design_index()), shape)?;
        let ranked = spec.ranked();
        let fd = spec.design_frequency;
        let offset = |m: &LateralMode| (m.f_n - fd).abs() / fd;
        let dominant = &ranked[0];
        let partner = ranked.get(1);
        rows.push(StudyRow {
            n_elements: n,
            design_frequency: fd,
            dominant: summary(dominant),
            partner: partner.map(summary),
            dominant_offset: offset(dominant),
            pair_offset: partner.map(|p| offset(p).max(offset(dominant))),
        });
    }
    Ok(SplitStudy {
        topology: base.topology,
        lambda: base.lambda,
        v_p,
        rows,
    })
}

impl SplitStudy {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "N",
            "n_dominant",
            "f_dominant_Hz",
            "eta_dominant",
            "n_partner",
            "f_partner_Hz",
            "eta_partner",
            "dominant_offset",
            "pair_offset",
        ])
        .expect("in-memory write");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n_elements.to_string(),
                r.dominant.n.to_string(),
                format!("{:e}", r.dominant.f_n),
                format!("{:e}", r.dominant.eta),
                opt(r.partner.map(|p| p.n.to_string())),
                opt(r.partner.map(|p| format!("{:e}", p.f_n))),
                opt(r.partner.map(|p| format!("{:e}", p.eta))),
                format!("{:e}", r.dominant_offset),
                opt(r.pair_offset.map(|v| format!("{v:e}"))),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designkit::AcousticMode;
    use crate::grid::linspace;
    use crate::mbvd::{branch_kt2, synthesize_admittance};

    pub(crate) fn geom(topology: Topology, n: usize, lambda: f64, c: f64) -> DeviceGeometry {
        DeviceGeometry {
            lambda,
            topology,
            mode: AcousticMode::S0,
            n_elements: n,
            n_pairs: n / 2,
            aperture: 10.0 * lambda,
            coverage: c,
            film_h: 100e-9,
            metal_tm: 20e-9,
            angle_theta: 30.0,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn dlvr_five_layout() {
        let l = build_layout(&geom(Topology::Dlvr, 5, 2e-6, 0.5)).unwrap();
        assert!(close(l.plate_width, 5e-6));
        assert!(close(l.electrodes[0].center, 0.5e-6));
        assert!(close(l.electrodes[4].center, 4.5e-6));
        assert_eq!(l.design_index(), 5);
    }

    #[test]
    fn lvr_five_layout() {
        let l = build_layout(&geom(Topology::Lvr, 5, 2e-6, 0.5)).unwrap();
        assert!(close(l.plate_width, 4e-6));
        let first = l.electrodes[0];
        let last = l.electrodes[4];
        assert!(close(first.width, 0.25e-6) && close(last.width, 0.25e-6));
        assert!(close(first.interval().0, 0.0));
        assert!(close(last.interval().1, 4e-6));
        assert!(close(l.electrodes[2].width, 0.5e-6));
    }

    #[test]
    fn minimal_dlvr() {
        let l = build_layout(&geom(Topology::Dlvr, 2, 1e-6, 0.5)).unwrap();
        assert_eq!(l.electrodes.len(), 2);
        assert!(close(l.plate_width, 1e-6));
        assert!(close(l.electrodes[0].center, 0.25e-6));
        assert!(close(l.electrodes[1].center, 0.75e-6));
    }

    #[test]
    fn layout_invariants() {
        for topo in [Topology::Lvr, Topology::Dlvr] {
            for n in [2, 3, 5, 12, 41] {
                let l = build_layout(&geom(topo, n, 1.2e-6, 0.6)).unwrap();
                let mut prev_end = -1.0;
                for (i, e) in l.electrodes.iter().enumerate() {
                    let (a, b) = e.interval();
                    assert!(a >= -1e-18 && b <= l.plate_width + 1e-18);
                    assert!(a > prev_end);
                    prev_end = b;
                    if i > 0 {
                        assert_eq!(e.polarity, -l.electrodes[i - 1].polarity);
                    }
                }
            }
        }
    }

    #[test]
    fn layout_errors() {
        assert_eq!(
            build_layout(&geom(Topology::Dlvr, 1, 1e-6, 0.5)),
            Err(TransduceError::TooFewElectrodes(1))
        );
        assert_eq!(
            build_layout(&geom(Topology::Dlvr, 4, 1e-6, 1.0)),
            Err(TransduceError::Coverage(1.0))
        );
    }

    #[test]
    fn dlvr_five_excites_four_and_six() {
        let l = build_layout(&geom(Topology::Dlvr, 5, 2e-6, 0.5)).unwrap();
        let s = mode_couplings(&l, 5000.0, 20, ElectrodeShape::TopHat).unwrap();
        let r = s.ranked();
        let mut top = [r[0].nodes, r[1].nodes];
        top.sort();
        assert_eq!(top, [4, 6]);
        let eta4 = s.get(4).unwrap().eta;
        assert!(s.get(5).map_or(0.0, |m| m.eta) < 1e-9 * eta4);
        let f4 = s.get(4).unwrap().f_n;
        assert!((f4 / s.design_frequency - 0.8).abs() < 1e-12);
        assert!((s.get(6).unwrap().f_n / s.design_frequency - 1.2).abs() < 1e-12);
    }

    #[test]
    fn lvr_samples_one_mode() {
        for n in [5, 10, 20, 40, 80] {
            let l = build_layout(&geom(Topology::Lvr, n, 2e-6, 0.5)).unwrap();
            let s = mode_couplings(&l, 5000.0, 4 * n, ElectrodeShape::TopHat).unwrap();
            let top = s.ranked()[0];
            assert_eq!(top.n, l.design_index());
            assert!((top.f_n - s.design_frequency).abs() / s.design_frequency < 1e-9);
        }
    }

    #[test]
    fn normalization_and_pruning() {
        for topo in [Topology::Lvr, Topology::Dlvr] {
            let l = build_layout(&geom(topo, 7, 1e-6, 0.5)).unwrap();
            let s = mode_couplings(&l, 4000.0, 40, ElectrodeShape::TopHat).unwrap();
            let sum: f64 = s.modes.iter().map(|m| m.eta).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(s.retained >= 0.999);
            let max = s.ranked()[0].eta;
            assert!(s.modes.iter().all(|m| m.eta >= PRUNE_RATIO * max));
            assert!(s.modes.windows(2).all(|w| w[0].f_n < w[1].f_n));
        }
        let l = build_layout(&geom(Topology::Dlvr, 7, 1e-6, 0.5)).unwrap();
        assert!(matches!(
            mode_couplings(&l, 4000.0, 10, ElectrodeShape::TopHat),
            Err(TransduceError::NMaxTooSmall { .. })
        ));
    }

    fn trapezoid(layout: &ElectrodeLayout, n: usize, points: usize) -> f64 {
        let k = n as f64 * PI / layout.plate_width;
        layout
            .electrodes
            .iter()
            .map(|e| {
                let (a, b) = e.interval();
                let h = (b - a) / (points - 1) as f64;
                let inner: f64 = (1..points - 1).map(|i| (k * (a + h * i as f64)).cos()).sum();
                f64::from(e.polarity) * h * (inner + 0.5 * ((k * a).cos() + (k * b).cos()))
            })
            .sum()
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for topo in [Topology::Lvr, Topology::Dlvr] {
            let l = build_layout(&geom(topo, 5, 2e-6, 0.5)).unwrap();
            let scale = (1..=20).map(|n| overlap(&l, n, ElectrodeShape::TopHat).abs()).fold(0.0, f64::max);
            for n in 1..=20 {
                let cf = overlap(&l, n, ElectrodeShape::TopHat);
                let q = trapezoid(&l, n, 10_000);
                assert!((cf - q).abs() < 1e-8 * scale, "{topo} n={n}: {cf} vs {q}");
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let base = build_layout(&geom(Topology::Dlvr, 9, 1e-6, 0.5)).unwrap();
        let s0 = mode_couplings(&base, 4000.0, 40, ElectrodeShape::TopHat).unwrap();
        for s in [0.5, 2.0] {
            let l = build_layout(&geom(Topology::Dlvr, 9, s * 1e-6, 0.5)).unwrap();
            let sp = mode_couplings(&l, 4000.0, 40, ElectrodeShape::TopHat).unwrap();
            assert_eq!(sp.modes.len(), s0.modes.len());
            for (a, b) in s0.modes.iter().zip(&sp.modes) {
                assert_eq!(a.n, b.n);
                assert!((b.f_n * s / a.f_n - 1.0).abs() < 1e-12);
                assert!((a.eta - b.eta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coverage_continuity() {
        let eta = |c: f64, n: usize| {
            let l = build_layout(&geom(Topology::Dlvr, 5, 2e-6, c)).unwrap();
            mode_couplings(&l, 5000.0, 20, ElectrodeShape::TopHat).unwrap().get(n).unwrap().eta
        };
        for c in [0.48, 0.49, 0.5, 0.51] {
            for n in [4, 6] {
                let (a, b) = (eta(c, n), eta(c + 0.01, n));
                assert!((a - b).abs() / a < 0.05, "c={c} n={n}");
            }
        }
    }

    #[test]
    fn delta_electrodes_keep_parity() {
        let l = build_layout(&geom(Topology::Dlvr, 5, 2e-6, 0.5)).unwrap();
        let s = mode_couplings(&l, 5000.0, 20, ElectrodeShape::Delta).unwrap();
        // point sampling aliases without roll-off, so look below 2× design only
        let band: Vec<LateralMode> = s.ranked().into_iter().filter(|m| m.n < 10).collect();
        let mut top = [band[0].n, band[1].n];
        top.sort();
        assert_eq!(top, [4, 6]);
        assert!(s.get(5).map_or(0.0, |m| m.eta) < 1e-9 * s.get(4).unwrap().eta);
    }

    #[test]
    fn single_mode_passthrough() {
        let spec = ModeSpectrum {
            modes: vec![LateralMode {
                n: 5,
                k_x: 1.0,
                f_n: 2.5e9,
                eta: 1.0,
                nodes: 5,
            }],
            design_index: 5,
            design_frequency: 2.5e9,
            retained: 1.0,
        };
        let m = spectrum_to_mbvd(&spec, 80e-15, 0.15, 500.0).unwrap();
        assert_eq!(m.branches.len(), 1);
        assert!((branch_kt2(m.c0, m.branches[0].cm) / 0.15 - 1.0).abs() < 1e-9);
    }

    fn peaks_above(model: &MbvdModel, lo: f64, hi: f64, floor_db: f64) -> usize {
        let t = synthesize_admittance(model, &linspace(lo, hi, 40_001));
        let db: Vec<f64> = t.values.iter().map(|v| 20.0 * v.norm().log10()).collect();
        let max = db.iter().cloned().fold(f64::MIN, f64::max);
        (1..db.len() - 1)
            .filter(|&i| db[i] > db[i - 1] && db[i] >= db[i + 1] && db[i] > max + floor_db)
            .count()
    }

    #[test]
    fn dlvr_five_admittance_splits() {
        let l = build_layout(&geom(Topology::Dlvr, 5, 2e-6, 0.5)).unwrap();
        let s = mode_couplings(&l, 5000.0, 20, ElectrodeShape::TopHat).unwrap();
        let m = spectrum_to_mbvd(&s, 50e-15, 0.2, 500.0).unwrap();
        let fd = s.design_frequency;
        // two strong peaks near 0.8 and 1.2 of the design frequency
        assert_eq!(peaks_above(&m, 0.6 * fd, 1.4 * fd, -10.0), 2);
    }

    #[test]
    fn dlvr_sixty_has_many_peaks() {
        let l = build_layout(&geom(Topology::Dlvr, 60, 2e-6, 0.5)).unwrap();
        let s = mode_couplings(&l, 5000.0, 120, ElectrodeShape::TopHat).unwrap();
        let m = spectrum_to_mbvd(&s, 50e-15, 0.2, 500.0).unwrap();
        let fd = s.design_frequency;
        assert!(peaks_above(&m, 0.9 * fd, 1.1 * fd, -40.0) > 2);
    }

    #[test]
    fn study_offsets_fall_with_n() {
        let base = geom(Topology::Dlvr, 5, 2e-6, 0.5);
        let st = split_study(&base, &[5, 10, 20, 40, 80], 5000.0, 0, ElectrodeShape::TopHat).unwrap();
        let off: Vec<f64> = st.rows.iter().map(|r| r.dominant_offset).collect();
        for (o, n) in off.iter().zip([5.0, 10.0, 20.0, 40.0, 80.0]) {
            assert!((o - 1.0 / n).abs() < 1e-12, "{o} at {n}");
        }
        let first = &st.rows[0];
        assert!((first.pair_offset.unwrap() - 0.2).abs() < 1e-12);
        assert!(st.to_csv().lines().count() == 6);
        assert!(matches!(
            split_study(&base, &[10, 5], 5000.0, 0, ElectrodeShape::TopHat),
            Err(TransduceError::BadSweep)
        ));
    }

    #[test]
    fn lvr_study_is_on_target() {
        let base = geom(Topology::Lvr, 5, 2e-6, 0.5);
        let st = split_study(&base, &[5, 10, 20, 40, 80], 5000.0, 0, ElectrodeShape::TopHat).unwrap();
        assert!(st.rows.iter().all(|r| r.dominant_offset < 1e-9));
    }
}
