//! Geometry, velocity calibration, lithography checks and filter-bank planning
//! for devices sharing one film stack.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mbvd::ResonatorMetrics;

/// Relative slack on lithography comparisons so that a dimension equal to
/// the rule passes despite rounding.
const BOUNDARY_TOL: f64 = 1e-9;
/// Relative deviation from the reference velocity that marks an outlier.
pub const OUTLIER_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("no observations")]
    NoObservations,
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("wavelength {lambda:e} m outside [{lo:e}, {hi:e}] m")]
    LambdaOutOfRange { lambda: f64, lo: f64, hi: f64 },
    #[error("unknown {what} '{text}'")]
    Parse { what: &'static str, text: String },
    #[error("table has no rows")]
    EmptyTable,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Half-width electrodes at both plate edges.
    Lvr,
    /// Full-width electrodes, outer centers λ/4 from the edges.
    Dlvr,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Lvr => "lvr",
            Topology::Dlvr => "dlvr",
        })
    }
}

impl FromStr for Topology {
    type Err = DesignError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "lvr" => Ok(Topology::Lvr),
            "dlvr" => Ok(Topology::Dlvr),
            _ => Err(DesignError::Parse {
                what: "topology",
                text: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcousticMode {
    S0,
    Sh0,
}

impl fmt::Display for AcousticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcousticMode::S0 => "s0",
            AcousticMode::Sh0 => "sh0",
        })
    }
}

impl FromStr for AcousticMode {
    type Err = DesignError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s0" => Ok(AcousticMode::S0),
            "sh0" => Ok(AcousticMode::Sh0),
            _ => Err(DesignError::Parse {
                what: "mode",
                text: s.into(),
            }),
        }
    }
}

/// All lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub lambda: f64,
    pub topology: Topology,
    pub mode: AcousticMode,
    pub n_elements: usize,
    pub n_pairs: usize,
    pub aperture: f64,
    pub coverage: f64,
    pub film_h: f64,
    pub metal_tm: f64,
    /// Degrees.
    pub angle_theta: f64,
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |name, value| Err(DesignError::InvalidParameter { name, value });
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", self.lambda);
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return bad("coverage", self.coverage);
        }
        if self.n_elements < 2 {
            return bad("n_elements", self.n_elements as f64);
        }
        if !(self.aperture > 0.0) {
            return bad("aperture", self.aperture);
        }
        Ok(())
    }

    /// Interior electrode width `c·λ/2`.
    pub fn electrode_width(&self) -> f64 {
        self.coverage * self.lambda / 2.0
    }

    /// Gap between adjacent interior electrodes `(1−c)·λ/2`.
    pub fn gap(&self) -> f64 {
        (1.0 - self.coverage) * self.lambda / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessRules {
    pub min_feature: f64,
    pub min_gap: f64,
    pub lambda_range: (f64, f64),
}

impl Default for ProcessRules {
    fn default() -> Self {
        Self {
            min_feature: 100e-9,
            min_gap: 100e-9,
            lambda_range: (400e-9, 1800e-9),
        }
    }
}

impl ProcessRules {
    pub fn validate(&self) -> Result<(), DesignError> {
        for (name, v) in [
            ("min_feature", self.min_feature),
            ("min_gap", self.min_gap),
            ("lambda_min", self.lambda_range.0),
            ("lambda_max", self.lambda_range.1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DesignError::InvalidParameter { name, value: v });
            }
        }
        if self.lambda_range.0 > self.lambda_range.1 {
            return Err(DesignError::InvalidParameter {
                name: "lambda_range",
                value: self.lambda_range.0,
            });
        }
        Ok(())
    }

    fn lambda_in_range(&self, lambda: f64) -> bool {
        let (lo, hi) = self.lambda_range;
        lambda >= lo * (1.0 - BOUNDARY_TOL) && lambda <= hi * (1.0 + BOUNDARY_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCalibration {
    /// m/s
    pub v_p: f64,
    /// `(max − min) / median` of the `fs·λ` products.
    pub spread: f64,
    pub count: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median phase velocity over `(λ [m], fs [Hz])` observations.
pub fn calibrate_velocity(observations: &[(f64, f64)]) -> Result<VelocityCalibration, DesignError> {
    if observations.is_empty() {
        return Err(DesignError::NoObservations);
    }
    let mut v: Vec<f64> = Vec::with_capacity(observations.len());
    for &(lambda, fs) in observations {
        if !(lambda > 0.0 && fs > 0.0) {
            return Err(DesignError::InvalidParameter {
                name: "observation",
                value: lambda * fs,
            });
        }
        v.push(lambda * fs);
    }
    let med = median(&mut v);
    let spread = (v[v.len() - 1] - v[0]) / med;
    Ok(VelocityCalibration {
        v_p: med,
        spread,
        count: v.len(),
    })
}

/// Indices of observations whose `fs·λ` deviates from `reference` by more
/// than `threshold` (relative).
pub fn velocity_outliers(observations: &[(f64, f64)], reference: f64, threshold: f64) -> Vec<usize> {
    observations
        .iter()
        .enumerate()
        .filter(|(_, &(lambda, fs))| ((lambda * fs) / reference - 1.0).abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn predict_fs(lambda: f64, v_p: f64) -> f64 {
    v_p / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    ElectrodeWidth,
    EdgeElectrodeWidth,
    Gap,
    LambdaRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: Rule,
    /// Offending dimension, m.
    pub value: f64,
    /// Rule limit, m. For `LambdaRange` the violated bound.
    pub limit: f64,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nm = |v: f64| v * 1e9;
        match self.rule {
            Rule::ElectrodeWidth => write!(f, "electrode width {:.1} nm < {:.1} nm", nm(self.value), nm(self.limit)),
            Rule::EdgeElectrodeWidth => {
                write!(f, "edge electrode width {:.1} nm < {:.1} nm", nm(self.value), nm(self.limit))
            }
            Rule::Gap => write!(f, "electrode gap {:.1} nm < {:.1} nm", nm(self.value), nm(self.limit)),
            Rule::LambdaRange => write!(f, "wavelength {:.1} nm beyond {:.1} nm", nm(self.value), nm(self.limit)),
        }
    }
}

fn below(value: f64, limit: f64) -> bool {
    value < limit * (1.0 - BOUNDARY_TOL)
}

/// Rule violations of one geometry. Boundaries are inclusive.
pub fn check_lithography(geom: &DeviceGeometry, rules: &ProcessRules) -> Vec<Finding> {
    let mut out = Vec::new();
    let width = geom.electrode_width();
    if below(width, rules.min_feature) {
        out.push(Finding {
            rule: Rule::ElectrodeWidth,
            value: width,
            limit: rules.min_feature,
        });
    }
    if geom.topology == Topology::Lvr && below(width / 2.0, rules.min_feature) {
        out.push(Finding {
            rule: Rule::EdgeElectrodeWidth,
            value: width / 2.0,
            limit: rules.min_feature,
        });
    }
    if below(geom.gap(), rules.min_gap) {
        out.push(Finding {
            rule: Rule::Gap,
            value: geom.gap(),
            limit: rules.min_gap,
        });
    }
    if !rules.lambda_in_range(geom.lambda) {
        let (lo, hi) = rules.lambda_range;
        out.push(Finding {
            rule: Rule::LambdaRange,
            value: geom.lambda,
            limit: if geom.lambda < lo { lo } else { hi },
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologyPolicy {
    Fixed { topology: Topology },
    /// LVR below `hz`, d-LVR at or above.
    FrequencyThreshold { hz: f64 },
    /// LVR unless its half-width edge electrode breaks the rules.
    #[default]
    LithographyAware,
}

/// Fields copied into every planned geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub mode: AcousticMode,
    pub coverage: f64,
    pub n_elements: usize,
    pub n_pairs: usize,
    /// Aperture as a multiple of λ.
    pub aperture_wavelengths: f64,
    pub film_h: f64,
    pub metal_tm: f64,
    pub angle_theta: f64,
}

impl Default for PlanTemplate {
    fn default() -> Self {
        Self {
            mode: AcousticMode::S0,
            coverage: 0.5,
            n_elements: 160,
            n_pairs: 80,
            aperture_wavelengths: 10.0,
            film_h: 100e-9,
            metal_tm: 20e-9,
            angle_theta: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedDevice {
    pub geometry: DeviceGeometry,
    /// `v_p / λ` after rounding λ.
    pub predicted_fs: f64,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    /// Targets (Hz) that share this rounded wavelength, in input order.
    pub targets: Vec<f64>,
    pub result: Result<PlannedDevice, DesignError>,
}

fn geometry_for(lambda: f64, topology: Topology, t: &PlanTemplate) -> DeviceGeometry {
    DeviceGeometry {
        lambda,
        topology,
        mode: t.mode,
        n_elements: t.n_elements,
        n_pairs: t.n_pairs,
        aperture: t.aperture_wavelengths * lambda,
        coverage: t.coverage,
        film_h: t.film_h,
        metal_tm: t.metal_tm,
        angle_theta: t.angle_theta,
    }
}

fn choose_topology(policy: TopologyPolicy, fs: f64, lambda: f64, template: &PlanTemplate, rules: &ProcessRules) -> Topology {
    match policy {
        TopologyPolicy::Fixed { topology } => topology,
        TopologyPolicy::FrequencyThreshold { hz } => {
            if fs < hz {
                Topology::Lvr
            } else {
                Topology::Dlvr
            }
        }
        TopologyPolicy::LithographyAware => {
            let lvr = geometry_for(lambda, Topology::Lvr, template);
            let edge_ok = check_lithography(&lvr, rules)
                .iter()
                .all(|f| f.rule != Rule::EdgeElectrodeWidth);
            if edge_ok {
                Topology::Lvr
            } else {
                Topology::Dlvr
            }
        }
    }
}

/// One geometry per distinct nm-rounded wavelength. Entries whose wavelength
/// leaves `rules.lambda_range` carry an error; the rest are planned.
pub fn plan_bank(
    targets: &[f64],
    v_p: f64,
    rules: &ProcessRules,
    policy: TopologyPolicy,
    template: &PlanTemplate,
) -> Result<Vec<PlanEntry>, DesignError> {
    if !(v_p > 0.0 && v_p.is_finite()) {
        return Err(DesignError::InvalidParameter { name: "v_p", value: v_p });
    }
    rules.validate()?;
    let mut keys: Vec<i64> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &f in targets {
        if !(f > 0.0 && f.is_finite()) {
            return Err(DesignError::InvalidParameter { name: "target", value: f });
        }
        let nm = (v_p / f * 1e9).round() as i64;
        match keys.iter().position(|&k| k == nm) {
            Some(i) => groups[i].push(f),
            None => {
                keys.push(nm);
                groups.push(vec![f]);
            }
        }
    }
    Ok(keys
        .into_iter()
        .zip(groups)
        .map(|(nm, targets)| {
            let lambda = nm as f64 * 1e-9;
            let result = if !rules.lambda_in_range(lambda) || nm <= 0 {
                Err(DesignError::LambdaOutOfRange {
                    lambda,
                    lo: rules.lambda_range.0,
                    hi: rules.lambda_range.1,
                })
            } else {
                let fs = predict_fs(lambda, v_p);
                let topology = choose_topology(policy, fs, lambda, template, rules);
                let geometry = geometry_for(lambda, topology, template);
                let findings = check_lithography(&geometry, rules);
                Ok(PlannedDevice {
                    geometry,
                    predicted_fs: fs,
                    findings,
                })
            };
            PlanEntry { targets, result }
        })
        .collect())
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// m, `None` when unknown.
    pub lambda: Option<f64>,
    pub metrics: ResonatorMetrics,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, geometry: Option<&DeviceGeometry>, metrics: ResonatorMetrics) -> Self {
        Self {
            label: label.into(),
            lambda: geometry.map(|g| g.lambda),
            metrics,
        }
    }

    /// Display strings in table column order.
    pub fn cells(&self) -> [String; 8] {
        const DASH: &str = "-";
        let q = |v: f64| if v.is_finite() { format!("{v:.0}") } else { "inf".into() };
        let m = &self.metrics;
        [
            self.lambda.map_or(DASH.into(), |l| format!("{:.0}", l * 1e9)),
            format!("{:.3}", m.fs * 1e-9),
            q(m.qs),
            m.qp.map_or(DASH.into(), q),
            q(m.qm),
            m.kt2.map_or(DASH.into(), |k| format!("{:.1}%", k * 100.0)),
            format!("{:.1}", m.c0 * 1e15),
            m.fom.map_or(DASH.into(), |f| if f.is_finite() { format!("{f:.0}") } else { "inf".into() }),
        ]
    }
}

pub const TABLE_HEADER: [&str; 8] = ["λ [nm]", "f_s [GHz]", "Q_s", "Q_p", "Q_m", "k_t²", "C_0 [fF]", "FoM"];
const CSV_HEADER: [&str; 9] = ["label", "lambda_nm", "fs_ghz", "qs", "qp", "qm", "kt2_pct", "c0_ff", "fom"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub markdown: String,
    pub csv: String,
}

/// Markdown and CSV renderings. Row order follows the input.
pub fn render_table(rows: &[ReportRow]) -> Result<RenderedTable, DesignError> {
    if rows.is_empty() {
        return Err(DesignError::EmptyTable);
    }
    let mut md = format!("| | {} |\n|---|{}\n", TABLE_HEADER.join(" | "), "---|".repeat(8));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| DesignError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        let cells = row.cells();
        md.push_str(&format!("| {} | {} |\n", row.label, cells.join(" | ")));
        let mut rec = vec![row.label.clone()];
        // CSV keeps kt2 numeric, without the percent sign
        rec.extend(cells.iter().map(|c| c.trim_end_matches('%').to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| DesignError::Csv(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(RenderedTable { markdown: md, csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(lambda_nm: f64, topology: Topology) -> DeviceGeometry {
        geometry_for(lambda_nm * 1e-9, topology, &PlanTemplate::default())
    }

    #[test]
    fn single_row_velocities() {
        let l = calibrate_velocity(&[(1800e-9, 1.87e9)]).unwrap();
        assert!((l.v_p - 3366.0).abs() < 1e-9);
        assert_eq!(l.spread, 0.0);
        let a = calibrate_velocity(&[(1800e-9, 2.99e9)]).unwrap();
        assert!((a.v_p - 5382.0).abs() < 1e-9);
        assert_eq!(calibrate_velocity(&[]), Err(DesignError::NoObservations));
    }

    #[test]
    fn calibration_is_order_free() {
        let obs = [(1800e-9, 2.99e9), (1200e-9, 4.54e9), (900e-9, 6.12e9), (720e-9, 7.65e9)];
        let mut rev = obs;
        rev.reverse();
        assert_eq!(calibrate_velocity(&obs), calibrate_velocity(&rev));
    }

    #[test]
    fn prediction_errors() {
        let b = predict_fs(1200e-9, 5382.0);
        assert!((b - 4.485e9).abs() < 1e6);
        assert!((b / 4.54e9 - 1.0).abs() < 0.015);
        let v = predict_fs(400e-9, 3366.0);
        assert!((v - 8.415e9).abs() < 1e6);
        assert!((v / 8.98e9 - 1.0).abs() < 0.07);
        assert_eq!(predict_fs(800e-9, 3000.0), predict_fs(400e-9, 3000.0) / 2.0);
    }

    #[test]
    fn lithography_boundaries() {
        let rules = ProcessRules::default();
        let lvr = check_lithography(&geom(400.0, Topology::Lvr), &rules);
        assert_eq!(lvr.len(), 1);
        assert_eq!(lvr[0].rule, Rule::EdgeElectrodeWidth);
        assert!((lvr[0].value - 50e-9).abs() < 1e-18);
        assert!(check_lithography(&geom(400.0, Topology::Dlvr), &rules).is_empty());
        for t in [Topology::Lvr, Topology::Dlvr] {
            assert!(check_lithography(&geom(1800.0, t), &rules).is_empty());
        }
        let small = check_lithography(&geom(300.0, Topology::Dlvr), &rules);
        let rules_hit: Vec<Rule> = small.iter().map(|f| f.rule).collect();
        assert_eq!(rules_hit, vec![Rule::ElectrodeWidth, Rule::Gap, Rule::LambdaRange]);
    }

    #[test]
    fn bank_plan_near_table_designs() {
        let plan = plan_bank(
            &[3.0e9, 4.5e9, 6.1e9],
            5382.0,
            &ProcessRules::default(),
            TopologyPolicy::default(),
            &PlanTemplate::default(),
        )
        .unwrap();
        let nm: Vec<f64> = plan
            .iter()
            .map(|e| (e.result.as_ref().unwrap().geometry.lambda * 1e9).round())
            .collect();
        assert_eq!(nm, vec![1794.0, 1196.0, 882.0]);
    }

    #[test]
    fn bank_partial_failure_and_merge() {
        let rules = ProcessRules::default();
        let plan = plan_bank(
            &[20e9, 3.0e9, 3.0003e9],
            5382.0,
            &rules,
            TopologyPolicy::FrequencyThreshold { hz: 7e9 },
            &PlanTemplate::default(),
        )
        .unwrap();
        assert_eq!(plan.len(), 2);
        assert!(matches!(plan[0].result, Err(DesignError::LambdaOutOfRange { .. })));
        assert_eq!(plan[1].targets, vec![3.0e9, 3.0003e9]);
        assert_eq!(plan[1].result.as_ref().unwrap().geometry.topology, Topology::Lvr);
    }

    #[test]
    fn lithography_aware_policy_switches_at_small_lambda() {
        let plan = plan_bank(
            &[3.0e9, 13.0e9],
            5382.0,
            &ProcessRules::default(),
            TopologyPolicy::LithographyAware,
            &PlanTemplate::default(),
        )
        .unwrap();
        let topo: Vec<Topology> = plan.iter().map(|e| e.result.as_ref().unwrap().geometry.topology).collect();
        assert_eq!(topo, vec![Topology::Lvr, Topology::Dlvr]);
    }

    fn metrics(fp: bool) -> ResonatorMetrics {
        ResonatorMetrics {
            fs: 1.87e9,
            fp: fp.then_some(2.04e9),
            qs: 477.2,
            qp: fp.then_some(588.0),
            qm: 1143.0,
            kt2: fp.then_some(0.297),
            c0: 51.4e-15,
            fom: fp.then_some(477.2 * 0.297),
            fp_numeric: None,
            branches: vec![],
            flags: vec![],
        }
    }

    #[test]
    fn table_rendering() {
        let g = geom(1800.0, Topology::Lvr);
        let t = render_table(&[
            ReportRow::new("L", Some(&g), metrics(true)),
            ReportRow::new("x", None, metrics(false)),
        ])
        .unwrap();
        let lines: Vec<&str> = t.csv.lines().collect();
        assert_eq!(lines[0], "label,lambda_nm,fs_ghz,qs,qp,qm,kt2_pct,c0_ff,fom");
        assert_eq!(lines[1], "L,1800,1.870,477,588,1143,29.7,51.4,142");
        assert_eq!(lines[2], "x,-,1.870,477,-,1143,-,51.4,-");
        assert!(t.markdown.contains("| L | 1800 | 1.870 | 477 | 588 | 1143 | 29.7% | 51.4 | 142 |"));
        assert_eq!(render_table(&[]), Err(DesignError::EmptyTable));
    }

    #[test]
    fn parse_names() {
        assert_eq!("d-LVR".parse::<Topology>().unwrap(), Topology::Dlvr);
        assert_eq!("SH0".parse::<AcousticMode>().unwrap(), AcousticMode::Sh0);
        assert!("saw".parse::<Topology>().is_err());
    }
}
