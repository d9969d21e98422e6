//! Command-line front end. The `resfit` binary is a thin wrapper around [`run`].
//!
//! Exit codes: 0 success, 1 partial failure (batch or design), 2 input
//! error, 3 fit did not converge.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::designkit::{
    calibrate_velocity, plan_bank, render_table, AcousticMode, PlanTemplate, ProcessRules, ReportRow, Topology,
    TopologyPolicy,
};
use crate::extract::{q_from_phase_slope, DEFAULT_THRESHOLD_DB};
use crate::fitkernel::{FitOptions, Weighting};
use crate::grid::{add_complex_noise, linspace, resonance_window};
use crate::mbvd::{resonance_frequencies, synthesize_admittance, MbvdModel};
use crate::netparams::{
    device_admittance, parse_touchstone_with_comments, s_to_y, write_touchstone, y_to_s, ComplexTrace, DataFormat,
    Embedding, FreqUnit, NetworkRecord, ParamKind,
};
use crate::pipeline::{analyze, Analysis, AnalysisOptions};
use crate::plot::{Chart, Series};
use crate::transduce::{build_layout, mode_couplings, spectrum_to_mbvd, split_study, ElectrodeShape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(name = "resfit", version, about = "Equivalent-circuit fitting and design tools for lateral-mode piezoelectric resonators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Fit one Touchstone file and report its metrics.
    Fit(FitArgs),
    /// Fit every .s2p file in a directory and aggregate a table.
    Batch(BatchArgs),
    /// Synthesize a Touchstone file from a model or a catalog row.
    Synth(SynthArgs),
    /// Electrode-sampling mode spectrum and N sweep.
    Modes(ModesArgs),
    /// Plan a bank of resonators from target frequencies.
    Design(DesignArgs),
    /// Convert between Touchstone and the JSON network dump.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingArg {
    Complex,
    LogMagPhase,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalysisFlags {
    /// Treat the device as a shunt element (Y11 + Y21) instead of series (−Y21).
    #[arg(long)]
    pub shunt: bool,
    /// Peak prominence threshold, dB.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB)]
    pub threshold_db: f64,
    #[arg(long, value_enum, default_value_t = WeightingArg::Complex)]
    pub weighting: WeightingArg,
    /// Extra fits from deterministic seed perturbations.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Write the detected resonance candidates as JSON.
    #[arg(long)]
    pub emit_candidates: bool,
    /// Write the full fit result including the per-iteration cost trace.
    #[arg(long)]
    pub trace_fit: bool,
    /// Also report Q_s/Q_p from the raw trace phase.
    #[arg(long)]
    pub raw_q: bool,
}

impl AnalysisFlags {
    fn embedding(&self) -> Embedding {
        if self.shunt {
            Embedding::Shunt
        } else {
            Embedding::Series
        }
    }

    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            threshold_db: self.threshold_db,
            fit: FitOptions {
                max_iter: self.max_iter,
                weighting: match self.weighting {
                    WeightingArg::Complex => Weighting::Complex,
                    WeightingArg::LogMagPhase => Weighting::LogMagPhase,
                },
                restarts: self.restarts,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: AnalysisFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BatchArgs {
    pub dir: PathBuf,
    #[arg(long, short, default_value = "report")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: AnalysisFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Ri,
    Ma,
    Db,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ri => DataFormat::RI,
            FormatArg::Ma => DataFormat::MA,
            FormatArg::Db => DataFormat::DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitArg {
    Hz,
    Khz,
    Mhz,
    Ghz,
}

impl From<UnitArg> for FreqUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Hz => FreqUnit::Hz,
            UnitArg::Khz => FreqUnit::KHz,
            UnitArg::Mhz => FreqUnit::MHz,
            UnitArg::Ghz => FreqUnit::GHz,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Model JSON (as written by `fit`).
    #[arg(long, required_unless_present = "row", conflicts_with = "row")]
    pub model: Option<PathBuf>,
    /// Published table row label (A–V).
    #[arg(long)]
    pub row: Option<char>,
    /// With --row: use rs = r0 = 0 instead of matching Q_s/Q_p.
    #[arg(long, requires = "row")]
    pub ideal: bool,
    /// Grid start, Hz. Defaults to a window around the dominant resonance.
    #[arg(long, requires = "stop")]
    pub start: Option<f64>,
    /// Grid stop, Hz.
    #[arg(long, requires = "start")]
    pub stop: Option<f64>,
    #[arg(long, default_value_t = 1601)]
    pub points: usize,
    /// Complex white noise level relative to median |Y|, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub noise_db: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Wavelength recorded in the file header, m.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Ri)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = UnitArg::Ghz)]
    pub unit: UnitArg,
    #[arg(long, default_value_t = 50.0)]
    pub z0: f64,
    /// Output .s2p path.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Median fs·λ of S0 LVR rows A–D, m/s.
pub const DEFAULT_VP: f64 = 5478.0;

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModesArgs {
    #[arg(long, default_value = "dlvr", value_parser = parse_topology)]
    pub topology: Topology,
    /// Electrode count.
    #[arg(long = "n", required_unless_present = "sweep_n")]
    pub n: Option<usize>,
    /// Wavelength, m.
    #[arg(long, default_value_t = 2e-6)]
    pub lambda: f64,
    /// Coverage (metallization ratio).
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Phase velocity, m/s.
    #[arg(long, default_value_t = DEFAULT_VP)]
    pub vp: f64,
    /// Highest mode index; defaults to 4× the design index.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub delta_electrodes: bool,
    /// Sweep electrode count `a:b:step`.
    #[arg(long)]
    pub sweep_n: Option<String>,
    /// Static capacitance for the synthesized admittance, F.
    #[arg(long, default_value_t = 50e-15)]
    pub c0: f64,
    /// Total coupling shared among modes.
    #[arg(long, default_value_t = 0.2)]
    pub kt2: f64,
    /// Quality factor of every mode branch.
    #[arg(long, default_value_t = 500.0)]
    pub q: f64,
    #[arg(long, default_value_t = 4001)]
    pub points: usize,
    #[arg(long, short, default_value = "modes")]
    pub out: PathBuf,
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse().map_err(|e: crate::designkit::DesignError| e.to_string())
}

fn parse_mode(s: &str) -> Result<AcousticMode, String> {
    s.parse().map_err(|e: crate::designkit::DesignError| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DesignArgs {
    /// Text file of target frequencies in Hz, one or more per line.
    pub targets: PathBuf,
    /// JSON with `rules`, `calibration`, `policy`, `template` (all optional).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Phase velocity override, m/s.
    #[arg(long)]
    pub vp: Option<f64>,
    #[arg(long, default_value = "s0", value_parser = parse_mode)]
    pub mode: AcousticMode,
    /// `lithography`, `lvr`, `dlvr` or `threshold:<Hz>`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long, short, default_value = "design")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvertTarget {
    Touchstone,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvertArgs {
    /// .s2p or .json network file.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub to: ConvertTarget,
    /// JSON output holds Y-parameters instead of S.
    #[arg(long)]
    pub y: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Ri)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = UnitArg::Ghz)]
    pub unit: UnitArg,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Fit,
    Batch,
    Synth,
    Modes,
    Design,
    Convert,
}

/// Record of one invocation. Holds no timestamps so reruns are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: CommandKind,
    pub inputs: Vec<PathBuf>,
    pub options: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_file(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(
        self,
        command: CommandKind,
        inputs: Vec<PathBuf>,
        options: &impl Serialize,
        exit_code: i32,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            inputs,
            options: serde_json::to_value(options).expect("options serialize"),
            outputs: self.written,
            exit_code,
        };
        write_file(&self.dir.join("manifest.json"), &to_json(&manifest))?;
        Ok(manifest)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Header keys written by `synth` and read back by `fit`.
fn header_value<'a>(comments: &'a [String], key: &str) -> Option<&'a str> {
    comments.iter().find_map(|c| {
        let (k, v) = c.split_once('=')?;
        (k.trim() == key).then(|| v.trim())
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

/// Parsed device trace plus header metadata.
struct Measurement {
    trace: ComplexTrace,
    label: String,
    lambda: Option<f64>,
}

fn load_measurement(path: &Path, embedding: Embedding) -> Result<Measurement, CliError> {
    let text = read_file(path)?;
    let ctx = |e: &dyn std::fmt::Display| CliError::input(format!("{}: {e}", path.display()));
    let (net, comments) = parse_touchstone_with_comments(&text).map_err(|e| ctx(&e))?;
    let y = s_to_y(&net).map_err(|e| ctx(&e))?;
    let trace = device_admittance(&y, embedding).map_err(|e| ctx(&e))?;
    Ok(Measurement {
        trace,
        label: header_value(&comments, "label").map_or_else(|| file_stem(path), str::to_string),
        lambda: header_value(&comments, "lambda_m").and_then(|v| v.parse().ok()),
    })
}

#[derive(Debug, Clone, Serialize)]
struct FitSummary {
    iterations: usize,
    converged: bool,
    termination: crate::fitkernel::Termination,
    cost: f64,
    residual_rms: f64,
    branches: usize,
    dominant: usize,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct RawQ {
    qs: Option<f64>,
    qp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct MetricsReport<'a> {
    input: &'a Path,
    label: &'a str,
    lambda_m: Option<f64>,
    embedding: Embedding,
    metrics: &'a crate::mbvd::ResonatorMetrics,
    fit: FitSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_q: Option<RawQ>,
}

fn fit_chart(trace: &ComplexTrace, model: &MbvdModel, title: &str) -> (String, String) {
    let fitted = synthesize_admittance(model, &trace.freqs);
    let db = |v: num_complex::Complex64| 20.0 * v.norm().log10();
    let mut csv = String::from("freq_Hz,meas_re,meas_im,fit_re,fit_im,meas_db,fit_db\n");
    for ((f, m), y) in trace.freqs.iter().zip(&trace.values).zip(&fitted.values) {
        csv.push_str(&format!(
            "{f:e},{:e},{:e},{:e},{:e},{:.6},{:.6}\n",
            m.re,
            m.im,
            y.re,
            y.im,
            db(*m),
            db(*y)
        ));
    }
    let chart = Chart {
        title: title.to_string(),
        x_label: "Frequency [GHz]".into(),
        y_label: "|Y| [dB S]".into(),
        series: vec![
            Series::line("measured", trace.freqs.iter().zip(&trace.values).map(|(f, v)| (f * 1e-9, db(*v))).collect()),
            Series::line("fit", fitted.freqs.iter().zip(&fitted.values).map(|(f, v)| (f * 1e-9, db(*v))).collect()),
        ],
        ..Chart::default()
    };
    (csv, chart.to_svg())
}

/// Writes every per-file artifact of a fit into `out` under `stem`.
fn write_fit_outputs(
    out: &mut Outputs,
    stem: &str,
    input: &Path,
    meas: &Measurement,
    analysis: &Analysis,
    flags: &AnalysisFlags,
) -> Result<ReportRow, CliError> {
    let fit = &analysis.fit;
    let metrics = &analysis.metrics;
    let raw_q = flags.raw_q.then(|| RawQ {
        qs: q_from_phase_slope(&meas.trace, metrics.fs).ok(),
        qp: metrics
            .fp
            .and_then(|fp| q_from_phase_slope(&meas.trace.reciprocal(), fp).ok()),
    });
    let report = MetricsReport {
        input,
        label: &meas.label,
        lambda_m: meas.lambda,
        embedding: flags.embedding(),
        metrics,
        fit: FitSummary {
            iterations: fit.iterations,
            converged: fit.converged,
            termination: fit.termination,
            cost: fit.cost,
            residual_rms: fit.residual_rms,
            branches: fit.model.branches.len(),
            dominant: fit.dominant,
            warnings: fit.warnings.clone(),
        },
        raw_q,
    };
    out.write(&format!("{stem}.metrics.json"), &to_json(&report))?;
    out.write(&format!("{stem}.model.json"), &(fit.model.to_json() + "\n"))?;
    let (csv, svg) = fit_chart(&meas.trace, &fit.model, &meas.label);
    out.write(&format!("{stem}.fit.csv"), &csv)?;
    out.write(&format!("{stem}.fit.svg"), &svg)?;
    if flags.emit_candidates {
        out.write(&format!("{stem}.candidates.json"), &to_json(&analysis.candidates))?;
    }
    if flags.trace_fit {
        out.write(&format!("{stem}.fit_trace.json"), &to_json(fit))?;
    }
    Ok(ReportRow {
        label: meas.label.clone(),
        lambda: meas.lambda,
        metrics: metrics.clone(),
    })
}

fn cmd_fit(args: &FitArgs) -> Result<RunManifest, CliError> {
    let meas = load_measurement(&args.input, args.flags.embedding())?;
    let analysis = analyze(&meas.trace, &args.flags.options())
        .map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    let mut out = Outputs::new(&args.out)?;
    let stem = file_stem(&args.input);
    let row = write_fit_outputs(&mut out, &stem, &args.input, &meas, &analysis, &args.flags)?;
    let table = render_table(&[row]).map_err(|e| CliError::input(e.to_string()))?;
    out.write(&format!("{stem}.table.md"), &table.markdown)?;
    out.write(&format!("{stem}.table.csv"), &table.csv)?;
    let code = if analysis.fit.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    let manifest = out.finish(CommandKind::Fit, vec![args.input.clone()], args, code)?;
    print!("{}", table.markdown);
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
struct Failure {
    file: PathBuf,
    error: String,
}

fn cmd_batch(args: &BatchArgs) -> Result<RunManifest, CliError> {
    let entries = fs::read_dir(&args.dir).map_err(|e| CliError::input(format!("{}: {e}", args.dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("s2p")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(format!("{}: no .s2p files", args.dir.display())));
    }
    let options = args.flags.options();
    let embedding = args.flags.embedding();
    let results: Vec<Result<(Measurement, Analysis), String>> = files
        .par_iter()
        .map(|path| {
            let meas = load_measurement(path, embedding).map_err(|e| e.message)?;
            let analysis = analyze(&meas.trace, &options).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok((meas, analysis))
        })
        .collect();

    let mut out = Outputs::new(&args.out)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (path, res) in files.iter().zip(results) {
        match res {
            Ok((meas, analysis)) => {
                let stem = format!("files/{}", file_stem(path));
                rows.push(write_fit_outputs(&mut out, &stem, path, &meas, &analysis, &args.flags)?);
                if !analysis.fit.converged {
                    failures.push(Failure {
                        file: path.clone(),
                        error: format!("{}: fit did not converge", path.display()),
                    });
                }
            }
            Err(error) => failures.push(Failure {
                file: path.clone(),
                error,
            }),
        }
    }
    if !rows.is_empty() {
        let table = render_table(&rows).map_err(|e| CliError::input(e.to_string()))?;
        out.write("report.md", &table.markdown)?;
        out.write("report.csv", &table.csv)?;
        print!("{}", table.markdown);
    }
    out.write("failures.json", &to_json(&failures))?;
    for f in &failures {
        eprintln!("{}", f.error);
    }
    let code = if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
    out.finish(CommandKind::Batch, files, args, code)
}

fn cmd_synth(args: &SynthArgs) -> Result<RunManifest, CliError> {
    let mut inputs = Vec::new();
    let (model, label, lambda) = match (&args.model, args.row) {
        (Some(path), _) => {
            let model = MbvdModel::from_json(&read_file(path)?)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            inputs.push(path.clone());
            (model, args.label.clone(), args.lambda)
        }
        (None, Some(label)) => {
            let row = catalog::row(label).ok_or_else(|| CliError::input(format!("unknown table row '{label}'")))?;
            let model = if args.ideal {
                row.ideal_model()
            } else {
                row.matched_model().map(|m| m.model)
            }
            .map_err(|e| CliError::input(e.to_string()))?;
            (
                model,
                args.label.clone().or_else(|| Some(row.label.to_string())),
                args.lambda.or(Some(row.lambda())),
            )
        }
        (None, None) => return Err(CliError::input("either --model or --row is required")),
    };
    let freqs = match (args.start, args.stop) {
        (Some(a), Some(b)) if a > 0.0 && b > a => linspace(a, b, args.points),
        (Some(_), Some(_)) => return Err(CliError::input("need 0 < start < stop")),
        _ => {
            let dom = model.dominant_branch().ok_or_else(|| CliError::input("model has no motional branch"))?;
            let pair = resonance_frequencies(&model).map_err(|e| CliError::input(e.to_string()))?[dom];
            let fs = pair.fs;
            resonance_window(fs, pair.fp.unwrap_or(fs * 1.05), args.points)
        }
    };
    if freqs.len() < 2 {
        return Err(CliError::input("need at least 2 points"));
    }
    let mut trace = synthesize_admittance(&model, &freqs);
    if let Some(db) = args.noise_db {
        trace = add_complex_noise(&trace, db, args.seed);
    }
    let net = NetworkRecord::series_element(&trace, args.z0)
        .and_then(|y| y_to_s(&y))
        .map_err(|e| CliError::input(e.to_string()))?;
    let mut comments = vec!["resfit synth".to_string(), "embedding = series".to_string()];
    if let Some(l) = &label {
        comments.push(format!("label = {l}"));
    }
    if let Some(l) = lambda {
        comments.push(format!("lambda_m = {l:e}"));
    }
    let text = write_touchstone(&net, args.format.into(), args.unit.into(), &comments)
        .map_err(|e| CliError::input(e.to_string()))?;
    write_file(&args.out, &text)?;
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut out = Outputs::new(dir)?;
    out.written.push(args.out.clone());
    let manifest_name = format!("{}.manifest.json", file_stem(&args.out));
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: CommandKind::Synth,
        inputs,
        options: serde_json::to_value(args).expect("options serialize"),
        outputs: out.written,
        exit_code: EXIT_OK,
    };
    write_file(&dir.join(manifest_name), &to_json(&manifest))?;
    Ok(manifest)
}

fn parse_sweep(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::input(format!("bad --sweep-n '{s}', expected a:b:step"));
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (*a, *b, 1),
        [a, b, step] => (*a, *b, *step),
        _ => return Err(bad()),
    };
    if step == 0 || a > b || a < 2 {
        return Err(bad());
    }
    Ok((a..=b).step_by(step).collect())
}

fn cmd_modes(args: &ModesArgs) -> Result<RunManifest, CliError> {
    let shape = if args.delta_electrodes {
        ElectrodeShape::Delta
    } else {
        ElectrodeShape::TopHat
    };
    let sweep = args.sweep_n.as_deref().map(parse_sweep).transpose()?;
    let n = args
        .n
        .or_else(|| sweep.as_ref().and_then(|s| s.first().copied()))
        .ok_or_else(|| CliError::input("--n or --sweep-n is required"))?;
    let mut geom = catalog::ROWS[0].geometry();
    geom.topology = args.topology;
    geom.n_elements = n;
    geom.lambda = args.lambda;
    geom.coverage = args.c;
    let err = |e: &dyn std::fmt::Display| CliError::input(e.to_string());
    let layout = build_layout(&geom).map_err(|e| err(&e))?;
    let n_max = args.n_max.unwrap_or(4 * layout.design_index());
    let spec = mode_couplings(&layout, args.vp, n_max, shape).map_err(|e| err(&e))?;

    let mut out = Outputs::new(&args.out)?;
    out.write("spectrum.csv", &spec.to_csv(n))?;
    out.write("spectrum.json", &to_json(&spec))?;

    let model = spectrum_to_mbvd(&spec, args.c0, args.kt2, args.q).map_err(|e| err(&e))?;
    let fd = spec.design_frequency;
    let trace = synthesize_admittance(&model, &linspace(0.5 * fd, 1.5 * fd, args.points.max(2)));
    let mut csv = String::from("freq_Hz,re,im,mag_db\n");
    for (f, v) in trace.freqs.iter().zip(&trace.values) {
        csv.push_str(&format!("{f:e},{:e},{:e},{:.6}\n", v.re, v.im, 20.0 * v.norm().log10()));
    }
    out.write("admittance.csv", &csv)?;
    let chart = Chart {
        title: format!("{} N = {n}", args.topology),
        x_label: "f / (v_p/λ)".into(),
        y_label: "|Y| [dB S]".into(),
        series: vec![Series::line(
            "|Y|",
            trace
                .freqs
                .iter()
                .zip(&trace.values)
                .map(|(f, v)| (f / fd, 20.0 * v.norm().log10()))
                .collect(),
        )],
        ..Chart::default()
    };
    out.write("admittance.svg", &chart.to_svg())?;

    for m in spec.ranked().iter().take(2) {
        println!("n = {:3}  nodes = {:3}  f = {:.4e} Hz  eta = {:.4}", m.n, m.nodes, m.f_n, m.eta);
    }

    if let Some(counts) = sweep {
        let study = split_study(&geom, &counts, args.vp, args.n_max.unwrap_or(0), shape).map_err(|e| err(&e))?;
        out.write("study.csv", &study.to_csv())?;
        out.write("study.json", &(study.to_json() + "\n"))?;
        let chart = Chart {
            title: format!("{} dominant-mode offset", args.topology),
            x_label: "N".into(),
            y_label: "|f - v_p/λ| / (v_p/λ)".into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series::line("dominant", study.rows.iter().map(|r| (r.n_elements as f64, r.dominant_offset)).collect()),
                Series::scatter(
                    "pair",
                    study
                        .rows
                        .iter()
                        .filter_map(|r| r.pair_offset.map(|o| (r.n_elements as f64, o)))
                        .collect(),
                ),
            ],
        };
        out.write("study.svg", &chart.to_svg())?;
    }
    out.finish(CommandKind::Modes, vec![], args, EXIT_OK)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub rules: Option<ProcessRules>,
    /// `(λ [m], fs [Hz])` observations keyed by mode name (`s0`, `sh0`).
    pub calibration: Option<BTreeMap<String, Vec<(f64, f64)>>>,
    pub policy: Option<TopologyPolicy>,
    pub template: Option<PlanTemplate>,
}

fn parse_policy(s: &str) -> Result<TopologyPolicy, CliError> {
    let lower = s.to_ascii_lowercase();
    match lower.as_str() {
        "lithography" => Ok(TopologyPolicy::LithographyAware),
        "lvr" => Ok(TopologyPolicy::Fixed { topology: Topology::Lvr }),
        "dlvr" | "d-lvr" => Ok(TopologyPolicy::Fixed { topology: Topology::Dlvr }),
        _ => lower
            .strip_prefix("threshold:")
            .and_then(|v| v.parse().ok())
            .map(|hz| TopologyPolicy::FrequencyThreshold { hz })
            .ok_or_else(|| CliError::input(format!("unknown policy '{s}'"))),
    }
}

fn parse_targets(text: &str, path: &Path) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::input(format!("{}: line {}: bad frequency '{tok}'", path.display(), i + 1)))?;
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{}: no targets", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct PlanRecord {
    targets_hz: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    device: Option<crate::designkit::PlannedDevice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_design(args: &DesignArgs) -> Result<RunManifest, CliError> {
    let targets = parse_targets(&read_file(&args.targets)?, &args.targets)?;
    let mut inputs = vec![args.targets.clone()];
    let config: DesignConfig = match &args.config {
        Some(p) => {
            inputs.push(p.clone());
            serde_json::from_str(&read_file(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?
        }
        None => DesignConfig::default(),
    };
    let v_p = match args.vp {
        Some(v) => v,
        None => {
            let key = args.mode.to_string();
            let obs = config
                .calibration
                .as_ref()
                .and_then(|c| c.get(&key).cloned())
                .unwrap_or_else(|| catalog::calibration_set(args.mode));
            calibrate_velocity(&obs).map_err(|e| CliError::input(e.to_string()))?.v_p
        }
    };
    let policy = match &args.policy {
        Some(p) => parse_policy(p)?,
        None => config.policy.unwrap_or_default(),
    };
    let rules = config.rules.clone().unwrap_or_default();
    let template = PlanTemplate {
        mode: args.mode,
        angle_theta: match args.mode {
            AcousticMode::S0 => 30.0,
            AcousticMode::Sh0 => 10.0,
        },
        ..config.template.clone().unwrap_or_default()
    };
    let plan = plan_bank(&targets, v_p, &rules, policy, &template).map_err(|e| CliError::input(e.to_string()))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["targets_Hz", "lambda_nm", "topology", "predicted_fs_Hz", "findings", "error"])
        .expect("in-memory write");
    let mut records = Vec::new();
    let mut failed = 0;
    for entry in &plan {
        let targets_s = entry.targets.iter().map(|t| format!("{t:e}")).collect::<Vec<_>>().join(" ");
        match &entry.result {
            Ok(dev) => {
                let findings = dev.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ");
                w.write_record([
                    targets_s,
                    format!("{:.0}", dev.geometry.lambda * 1e9),
                    dev.geometry.topology.to_string(),
                    format!("{:e}", dev.predicted_fs),
                    findings,
                    String::new(),
                ])
                .expect("in-memory write");
                records.push(PlanRecord {
                    targets_hz: entry.targets.clone(),
                    device: Some(dev.clone()),
                    error: None,
                });
            }
            Err(e) => {
                failed += 1;
                eprintln!("target {targets_s}: {e}");
                w.write_record([targets_s, String::new(), String::new(), String::new(), String::new(), e.to_string()])
                    .expect("in-memory write");
                records.push(PlanRecord {
                    targets_hz: entry.targets.clone(),
                    device: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    let mut out = Outputs::new(&args.out)?;
    out.write("plan.csv", &csv)?;
    #[derive(Serialize)]
    struct PlanDoc<'a> {
        v_p: f64,
        rules: &'a ProcessRules,
        policy: TopologyPolicy,
        entries: Vec<PlanRecord>,
    }
    out.write(
        "plan.json",
        &to_json(&PlanDoc {
            v_p,
            rules: &rules,
            policy,
            entries: records,
        }),
    )?;
    print!("{csv}");
    let code = if failed == 0 { EXIT_OK } else { EXIT_PARTIAL };
    out.finish(CommandKind::Design, inputs, args, code)
}

fn cmd_convert(args: &ConvertArgs) -> Result<RunManifest, CliError> {
    let text = read_file(&args.input)?;
    let ctx = |e: &dyn std::fmt::Display| CliError::input(format!("{}: {e}", args.input.display()));
    let is_json = args.input.extension().is_some_and(|x| x.eq_ignore_ascii_case("json"));
    let (net, comments) = if is_json {
        (NetworkRecord::from_json(&text).map_err(|e| ctx(&e))?, Vec::new())
    } else {
        parse_touchstone_with_comments(&text).map_err(|e| ctx(&e))?
    };
    let converted = match args.to {
        ConvertTarget::Json => {
            let net = match (args.y, net.kind) {
                (true, ParamKind::S) => s_to_y(&net).map_err(|e| ctx(&e))?,
                (false, ParamKind::Y) => y_to_s(&net).map_err(|e| ctx(&e))?,
                _ => net,
            };
            net.to_json() + "\n"
        }
        ConvertTarget::Touchstone => {
            let net = match net.kind {
                ParamKind::Y => y_to_s(&net).map_err(|e| ctx(&e))?,
                ParamKind::S => net,
            };
            write_touchstone(&net, args.format.into(), args.unit.into(), &comments).map_err(|e| ctx(&e))?
        }
    };
    write_file(&args.out, &converted)?;
    Ok(RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: CommandKind::Convert,
        inputs: vec![args.input.clone()],
        options: serde_json::to_value(args).expect("options serialize"),
        outputs: vec![args.out.clone()],
        exit_code: EXIT_OK,
    })
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<RunManifest, CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Modes(a) => cmd_modes(a),
        Command::Design(a) => cmd_design(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            if manifest.exit_code == EXIT_NOT_CONVERGED {
                eprintln!("warning: fit did not converge");
            }
            manifest.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
