//! A resonator with a spurious mode 10% above the main one: choose the
//! branch count and recover both modes.
//!
//!     cargo run --release --example two_mode_fit

use resfit::grid::{add_complex_noise, linspace};
use resfit::mbvd::{branch_from_metrics, synthesize_admittance, MbvdModel};
use resfit::pipeline::{analyze, AnalysisOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c0 = 60e-15;
    let truth = MbvdModel::new(
        c0,
        0.0,
        0.5,
        vec![
            branch_from_metrics(2.0e9, 1500.0, 0.10, c0)?,
            branch_from_metrics(2.2e9, 1200.0, 0.02, c0)?,
        ],
    )?;
    let trace = add_complex_noise(&synthesize_admittance(&truth, &linspace(1.8e9, 2.5e9, 4001)), -70.0, 9);

    let a = analyze(&trace, &AnalysisOptions::default())?;
    println!("{} candidates, {} branches kept", a.candidates.len(), a.fit.model.branches.len());
    for (i, b) in a.fit.model.branches.iter().enumerate() {
        let r = &a.metrics.branches[i];
        println!(
            "branch {i}: fs {:.5} GHz  Qm {:6.0}  kt2 {:5.2}%  (rm {:.2} ohm)",
            r.fs * 1e-9,
            r.qm,
            100.0 * r.kt2,
            b.rm
        );
    }
    println!("dominant branch: {}", a.fit.dominant);
    for w in &a.fit.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
