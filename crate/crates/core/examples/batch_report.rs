//! Fit every published device in parallel and print the summary table
//! next to the published figure of merit.
//!
//!     cargo run --release --example batch_report

use rayon::prelude::*;

use resfit::catalog;
use resfit::designkit::{render_table, ReportRow};
use resfit::grid::{add_complex_noise, resonance_window};
use resfit::mbvd::{resonance_frequencies, synthesize_admittance};
use resfit::pipeline::{analyze, AnalysisOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows: Vec<ReportRow> = catalog::ROWS
        .par_iter()
        .map(|r| -> Result<ReportRow, Box<dyn std::error::Error + Send + Sync>> {
            let model = r.matched_model()?.model;
            let fp = resonance_frequencies(&model)?[0].fp.ok_or("no antiresonance")?;
            let trace = add_complex_noise(&synthesize_admittance(&model, &resonance_window(r.fs(), fp, 1601)), -80.0, 1);
            let a = analyze(&trace, &AnalysisOptions::default())?;
            Ok(ReportRow::new(r.label.to_string(), Some(&r.geometry()), a.metrics))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    print!("{}", render_table(&rows)?.markdown);

    let mut hits = 0;
    for (row, published) in rows.iter().zip(&catalog::ROWS) {
        let fom = row.metrics.fom.unwrap_or(f64::NAN);
        let ok = (fom - published.fom).abs() <= catalog::FOM_TOLERANCE;
        hits += usize::from(ok);
        if !ok {
            println!("{}: fitted FoM {fom:.1}, published {}", row.label, published.fom);
        }
    }
    println!("{hits}/22 within ±{}", catalog::FOM_TOLERANCE);
    Ok(())
}
