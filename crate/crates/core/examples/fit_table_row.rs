//! Fit a noisy synthetic trace step by step: detect, seed, fit, report.
//!
//!     cargo run --release --example fit_table_row -- P

use resfit::catalog;
use resfit::designkit::{render_table, ReportRow};
use resfit::extract::{detect_resonances, initial_guess};
use resfit::fitkernel::{fit, FitOptions};
use resfit::grid::{add_complex_noise, resonance_window};
use resfit::mbvd::{metrics_from_model, resonance_frequencies, synthesize_admittance};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let label = std::env::args().nth(1).and_then(|s| s.chars().next()).unwrap_or('P');
    let row = catalog::row(label).ok_or("unknown row")?;
    let truth = row.matched_model()?.model;
    let fp = resonance_frequencies(&truth)?[0].fp.ok_or("no antiresonance")?;
    let trace = add_complex_noise(&synthesize_admittance(&truth, &resonance_window(row.fs(), fp, 1601)), -80.0, 3);

    let candidates = detect_resonances(&trace, 3.0)?;
    for c in &candidates {
        println!("candidate fs ≈ {:.4} GHz, prominence {:.1} dB", c.fs_est * 1e-9, c.prominence_db);
    }
    let seed = initial_guess(&trace, &candidates)?;
    println!("seed c0 = {:.2} fF, cm = {:.3} fF", seed.c0 * 1e15, seed.branches[0].cm * 1e15);

    let result = fit(&trace, &seed, &FitOptions::default())?;
    println!(
        "{:?} after {} iterations, residual rms {:.2e}",
        result.termination, result.iterations, result.residual_rms
    );
    if let Some(cov) = &result.covariance {
        let sd: Vec<String> = cov.iter().enumerate().map(|(i, r)| format!("{:.1e}", r[i].sqrt())).collect();
        println!("1σ on ln-parameters: {}", sd.join(" "));
    }

    let metrics = metrics_from_model(&result.model, &trace.freqs)?;
    let table = render_table(&[ReportRow::new(format!("{label} (fit)"), Some(&row.geometry()), metrics)])?;
    print!("{}", table.markdown);
    println!(
        "published: {} | {:.3} | {} | {} | {} | {}% | {} | {}",
        row.lambda_nm, row.fs_ghz, row.qs, row.qp, row.qm, row.kt2_pct, row.c0_ff, row.fom
    );
    Ok(())
}
