//! Build equivalent-circuit models for a published device and write a
//! synthetic measurement.
//!
//!     cargo run --example synthesize_row -- L

use resfit::catalog;
use resfit::grid::{add_complex_noise, resonance_window};
use resfit::mbvd::{metrics_from_model, resonance_frequencies, synthesize_admittance};
use resfit::netparams::{write_touchstone, y_to_s, DataFormat, FreqUnit, NetworkRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let label = std::env::args().nth(1).and_then(|s| s.chars().next()).unwrap_or('L');
    let row = catalog::row(label).ok_or("unknown row")?;
    println!(
        "row {}: {} {} λ = {} nm, fs = {} GHz, Qs/Qp/Qm = {}/{}/{}, kt2 = {}%",
        row.label, row.mode, row.topology, row.lambda_nm, row.fs_ghz, row.qs, row.qp, row.qm, row.kt2_pct
    );

    // rs = r0 = 0: Qs and Qp both follow Qm
    let ideal = row.ideal_model()?;
    // rs and r0 tuned so Qs and Qp land on the published values
    let matched = row.matched_model()?;
    println!("ideal model:   {}", ideal.to_json().replace('\n', " "));
    println!(
        "matched model: rs = {:.3} ohm, r0 = {:.3} ohm (qm raised: {}, qp clamped: {})",
        matched.model.rs, matched.model.r0, matched.qm_raised, matched.qp_clamped
    );

    let fp = resonance_frequencies(&matched.model)?[0].fp.ok_or("no antiresonance")?;
    let grid = resonance_window(row.fs(), fp, 1601);
    let m = metrics_from_model(&matched.model, &grid)?;
    println!("matched metrics: Qs {:.0}, Qp {:.0}, FoM {:.1}", m.qs, m.qp.unwrap_or(f64::NAN), m.fom.unwrap_or(f64::NAN));

    let trace = add_complex_noise(&synthesize_admittance(&matched.model, &grid), -60.0, 1);
    let s = y_to_s(&NetworkRecord::series_element(&trace, 50.0)?)?;
    let path = std::env::temp_dir().join(format!("row_{label}.s2p"));
    let header = vec![format!("label = {label}"), format!("lambda_m = {:e}", row.lambda())];
    std::fs::write(&path, write_touchstone(&s, DataFormat::RI, FreqUnit::GHz, &header)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
