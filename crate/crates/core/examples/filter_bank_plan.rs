//! Calibrate the phase velocity from published devices and lay out a bank
//! of resonators for a set of target frequencies.
//!
//!     cargo run --example filter_bank_plan

use resfit::catalog;
use resfit::designkit::{
    calibrate_velocity, plan_bank, velocity_outliers, AcousticMode, PlanTemplate, ProcessRules, TopologyPolicy,
    OUTLIER_THRESHOLD,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s0 = calibrate_velocity(&catalog::calibration_set(AcousticMode::S0))?;
    let sh0 = calibrate_velocity(&catalog::calibration_set(AcousticMode::Sh0))?;
    println!("S0  v_p = {:.0} m/s (spread {:.1}%)", s0.v_p, 100.0 * s0.spread);
    println!("SH0 v_p = {:.0} m/s (spread {:.1}%)", sh0.v_p, 100.0 * sh0.spread);

    let others: Vec<(f64, f64)> = catalog::ROWS.iter().map(|r| (r.lambda(), r.fs())).collect();
    let odd: Vec<char> = velocity_outliers(&others, s0.v_p, OUTLIER_THRESHOLD)
        .into_iter()
        .filter(|&i| catalog::ROWS[i].mode == AcousticMode::S0)
        .map(|i| catalog::ROWS[i].label)
        .collect();
    println!("S0 rows off the S0 velocity by more than 15%: {odd:?}");

    let targets = [3.1e9, 4.5e9, 6.1e9, 6.1e9, 9.5e9, 14.0e9];
    let plan = plan_bank(&targets, s0.v_p, &ProcessRules::default(), TopologyPolicy::LithographyAware, &PlanTemplate::default())?;
    for e in plan {
        let t: Vec<String> = e.targets.iter().map(|t| format!("{:.2}", t * 1e-9)).collect();
        match e.result {
            Ok(d) => println!(
                "{:>10} GHz -> λ {:4.0} nm {:5} predicted {:.3} GHz {}",
                t.join(","),
                d.geometry.lambda * 1e9,
                d.geometry.topology.to_string(),
                d.predicted_fs * 1e-9,
                d.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
            ),
            Err(err) => println!("{:>10} GHz -> {err}", t.join(",")),
        }
    }
    Ok(())
}
