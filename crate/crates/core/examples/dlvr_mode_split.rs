//! Electrode sampling of lateral plate modes: the d-LVR with five
//! electrodes excites modes 4 and 6 instead of 5, and the split closes as
//! 1/N.
//!
//!     cargo run --example dlvr_mode_split

use resfit::catalog;
use resfit::designkit::Topology;
use resfit::grid::linspace;
use resfit::mbvd::synthesize_admittance;
use resfit::transduce::{build_layout, mode_couplings, spectrum_to_mbvd, split_study, ElectrodeShape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let v_p = 5478.0;
    let mut geom = catalog::row('E').ok_or("row")?.geometry();
    geom.lambda = 2e-6;
    geom.n_elements = 5;

    for topology in [Topology::Lvr, Topology::Dlvr] {
        geom.topology = topology;
        let layout = build_layout(&geom)?;
        let spec = mode_couplings(&layout, v_p, 4 * layout.design_index(), ElectrodeShape::TopHat)?;
        println!("{topology}: W = {:.2} µm, design index {}", layout.plate_width * 1e6, layout.design_index());
        for m in spec.ranked().iter().take(3) {
            println!("   n = {:2}  f = {:.3} GHz  eta = {:.3}", m.n, m.f_n * 1e-9, m.eta);
        }
    }

    geom.topology = Topology::Dlvr;
    let spec = mode_couplings(&build_layout(&geom)?, v_p, 20, ElectrodeShape::TopHat)?;
    let model = spectrum_to_mbvd(&spec, 50e-15, 0.2, 500.0)?;
    let fd = spec.design_frequency;
    let y = synthesize_admittance(&model, &linspace(0.6 * fd, 1.4 * fd, 9));
    println!("|Y| across the band (dB):");
    for (f, v) in y.freqs.iter().zip(&y.values) {
        println!("   {:.2}·f0  {:7.2}", f / fd, 20.0 * v.norm().log10());
    }

    let study = split_study(&geom, &[5, 10, 20, 40, 80], v_p, 0, ElectrodeShape::TopHat)?;
    print!("{}", study.to_csv());
    Ok(())
}
