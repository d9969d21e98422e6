//! Parse a Touchstone file, convert S to Y, and pull out the device admittance.
//!
//!     cargo run --example touchstone_convert -- path/to/device.s2p

use resfit::netparams::{
    device_admittance, parse_touchstone_with_comments, s_to_y, write_touchstone, DataFormat, Embedding, FreqUnit,
};

const SAMPLE: &str = "! series 100 ohm resistor
# GHZ S RI R 50
1.0  0.5 0.0  0.5 0.0  0.5 0.0  0.5 0.0
2.0  0.5 0.0  0.5 0.0  0.5 0.0  0.5 0.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let (s, comments) = parse_touchstone_with_comments(&text)?;
    println!("{} points, z0 = {} ohm, comments: {comments:?}", s.len(), s.z0);

    let y = s_to_y(&s)?;
    let dev = device_admittance(&y, Embedding::Series)?;
    for (f, v) in dev.freqs.iter().zip(&dev.values).take(5) {
        println!("{:>10.4} GHz   Y = {:+.4e} {:+.4e}j S", f * 1e-9, v.re, v.im);
    }

    print!("{}", write_touchstone(&s, DataFormat::DB, FreqUnit::MHz, &comments)?);
    Ok(())
}
