//! Touchstone v1.0 two-port reader and writer.
//!
//! Two-port rows carry the four parameters in the v1 order
//! `N11 N21 N12 N22`. A data line with an odd token count starts a new
//! frequency record; even-count lines continue the current one.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetError, NetworkRecord, ParamKind};

#[derive(Debug, Error, PartialEq)]
pub enum TouchstoneError {
    #[error("line {line}: malformed option line: {reason}")]
    MalformedOption { line: usize, reason: String },
    #[error("line {line}: frequency {freq} is not strictly increasing and positive")]
    NonMonotone { line: usize, freq: f64 },
    #[error("line {line}: expected {expected} values per frequency record, found {found}")]
    ColumnCount {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: {ports}-port data is not supported, only 2-port files are accepted")]
    UnsupportedPorts { line: usize, ports: usize },
    #[error("line {line}: cannot parse number {token:?}")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: {what} is not supported")]
    Unsupported { line: usize, what: String },
    #[error("no network data found")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn scale(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            FreqUnit::Hz => "HZ",
            FreqUnit::KHz => "KHZ",
            FreqUnit::MHz => "MHZ",
            FreqUnit::GHz => "GHZ",
        }
    }
}

/// Number pair layout of the data section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    /// Real / imaginary.
    RI,
    /// Linear magnitude / angle in degrees.
    MA,
    /// Magnitude in dB / angle in degrees.
    DB,
}

impl DataFormat {
    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::RI => Complex64::new(a, b),
            DataFormat::MA => Complex64::from_polar(a, b.to_radians()),
            DataFormat::DB => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, v: Complex64) -> (f64, f64) {
        match self {
            DataFormat::RI => (v.re, v.im),
            DataFormat::MA => (v.norm(), v.arg().to_degrees()),
            DataFormat::DB => (20.0 * v.norm().log10(), v.arg().to_degrees()),
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            DataFormat::RI => "RI",
            DataFormat::MA => "MA",
            DataFormat::DB => "DB",
        }
    }
}

struct Options {
    unit: FreqUnit,
    format: DataFormat,
    z0: f64,
}

impl Default for Options {
    // v1 default option line: `# GHZ S MA R 50`
    fn default() -> Self {
        Self {
            unit: FreqUnit::GHz,
            format: DataFormat::MA,
            z0: 50.0,
        }
    }
}

fn parse_options(body: &str, line: usize) -> Result<Options, TouchstoneError> {
    let malformed = |reason: String| TouchstoneError::MalformedOption { line, reason };
    let mut opts = Options::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.unit = FreqUnit::Hz,
            "KHZ" => opts.unit = FreqUnit::KHz,
            "MHZ" => opts.unit = FreqUnit::MHz,
            "GHZ" => opts.unit = FreqUnit::GHz,
            "S" => {}
            p @ ("Y" | "Z" | "H" | "G") => {
                return Err(TouchstoneError::Unsupported {
                    line,
                    what: format!("{p}-parameter data"),
                })
            }
            "RI" => opts.format = DataFormat::RI,
            "MA" => opts.format = DataFormat::MA,
            "DB" => opts.format = DataFormat::DB,
            "R" => {
                let value = tokens
                    .next()
                    .ok_or_else(|| malformed("missing reference impedance after R".into()))?;
                let z0: f64 = value
                    .parse()
                    .map_err(|_| malformed(format!("bad reference impedance {value:?}")))?;
                if !(z0 > 0.0 && z0.is_finite()) {
                    return Err(malformed(format!("reference impedance {z0} must be positive")));
                }
                opts.z0 = z0;
            }
            other => return Err(malformed(format!("unknown token {other:?}"))),
        }
    }
    Ok(opts)
}

/// Parses a Touchstone v1.0 two-port file into an S-parameter record.
pub fn parse_touchstone(text: &str) -> Result<NetworkRecord, TouchstoneError> {
    parse_touchstone_with_comments(text).map(|(net, _)| net)
}

/// Like [`parse_touchstone`], also returning the `!` comment texts in file order.
pub fn parse_touchstone_with_comments(
    text: &str,
) -> Result<(NetworkRecord, Vec<String>), TouchstoneError> {
    let mut comments = Vec::new();
    let mut options: Option<Options> = None;
    // (line number of record start, tokens)
    let mut records: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut seen_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('!') {
            Some(pos) => {
                comments.push(raw[pos + 1..].trim().to_string());
                &raw[..pos]
            }
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(body) = content.strip_prefix('#') {
            // only the first option line counts
            if options.is_none() && !seen_data {
                options = Some(parse_options(body, line)?);
            }
            continue;
        }
        if content.starts_with('[') {
            return Err(TouchstoneError::Unsupported {
                line,
                what: "Touchstone 2.0 keyword syntax".into(),
            });
        }
        seen_data = true;
        let values = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| TouchstoneError::BadNumber {
                    line,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() % 2 == 1 {
            records.push((line, values));
        } else {
            match records.last_mut() {
                Some((_, rec)) => rec.extend(values),
                None => {
                    return Err(TouchstoneError::ColumnCount {
                        line,
                        found: values.len(),
                        expected: 9,
                    })
                }
            }
        }
    }

    if records.is_empty() {
        return Err(TouchstoneError::Empty);
    }
    let opts = options.unwrap_or_default();

    let mut freqs = Vec::with_capacity(records.len());
    let mut matrices = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        if rec.len() != 9 {
            let pairs = (rec.len() - 1) / 2;
            let ports = (pairs as f64).sqrt().round() as usize;
            if ports * ports == pairs && ports != 2 && ports > 0 {
                return Err(TouchstoneError::UnsupportedPorts { line: *line, ports });
            }
            return Err(TouchstoneError::ColumnCount {
                line: *line,
                found: rec.len(),
                expected: 9,
            });
        }
        let f = rec[0] * opts.unit.scale();
        if !(f > 0.0 && f.is_finite()) || freqs.last().is_some_and(|&prev| f <= prev) {
            return Err(TouchstoneError::NonMonotone { line: *line, freq: f });
        }
        let v: Vec<Complex64> = rec[1..]
            .chunks_exact(2)
            .map(|p| opts.format.decode(p[0], p[1]))
            .collect();
        freqs.push(f);
        // v1 two-port order: 11, 21, 12, 22
        matrices.push([[v[0], v[2]], [v[1], v[3]]]);
    }

    let net = NetworkRecord {
        freqs,
        matrices,
        kind: ParamKind::S,
        z0: opts.z0,
    };
    Ok((net, comments))
}

/// Serializes an S-parameter record as a Touchstone v1.0 two-port file.
pub fn write_touchstone(
    net: &NetworkRecord,
    format: DataFormat,
    unit: FreqUnit,
    comments: &[String],
) -> Result<String, NetError> {
    if net.kind != ParamKind::S {
        return Err(NetError::WrongKind {
            expected: ParamKind::S,
            found: net.kind,
        });
    }
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "! {c}");
    }
    let _ = writeln!(out, "# {} S {} R {}", unit.keyword(), format.keyword(), net.z0);
    for (f, m) in net.freqs.iter().zip(&net.matrices) {
        let _ = write!(out, "{:e}", f / unit.scale());
        for v in [m[0][0], m[1][0], m[0][1], m[1][1]] {
            let (a, b) = format.encode(v);
            let _ = write!(out, " {a:e} {b:e}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_ri() {
        let net = parse_touchstone("# GHZ S RI R 50\n1.0 0 0 0 0 0 0 0 0\n").unwrap();
        assert_eq!(net.freqs, vec![1e9]);
        assert_eq!(net.z0, 50.0);
        assert_eq!(net.kind, ParamKind::S);
        assert!(net.matrices[0].iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unit_magnitude_ma() {
        let net = parse_touchstone("# GHZ S MA R 50\n1.0 1 0 1 0 1 0 1 0\n").unwrap();
        assert!(net.matrices[0]
            .iter()
            .flatten()
            .all(|&v| v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn db_half_magnitude() {
        let text = "# GHZ S DB R 50\n\
                    1.0 -40 0 -6.0206 0 -6.0206 0 -40 0\n\
                    1.1 -40 0 -6.0206 0 -6.0206 0 -40 0\n\
                    1.2 -40 0 -6.0206 0 -6.0206 0 -40 0\n";
        let net = parse_touchstone(text).unwrap();
        assert_eq!(net.len(), 3);
        for m in &net.matrices {
            assert!((m[1][0].norm() - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn defaults_and_case_insensitive_units() {
        let net = parse_touchstone("1 1 0 0 0 0 0 1 0\n").unwrap();
        assert_eq!(net.freqs, vec![1e9]);
        assert_eq!(net.z0, 50.0);
        let net = parse_touchstone("# mhz s ri r 75\n! hello\n10 0 0 0 0 0 0 0 0 ! trailing\n").unwrap();
        assert_eq!(net.freqs, vec![1e7]);
        assert_eq!(net.z0, 75.0);
    }

    #[test]
    fn wrapped_rows_and_comments() {
        let text = "! made by hand\n# HZ S RI R 50\n100 0.1 0 0.2 0\n 0.3 0 0.4 0\n200 1 2 3 4 5 6 7 8\n";
        let (net, comments) = parse_touchstone_with_comments(text).unwrap();
        assert_eq!(comments, vec!["made by hand".to_string()]);
        assert_eq!(net.freqs, vec![100.0, 200.0]);
        let m = net.matrices[0];
        assert_eq!(m[0][0].re, 0.1);
        assert_eq!(m[1][0].re, 0.2);
        assert_eq!(m[0][1].re, 0.3);
        assert_eq!(m[1][1].re, 0.4);
    }

    #[test]
    fn error_cases_carry_line_numbers() {
        assert_eq!(
            parse_touchstone("# GHZ S XX R 50\n"),
            Err(TouchstoneError::MalformedOption {
                line: 1,
                reason: "unknown token \"XX\"".into()
            })
        );
        assert!(matches!(
            parse_touchstone("# GHZ S RI R\n1 0 0 0 0 0 0 0 0"),
            Err(TouchstoneError::MalformedOption { line: 1, .. })
        ));
        assert_eq!(
            parse_touchstone("# GHZ S RI R 50\n2 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n"),
            Err(TouchstoneError::NonMonotone { line: 3, freq: 1e9 })
        );
        assert_eq!(
            parse_touchstone("# GHZ S RI R 50\n1 0 0 0 0 0 0 0\n"),
            Err(TouchstoneError::ColumnCount {
                line: 2,
                found: 8,
                expected: 9
            })
        );
        assert_eq!(
            parse_touchstone("# GHZ S RI R 50\n1 0 0 0 0 0 0 0 0 0 0\n"),
            Err(TouchstoneError::ColumnCount {
                line: 2,
                found: 11,
                expected: 9
            })
        );
        assert_eq!(
            parse_touchstone("# GHZ S RI R 50\n1 0.5 0\n2 0.5 0\n"),
            Err(TouchstoneError::UnsupportedPorts { line: 2, ports: 1 })
        );
        assert!(matches!(
            parse_touchstone("# GHZ S RI R 50\n1 0 0 0 0 0 0 0 abc\n"),
            Err(TouchstoneError::BadNumber { line: 2, .. })
        ));
        assert!(matches!(
            parse_touchstone("# GHZ Y RI R 50\n1 0 0 0 0 0 0 0 0\n"),
            Err(TouchstoneError::Unsupported { line: 1, .. })
        ));
        assert_eq!(parse_touchstone(""), Err(TouchstoneError::Empty));
        assert_eq!(parse_touchstone("! only a comment\n"), Err(TouchstoneError::Empty));
    }

    #[test]
    fn three_port_rejected() {
        let text = "# GHZ S RI R 50\n1 1 0 0 0 0 0\n1 0 0 0 0 0\n0 0 0 0 1 0\n";
        assert_eq!(
            parse_touchstone(text),
            Err(TouchstoneError::UnsupportedPorts { line: 2, ports: 3 })
        );
    }

    #[test]
    fn writer_round_trips_each_format() {
        let m = [
            [Complex64::new(0.1, -0.2), Complex64::new(0.7, 0.05)],
            [Complex64::new(0.7, 0.05), Complex64::new(-0.3, 0.4)],
        ];
        let net = NetworkRecord::new(vec![1.5e9, 2.5e9], vec![m, m], ParamKind::S, 50.0).unwrap();
        for format in [DataFormat::RI, DataFormat::MA, DataFormat::DB] {
            let text = write_touchstone(&net, format, FreqUnit::GHz, &["x".into()]).unwrap();
            let back = parse_touchstone(&text).unwrap();
            for (a, b) in back.matrices.iter().flatten().zip(net.matrices.iter().flatten()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).norm() < 1e-13, "{format:?}");
                }
            }
            for (a, b) in back.freqs.iter().zip(&net.freqs) {
                assert!((a - b).abs() / b < 1e-15);
            }
        }
    }
}
