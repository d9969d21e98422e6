use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ComplexTrace, Mat2, NetError, NetworkRecord, ParamKind};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// How the resonator is embedded between the two probe ports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embedding {
    /// Series element between port 1 and port 2: `Y_dev = -Y21`.
    #[default]
    Series,
    /// Shunt element at port 1 of a pi section: `Y_dev = Y11 + Y21`.
    Shunt,
}

fn det(m: &Mat2) -> Complex64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Inverse of a 2×2 matrix, `None` when the determinant is negligible
/// relative to the squared entry scale.
fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    let scale = m
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    if !(d.norm() > 1e-12 * scale * scale) {
        return None;
    }
    let inv_d = d.inv();
    Some([
        [m[1][1] * inv_d, -m[0][1] * inv_d],
        [-m[1][0] * inv_d, m[0][0] * inv_d],
    ])
}

/// `(I - a)·(I + a)⁻¹`, the shared Cayley form of both conversions.
fn cayley(a: &Mat2) -> Option<Mat2> {
    let plus = [[ONE + a[0][0], a[0][1]], [a[1][0], ONE + a[1][1]]];
    let minus = [[ONE - a[0][0], -a[0][1]], [-a[1][0], ONE - a[1][1]]];
    inverse(&plus).map(|inv| mul(&minus, &inv))
}

fn require(net: &NetworkRecord, kind: ParamKind) -> Result<(), NetError> {
    if net.kind != kind {
        return Err(NetError::WrongKind {
            expected: kind,
            found: net.kind,
        });
    }
    Ok(())
}

/// `Y = (1/z0)·(I − S)·(I + S)⁻¹` at every frequency.
pub fn s_to_y(net: &NetworkRecord) -> Result<NetworkRecord, NetError> {
    require(net, ParamKind::S)?;
    let g0 = 1.0 / net.z0;
    let matrices = net
        .freqs
        .iter()
        .zip(&net.matrices)
        .map(|(&freq, s)| {
            let y = cayley(s).ok_or(NetError::Singular { freq })?;
            Ok(y.map(|row| row.map(|v| v * g0)))
        })
        .collect::<Result<Vec<_>, NetError>>()?;
    Ok(NetworkRecord {
        freqs: net.freqs.clone(),
        matrices,
        kind: ParamKind::Y,
        z0: net.z0,
    })
}

/// `S = (I − z0·Y)·(I + z0·Y)⁻¹` at every frequency.
pub fn y_to_s(net: &NetworkRecord) -> Result<NetworkRecord, NetError> {
    require(net, ParamKind::Y)?;
    let z0 = net.z0;
    let matrices = net
        .freqs
        .iter()
        .zip(&net.matrices)
        .map(|(&freq, y)| cayley(&y.map(|row| row.map(|v| v * z0))).ok_or(NetError::Singular { freq }))
        .collect::<Result<Vec<_>, NetError>>()?;
    Ok(NetworkRecord {
        freqs: net.freqs.clone(),
        matrices,
        kind: ParamKind::S,
        z0,
    })
}

/// Through admittance Y21 at every frequency.
pub fn extract_y21(net: &NetworkRecord) -> Result<ComplexTrace, NetError> {
    require(net, ParamKind::Y)?;
    Ok(ComplexTrace {
        freqs: net.freqs.clone(),
        values: net.matrices.iter().map(|m| m[1][0]).collect(),
    })
}

/// One-port device admittance under the given embedding.
pub fn device_admittance(net: &NetworkRecord, embedding: Embedding) -> Result<ComplexTrace, NetError> {
    require(net, ParamKind::Y)?;
    let values = net
        .matrices
        .iter()
        .map(|m| match embedding {
            Embedding::Series => -m[1][0],
            Embedding::Shunt => m[0][0] + m[1][0],
        })
        .collect();
    Ok(ComplexTrace {
        freqs: net.freqs.clone(),
        values,
    })
}
