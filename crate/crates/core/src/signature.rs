//! Modal signatures: projection of deviation fields onto a basis,
//! reconstruction, residues and coefficient filtering.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::mesh::SurfaceField;
use crate::modal::ModalBasis;

/// Coefficient vector of a deviation field in a modal basis, in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSignature {
    lambda: DVector<f64>,
}

impl ModalSignature {
    pub fn new(lambda: Vec<f64>) -> Result<ModalSignature> {
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(invalid("signature contains non-finite coefficients"));
        }
        Ok(ModalSignature {
            lambda: DVector::from_vec(lambda),
        })
    }

    pub fn from_vector(lambda: DVector<f64>) -> Result<ModalSignature> {
        ModalSignature::new(lambda.data.into())
    }

    pub fn zeros(m: usize) -> ModalSignature {
        ModalSignature {
            lambda: DVector::zeros(m),
        }
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Coefficient of mode `i` (0-based); zero past the end.
    pub fn get(&self, i: usize) -> f64 {
        self.lambda.get(i).copied().unwrap_or(0.0)
    }

    /// Zero-padded or truncated copy of length `m`.
    pub fn resized(&self, m: usize) -> ModalSignature {
        ModalSignature {
            lambda: DVector::from_fn(m, |i, _| self.get(i)),
        }
    }

    pub fn scaled(&self, k: f64) -> ModalSignature {
        ModalSignature {
            lambda: &self.lambda * k,
        }
    }
}

/// Least-squares projector onto the first `m` columns of a basis.
///
/// Uses a Householder QR of the truncated `Q`, which yields the same solution
/// as the normal equations `(Q'Q)^-1 Q'V` without squaring the condition
/// number.
#[derive(Debug, Clone)]
pub struct Projector {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    mesh_len: usize,
}

impl Projector {
    pub fn new(basis: &ModalBasis, m: usize) -> Result<Projector> {
        if m == 0 || m > basis.n_modes() {
            return Err(invalid(format!(
                "mode count must be in 1..={}, got {m}",
                basis.n_modes()
            )));
        }
        let qr = basis.modes().columns(0, m).into_owned().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        if let Some(i) = (0..m).find(|&i| !(r[(i, i)].abs() > 1e-10 * diag_max)) {
            return Err(Error::DegenerateBasis(format!(
                "truncated basis of {m} modes is rank deficient at mode {}",
                i + 1
            )));
        }
        Ok(Projector {
            q: qr.q(),
            r,
            mesh_len: basis.mesh().len(),
        })
    }

    pub fn m(&self) -> usize {
        self.r.ncols()
    }

    pub fn project_values(&self, v: &DVector<f64>) -> Result<ModalSignature> {
        if v.len() != self.mesh_len {
            return Err(invalid("field length does not match the basis mesh"));
        }
        let rhs = self.q.tr_mul(v);
        let lambda = self
            .r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::DegenerateBasis("singular triangular factor".into()))?;
        ModalSignature::from_vector(lambda)
    }
}

fn check_mesh(field: &SurfaceField, basis: &ModalBasis) -> Result<()> {
    if field.mesh().as_ref() != basis.mesh().as_ref() {
        return Err(invalid("field and basis are defined on different meshes"));
    }
    Ok(())
}

/// Least-squares signature of `field` in the first `m` modes.
pub fn project(field: &SurfaceField, basis: &ModalBasis, m: usize) -> Result<ModalSignature> {
    check_mesh(field, basis)?;
    Projector::new(basis, m)?.project_values(field.values())
}

/// Field `Q lambda` described by a signature.
pub fn reconstruct(sig: &ModalSignature, basis: &ModalBasis) -> Result<SurfaceField> {
    let m = sig.len();
    if m > basis.n_modes() {
        return Err(invalid(format!(
            "signature has {m} coefficients, basis only {} modes",
            basis.n_modes()
        )));
    }
    let values = basis.modes().columns(0, m) * sig.lambda();
    SurfaceField::new(basis.mesh().clone(), values)
}

/// Remainder of a field after removing its modal reconstruction.
#[derive(Debug, Clone)]
pub struct Residue {
    pub field: SurfaceField,
    /// Euclidean norm of the residue vector (mm).
    pub norm: f64,
    /// Largest absolute nodal residue (mm).
    pub peak: f64,
}

pub fn residue(field: &SurfaceField, sig: &ModalSignature, basis: &ModalBasis) -> Result<Residue> {
    check_mesh(field, basis)?;
    let rec = reconstruct(sig, basis)?;
    let r = field.values() - rec.values();
    let norm = r.norm();
    let peak = r.amax();
    Ok(Residue {
        field: SurfaceField::new(basis.mesh().clone(), r)?,
        norm,
        peak,
    })
}

/// Zeroes every coefficient whose 0-based index is not in `keep`.
pub fn filter(sig: &ModalSignature, keep: &[usize]) -> Result<ModalSignature> {
    if let Some(&bad) = keep.iter().find(|&&i| i >= sig.len()) {
        return Err(invalid(format!(
            "mode index {bad} out of range for a {}-coefficient signature",
            sig.len()
        )));
    }
    let mut out = ModalSignature::zeros(sig.len());
    for &i in keep {
        out.lambda[i] = sig.lambda[i];
    }
    Ok(out)
}

/// Keeps the first `m` coefficients.
pub fn low_pass(sig: &ModalSignature, m: usize) -> Result<ModalSignature> {
    filter(sig, &(0..m.min(sig.len())).collect::<Vec<_>>())
}

/// Position and orientation part: the first `n_rigid` coefficients.
pub fn rigid_part(sig: &ModalSignature, n_rigid: usize) -> ModalSignature {
    let mut out = ModalSignature::zeros(sig.len());
    for i in 0..n_rigid.min(sig.len()) {
        out.lambda[i] = sig.lambda[i];
    }
    out
}

/// Form part: everything past the rigid modes.
pub fn form_part(sig: &ModalSignature, n_rigid: usize) -> ModalSignature {
    let mut out = sig.clone();
    for i in 0..n_rigid.min(sig.len()) {
        out.lambda[i] = 0.0;
    }
    out
}

/// `(mode number, coefficient)` pairs with 1-based mode numbers.
pub fn spectrum(sig: &ModalSignature) -> Vec<(usize, f64)> {
    sig.lambda.iter().enumerate().map(|(i, &l)| (i + 1, l)).collect()
}

/// Non-zero spectrum lines by decreasing magnitude; equal magnitudes keep
/// mode order.
pub fn ranked_spectrum(sig: &ModalSignature) -> Vec<(usize, f64)> {
    let mut lines: Vec<_> = spectrum(sig).into_iter().filter(|l| l.1 != 0.0).collect();
    lines.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    lines
}

/// Signature file text: `index lambda_mm` per line, 1-based indices.
pub fn signature_to_string(sig: &ModalSignature) -> String {
    let mut s = String::from("# index lambda_mm\n");
    for (i, l) in spectrum(sig) {
        let _ = writeln!(s, "{i} {l:e}");
    }
    s
}

pub fn parse_signature(text: &str) -> Result<ModalSignature> {
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: expected `index lambda_mm`", lineno + 1));
        let mut it = line.split_whitespace();
        let idx: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let val: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if it.next().is_some() || idx == 0 {
            return Err(bad());
        }
        entries.push((idx, val));
    }
    let m = entries.iter().map(|e| e.0).max().unwrap_or(0);
    let mut lambda = vec![0.0; m];
    let mut seen = vec![false; m];
    for (idx, val) in entries {
        if std::mem::replace(&mut seen[idx - 1], true) {
            return Err(Error::Format(format!("mode {idx} listed twice")));
        }
        lambda[idx - 1] = val;
    }
    ModalSignature::new(lambda).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_signature(path: impl AsRef<Path>, sig: &ModalSignature) -> Result<()> {
    std::fs::write(path, signature_to_string(sig))?;
    Ok(())
}

pub fn read_signature(path: impl AsRef<Path>) -> Result<ModalSignature> {
    parse_signature(&std::fs::read_to_string(path)?)
}

/// Spectrum CSV: `mode,lambda_mm,abs_rank`.
pub fn spectrum_csv(sig: &ModalSignature) -> String {
    let ranked = ranked_spectrum(sig);
    let mut s = String::from("mode,lambda_mm,abs_rank\n");
    for (i, l) in spectrum(sig) {
        let rank = ranked
            .iter()
            .position(|r| r.0 == i)
            .map(|p| (p + 1).to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{i},{l:e},{rank}");
    }
    s
}
