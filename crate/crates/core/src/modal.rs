//! Modal shape bases of nominal planar surfaces.
//!
//! A profile basis comes from a free-free Euler-Bernoulli beam discretised
//! with two-node Hermite elements (DOF per node: normal translation `T_y` and
//! slope `R_z`). Material constants are unity; eigenvalues only order the
//! shapes. A grid basis is the tensor product of two such beam bases.
//!
//! Every column is scaled to infinity norm 1 and its first largest-magnitude
//! entry is made positive, so a coefficient reads directly as a deviation
//! amplitude in mm.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, MeshKind};

/// Eigenvalues below this fraction of the largest one are rigid-body modes.
pub const RIGID_RATIO: f64 = 1e-8;

/// Relative gap under which two sort keys are treated as a tie.
const TIE_RTOL: f64 = 1e-9;

const FILE_MAGIC: &str = "formtol-basis";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Beam1d,
    Plate2d,
}

impl BasisKind {
    pub fn for_mesh(kind: MeshKind) -> BasisKind {
        match kind {
            MeshKind::Profile1d => BasisKind::Beam1d,
            MeshKind::Grid2d => BasisKind::Plate2d,
        }
    }

    /// Rigid-body mode count of the out-of-plane model.
    pub fn rigid_count(&self) -> usize {
        match self {
            BasisKind::Beam1d => 2,
            BasisKind::Plate2d => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BasisKind::Beam1d => "beam1d",
            BasisKind::Plate2d => "plate2d",
        }
    }
}

/// Ordered mode shapes over the nodes of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    mesh: Arc<Mesh>,
    kind: BasisKind,
    modes: DMatrix<f64>,
    omega2: Vec<f64>,
    n_rigid: usize,
}

impl ModalBasis {
    /// Assembles a basis and checks every invariant.
    pub fn new(
        mesh: Arc<Mesh>,
        modes: DMatrix<f64>,
        omega2: Vec<f64>,
        n_rigid: usize,
    ) -> Result<ModalBasis> {
        let basis = ModalBasis {
            kind: BasisKind::for_mesh(mesh.kind()),
            mesh,
            modes,
            omega2,
            n_rigid,
        };
        basis.validate()?;
        Ok(basis)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn kind(&self) -> BasisKind {
        self.kind
    }
    /// `Q`, node count x mode count.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }
    pub fn omega2(&self) -> &[f64] {
        &self.omega2
    }
    pub fn n_rigid(&self) -> usize {
        self.n_rigid
    }
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn mode(&self, i: usize) -> DVector<f64> {
        self.modes.column(i).into_owned()
    }

    /// Keeps the first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<ModalBasis> {
        if n < self.n_rigid || n > self.n_modes() {
            return Err(invalid(format!(
                "cannot truncate a {}-mode basis to {n} modes",
                self.n_modes()
            )));
        }
        Ok(ModalBasis {
            mesh: self.mesh.clone(),
            kind: self.kind,
            modes: self.modes.columns(0, n).into_owned(),
            omega2: self.omega2[..n].to_vec(),
            n_rigid: self.n_rigid,
        })
    }

    /// Checks sorting, normalisation, rigid count and rank.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Format(msg));
        if self.modes.nrows() != self.mesh.len() {
            return fail(format!(
                "basis has {} rows for a mesh of {} nodes",
                self.modes.nrows(),
                self.mesh.len()
            ));
        }
        let n = self.modes.ncols();
        if n == 0 || self.omega2.len() != n {
            return fail(format!("basis has {n} modes and {} eigenvalues", self.omega2.len()));
        }
        if self.modes.iter().chain(self.omega2.iter()).any(|v| !v.is_finite()) {
            return fail("basis contains non-finite values".into());
        }
        if self.omega2.windows(2).any(|w| w[1] < w[0]) {
            return fail("eigenvalues are not sorted in ascending order".into());
        }
        for (j, col) in self.modes.column_iter().enumerate() {
            let norm = col.amax();
            if (norm - 1.0).abs() > 1e-12 {
                return fail(format!("mode {} has infinity norm {norm}", j + 1));
            }
        }
        let expected = self.kind.rigid_count();
        if self.n_rigid != expected || n < expected {
            return fail(format!(
                "{} basis must start with {expected} rigid modes, header says {}",
                self.kind.as_str(),
                self.n_rigid
            ));
        }
        let max = self.omega2[n - 1].abs();
        let rigid = self.omega2.iter().filter(|&&w| w < RIGID_RATIO * max).count();
        if n > expected && rigid != expected {
            return fail(format!("found {rigid} near-zero eigenvalues, expected {expected}"));
        }
        let sv = self.modes.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-10 * smax) {
            return fail(format!("modes are not linearly independent (sigma_min/sigma_max = {})", smin / smax));
        }
        Ok(())
    }
}

/// Beam FEM matrices over the `2 * nx` DOF `(T_y, R_z)` per node.
#[derive(Debug, Clone)]
pub struct BeamMatrices {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Slope-energy matrix `int v'^2`; used for the twist term of plate keys.
    pub slope: DMatrix<f64>,
}

/// Assembles consistent mass, bending stiffness and slope matrices of a
/// free-free beam with `EI = rho A = 1`.
pub fn beam_matrices(mesh: &Mesh) -> Result<BeamMatrices> {
    if mesh.kind() != MeshKind::Profile1d {
        return Err(invalid("beam matrices need a profile mesh"));
    }
    let n = mesh.nx();
    let dof = 2 * n;
    let mut mass = DMatrix::zeros(dof, dof);
    let mut stiffness = DMatrix::zeros(dof, dof);
    let mut slope = DMatrix::zeros(dof, dof);
    for e in 0..n - 1 {
        let h = mesh.node(e + 1)[0] - mesh.node(e)[0];
        let h2 = h * h;
        #[rustfmt::skip]
        let ke = [
            [12.0, 6.0 * h, -12.0, 6.0 * h],
            [6.0 * h, 4.0 * h2, -6.0 * h, 2.0 * h2],
            [-12.0, -6.0 * h, 12.0, -6.0 * h],
            [6.0 * h, 2.0 * h2, -6.0 * h, 4.0 * h2],
        ];
        #[rustfmt::skip]
        let me = [
            [156.0, 22.0 * h, 54.0, -13.0 * h],
            [22.0 * h, 4.0 * h2, 13.0 * h, -3.0 * h2],
            [54.0, 13.0 * h, 156.0, -22.0 * h],
            [-13.0 * h, -3.0 * h2, -22.0 * h, 4.0 * h2],
        ];
        #[rustfmt::skip]
        let ge = [
            [36.0, 3.0 * h, -36.0, 3.0 * h],
            [3.0 * h, 4.0 * h2, -3.0 * h, -h2],
            [-36.0, -3.0 * h, 36.0, -3.0 * h],
            [3.0 * h, -h2, -3.0 * h, 4.0 * h2],
        ];
        let (kf, mf, gf) = (1.0 / (h2 * h), h / 420.0, 1.0 / (30.0 * h));
        for a in 0..4 {
            for b in 0..4 {
                let (i, j) = (2 * e + a, 2 * e + b);
                stiffness[(i, j)] += kf * ke[a][b];
                mass[(i, j)] += mf * me[a][b];
                slope[(i, j)] += gf * ge[a][b];
            }
        }
    }
    Ok(BeamMatrices {
        mass,
        stiffness,
        slope,
    })
}

/// Eigenpairs of `K q = w2 M q`, sorted ascending, with full DOF vectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub omega2: Vec<f64>,
    /// One `M`-normalised eigenvector per column.
    pub vectors: DMatrix<f64>,
}

/// Solves the symmetric-definite generalized eigenproblem through a Cholesky
/// reduction of `M`.
pub fn generalized_eigen(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = mass.nrows();
    if mass.shape() != (n, n) || stiffness.shape() != (n, n) {
        return Err(invalid("mass and stiffness must be square and of equal size"));
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let a = &linv * stiffness * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let ltr = l.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    let mut omega2 = Vec::with_capacity(n);
    for (c, &k) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(k).into_owned();
        let q = ltr
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
        vectors.set_column(c, &q);
        omega2.push(eig.eigenvalues[k]);
    }
    Ok(EigenPairs { omega2, vectors })
}

/// Full-DOF free-free beam modes with the rigid pair replaced by the exact
/// translation and rotation about the beam centre.
pub fn beam_eigenpairs(mesh: &Mesh, matrices: &BeamMatrices) -> Result<EigenPairs> {
    let mut pairs = generalized_eigen(&matrices.mass, &matrices.stiffness)?;
    let n = pairs.omega2.len();
    let max = pairs.omega2[n - 1].abs();
    let rigid = pairs.omega2.iter().filter(|&&w| w < RIGID_RATIO * max).count();
    if rigid != 2 {
        return Err(Error::Internal(format!(
            "free-free beam produced {rigid} rigid modes instead of 2"
        )));
    }
    let xc = mesh.center()[0];
    let mut translation = DVector::zeros(n);
    let mut rotation = DVector::zeros(n);
    for (i, p) in mesh.nodes().iter().enumerate() {
        translation[2 * i] = 1.0;
        rotation[2 * i] = p[0] - xc;
        rotation[2 * i + 1] = 1.0;
    }
    for (c, v) in [translation, rotation].into_iter().enumerate() {
        let m_norm = (v.transpose() * &matrices.mass * &v)[(0, 0)].sqrt();
        pairs.vectors.set_column(c, &(v / m_norm));
        pairs.omega2[c] = 0.0;
    }
    Ok(pairs)
}

/// Scales `v` to infinity norm 1 and makes its first largest-magnitude entry
/// positive.
pub(crate) fn normalize_mode(v: &mut DVector<f64>) {
    let max = v.amax();
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let scale = if v[lead] < 0.0 { -1.0 / max } else { 1.0 / max };
    v.iter_mut().for_each(|x| *x *= scale);
    // exact unit peak despite the division
    if let Some(i) = v.iter().position(|x| x.abs() >= 1.0 - 1e-15) {
        v[i] = v[i].signum();
    }
}

fn lexicographic_desc(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn same_key(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Sorts `(key, shape)` pairs by ascending key; ties are ordered by
/// descending lexicographic comparison of the sign-fixed shapes.
fn sort_modes(mut modes: Vec<(f64, DVector<f64>)>) -> Vec<(f64, DVector<f64>)> {
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = 0;
    while start < modes.len() {
        let mut end = start + 1;
        while end < modes.len() && same_key(modes[start].0, modes[end].0) {
            end += 1;
        }
        modes[start..end].sort_by(|a, b| lexicographic_desc(&a.1, &b.1));
        start = end;
    }
    modes
}

/// One normalised 1D mode with the quantities needed for plate keys.
struct BeamMode {
    shape: DVector<f64>,
    omega2: f64,
    /// `q' G q / q' M q` for the normalised full-DOF vector.
    slope_ratio: f64,
}

fn beam_modes_1d(mesh: &Mesh, count: usize) -> Result<Vec<BeamMode>> {
    let mats = beam_matrices(mesh)?;
    let pairs = beam_eigenpairs(mesh, &mats)?;
    let n = mesh.len();
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let q = pairs.vectors.column(c);
        let mut shape = DVector::from_iterator(n, (0..n).map(|i| q[2 * i]));
        normalize_mode(&mut shape);
        let m = (q.transpose() * &mats.mass * q)[(0, 0)];
        let g = (q.transpose() * &mats.slope * q)[(0, 0)];
        out.push(BeamMode {
            shape,
            omega2: pairs.omega2[c],
            slope_ratio: g / m,
        });
    }
    Ok(out)
}

/// Beam basis of `n_modes` translational mode shapes.
///
/// Rotational DOF are dropped after the solve, which bounds the number of
/// independent shapes by the node count.
pub fn solve_modal_basis(mesh: &Arc<Mesh>, matrices: &BeamMatrices, n_modes: usize) -> Result<ModalBasis> {
    if mesh.kind() != MeshKind::Profile1d {
        return Err(invalid("beam basis needs a profile mesh"));
    }
    let dof = matrices.mass.nrows();
    if dof != 2 * mesh.len() {
        return Err(invalid("matrices do not match the mesh"));
    }
    if n_modes == 0 || n_modes > dof || n_modes > mesh.len() {
        return Err(invalid(format!(
            "n_modes must be in 1..={} for a {}-node beam, got {n_modes}",
            mesh.len(),
            mesh.len()
        )));
    }
    let pairs = beam_eigenpairs(mesh, matrices)?;
    let n = mesh.len();
    let modes: Vec<(f64, DVector<f64>)> = (0..n_modes)
        .map(|c| {
            let q = pairs.vectors.column(c);
            let mut shape = DVector::from_iterator(n, (0..n).map(|i| q[2 * i]));
            normalize_mode(&mut shape);
            (pairs.omega2[c], shape)
        })
        .collect();
    let modes = sort_modes(modes);
    let omega2 = modes.iter().map(|m| m.0).collect();
    let columns: Vec<_> = modes.into_iter().map(|m| m.1).collect();
    ModalBasis::new(mesh.clone(), DMatrix::from_columns(&columns), omega2, 2)
        .map_err(|e| Error::Internal(format!("beam basis failed validation: {e}")))
}

/// Beam basis straight from a profile mesh.
pub fn beam_basis(mesh: &Arc<Mesh>, n_modes: usize) -> Result<ModalBasis> {
    let mats = beam_matrices(mesh)?;
    solve_modal_basis(mesh, &mats, n_modes)
}

/// Grid basis from products `phi_a(x) * phi_b(z)` of beam modes.
///
/// Products are ordered by the Rayleigh quotient of a Poisson-free plate,
/// `w_a^2 + w_b^2 + 2 g_a g_b`, where `g` is the slope-energy ratio of each
/// factor. The coupling term is zero unless both factors bend or rotate, so
/// the three rigid products stay at zero while the bilinear twist becomes
/// the first flexible mode.
pub fn plate_basis_tensor(mesh: &Arc<Mesh>, n_modes: usize) -> Result<ModalBasis> {
    if mesh.kind() != MeshKind::Grid2d {
        return Err(invalid("plate basis needs a grid mesh"));
    }
    let (nx, nz) = (mesh.nx(), mesh.nz());
    if n_modes < 3 || n_modes > nx * nz {
        return Err(invalid(format!(
            "n_modes must be in 3..={} for a {nx}x{nz} grid, got {n_modes}",
            nx * nz
        )));
    }
    let x_modes = beam_modes_1d(&Mesh::profile(mesh.lx(), nx)?, nx)?;
    let z_modes = beam_modes_1d(&Mesh::profile(mesh.lz(), nz)?, nz)?;
    let mut products = Vec::with_capacity(nx * nz);
    for a in &x_modes {
        for b in &z_modes {
            let key = a.omega2 + b.omega2 + 2.0 * a.slope_ratio * b.slope_ratio;
            let key = if a.omega2 == 0.0 && b.omega2 == 0.0 && (a.slope_ratio == 0.0 || b.slope_ratio == 0.0) {
                0.0
            } else {
                key
            };
            let mut shape = DVector::from_fn(nx * nz, |i, _| a.shape[i % nx] * b.shape[i / nx]);
            normalize_mode(&mut shape);
            products.push((key, shape));
        }
    }
    let mut modes = sort_modes(products);
    modes.truncate(n_modes);
    let omega2 = modes.iter().map(|m| m.0).collect();
    let columns: Vec<_> = modes.into_iter().map(|m| m.1).collect();
    ModalBasis::new(mesh.clone(), DMatrix::from_columns(&columns), omega2, 3)
        .map_err(|e| Error::Internal(format!("plate basis failed validation: {e}")))
}

/// Builds the basis matching the mesh kind.
pub fn build_basis(mesh: &Arc<Mesh>, n_modes: usize) -> Result<ModalBasis> {
    match mesh.kind() {
        MeshKind::Profile1d => beam_basis(mesh, n_modes),
        MeshKind::Grid2d => plate_basis_tensor(mesh, n_modes),
    }
}

/// Serialises a basis as versioned text. Values use shortest round-trip
/// formatting, so loading restores them bit for bit.
pub fn basis_to_string(basis: &ModalBasis) -> String {
    let mesh = basis.mesh();
    let mut s = String::new();
    let _ = writeln!(s, "{FILE_MAGIC} {FILE_VERSION}");
    let _ = writeln!(s, "kind {}", basis.kind().as_str());
    let _ = writeln!(s, "nx {}", mesh.nx());
    let _ = writeln!(s, "nz {}", mesh.nz());
    let _ = writeln!(s, "lx {:e}", mesh.lx());
    let _ = writeln!(s, "lz {:e}", mesh.lz());
    let _ = writeln!(s, "n_modes {}", basis.n_modes());
    let _ = writeln!(s, "n_rigid {}", basis.n_rigid());
    s.push_str("omega2");
    for w in basis.omega2() {
        let _ = write!(s, " {w:e}");
    }
    s.push('\n');
    s.push_str("modes\n");
    for row in basis.modes().row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn save_basis(basis: &ModalBasis, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, basis_to_string(basis))?;
    Ok(())
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<ModalBasis> {
    let text = std::fs::read_to_string(path)?;
    parse_basis(&text)
}

/// Parses and validates a basis file. Accepts any basis, including FEM
/// plate bases computed elsewhere, as long as the invariants hold.
pub fn parse_basis(text: &str) -> Result<ModalBasis> {
    let fmt_err = |msg: String| Error::Format(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| -> Result<Vec<&str>> {
        let line = lines
            .next()
            .ok_or_else(|| fmt_err(format!("unexpected end of file, expected `{what}`")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&what) {
            return Err(fmt_err(format!("expected `{what}`, found `{line}`")));
        }
        Ok(fields[1..].to_vec())
    };
    fn one<T: std::str::FromStr>(fields: Vec<&str>, what: &str) -> Result<T> {
        match fields.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| Error::Format(format!("bad value for `{what}`: {v}"))),
            _ => Err(Error::Format(format!("`{what}` takes one value"))),
        }
    }
    let version: u32 = one(next(FILE_MAGIC)?, "version")?;
    if version != FILE_VERSION {
        return Err(fmt_err(format!("unsupported basis file version {version}")));
    }
    let kind: String = one(next("kind")?, "kind")?;
    let mesh_kind = match kind.as_str() {
        "beam1d" => MeshKind::Profile1d,
        "plate2d" => MeshKind::Grid2d,
        other => return Err(fmt_err(format!("unknown basis kind `{other}`"))),
    };
    let nx: usize = one(next("nx")?, "nx")?;
    let nz: usize = one(next("nz")?, "nz")?;
    let lx: f64 = one(next("lx")?, "lx")?;
    let lz: f64 = one(next("lz")?, "lz")?;
    let n_modes: usize = one(next("n_modes")?, "n_modes")?;
    let n_rigid: usize = one(next("n_rigid")?, "n_rigid")?;
    let omega2 = next("omega2")?
        .iter()
        .map(|v| v.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fmt_err(format!("bad eigenvalue: {e}")))?;
    next("modes")?;
    let mesh = Mesh::build(mesh_kind, lx, lz, nx, nz).map_err(|e| fmt_err(format!("bad mesh header: {e}")))?;
    if mesh_kind == MeshKind::Profile1d && nz != 1 {
        return Err(fmt_err(format!("profile basis must have nz = 1, found {nz}")));
    }
    let mut data = Vec::with_capacity(mesh.len() * n_modes);
    let mut rows = 0;
    for line in lines {
        let before = data.len();
        for v in line.split_whitespace() {
            data.push(v.parse::<f64>().map_err(|e| fmt_err(format!("bad matrix entry: {e}")))?);
        }
        if data.len() - before != n_modes {
            return Err(fmt_err(format!(
                "matrix row {} has {} entries, expected {n_modes}",
                rows + 1,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != mesh.len() {
        return Err(fmt_err(format!("matrix has {rows} rows, mesh has {} nodes", mesh.len())));
    }
    let modes = DMatrix::from_row_slice(rows, n_modes, &data);
    ModalBasis::new(Arc::new(mesh), modes, omega2, n_rigid)
}
