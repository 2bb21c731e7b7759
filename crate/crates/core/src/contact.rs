//! Static mating of two surfaces with form errors.
//!
//! Both signatures describe their surface's deviation along the assembly `+y`
//! axis: part 1 lies below, part 2 is pressed down onto it by a force along
//! `-y`. Once part 2 is moved rigidly by `s(x, z)`, the gap at a node is
//! `s + e2 - e1`. Non-penetration means `s >= e1 - e2`, so the resting
//! position is the upper-hull facet of the obstacle height `h = e1 - e2`
//! (the negated difference surface) above the force point. The resulting
//! torsor is the displacement of part 2 relative to part 1; for rigid-only
//! surfaces it reduces to `E_RA1 - E_RA2`.
//!
//! ```text
//!        F |            part 2, deviation e2
//!          v    ~~~~~~~~~~~~~~~~~~~~~~~~~~~
//!      ____/\__________/\___ <- upper hull of h = e1 - e2 (support s)
//!      part 1, deviation e1
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::hull::{upper_hull_2d, upper_hull_3d};
use crate::kinematics::{sub, AlphaMatrix, Case, Sdt};
use crate::mesh::{Mesh, MeshKind, SurfaceField};
use crate::modal::ModalBasis;
use crate::signature::{ModalSignature, Projector};

/// Barycentric slack allowed when locating the force point in a facet.
pub const BARY_TOL: f64 = 1e-12;

/// Height plane `h = a + b x + c z` (`c = 0` for profiles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SupportPlane {
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        self.a + self.b * x + self.c * z
    }

    fn through(mesh: &Mesh, h: &DVector<f64>, idx: &[usize]) -> Option<SupportPlane> {
        match idx {
            [i, j] => {
                let ([xi, _], [xj, _]) = (mesh.node(*i), mesh.node(*j));
                let b = (h[*j] - h[*i]) / (xj - xi);
                Some(SupportPlane { a: h[*i] - b * xi, b, c: 0.0 })
            }
            [i, j, k] => {
                let rows: Vec<[f64; 2]> = [*i, *j, *k].iter().map(|&n| mesh.node(n)).collect();
                let m = Matrix3::new(
                    1.0, rows[0][0], rows[0][1], //
                    1.0, rows[1][0], rows[1][1], //
                    1.0, rows[2][0], rows[2][1],
                );
                let sol = m.lu().solve(&Vector3::new(h[*i], h[*j], h[*k]))?;
                Some(SupportPlane { a: sol[0], b: sol[1], c: sol[2] })
            }
            _ => None,
        }
    }
}

/// Contact facet selected by the force axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactFacet {
    /// Node indices in ascending order: 2 for profiles, 3 for grids.
    pub contacts: Vec<usize>,
    pub plane: SupportPlane,
    /// Barycentric coordinates of the force point in the facet, matching `contacts`.
    pub barycentric: Vec<f64>,
    /// True when the field is flat and the footprint-corner convention was used.
    pub flat: bool,
}

/// Contact segment of a profile: the upper-hull segment whose x-range holds
/// `x_f`. A force exactly on a hull vertex picks the lexicographically
/// smallest candidate pair.
pub fn contact_facet_2d(field: &SurfaceField, x_f: f64) -> Result<ContactFacet> {
    let mesh = field.mesh();
    if mesh.kind() != MeshKind::Profile1d {
        return Err(invalid("2D contact needs a profile field"));
    }
    if !mesh.strictly_contains(x_f, 0.0) {
        return Err(invalid(format!(
            "force point x = {x_f} is outside the footprint (0, {})",
            mesh.lx()
        )));
    }
    let x: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
    let h = field.values();
    let hull = upper_hull_2d(&x, h.as_slice());
    let flat = hull.len() == 2;
    let best = hull
        .windows(2)
        .filter(|w| x[w[0]] <= x_f && x_f <= x[w[1]])
        .map(|w| [w[0], w[1]])
        .min()
        .ok_or_else(|| Error::NoStableContact(format!("no hull segment above x = {x_f}")))?;
    let plane = SupportPlane::through(mesh, h, &best)
        .ok_or_else(|| Error::Internal("degenerate contact segment".into()))?;
    let t = (x_f - x[best[0]]) / (x[best[1]] - x[best[0]]);
    Ok(ContactFacet {
        contacts: best.to_vec(),
        plane,
        barycentric: vec![1.0 - t, t],
        flat,
    })
}

/// Barycentric coordinates of `(x, z)` in the projected triangle.
pub fn barycentric(mesh: &Mesh, tri: [usize; 3], x: f64, z: f64) -> Option<[f64; 3]> {
    let [a, b, c] = tri.map(|k| mesh.node(k));
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det == 0.0 {
        return None;
    }
    let wb = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (z - a[1])) / det;
    let wc = ((b[0] - a[0]) * (z - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
    Some([1.0 - wb - wc, wb, wc])
}

fn sorted(mut tri: [usize; 3]) -> [usize; 3] {
    tri.sort_unstable();
    tri
}

/// Picks, among `triangles`, the one whose projection holds the force point;
/// ties resolve to the lexicographically smallest sorted vertex triple.
fn select_triangle(
    mesh: &Mesh,
    triangles: impl IntoIterator<Item = [usize; 3]>,
    x_f: f64,
    z_f: f64,
) -> Option<([usize; 3], [f64; 3])> {
    triangles
        .into_iter()
        .filter_map(|t| {
            let t = sorted(t);
            let w = barycentric(mesh, t, x_f, z_f)?;
            w.iter().all(|&v| v >= -BARY_TOL).then_some((t, w))
        })
        .min_by(|a, b| a.0.cmp(&b.0))
}

/// Contact triangle of a grid: the upper-hull facet whose projection holds
/// the force point. A coplanar field uses the footprint-corner triangle that
/// holds the force point, with the field's own plane as support.
pub fn contact_facet_3d(field: &SurfaceField, force: [f64; 2]) -> Result<ContactFacet> {
    let mesh = field.mesh();
    if mesh.kind() != MeshKind::Grid2d {
        return Err(invalid("3D contact needs a grid field"));
    }
    let [x_f, z_f] = force;
    if !mesh.strictly_contains(x_f, z_f) {
        return Err(invalid(format!(
            "force point ({x_f}, {z_f}) is outside the footprint (0, {}) x (0, {})",
            mesh.lx(),
            mesh.lz()
        )));
    }
    let h = field.values();
    let pts: Vec<[f64; 3]> = mesh
        .nodes()
        .iter()
        .zip(h.iter())
        .map(|(p, &v)| [p[0], p[1], v])
        .collect();
    let (tri, w, flat) = match upper_hull_3d(&pts) {
        Some(facets) => {
            let (t, w) = select_triangle(mesh, facets, x_f, z_f).ok_or_else(|| {
                Error::NoStableContact(format!("no hull facet above ({x_f}, {z_f})"))
            })?;
            (t, w, false)
        }
        None => {
            let (nx, nz) = (mesh.nx(), mesh.nz());
            let c00 = mesh.index(0, 0);
            let c10 = mesh.index(nx - 1, 0);
            let c01 = mesh.index(0, nz - 1);
            let c11 = mesh.index(nx - 1, nz - 1);
            let corners = [[c00, c10, c11], [c00, c11, c01], [c00, c10, c01], [c10, c11, c01]];
            let (t, w) = select_triangle(mesh, corners, x_f, z_f)
                .ok_or_else(|| Error::Internal("force point not in any footprint corner triangle".into()))?;
            (t, w, true)
        }
    };
    let plane = SupportPlane::through(mesh, h, &tri)
        .ok_or_else(|| Error::Internal("degenerate contact triangle".into()))?;
    Ok(ContactFacet {
        contacts: tri.to_vec(),
        plane,
        barycentric: w.to_vec(),
        flat,
    })
}

/// Mating conditions: force application point and filter order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatingSetup {
    /// `(x_F, z_F)` in mm; `z_F` is ignored for profiles.
    pub force: [f64; 2],
    /// Number of modal coefficients kept on each surface.
    pub m: usize,
}

/// `lambda_A2 - lambda_A1`, zero-padded to the longer signature.
pub fn difference_signature(sig_a1: &ModalSignature, sig_a2: &ModalSignature) -> ModalSignature {
    let m = sig_a1.len().max(sig_a2.len());
    let d = sig_a2.resized(m).lambda() - sig_a1.resized(m).lambda();
    ModalSignature::from_vector(d).expect("difference of finite signatures is finite")
}

/// Outcome of one static mating.
#[derive(Debug, Clone)]
pub struct AssemblyResult {
    pub facet: ContactFacet,
    /// Rigid coefficients of the support plane (repositioning of part 2).
    pub repositioning: Vec<f64>,
    /// Displacement of part 2 relative to part 1 at the surface centre.
    pub sdt_with_form: Sdt,
    /// Same, from the associated (rigid-only) surfaces.
    pub sdt_rigid_only: Sdt,
    /// `sdt_with_form - sdt_rigid_only`.
    pub sdt_form_effect: Sdt,
    /// Nodal gap after repositioning (mm).
    pub gap: DVector<f64>,
    pub min_gap: f64,
}

/// Reusable mating solver for one basis, torsor operator and setup.
#[derive(Debug, Clone)]
pub struct Assembler<'a> {
    basis: &'a ModalBasis,
    alpha: &'a AlphaMatrix,
    setup: MatingSetup,
    modes: DMatrix<f64>,
    rigid: Projector,
}

impl<'a> Assembler<'a> {
    pub fn new(basis: &'a ModalBasis, alpha: &'a AlphaMatrix, setup: MatingSetup) -> Result<Assembler<'a>> {
        let mesh = basis.mesh();
        if setup.m < basis.n_rigid() || setup.m > basis.n_modes() {
            return Err(invalid(format!(
                "filter order m must be in {}..={}, got {}",
                basis.n_rigid(),
                basis.n_modes(),
                setup.m
            )));
        }
        let [x_f, z_f] = setup.force;
        let z_f = if mesh.kind() == MeshKind::Profile1d { 0.0 } else { z_f };
        if !mesh.strictly_contains(x_f, z_f) {
            return Err(invalid(format!(
                "force point ({x_f}, {z_f}) must lie strictly inside the mating face"
            )));
        }
        if alpha.case() != Case::for_mesh(mesh.kind()) {
            return Err(invalid("torsor operator does not match the basis"));
        }
        Ok(Assembler {
            basis,
            alpha,
            setup,
            modes: basis.modes().columns(0, setup.m).into_owned(),
            rigid: Projector::new(basis, basis.n_rigid())?,
        })
    }

    pub fn setup(&self) -> MatingSetup {
        self.setup
    }

    pub fn basis(&self) -> &ModalBasis {
        self.basis
    }

    /// Relative torsor of the associated surfaces: `E_A1 - E_A2` at the
    /// surface centre.
    pub fn rigid_only(&self, sig_a1: &ModalSignature, sig_a2: &ModalSignature) -> Result<Sdt> {
        let rigid_diff: Vec<f64> = (0..self.basis.n_rigid())
            .map(|i| sig_a1.get(i) - sig_a2.get(i))
            .collect();
        self.alpha.rigid_to_sdt(&rigid_diff)
    }

    /// Mates surface `A2` (part 2) on `A1` (part 1).
    pub fn assemble(&self, sig_a1: &ModalSignature, sig_a2: &ModalSignature) -> Result<AssemblyResult> {
        let m = self.setup.m;
        let diff = difference_signature(&sig_a1.resized(m), &sig_a2.resized(m));
        let mesh = self.basis.mesh();
        let h = -(&self.modes * diff.lambda());
        let field = SurfaceField::new(mesh.clone(), h)?;
        let facet = match mesh.kind() {
            MeshKind::Profile1d => contact_facet_2d(&field, self.setup.force[0])?,
            MeshKind::Grid2d => contact_facet_3d(&field, self.setup.force)?,
        };
        let support = DVector::from_iterator(
            mesh.len(),
            mesh.nodes().iter().map(|p| facet.plane.eval(p[0], p[1])),
        );
        let repositioning: Vec<f64> = self.rigid.project_values(&support)?.lambda().iter().copied().collect();
        let sdt_with_form = self.alpha.rigid_to_sdt(&repositioning)?;
        let sdt_rigid_only = self.rigid_only(sig_a1, sig_a2)?;
        let sdt_form_effect = sub(&sdt_with_form, &sdt_rigid_only)?;
        let gap = support - field.values();
        let min_gap = gap.min();
        Ok(AssemblyResult {
            facet,
            repositioning,
            sdt_with_form,
            sdt_rigid_only,
            sdt_form_effect,
            gap,
            min_gap,
        })
    }
}

/// One-shot mating of two signatures.
pub fn assemble(
    sig_a1: &ModalSignature,
    sig_a2: &ModalSignature,
    setup: MatingSetup,
    basis: &ModalBasis,
    alpha: &AlphaMatrix,
) -> Result<AssemblyResult> {
    Assembler::new(basis, alpha, setup)?.assemble(sig_a1, sig_a2)
}

/// Single-row CSV (plus header) describing an assembly.
pub fn assembly_csv(result: &AssemblyResult, case: Case) -> String {
    let comps = case.components();
    let mut s = String::from("contacts,min_gap_mm");
    for prefix in ["with_form", "rigid_only", "form_effect"] {
        for c in comps {
            let _ = write!(s, ",{prefix}_{}", c.name());
        }
    }
    s.push('\n');
    let contacts: Vec<String> = result.facet.contacts.iter().map(|c| c.to_string()).collect();
    let _ = write!(s, "{},{:e}", contacts.join(" "), result.min_gap);
    for sdt in [&result.sdt_with_form, &result.sdt_rigid_only, &result.sdt_form_effect] {
        for v in sdt.reduced(case) {
            let _ = write!(s, ",{v:e}");
        }
    }
    s.push('\n');
    s
}

/// Gap field as a grid: header row of x, then one row per z starting with z.
pub fn gap_grid_csv(mesh: &Mesh, gap: &DVector<f64>) -> String {
    let mut s = String::from("z\\x");
    for ix in 0..mesh.nx() {
        let _ = write!(s, ",{}", mesh.node(ix)[0]);
    }
    s.push('\n');
    for iz in 0..mesh.nz() {
        let _ = write!(s, "{}", mesh.node(mesh.index(0, iz))[1]);
        for ix in 0..mesh.nx() {
            let _ = write!(s, ",{:e}", gap[mesh.index(ix, iz)]);
        }
        s.push('\n');
    }
    s
}
