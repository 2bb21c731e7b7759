//! Small displacement torsors, the rigid-mode/torsor operator, and
//! functional-requirement domains.
//!
//! Sign conventions (shared by every function here):
//! - translations in mm, rotations in rad, surface normal along `y`;
//! - transport to `p`: `T' = T + R x (p - P)`;
//! - a torsor about `c` moves the surface point `(x, 0, z)` along `y` by
//!   `T_y + R_z (x - x_c) - R_x (z - z_c)`.
//!
//! Only out-of-plane components are active: `(T_y, R_z)` for profiles and
//! `(T_y, R_x, R_z)` for grids.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, MeshKind, SurfaceField};
use crate::modal::ModalBasis;
use crate::signature::Projector;

/// Distance under which two reference points are the same point (mm).
const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl Component {
    pub fn name(&self) -> &'static str {
        match self {
            Component::Tx => "Tx",
            Component::Ty => "Ty",
            Component::Tz => "Tz",
            Component::Rx => "Rx",
            Component::Ry => "Ry",
            Component::Rz => "Rz",
        }
    }
}

/// Planar (profile) or spatial (grid) assembly model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Planar,
    Spatial,
}

impl Case {
    pub fn for_mesh(kind: MeshKind) -> Case {
        match kind {
            MeshKind::Profile1d => Case::Planar,
            MeshKind::Grid2d => Case::Spatial,
        }
    }

    /// Active torsor components, in the order used by reduced vectors.
    pub fn components(&self) -> &'static [Component] {
        match self {
            Case::Planar => &[Component::Ty, Component::Rz],
            Case::Spatial => &[Component::Ty, Component::Rx, Component::Rz],
        }
    }

    pub fn dim(&self) -> usize {
        self.components().len()
    }
}

/// Small displacement torsor at a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sdt {
    pub point: [f64; 3],
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl Sdt {
    pub fn zero(point: [f64; 3]) -> Sdt {
        Sdt {
            point,
            translation: [0.0; 3],
            rotation: [0.0; 3],
        }
    }

    pub fn new(point: [f64; 3], translation: [f64; 3], rotation: [f64; 3]) -> Sdt {
        Sdt {
            point,
            translation,
            rotation,
        }
    }

    /// Torsor whose active components are `values` (in `case` order).
    pub fn from_reduced(case: Case, point: [f64; 3], values: &[f64]) -> Result<Sdt> {
        if values.len() != case.dim() {
            return Err(invalid(format!(
                "expected {} torsor components, got {}",
                case.dim(),
                values.len()
            )));
        }
        let mut sdt = Sdt::zero(point);
        for (c, v) in case.components().iter().zip(values) {
            *sdt.component_mut(*c) = *v;
        }
        Ok(sdt)
    }

    pub fn reduced(&self, case: Case) -> Vec<f64> {
        case.components().iter().map(|c| self.component(*c)).collect()
    }

    pub fn component(&self, c: Component) -> f64 {
        match c {
            Component::Tx => self.translation[0],
            Component::Ty => self.translation[1],
            Component::Tz => self.translation[2],
            Component::Rx => self.rotation[0],
            Component::Ry => self.rotation[1],
            Component::Rz => self.rotation[2],
        }
    }

    fn component_mut(&mut self, c: Component) -> &mut f64 {
        match c {
            Component::Tx => &mut self.translation[0],
            Component::Ty => &mut self.translation[1],
            Component::Tz => &mut self.translation[2],
            Component::Rx => &mut self.rotation[0],
            Component::Ry => &mut self.rotation[1],
            Component::Rz => &mut self.rotation[2],
        }
    }

    /// Same displacement expressed at `to`.
    pub fn transport(&self, to: [f64; 3]) -> Sdt {
        let arm = [to[0] - self.point[0], to[1] - self.point[1], to[2] - self.point[2]];
        let m = cross(self.rotation, arm);
        Sdt {
            point: to,
            translation: [
                self.translation[0] + m[0],
                self.translation[1] + m[1],
                self.translation[2] + m[2],
            ],
            rotation: self.rotation,
        }
    }

    /// Normal displacement of the surface point `(x, 0, z)`.
    pub fn normal_displacement(&self, x: f64, z: f64) -> f64 {
        self.transport([x, self.point[1], z]).translation[1]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().chain(self.rotation.iter()).all(|v| v.is_finite())
    }
}

fn same_point(a: [f64; 3], b: [f64; 3]) -> bool {
    (0..3).all(|i| (a[i] - b[i]).abs() <= POINT_TOL)
}

/// `a + sign * b`, both expressed at the same point.
pub fn compose(a: &Sdt, b: &Sdt, sign: f64) -> Result<Sdt> {
    if !same_point(a.point, b.point) {
        return Err(invalid(format!(
            "torsors are expressed at different points {:?} and {:?}; transport first",
            a.point, b.point
        )));
    }
    let mut out = *a;
    for i in 0..3 {
        out.translation[i] += sign * b.translation[i];
        out.rotation[i] += sign * b.rotation[i];
    }
    Ok(out)
}

pub fn add(a: &Sdt, b: &Sdt) -> Result<Sdt> {
    compose(a, b, 1.0)
}

pub fn sub(a: &Sdt, b: &Sdt) -> Result<Sdt> {
    compose(a, b, -1.0)
}

/// Centre of a mesh footprint in the assembly frame.
pub fn surface_center(mesh: &Mesh) -> [f64; 3] {
    let [x, z] = mesh.center();
    [x, 0.0, z]
}

/// Linear map between active torsor components and rigid modal coefficients:
/// `lambda_rigid = alpha * sdt`.
#[derive(Debug, Clone)]
pub struct AlphaMatrix {
    case: Case,
    center: [f64; 3],
    alpha: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl AlphaMatrix {
    pub fn case(&self) -> Case {
        self.case
    }
    pub fn center(&self) -> [f64; 3] {
        self.center
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.alpha
    }
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Torsor at the surface centre described by rigid coefficients.
    pub fn rigid_to_sdt(&self, lambda_rigid: &[f64]) -> Result<Sdt> {
        let n = self.alpha.nrows();
        if lambda_rigid.len() != n {
            return Err(invalid(format!(
                "expected {n} rigid coefficients, got {}",
                lambda_rigid.len()
            )));
        }
        let s = &self.inverse * DVector::from_column_slice(lambda_rigid);
        Sdt::from_reduced(self.case, self.center, s.as_slice())
    }

    /// Rigid coefficients of a torsor; it is transported to the surface centre first.
    pub fn sdt_to_rigid(&self, sdt: &Sdt) -> Vec<f64> {
        let s = sdt.transport(self.center).reduced(self.case);
        (&self.alpha * DVector::from_vec(s)).data.into()
    }
}

/// Normal displacement field of the unit torsor component `c` about `center`.
pub fn unit_component_field(mesh: &std::sync::Arc<Mesh>, center: [f64; 3], c: Component) -> SurfaceField {
    let mut unit = Sdt::zero(center);
    *unit.component_mut(c) = 1.0;
    SurfaceField::from_fn(mesh.clone(), |x, z| unit.normal_displacement(x, z))
}

/// Builds `alpha` column by column: each unit torsor component is turned
/// into its nodal displacement field and projected on the rigid modes.
pub fn build_alpha(basis: &ModalBasis, center: [f64; 3]) -> Result<AlphaMatrix> {
    let case = Case::for_mesh(basis.mesh().kind());
    let n = basis.n_rigid();
    if n != case.dim() {
        return Err(invalid(format!(
            "basis has {n} rigid modes, {} torsor components are active",
            case.dim()
        )));
    }
    let projector = Projector::new(basis, n)?;
    let mut alpha = DMatrix::zeros(n, n);
    for (j, c) in case.components().iter().enumerate() {
        let field = unit_component_field(basis.mesh(), center, *c);
        let lambda = projector.project_values(field.values())?;
        alpha.set_column(j, lambda.lambda());
    }
    let inverse = alpha
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("alpha matrix is singular".into()))?;
    let check = (&alpha * &inverse - DMatrix::identity(n, n)).amax();
    if check > 1e-9 {
        return Err(Error::Internal(format!("alpha matrix is ill-conditioned ({check:e})")));
    }
    Ok(AlphaMatrix {
        case,
        center,
        alpha,
        inverse,
    })
}

/// `normal . sdt <= offset` over the active components.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Convex polytope of admissible torsors at a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub label: String,
    pub case: Case,
    pub point: [f64; 3],
    pub half_spaces: Vec<HalfSpace>,
}

/// Nominal geometry of the functional-requirement face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrFace {
    /// Face centre in the assembly frame (mm).
    pub center: [f64; 3],
    /// Side length along `x` (mm).
    pub lx: f64,
    /// Side length along `z` (mm); unused in the planar case.
    pub lz: f64,
}

impl FrFace {
    /// Perimeter summits as offsets `(dx, dz)` from the face centre.
    pub fn summits(&self, case: Case) -> Vec<[f64; 2]> {
        let (hx, hz) = (0.5 * self.lx, 0.5 * self.lz);
        match case {
            Case::Planar => vec![[-hx, 0.0], [hx, 0.0]],
            Case::Spatial => vec![[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]],
        }
    }
}

/// Location-tolerance domain: every summit of the face must stay within
/// `+-t/2` along `y`. Two half-spaces per summit, expressed at the face centre.
pub fn fr_domain(t: f64, face: &FrFace, case: Case) -> Result<Domain> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("tolerance t must be positive, got {t}")));
    }
    if !(face.lx > 0.0) || (case == Case::Spatial && !(face.lz > 0.0)) {
        return Err(invalid("functional face side lengths must be positive"));
    }
    let mut half_spaces = Vec::new();
    for [dx, dz] in face.summits(case) {
        // T_y at the summit as a linear form in the active components
        let row: Vec<f64> = case
            .components()
            .iter()
            .map(|c| match c {
                Component::Ty => 1.0,
                Component::Rx => -dz,
                Component::Rz => dx,
                _ => 0.0,
            })
            .collect();
        for sign in [1.0, -1.0] {
            half_spaces.push(HalfSpace {
                normal: row.iter().map(|v| sign * v).collect(),
                offset: 0.5 * t,
            });
        }
    }
    Ok(Domain {
        label: format!("FR location t={t}"),
        case,
        point: face.center,
        half_spaces,
    })
}

/// Inclusion verdict and signed distance to the closest face (mm for
/// location domains; negative outside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub inside: bool,
    pub margin: f64,
}

/// Closed-set inclusion test: boundary torsors are inside.
pub fn domain_contains(domain: &Domain, sdt: &Sdt) -> Result<Containment> {
    if !same_point(domain.point, sdt.point) {
        return Err(invalid(format!(
            "torsor at {:?} must be transported to the domain point {:?}",
            sdt.point, domain.point
        )));
    }
    let s = sdt.reduced(domain.case);
    let margin = domain
        .half_spaces
        .iter()
        .map(|h| h.offset - h.normal.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(Containment {
        inside: margin >= 0.0,
        margin,
    })
}

/// Half-space rows as CSV: one column per active component, then the offset.
pub fn domain_csv(domain: &Domain) -> String {
    let mut s = String::new();
    for c in domain.case.components() {
        let _ = write!(s, "n_{},", c.name());
    }
    s.push_str("offset\n");
    for h in &domain.half_spaces {
        for v in &h.normal {
            let _ = write!(s, "{v:e},");
        }
        let _ = writeln!(s, "{:e}", h.offset);
    }
    s
}
