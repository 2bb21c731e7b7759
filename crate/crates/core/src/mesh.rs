//! Nominal surface discretisation and measured-point interpolation.
//!
//! Node ordering is row-major in `(z, x)`: node `iz * nx + ix` sits at
//! `(x_ix, z_iz)`. Every vector and matrix in the crate follows this order.
//! A profile mesh is the `nz = 1` special case with `z = 0`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};

/// Relative tolerance used to decide that two sample coordinates coincide.
const COORD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Profile1d,
    Grid2d,
}

impl MeshKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeshKind::Profile1d => "profile1d",
            MeshKind::Grid2d => "grid2d",
        }
    }
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile1d" => Ok(MeshKind::Profile1d),
            "grid2d" => Ok(MeshKind::Grid2d),
            other => Err(Error::Format(format!("unknown mesh kind `{other}`"))),
        }
    }
}

/// Regular lattice over `[0, lx] x [0, lz]` (or `[0, lx]` for profiles).
#[derive(Debug, Clone)]
pub struct Mesh {
    kind: MeshKind,
    lx: f64,
    lz: f64,
    nx: usize,
    nz: usize,
    nodes: Vec<[f64; 2]>,
}

/// Meshes compare by descriptor; node coordinates are a pure function of it.
impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.lx == other.lx
            && self.lz == other.lz
            && self.nx == other.nx
            && self.nz == other.nz
    }
}

fn lattice(length: f64, count: usize, i: usize) -> f64 {
    if i + 1 == count {
        length
    } else {
        length * i as f64 / (count - 1) as f64
    }
}

impl Mesh {
    /// Builds a mesh. `lz` and `nz` are ignored for profiles.
    pub fn build(kind: MeshKind, lx: f64, lz: f64, nx: usize, nz: usize) -> Result<Mesh> {
        if !(lx > 0.0 && lx.is_finite()) {
            return Err(invalid(format!("length Lx must be positive, got {lx}")));
        }
        if nx < 2 {
            return Err(invalid(format!("nx must be at least 2, got {nx}")));
        }
        let (lz, nz) = match kind {
            MeshKind::Profile1d => (0.0, 1),
            MeshKind::Grid2d => {
                if !(lz > 0.0 && lz.is_finite()) {
                    return Err(invalid(format!("length Lz must be positive, got {lz}")));
                }
                if nz < 2 {
                    return Err(invalid(format!("nz must be at least 2, got {nz}")));
                }
                (lz, nz)
            }
        };
        let mut nodes = Vec::with_capacity(nx * nz);
        for iz in 0..nz {
            let z = if nz == 1 { 0.0 } else { lattice(lz, nz, iz) };
            for ix in 0..nx {
                nodes.push([lattice(lx, nx, ix), z]);
            }
        }
        Ok(Mesh {
            kind,
            lx,
            lz,
            nx,
            nz,
            nodes,
        })
    }

    pub fn profile(lx: f64, nx: usize) -> Result<Mesh> {
        Mesh::build(MeshKind::Profile1d, lx, 0.0, nx, 1)
    }

    pub fn grid(lx: f64, lz: f64, nx: usize, nz: usize) -> Result<Mesh> {
        Mesh::build(MeshKind::Grid2d, lx, lz, nx, nz)
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn lz(&self) -> f64 {
        self.lz
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// `(x, z)` of node `i`.
    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz * self.nx + ix
    }

    /// Centre of the footprint, `(Lx/2, Lz/2)`.
    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.lx, 0.5 * self.lz]
    }

    pub fn spacing(&self) -> [f64; 2] {
        let hz = if self.nz > 1 {
            self.lz / (self.nz - 1) as f64
        } else {
            0.0
        };
        [self.lx / (self.nx - 1) as f64, hz]
    }

    /// Whether `(x, z)` lies strictly inside the footprint.
    pub fn strictly_contains(&self, x: f64, z: f64) -> bool {
        let in_x = x > 0.0 && x < self.lx;
        match self.kind {
            MeshKind::Profile1d => in_x,
            MeshKind::Grid2d => in_x && z > 0.0 && z < self.lz,
        }
    }

    /// Smallest node count per axis able to resolve `m` retained modes.
    pub fn min_nodes_per_axis(kind: MeshKind, m: usize) -> usize {
        match kind {
            // mode i changes sign i times along the profile; m nodes carry m shapes
            MeshKind::Profile1d => m,
            MeshKind::Grid2d => 2 * (m as f64).sqrt().ceil() as usize + 1,
        }
    }

    /// Rejects meshes too coarse for `m` retained modes. No remeshing is done.
    pub fn check_resolution(&self, m: usize) -> Result<()> {
        let need = Mesh::min_nodes_per_axis(self.kind, m);
        let short = match self.kind {
            MeshKind::Profile1d => self.nx < need,
            MeshKind::Grid2d => self.nx < need || self.nz < need,
        };
        if short {
            return Err(invalid(format!(
                "mesh {}x{} too coarse for {m} modes: need at least {need} nodes per axis",
                self.nx, self.nz
            )));
        }
        Ok(())
    }
}

/// Per-node normal deviation (mm) over a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    mesh: Arc<Mesh>,
    values: DVector<f64>,
}

impl SurfaceField {
    pub fn new(mesh: Arc<Mesh>, values: DVector<f64>) -> Result<SurfaceField> {
        if values.len() != mesh.len() {
            return Err(invalid(format!(
                "field has {} values for a mesh of {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field contains non-finite values"));
        }
        Ok(SurfaceField { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> SurfaceField {
        let n = mesh.len();
        SurfaceField {
            mesh,
            values: DVector::zeros(n),
        }
    }

    /// Samples `f(x, z)` at every node.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> SurfaceField {
        let values = DVector::from_iterator(mesh.len(), mesh.nodes().iter().map(|p| f(p[0], p[1])));
        SurfaceField { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// Peak-to-valley of the field.
    pub fn peak_to_valley(&self) -> f64 {
        self.values.max() - self.values.min()
    }
}

/// One measured sample: plane coordinates and normal deviation, all in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub x: f64,
    pub z: f64,
    pub v: f64,
}

impl SamplePoint {
    pub fn new(x: f64, z: f64, v: f64) -> SamplePoint {
        SamplePoint { x, z, v }
    }
}

/// Result of mapping samples onto mesh nodes.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub field: SurfaceField,
    /// Nodes outside the sample span, filled with the nearest sample value.
    pub extrapolated: Vec<usize>,
}

/// Maps arbitrary samples onto the nodes of `mesh`.
///
/// Profiles use piecewise-linear interpolation along x. On grids, samples
/// forming a full rectilinear lattice are interpolated bilinearly; scattered
/// samples use the linear interpolant of the smallest sample triangle
/// enclosing the node. Nodes outside the samples' span take the value of the
/// nearest sample and are listed in [`Interpolation::extrapolated`].
pub fn interpolate_to_nodes(points: &[SamplePoint], mesh: &Arc<Mesh>) -> Result<Interpolation> {
    if points.is_empty() {
        return Err(invalid("empty point set"));
    }
    if points
        .iter()
        .any(|p| !(p.x.is_finite() && p.z.is_finite() && p.v.is_finite()))
    {
        return Err(invalid("point set contains non-finite coordinates"));
    }
    let (values, extrapolated) = match mesh.kind() {
        MeshKind::Profile1d => interpolate_profile(points, mesh)?,
        MeshKind::Grid2d => {
            if points.len() < 3 {
                return Err(invalid("grid interpolation needs at least 3 points"));
            }
            if all_collinear(points) {
                return Err(Error::DegenerateInput("all sample points are collinear".into()));
            }
            match Lattice::detect(points) {
                Some(lattice) => lattice.interpolate(mesh),
                None => interpolate_scattered(points, mesh),
            }
        }
    };
    Ok(Interpolation {
        field: SurfaceField::new(mesh.clone(), DVector::from_vec(values))?,
        extrapolated,
    })
}

fn interpolate_profile(points: &[SamplePoint], mesh: &Mesh) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.v)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = mesh.lx().max(1.0);
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= COORD_TOL * scale);
    if pts.len() < 2 {
        return Err(invalid("profile interpolation needs at least 2 distinct x values"));
    }
    let (x0, xn) = (pts[0].0, pts[pts.len() - 1].0);
    let mut values = Vec::with_capacity(mesh.len());
    let mut extrapolated = Vec::new();
    for (i, node) in mesh.nodes().iter().enumerate() {
        let x = node[0];
        if x < x0 - COORD_TOL * scale {
            values.push(pts[0].1);
            extrapolated.push(i);
        } else if x > xn + COORD_TOL * scale {
            values.push(pts[pts.len() - 1].1);
            extrapolated.push(i);
        } else {
            let k = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
            let (xa, va) = pts[k - 1];
            let (xb, vb) = pts[k];
            let s = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
            values.push(if s == 0.0 { va } else if s == 1.0 { vb } else { va + s * (vb - va) });
        }
    }
    Ok((values, extrapolated))
}

fn all_collinear(points: &[SamplePoint]) -> bool {
    let p0 = points[0];
    let Some(p1) = points
        .iter()
        .find(|p| (p.x - p0.x).abs() + (p.z - p0.z).abs() > 0.0)
    else {
        return true;
    };
    let (dx, dz) = (p1.x - p0.x, p1.z - p0.z);
    let len2 = dx * dx + dz * dz;
    points.iter().all(|p| {
        let cross = dx * (p.z - p0.z) - dz * (p.x - p0.x);
        cross.abs() <= COORD_TOL * len2
    })
}

/// Samples arranged on a complete (possibly non-uniform) rectilinear lattice.
struct Lattice {
    xs: Vec<f64>,
    zs: Vec<f64>,
    /// Row-major in (z, x).
    values: Vec<f64>,
}

fn unique_sorted(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| (*b - *a).abs() <= tol);
    v
}

fn locate(axis: &[f64], x: f64, tol: f64) -> Option<usize> {
    let k = axis.partition_point(|&a| a < x - tol);
    (k < axis.len() && (axis[k] - x).abs() <= tol).then_some(k)
}

impl Lattice {
    fn detect(points: &[SamplePoint]) -> Option<Lattice> {
        let span = points
            .iter()
            .fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.z.abs()))
            .max(1.0);
        let tol = COORD_TOL * span;
        let xs = unique_sorted(points.iter().map(|p| p.x).collect(), tol);
        let zs = unique_sorted(points.iter().map(|p| p.z).collect(), tol);
        if xs.len() < 2 || zs.len() < 2 || xs.len() * zs.len() != points.len() {
            return None;
        }
        let mut values = vec![f64::NAN; points.len()];
        for p in points {
            let ix = locate(&xs, p.x, tol)?;
            let iz = locate(&zs, p.z, tol)?;
            let slot = &mut values[iz * xs.len() + ix];
            if !slot.is_nan() {
                return None;
            }
            *slot = p.v;
        }
        Some(Lattice { xs, zs, values })
    }

    fn at(&self, ix: usize, iz: usize) -> f64 {
        self.values[iz * self.xs.len() + ix]
    }

    fn interpolate(&self, mesh: &Mesh) -> (Vec<f64>, Vec<usize>) {
        let tol = COORD_TOL * mesh.lx().max(mesh.lz()).max(1.0);
        let mut values = Vec::with_capacity(mesh.len());
        let mut extrapolated = Vec::new();
        for (i, node) in mesh.nodes().iter().enumerate() {
            let [x, z] = *node;
            let outside = x < self.xs[0] - tol
                || x > self.xs[self.xs.len() - 1] + tol
                || z < self.zs[0] - tol
                || z > self.zs[self.zs.len() - 1] + tol;
            if outside {
                extrapolated.push(i);
                values.push(self.nearest(x, z));
                continue;
            }
            let (ix, sx) = bracket(&self.xs, x);
            let (iz, sz) = bracket(&self.zs, z);
            let v00 = self.at(ix, iz);
            let v10 = self.at(ix + 1, iz);
            let v01 = self.at(ix, iz + 1);
            let v11 = self.at(ix + 1, iz + 1);
            let v = match (sx, sz) {
                (0.0, 0.0) => v00,
                (1.0, 0.0) => v10,
                (0.0, 1.0) => v01,
                (1.0, 1.0) => v11,
                _ => {
                    (1.0 - sz) * ((1.0 - sx) * v00 + sx * v10) + sz * ((1.0 - sx) * v01 + sx * v11)
                }
            };
            values.push(v);
        }
        (values, extrapolated)
    }

    fn nearest(&self, x: f64, z: f64) -> f64 {
        let ix = nearest_index(&self.xs, x);
        let iz = nearest_index(&self.zs, z);
        self.at(ix, iz)
    }
}

/// Cell index `k` and local coordinate `s` in [0, 1] with `axis[k] <= x <= axis[k+1]`.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let k = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
    let s = ((x - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0);
    (k, s)
}

fn nearest_index(axis: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, a) in axis.iter().enumerate() {
        if (a - x).abs() < (axis[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Neighbourhood size first tried when looking for an enclosing sample
/// triangle; it triples until every sample is considered.
const TRIANGLE_SEARCH: usize = 16;

fn interpolate_scattered(points: &[SamplePoint], mesh: &Mesh) -> (Vec<f64>, Vec<usize>) {
    let span = mesh.lx().max(mesh.lz()).max(1.0);
    let hit_tol = COORD_TOL * span;
    // coincident samples would crowd the neighbourhoods; keep the first one
    let mut points: Vec<SamplePoint> = points.to_vec();
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.z.total_cmp(&b.z)));
    points.dedup_by(|b, a| (b.x - a.x).abs() <= hit_tol && (b.z - a.z).abs() <= hit_tol);
    let hull = convex_hull_2d(&points);
    let mut values = Vec::with_capacity(mesh.len());
    let mut extrapolated = Vec::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    for (i, node) in mesh.nodes().iter().enumerate() {
        let [x, z] = *node;
        order.clear();
        order.extend(
            points
                .iter()
                .enumerate()
                .map(|(k, p)| ((p.x - x).hypot(p.z - z), k)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if order[0].0 <= hit_tol {
            values.push(points[order[0].1].v);
            continue;
        }
        let inside = inside_hull(&hull, x, z, hit_tol);
        let mut k = TRIANGLE_SEARCH;
        let found = loop {
            let near = &order[..k.min(order.len())];
            if let Some(v) = enclosing_triangle(&points, near, x, z) {
                break Some(v);
            }
            if !inside || k >= order.len() {
                break None;
            }
            k *= 3;
        };
        match found {
            Some(v) => values.push(v),
            None => {
                values.push(points[order[0].1].v);
                extrapolated.push(i);
            }
        }
    }
    (values, extrapolated)
}

/// Counter-clockwise convex hull (monotone chain) of points sorted by (x, z).
fn convex_hull_2d(sorted: &[SamplePoint]) -> Vec<[f64; 2]> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let pts: Vec<[f64; 2]> = sorted.iter().map(|p| [p.x, p.z]).collect();
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[[f64; 2]], x: f64, z: f64, tol: f64) -> bool {
    let n = hull.len();
    (0..n).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        (b[0] - a[0]) * (z - a[1]) - (b[1] - a[1]) * (x - a[0]) >= -tol * len
    })
}

/// Linear interpolant at `(x, z)` from the enclosing triangle with the smallest
/// summed vertex distance among `near`.
fn enclosing_triangle(points: &[SamplePoint], near: &[(f64, usize)], x: f64, z: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for a in 0..near.len() {
        for b in a + 1..near.len() {
            for c in b + 1..near.len() {
                let cost = near[a].0 + near[b].0 + near[c].0;
                if best.is_some_and(|(bc, _)| cost >= bc) {
                    continue;
                }
                let (pa, pb, pc) = (points[near[a].1], points[near[b].1], points[near[c].1]);
                let det = (pb.x - pa.x) * (pc.z - pa.z) - (pc.x - pa.x) * (pb.z - pa.z);
                let scale = (pb.x - pa.x).abs().max((pc.x - pa.x).abs()).max(1e-300);
                if det.abs() <= 1e-12 * scale * scale {
                    continue;
                }
                let wb = ((x - pa.x) * (pc.z - pa.z) - (pc.x - pa.x) * (z - pa.z)) / det;
                let wc = ((pb.x - pa.x) * (z - pa.z) - (x - pa.x) * (pb.z - pa.z)) / det;
                let wa = 1.0 - wb - wc;
                if wa >= -1e-12 && wb >= -1e-12 && wc >= -1e-12 {
                    best = Some((cost, wa * pa.v + wb * pb.v + wc * pc.v));
                }
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Reads a point file: one `x z v` record per line (`x v` for profiles),
/// `#` starts a comment.
pub fn read_points(path: impl AsRef<Path>, kind: MeshKind) -> Result<Vec<SamplePoint>> {
    let text = std::fs::read_to_string(path)?;
    parse_points(&text, kind)
}

pub fn parse_points(text: &str, kind: MeshKind) -> Result<Vec<SamplePoint>> {
    let width = match kind {
        MeshKind::Profile1d => 2,
        MeshKind::Grid2d => 3,
    };
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if fields.len() != width {
            return Err(Error::Format(format!(
                "line {}: expected {width} columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        out.push(match kind {
            MeshKind::Profile1d => SamplePoint::new(fields[0], 0.0, fields[1]),
            MeshKind::Grid2d => SamplePoint::new(fields[0], fields[1], fields[2]),
        });
    }
    Ok(out)
}

/// Writes a field's nodes in point-file format.
pub fn write_points(path: impl AsRef<Path>, field: &SurfaceField) -> Result<()> {
    let mut s = String::new();
    let kind = field.mesh().kind();
    s.push_str(match kind {
        MeshKind::Profile1d => "# x v\n",
        MeshKind::Grid2d => "# x z v\n",
    });
    for (p, v) in field.mesh().nodes().iter().zip(field.values().iter()) {
        match kind {
            MeshKind::Profile1d => s.push_str(&format!("{} {}\n", p[0], v)),
            MeshKind::Grid2d => s.push_str(&format!("{} {} {}\n", p[0], p[1], v)),
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_21x21_has_441_nodes() {
        let m = Mesh::grid(40.0, 40.0, 21, 21).unwrap();
        assert_eq!(m.len(), 441);
        assert_eq!(m.node(440), [40.0, 40.0]);
        assert_eq!(m.node(m.index(3, 2)), [6.0, 4.0]);
    }

    #[test]
    fn minimal_profile() {
        let m = Mesh::profile(40.0, 2).unwrap();
        assert_eq!(m.nodes(), &[[0.0, 0.0], [40.0, 0.0]]);
    }

    #[test]
    fn three_by_three_spacing() {
        let m = Mesh::grid(40.0, 40.0, 3, 3).unwrap();
        assert_eq!(m.len(), 9);
        assert_eq!(m.spacing(), [20.0, 20.0]);
        assert_eq!(m.node(4), [20.0, 20.0]);
    }

    #[test]
    fn lattice_is_uniform() {
        let m = Mesh::grid(37.3, 11.1, 17, 9).unwrap();
        let [hx, hz] = m.spacing();
        for iz in 0..m.nz() {
            for ix in 1..m.nx() {
                let d = m.node(m.index(ix, iz))[0] - m.node(m.index(ix - 1, iz))[0];
                assert!((d - hx).abs() <= 1e-12 * hx);
            }
        }
        for ix in 0..m.nx() {
            for iz in 1..m.nz() {
                let d = m.node(m.index(ix, iz))[1] - m.node(m.index(ix, iz - 1))[1];
                assert!((d - hz).abs() <= 1e-12 * hz);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(Mesh::profile(0.0, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mesh::profile(-1.0, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mesh::profile(40.0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mesh::grid(40.0, 40.0, 5, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mesh::grid(40.0, 0.0, 5, 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resolution_check() {
        let m = Mesh::grid(40.0, 40.0, 11, 11).unwrap();
        assert!(m.check_resolution(20).is_ok()); // 2*5+1 = 11
        assert!(m.check_resolution(26).is_err()); // 2*6+1 = 13
        let p = Mesh::profile(40.0, 21).unwrap();
        assert!(p.check_resolution(21).is_ok());
        assert!(p.check_resolution(22).is_err());
        assert!(Mesh::profile(40.0, 2).unwrap().check_resolution(2).is_ok());
    }

    #[test]
    fn empty_points_rejected() {
        let m = Arc::new(Mesh::grid(40.0, 40.0, 3, 3).unwrap());
        assert!(matches!(interpolate_to_nodes(&[], &m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn collinear_points_rejected() {
        let m = Arc::new(Mesh::grid(40.0, 40.0, 3, 3).unwrap());
        let pts: Vec<_> = (0..5).map(|i| SamplePoint::new(i as f64, 2.0 * i as f64, 0.1)).collect();
        assert!(matches!(interpolate_to_nodes(&pts, &m), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn identity_on_nodes() {
        for mesh in [Mesh::grid(40.0, 20.0, 5, 4).unwrap(), Mesh::profile(40.0, 7).unwrap()] {
            let mesh = Arc::new(mesh);
            let pts: Vec<_> = mesh
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, p)| SamplePoint::new(p[0], p[1], (i as f64 * 0.37).sin()))
                .collect();
            let out = interpolate_to_nodes(&pts, &mesh).unwrap();
            assert!(out.extrapolated.is_empty());
            for (i, v) in out.field.values().iter().enumerate() {
                assert_eq!(*v, pts[i].v);
            }
        }
    }

    #[test]
    fn linear_profile_reproduced() {
        let mesh = Arc::new(Mesh::profile(40.0, 21).unwrap());
        let pts: Vec<_> = (0..=13)
            .map(|i| {
                let x = 40.0 * i as f64 / 13.0;
                SamplePoint::new(x, 0.0, 0.001 * x)
            })
            .collect();
        let out = interpolate_to_nodes(&pts, &mesh).unwrap();
        for (p, v) in mesh.nodes().iter().zip(out.field.values().iter()) {
            assert!((v - 0.001 * p[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn out_of_span_nodes_are_flagged() {
        let mesh = Arc::new(Mesh::profile(40.0, 5).unwrap());
        let pts = [SamplePoint::new(5.0, 0.0, 1.0), SamplePoint::new(35.0, 0.0, 2.0)];
        let out = interpolate_to_nodes(&pts, &mesh).unwrap();
        assert_eq!(out.extrapolated, vec![0, 4]);
        assert_eq!(out.field.values()[0], 1.0);
        assert_eq!(out.field.values()[4], 2.0);
    }

    #[test]
    fn scattered_affine_field_is_exact() {
        let mesh = Arc::new(Mesh::grid(40.0, 40.0, 9, 9).unwrap());
        let f = |x: f64, z: f64| 0.02 + 0.001 * x - 0.0005 * z;
        // jittered samples with a margin so every node is enclosed
        let mut pts = Vec::new();
        for iz in 0..12 {
            for ix in 0..12 {
                let jx = ((ix * 7 + iz * 3) % 5) as f64 * 0.3 - 0.6;
                let jz = ((ix * 2 + iz * 5) % 7) as f64 * 0.2 - 0.6;
                let x = -2.0 + 44.0 * ix as f64 / 11.0 + if ix == 0 || ix == 11 { 0.0 } else { jx };
                let z = -2.0 + 44.0 * iz as f64 / 11.0 + if iz == 0 || iz == 11 { 0.0 } else { jz };
                pts.push(SamplePoint::new(x, z, f(x, z)));
            }
        }
        assert!(Lattice::detect(&pts).is_none());
        let out = interpolate_to_nodes(&pts, &mesh).unwrap();
        assert!(out.extrapolated.is_empty());
        for (p, v) in mesh.nodes().iter().zip(out.field.values().iter()) {
            assert!((v - f(p[0], p[1])).abs() <= 1e-12, "{v} vs {}", f(p[0], p[1]));
        }
    }

    #[test]
    fn parses_point_files() {
        let text = "# header\n0 0 0.1\n1.5 2 -0.2 # trailing\n\n";
        let pts = parse_points(text, MeshKind::Grid2d).unwrap();
        assert_eq!(pts, vec![SamplePoint::new(0.0, 0.0, 0.1), SamplePoint::new(1.5, 2.0, -0.2)]);
        let pts = parse_points("3 4\n", MeshKind::Profile1d).unwrap();
        assert_eq!(pts, vec![SamplePoint::new(3.0, 0.0, 4.0)]);
        assert!(matches!(parse_points("1 2\n", MeshKind::Grid2d), Err(Error::Format(_))));
        assert!(matches!(parse_points("1 x\n", MeshKind::Profile1d), Err(Error::Format(_))));
    }
}
