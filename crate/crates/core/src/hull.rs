//! Upper convex hulls of height fields.
//!
//! Points are `(x, h)` for profiles and `(x, z, h)` for grids, `h` being the
//! height along the approach direction. Only the upper side of the hull is
//! reported: the facets a counterpart coming from `+h` can touch.

use std::collections::HashMap;

/// Heights closer than this to a hull facet are on the facet (mm).
pub const HULL_EPS: f64 = 1e-11;

/// Vertices of the upper hull of `(x, h)` points given in ascending `x`.
///
/// Vertices collinear with their neighbours (within [`HULL_EPS`]) are
/// dropped, so a flat profile yields only its two end points.
pub fn upper_hull_2d(x: &[f64], h: &[f64]) -> Vec<usize> {
    debug_assert!(x.windows(2).all(|w| w[0] < w[1]));
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for p in 0..x.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 1];
            let o = hull[hull.len() - 2];
            // height of `a` above the chord o-p
            let s = (x[a] - x[o]) / (x[p] - x[o]);
            let chord = h[o] + s * (h[p] - h[o]);
            if h[a] - chord <= HULL_EPS {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    alive: bool,
    outside: Vec<usize>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl Face {
    fn new(pts: &[[f64; 3]], v: [usize; 3]) -> Face {
        let n = cross(sub(pts[v[1]], pts[v[0]]), sub(pts[v[2]], pts[v[0]]));
        let len = norm(n);
        let normal = if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        };
        Face {
            v,
            normal,
            offset: dot(normal, pts[v[0]]),
            alive: true,
            outside: Vec::new(),
        }
    }

    fn distance(&self, p: [f64; 3]) -> f64 {
        dot(self.normal, p) - self.offset
    }

    fn edges(&self) -> [(usize, usize); 3] {
        [(self.v[0], self.v[1]), (self.v[1], self.v[2]), (self.v[2], self.v[0])]
    }
}

/// Full convex hull of a 3D point set as outward-oriented triangles.
///
/// Returns `None` when all points lie within [`HULL_EPS`] of one plane.
pub fn convex_hull_3d(pts: &[[f64; 3]]) -> Option<Vec<[usize; 3]>> {
    let faces = build_hull(pts)?;
    Some(faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
}

/// Upper facets (`h` component of the outward normal positive) of the hull
/// of `(x, z, h)` points. `None` when the points are coplanar.
pub fn upper_hull_3d(pts: &[[f64; 3]]) -> Option<Vec<[usize; 3]>> {
    let faces = build_hull(pts)?;
    Some(
        faces
            .into_iter()
            .filter(|f| f.alive && f.normal[2] > 1e-9)
            .map(|f| f.v)
            .collect(),
    )
}

fn initial_simplex(pts: &[[f64; 3]]) -> Option<[usize; 4]> {
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let i0 = (0..n).min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(a.cmp(&b)))?;
    let i1 = (0..n).max_by(|&a, &b| {
        norm(sub(pts[a], pts[i0]))
            .total_cmp(&norm(sub(pts[b], pts[i0])))
            .then(b.cmp(&a))
    })?;
    let dir = sub(pts[i1], pts[i0]);
    if norm(dir) == 0.0 {
        return None;
    }
    let line_dist = |p: usize| norm(cross(dir, sub(pts[p], pts[i0]))) / norm(dir);
    let i2 = (0..n).max_by(|&a, &b| line_dist(a).total_cmp(&line_dist(b)).then(b.cmp(&a)))?;
    if line_dist(i2) <= HULL_EPS {
        return None;
    }
    let base = Face::new(pts, [i0, i1, i2]);
    let i3 = (0..n).max_by(|&a, &b| {
        base.distance(pts[a])
            .abs()
            .total_cmp(&base.distance(pts[b]).abs())
            .then(b.cmp(&a))
    })?;
    if base.distance(pts[i3]).abs() <= HULL_EPS {
        return None;
    }
    Some([i0, i1, i2, i3])
}

fn build_hull(pts: &[[f64; 3]]) -> Option<Vec<Face>> {
    let simplex = initial_simplex(pts)?;
    let [a, b, c, d] = simplex;
    let mut faces: Vec<Face> = Vec::new();
    for (tri, apex) in [([a, b, c], d), ([a, b, d], c), ([a, c, d], b), ([b, c, d], a)] {
        let mut f = Face::new(pts, tri);
        if f.distance(pts[apex]) > 0.0 {
            f = Face::new(pts, [tri[0], tri[2], tri[1]]);
        }
        faces.push(f);
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, f) in faces.iter().enumerate() {
        for e in f.edges() {
            edges.insert(e, i);
        }
    }
    for p in 0..pts.len() {
        if simplex.contains(&p) {
            continue;
        }
        assign(&mut faces, 0..4, p, pts[p]);
    }

    let mut cursor = 0;
    while cursor < faces.len() {
        if !faces[cursor].alive || faces[cursor].outside.is_empty() {
            cursor += 1;
            continue;
        }
        let seed = cursor;
        let eye = *faces[seed]
            .outside
            .iter()
            .max_by(|&&u, &&v| {
                faces[seed]
                    .distance(pts[u])
                    .total_cmp(&faces[seed].distance(pts[v]))
                    .then(v.cmp(&u))
            })
            .expect("non-empty outside set");
        let eye_pt = pts[eye];

        // faces visible from the eye, grown from the seed
        let mut visible = vec![seed];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(seed, true)]);
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for (u, v) in faces[f].edges() {
                let Some(&g) = edges.get(&(v, u)) else { continue };
                if is_visible.contains_key(&g) {
                    continue;
                }
                let vis = faces[g].distance(eye_pt) > HULL_EPS;
                is_visible.insert(g, vis);
                if vis {
                    visible.push(g);
                }
            }
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            for (u, v) in faces[f].edges() {
                let neighbour_visible = edges
                    .get(&(v, u))
                    .map(|g| is_visible.get(g).copied().unwrap_or(false))
                    .unwrap_or(false);
                if !neighbour_visible {
                    horizon.push((u, v));
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
            for e in faces[f].edges() {
                if edges.get(&e) == Some(&f) {
                    edges.remove(&e);
                }
            }
        }
        let first_new = faces.len();
        for (u, v) in horizon {
            let f = Face::new(pts, [u, v, eye]);
            let id = faces.len();
            for e in f.edges() {
                edges.insert(e, id);
            }
            faces.push(f);
        }
        let end = faces.len();
        for p in orphans {
            if p != eye {
                assign(&mut faces, first_new..end, p, pts[p]);
            }
        }
        if !faces[cursor].alive {
            cursor += 1;
        }
    }
    Some(faces)
}

/// Puts `p` in the outside set of the face in `range` it is farthest above.
fn assign(faces: &mut [Face], range: std::ops::Range<usize>, p: usize, pt: [f64; 3]) {
    let mut best: Option<(usize, f64)> = None;
    for i in range {
        let d = faces[i].distance(pt);
        if d > HULL_EPS && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    if let Some((i, _)) = best {
        faces[i].outside.push(p);
    }
}
