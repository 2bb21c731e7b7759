//! Run configuration: one TOML file, validated before any computation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use formtol::batch::Pairing;
use formtol::kinematics::{surface_center, Case, FrFace};
use formtol::mesh::{Mesh, MeshKind};
use formtol::Error;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum CaseName {
    #[serde(rename = "2d")]
    Planar,
    #[serde(rename = "3d")]
    Spatial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub case: CaseName,
    /// Mating face size (mm) and node counts.
    pub lx: f64,
    pub lz: f64,
    pub nx: usize,
    pub nz: usize,
    /// Basis size; defaults to the filter order.
    pub n_modes: Option<usize>,
    /// Centre of face B relative to the centre of face A (mm).
    pub b_offset: [f64; 3],
    pub b_lx: f64,
    pub b_lz: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            case: CaseName::Spatial,
            lx: 40.0,
            lz: 40.0,
            nx: 21,
            nz: 21,
            n_modes: None,
            b_offset: [0.0, 40.0, 0.0],
            b_lx: 20.0,
            b_lz: 40.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    /// Location tolerance on face B (mm).
    pub t: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { t: 0.1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mating {
    /// Force point `(x, z)` on face A (mm, from the face corner); the centre
    /// when absent.
    pub force: Option<[f64; 2]>,
    /// Modal coefficients kept per surface.
    pub m: usize,
}

impl Default for Mating {
    fn default() -> Self {
        Mating { force: None, m: 20 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub mu0: f64,
    pub sigma0: f64,
    /// Pilot production size per part.
    pub pilot_size: usize,
    /// Virtual parts per batch.
    pub size: usize,
    pub seed: u64,
    pub pairing: String,
    /// Repeated virtual batches drawn from the same pilot statistics.
    pub runs: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            mu0: 0.2,
            sigma0: 0.01,
            pilot_size: 10,
            size: 100,
            seed: 1,
            pairing: "index".into(),
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub tolerance: Tolerance,
    pub mating: Mating,
    pub batch: BatchConfig,
    pub output: Output,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn case(&self) -> Case {
        match self.geometry.case {
            CaseName::Planar => Case::Planar,
            CaseName::Spatial => Case::Spatial,
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>, Error> {
        let g = &self.geometry;
        let mesh = match self.case() {
            Case::Planar => Mesh::build(MeshKind::Profile1d, g.lx, 0.0, g.nx, 1)?,
            Case::Spatial => Mesh::build(MeshKind::Grid2d, g.lx, g.lz, g.nx, g.nz)?,
        };
        Ok(Arc::new(mesh))
    }

    pub fn n_modes(&self) -> usize {
        self.geometry.n_modes.unwrap_or(self.mating.m)
    }

    pub fn force(&self) -> [f64; 2] {
        let g = &self.geometry;
        let lz = if self.case() == Case::Planar { 0.0 } else { g.lz };
        self.mating.force.unwrap_or([0.5 * g.lx, 0.5 * lz])
    }

    pub fn pairing(&self) -> Result<Pairing, Error> {
        self.batch.pairing.parse()
    }

    /// Face B in the assembly frame (face A corner at the origin).
    pub fn fr_face(&self) -> Result<FrFace, Error> {
        let c = surface_center(&*self.mesh()?);
        let o = self.geometry.b_offset;
        Ok(FrFace {
            center: [c[0] + o[0], c[1] + o[1], c[2] + o[2]],
            lx: self.geometry.b_lx,
            lz: self.geometry.b_lz,
        })
    }

    /// Checks every downstream precondition.
    pub fn validate(&self) -> Result<(), Error> {
        let g = &self.geometry;
        let mesh = self.mesh()?;
        let case = self.case();
        let n_rigid = match case {
            Case::Planar => 2,
            Case::Spatial => 3,
        };
        let m = self.mating.m;
        if m < n_rigid {
            return Err(bad(format!("mating.m must be at least {n_rigid}, got {m}")));
        }
        let n_modes = self.n_modes();
        if n_modes < m {
            return Err(bad(format!("geometry.n_modes ({n_modes}) must be at least mating.m ({m})")));
        }
        if n_modes > mesh.len() {
            return Err(bad(format!(
                "geometry.n_modes ({n_modes}) exceeds the node count ({})",
                mesh.len()
            )));
        }
        mesh.check_resolution(m)?;
        let [x, z] = self.force();
        let z = if case == Case::Planar { 0.0 } else { z };
        if !mesh.strictly_contains(x, z) {
            return Err(bad(format!("force point ({x}, {z}) must lie strictly inside face A")));
        }
        let t = self.tolerance.t;
        if !(t > 0.0 && t.is_finite()) {
            return Err(bad(format!("tolerance.t must be positive, got {t}")));
        }
        if !(g.b_lx > 0.0 && g.b_lx.is_finite()) || (case == Case::Spatial && !(g.b_lz > 0.0 && g.b_lz.is_finite())) {
            return Err(bad("face B side lengths must be positive"));
        }
        if g.b_offset.iter().any(|v| !v.is_finite()) {
            return Err(bad("geometry.b_offset must be finite"));
        }
        let b = &self.batch;
        if !(b.mu0 >= 0.0 && b.mu0.is_finite()) {
            return Err(bad(format!("batch.mu0 must be non-negative, got {}", b.mu0)));
        }
        if !(b.sigma0 >= 0.0 && b.sigma0.is_finite()) {
            return Err(bad(format!("batch.sigma0 must be non-negative, got {}", b.sigma0)));
        }
        if b.pilot_size < 2 {
            return Err(bad(format!("batch.pilot_size must be at least 2, got {}", b.pilot_size)));
        }
        if b.size == 0 {
            return Err(bad("batch.size must be at least 1"));
        }
        if b.runs == 0 {
            return Err(bad("batch.runs must be at least 1"));
        }
        self.pairing()?;
        Ok(())
    }
}
