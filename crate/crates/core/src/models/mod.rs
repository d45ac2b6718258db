//! Concrete absorbed kernels and the model configuration format.
//!
//! A model document is a JSON object with a `"type"` tag and a `"version"`
//! field (currently `1`):
//!
//! ```json
//! {"version": 1, "type": "birth_death", "birth": [0.3, 0.0], "death": [0.0, 0.4],
//!  "kill": [0.2, 0.2], "mu0": [1.0, 0.0]}
//! {"version": 1, "type": "matrix", "size": 2, "rows": [[0.5, 0.3], [0.4, 0.4]]}
//! {"version": 1, "type": "neutron", "domain": {"disk": {"radius": 1.0}}, "lambda": 1.0}
//! {"version": 1, "type": "diffusion", "beta": 3.0, "substeps": 100, "x0": 1.0}
//! ```
//!
//! A bare kernel document `{"size": S, "rows": [...]}` is also accepted and
//! read as a finite model started from state 0. Unknown keys are rejected.

pub mod birth_death;
pub mod diffusion;
pub mod neutron;

use rand::Rng;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::kernel::{describe_json_error, SubstochasticMatrix};
use crate::oracle::Distribution;

pub use birth_death::{birth_death_matrix, BirthDeathSpec};
pub use diffusion::{diffusion_step, DiffusionKernel, DiffusionSpec, IntervalBinning};
pub use neutron::{
    neutron_binning, neutron_step, neutron_step_traced, NeutronBinning, NeutronDomain, NeutronKernel,
    NeutronState, Point, TracedStep,
};

pub const MODEL_FORMAT_VERSION: u64 = 1;
pub const DEFAULT_NEUTRON_GRID: usize = 10;
pub const DEFAULT_DIFFUSION_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Usage(String),
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ModelSpec {
    Matrix {
        size: usize,
        rows: Vec<Vec<f64>>,
        #[serde(default)]
        mu0: Option<Vec<f64>>,
    },
    BirthDeath {
        birth: Vec<f64>,
        death: Vec<f64>,
        kill: Vec<f64>,
        #[serde(default)]
        mu0: Option<Vec<f64>>,
    },
    Neutron {
        domain: DomainSpec,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        x0: Option<Point>,
        /// Initial velocity angle in radians; uniform when absent.
        #[serde(default)]
        angle0: Option<f64>,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default)]
        velocity_octants: bool,
    },
    Diffusion {
        beta: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
        #[serde(default = "default_x0")]
        x0: f64,
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum DomainSpec {
    Disk { radius: f64 },
    Polygon { vertices: Vec<Point> },
}

fn default_lambda() -> f64 {
    1.0
}
fn default_grid() -> usize {
    DEFAULT_NEUTRON_GRID
}
fn default_substeps() -> usize {
    diffusion::DEFAULT_SUBSTEPS
}
fn default_x0() -> f64 {
    1.0
}
fn default_bins() -> usize {
    DEFAULT_DIFFUSION_BINS
}

/// How the neutron ensemble starts: a fixed point, with a fixed or uniform direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutronStart {
    pub x0: Point,
    pub angle0: Option<f64>,
}

/// A loaded model with its initial law.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Finite { matrix: SubstochasticMatrix, mu0: Distribution },
    Neutron { kernel: NeutronKernel, start: NeutronStart },
    Diffusion { kernel: DiffusionKernel, x0: f64 },
}

impl Model {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(ModelError::Document("top level must be a JSON object".into()));
        };
        if !obj.contains_key("type") {
            let matrix = SubstochasticMatrix::from_json_value(Value::Object(obj))
                .map_err(|e| ModelError::Document(e.to_string()))?;
            let mu0 = Distribution::dirac(matrix.size(), 0);
            return Ok(Model::Finite { matrix, mu0 });
        }
        match obj.remove("version") {
            None => return Err(ModelError::Document("missing field `version`".into())),
            Some(v) if v.as_u64() == Some(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(ModelError::Document(format!(
                    "at `version`: unsupported version {v}, expected {MODEL_FORMAT_VERSION}"
                )))
            }
        }
        let spec: ModelSpec = serde_path_to_error::deserialize(Value::Object(obj))
            .map_err(|e| ModelError::Document(describe_json_error(&e)))?;
        Self::from_spec(spec)
    }

    fn from_spec(spec: ModelSpec) -> Result<Self, ModelError> {
        match spec {
            ModelSpec::Matrix { size, rows, mu0 } => {
                if size != rows.len() {
                    return Err(ModelError::Document(format!(
                        "field `size` is {size} but `rows` has {} entries",
                        rows.len()
                    )));
                }
                let matrix =
                    SubstochasticMatrix::from_rows(rows).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
                let mu0 = initial_law(mu0, matrix.size())?;
                Ok(Model::Finite { matrix, mu0 })
            }
            ModelSpec::BirthDeath { birth, death, kill, mu0 } => {
                let matrix = birth_death_matrix(&BirthDeathSpec { birth, death, kill })?;
                let mu0 = initial_law(mu0, matrix.size())?;
                Ok(Model::Finite { matrix, mu0 })
            }
            ModelSpec::Neutron { domain, lambda, x0, angle0, grid, velocity_octants } => {
                let domain = match domain {
                    DomainSpec::Disk { radius } => NeutronDomain::disk(radius)?,
                    DomainSpec::Polygon { vertices } => NeutronDomain::polygon(vertices)?,
                };
                let x0 = x0.unwrap_or_else(|| default_start(&domain));
                if !domain.contains(x0) {
                    return Err(ModelError::InvalidSpec(format!("x0 {x0:?} is not inside the domain")));
                }
                if angle0.is_some_and(|a| !a.is_finite()) {
                    return Err(ModelError::InvalidSpec("angle0 must be finite".into()));
                }
                let binning = neutron_binning(&domain, grid, velocity_octants)?;
                let kernel = NeutronKernel::new(domain, lambda, binning)?;
                Ok(Model::Neutron { kernel, start: NeutronStart { x0, angle0 } })
            }
            ModelSpec::Diffusion { beta, substeps, x0, bins } => {
                let spec = DiffusionSpec::new(beta, substeps)?;
                if !(x0 > 0.0 && x0 <= diffusion::UPPER) {
                    return Err(ModelError::InvalidSpec(format!("x0 = {x0} is outside (0, 2]")));
                }
                let binning = IntervalBinning::new(bins)?;
                Ok(Model::Diffusion { kernel: DiffusionKernel { spec, binning }, x0 })
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Finite { .. } => "finite",
            Model::Neutron { .. } => "neutron",
            Model::Diffusion { .. } => "diffusion",
        }
    }
}

/// Vertex average for polygons, the centre for disks.
fn default_start(domain: &NeutronDomain) -> Point {
    match domain {
        NeutronDomain::Disk { .. } => [0.0, 0.0],
        NeutronDomain::ConvexPolygon(poly) => {
            let n = poly.vertices().len() as f64;
            let sx: f64 = poly.vertices().iter().map(|v| v[0]).sum();
            let sy: f64 = poly.vertices().iter().map(|v| v[1]).sum();
            [sx / n, sy / n]
        }
    }
}

fn initial_law(weights: Option<Vec<f64>>, size: usize) -> Result<Distribution, ModelError> {
    match weights {
        None => Ok(Distribution::dirac(size, 0)),
        Some(w) if w.len() != size => Err(ModelError::InvalidSpec(format!(
            "mu0 has {} weights but the kernel has {size} states",
            w.len()
        ))),
        Some(w) => Distribution::new(w).map_err(|e| ModelError::InvalidSpec(format!("mu0: {e}"))),
    }
}

impl NeutronStart {
    pub fn positions<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<NeutronState> {
        (0..n)
            .map(|_| {
                let angle = self.angle0.unwrap_or_else(|| std::f64::consts::TAU * rng.random::<f64>());
                NeutronState::with_angle(self.x0, angle)
            })
            .collect()
    }
}
