//! Diffusion on `(0, 2]` with drift `1/(β x^(β-1))`, killed at 0 and
//! reflected at 2, stepped with Euler-Maruyama.
//!
//! Killing is checked after each substep only (no bridge correction), so
//! survival estimates carry a discretization bias that shrinks with the
//! substep count.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernel::{AbsorbedKernel, Binning, StateSpace, StepOutcome};
use crate::models::ModelError;

pub const UPPER: f64 = 2.0;
pub const DEFAULT_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub beta: f64,
    /// Euler substeps per unit of time.
    pub substeps: usize,
}

impl DiffusionSpec {
    pub fn new(beta: f64, substeps: usize) -> Result<Self, ModelError> {
        if !(beta > 2.0 && beta.is_finite()) {
            return Err(ModelError::InvalidSpec(format!("beta must exceed 2, got {beta}")));
        }
        if substeps == 0 {
            return Err(ModelError::InvalidSpec("substeps must be positive".into()));
        }
        Ok(DiffusionSpec { beta, substeps })
    }

    fn drift(&self, x: f64) -> f64 {
        1.0 / (self.beta * x.powf(self.beta - 1.0))
    }
}

/// Folds `x` back into `(0, 2]` by reflection at 2; `None` once a fold
/// lands at or below 0.
pub fn fold_into_domain(mut x: f64) -> Option<f64> {
    loop {
        if x.is_nan() || x <= 0.0 {
            return None;
        }
        if x <= UPPER {
            return Some(x);
        }
        x = 2.0 * UPPER - x;
    }
}

pub(crate) fn evolve(x0: f64, spec: &DiffusionSpec, mut noise: impl FnMut() -> f64) -> StepOutcome<f64> {
    let h = 1.0 / spec.substeps as f64;
    let sqrt_h = h.sqrt();
    let mut x = x0;
    for _ in 0..spec.substeps {
        let proposal = x + h * spec.drift(x) + sqrt_h * noise();
        match fold_into_domain(proposal) {
            Some(next) => x = next,
            None => return StepOutcome::Absorbed,
        }
    }
    StepOutcome::Alive(x)
}

/// One unit of time from `x ∈ (0, 2]`.
pub fn diffusion_step<R: Rng + ?Sized>(
    x: f64,
    spec: &DiffusionSpec,
    rng: &mut R,
) -> Result<StepOutcome<f64>, ModelError> {
    if !(x > 0.0 && x <= UPPER) {
        return Err(ModelError::Usage(format!("diffusion state {x} is outside (0, 2]")));
    }
    Ok(evolve(x, spec, || rng.sample(StandardNormal)))
}

/// Equal-width cells over `(0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalBinning {
    pub bins: usize,
}

impl IntervalBinning {
    pub fn new(bins: usize) -> Result<Self, ModelError> {
        if bins == 0 {
            return Err(ModelError::InvalidSpec("diffusion binning needs at least one bin".into()));
        }
        Ok(IntervalBinning { bins })
    }

    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        let w = UPPER / self.bins as f64;
        (cell as f64 * w, (cell + 1) as f64 * w)
    }
}

impl Binning<f64> for IntervalBinning {
    fn num_bins(&self) -> usize {
        self.bins
    }

    fn bin_of(&self, x: &f64) -> Option<usize> {
        if !(*x > 0.0 && *x <= UPPER) {
            return None;
        }
        Some(((x / UPPER * self.bins as f64) as usize).min(self.bins - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionKernel {
    pub spec: DiffusionSpec,
    pub binning: IntervalBinning,
}

impl AbsorbedKernel for DiffusionKernel {
    type State = f64;
    type Bins = IntervalBinning;

    fn sample_step<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> StepOutcome<f64> {
        // Every substep has a Gaussian increment, so staying in (0, 2] for a
        // whole unit of time has positive probability from any x in (0, 2].
        debug_assert!(*x > 0.0 && *x <= UPPER);
        evolve(*x, &self.spec, || rng.sample(StandardNormal))
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Binned { bins: self.binning.bins }
    }

    fn binning(&self) -> IntervalBinning {
        self.binning
    }
}
