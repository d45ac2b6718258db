//! The non-failable N-particle system.
//!
//! One time step moves every particle through the kernel exactly once, in a
//! random order, with absorbed particles redrawn onto the current slot of
//! another particle. Because a redrawn particle inherits the other
//! particle's "already moved" flag, the step can always finish, and the
//! ensemble never runs out of live particles.
//!
//! Randomness is consumed in a fixed order per loop iteration: the pending
//! index draw, then the kernel's own draws, then (only on absorption) the
//! redraw target. Runs are therefore bit-reproducible given the RNG stream.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::kernel::{AbsorbedKernel, Binning, StepOutcome};
use crate::oracle::Distribution;

/// Loop iterations allowed per particle and step before giving up.
pub const DEFAULT_ITERATION_CAP_PER_PARTICLE: usize = 1000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("an ensemble needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("iteration cap must be at least N = {n}, got {cap}")]
    CapTooSmall { n: usize, cap: usize },
    #[error(
        "step {step} exceeded {cap} loop iterations with {pending} particles still pending \
         (suspected zero-survival states: {states})"
    )]
    StuckStep { step: usize, cap: usize, pending: usize, states: String },
    #[error("particle {particle} at {state} lies outside the binning range")]
    OutsideBinning { particle: usize, state: String },
}

/// What happened during one call to [`advance_one_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub rebirths: usize,
    pub loop_iterations: usize,
}

/// Per-step flags and the dense list of particles that still have to move.
#[derive(Debug, Clone, Default)]
struct StepWorkspace {
    moved: Vec<bool>,
    pending: Vec<usize>,
    // slot[i] is the position of particle i in `pending`, when pending.
    slot: Vec<usize>,
}

impl StepWorkspace {
    fn reset(&mut self, n: usize) {
        self.moved.clear();
        self.moved.resize(n, false);
        self.pending.clear();
        self.pending.extend(0..n);
        self.slot.clear();
        self.slot.extend(0..n);
    }

    fn finish(&mut self, i: usize) {
        debug_assert!(!self.moved[i]);
        self.moved[i] = true;
        let k = self.slot[i];
        let last = *self.pending.last().expect("finishing a pending particle");
        self.pending.swap_remove(k);
        if last != i {
            self.slot[last] = k;
        }
    }
}

/// N live particles at a step boundary.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble<S> {
    positions: Vec<S>,
    step_index: usize,
    total_rebirths: u64,
    last_step_rebirths: usize,
    workspace: StepWorkspace,
}

impl<S: Clone + fmt::Debug> ParticleEnsemble<S> {
    pub fn new(positions: Vec<S>) -> Result<Self, EngineError> {
        if positions.len() < 2 {
            return Err(EngineError::TooFewParticles(positions.len()));
        }
        Ok(ParticleEnsemble {
            positions,
            step_index: 0,
            total_rebirths: 0,
            last_step_rebirths: 0,
            workspace: StepWorkspace::default(),
        })
    }

    pub fn positions(&self) -> &[S] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Rebirths since construction.
    pub fn total_rebirths(&self) -> u64 {
        self.total_rebirths
    }

    pub fn last_step_rebirths(&self) -> usize {
        self.last_step_rebirths
    }

    pub fn into_positions(self) -> Vec<S> {
        self.positions
    }
}

pub fn default_iteration_cap(n: usize) -> usize {
    n.saturating_mul(DEFAULT_ITERATION_CAP_PER_PARTICLE)
}

/// Advances the ensemble from step `n` to step `n + 1`.
///
/// On error the ensemble is left mid-step and should be discarded.
pub fn advance_one_step<K, R>(
    ensemble: &mut ParticleEnsemble<K::State>,
    kernel: &K,
    rng: &mut R,
    iteration_cap: usize,
) -> Result<StepReport, EngineError>
where
    K: AbsorbedKernel + ?Sized,
    R: Rng + ?Sized,
{
    let n = ensemble.positions.len();
    if n < 2 {
        return Err(EngineError::TooFewParticles(n));
    }
    if iteration_cap < n {
        return Err(EngineError::CapTooSmall { n, cap: iteration_cap });
    }

    let ParticleEnsemble { positions, workspace, .. } = ensemble;
    workspace.reset(n);
    let mut report = StepReport::default();

    while !workspace.pending.is_empty() {
        if report.loop_iterations == iteration_cap {
            return Err(stuck(ensemble, iteration_cap));
        }
        report.loop_iterations += 1;

        let i0 = workspace.pending[rng.random_range(0..workspace.pending.len())];
        match kernel.sample_step(&positions[i0], rng) {
            StepOutcome::Alive(z) => {
                positions[i0] = z;
                workspace.finish(i0);
            }
            StepOutcome::Absorbed => {
                report.rebirths += 1;
                let r = rng.random_range(0..n - 1);
                let j0 = if r >= i0 { r + 1 } else { r };
                positions[i0] = positions[j0].clone();
                if workspace.moved[j0] {
                    workspace.finish(i0);
                }
            }
        }
    }

    ensemble.step_index += 1;
    ensemble.total_rebirths += report.rebirths as u64;
    ensemble.last_step_rebirths = report.rebirths;
    Ok(report)
}

fn stuck<S: fmt::Debug>(ensemble: &ParticleEnsemble<S>, cap: usize) -> EngineError {
    let pending = &ensemble.workspace.pending;
    let mut states: Vec<String> =
        pending.iter().map(|&i| format!("{:?}", ensemble.positions[i])).collect();
    states.sort();
    states.dedup();
    states.truncate(8);
    EngineError::StuckStep {
        step: ensemble.step_index,
        cap,
        pending: pending.len(),
        states: states.join(", "),
    }
}

/// Receives the ensemble at every step boundary of a trajectory.
pub trait Observer<S> {
    /// Called once with the initial ensemble, before any step.
    fn on_start(&mut self, _ensemble: &ParticleEnsemble<S>) {}

    fn on_step(&mut self, ensemble: &ParticleEnsemble<S>, report: &StepReport);
}

impl<S, F> Observer<S> for F
where
    F: FnMut(&ParticleEnsemble<S>, &StepReport),
{
    fn on_step(&mut self, ensemble: &ParticleEnsemble<S>, report: &StepReport) {
        self(ensemble, report)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord<S> {
    pub rebirths: Vec<usize>,
    pub loop_iterations: Vec<usize>,
    pub final_ensemble: ParticleEnsemble<S>,
}

/// Runs `horizon` steps from `init_positions`. A trajectory never stops
/// early; the only failures are contract violations of the kernel.
pub fn run_trajectory<K, R, O>(
    kernel: &K,
    init_positions: Vec<K::State>,
    horizon: usize,
    rng: &mut R,
    observer: &mut O,
) -> Result<TrajectoryRecord<K::State>, EngineError>
where
    K: AbsorbedKernel + ?Sized,
    R: Rng + ?Sized,
    O: Observer<K::State> + ?Sized,
{
    let mut ensemble = ParticleEnsemble::new(init_positions)?;
    let cap = default_iteration_cap(ensemble.len());
    let mut rebirths = Vec::with_capacity(horizon);
    let mut loop_iterations = Vec::with_capacity(horizon);
    observer.on_start(&ensemble);
    for _ in 0..horizon {
        let report = advance_one_step(&mut ensemble, kernel, rng, cap)?;
        rebirths.push(report.rebirths);
        loop_iterations.push(report.loop_iterations);
        observer.on_step(&ensemble, &report);
    }
    Ok(TrajectoryRecord { rebirths, loop_iterations, final_ensemble: ensemble })
}

/// Per-bin particle counts.
pub fn empirical_counts<S, B>(positions: &[S], binning: &B) -> Result<Vec<usize>, EngineError>
where
    S: fmt::Debug,
    B: Binning<S> + ?Sized,
{
    let mut counts = vec![0usize; binning.num_bins()];
    for (particle, state) in positions.iter().enumerate() {
        match binning.bin_of(state) {
            Some(b) if b < counts.len() => counts[b] += 1,
            _ => {
                return Err(EngineError::OutsideBinning { particle, state: format!("{state:?}") })
            }
        }
    }
    Ok(counts)
}

/// `μ^N = (1/N) Σ δ_{X^i}`, binned.
pub fn empirical_distribution<S, B>(
    ensemble: &ParticleEnsemble<S>,
    binning: &B,
) -> Result<Distribution, EngineError>
where
    S: Clone + fmt::Debug,
    B: Binning<S> + ?Sized,
{
    let counts = empirical_counts(ensemble.positions(), binning)?;
    Ok(Distribution::from_counts(&counts).expect("ensemble is never empty"))
}
