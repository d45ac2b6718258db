//! Error metrics and the experiments that compare particle output with the
//! exact oracle and with the theoretical error bounds.
//!
//! Errors are always measured against the conditional law started from the
//! empirical initial measure `μ₀^N` of each replica. With a Dirac start this
//! equals the law started from `μ₀`; with i.i.d. starts it removes the
//! initial sampling error, which the bounds do not cover.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{empirical_counts, run_trajectory, EngineError, Observer, ParticleEnsemble, StepReport};
use crate::kernel::{AbsorbedKernel, SubstochasticMatrix};
use crate::oracle::{
    conditional_distribution_exact, conditional_path, estimate_mixing_rate, least_squares_slope,
    log_survival_probability_exact, qsd_exact, Distribution, OracleError, DEFAULT_QSD_MAX_ITER,
    DEFAULT_QSD_TOL,
};
use crate::replicas::{derive_rng_stream, ReplicaPlan, StreamRng, BOOTSTRAP_STREAM};

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const DEFAULT_BURN_IN: f64 = 0.5;
/// Steps of the oracle used to decide whether a kernel mixes.
pub const MIXING_HORIZON: usize = 200;
/// Step whose error anchors the uniform-in-time check.
pub const REFERENCE_STEP: usize = 10;

/// `2(1+√2)`, the constant of the finite-time rate bound.
pub const RATE_CONSTANT: f64 = 2.0 * (1.0 + std::f64::consts::SQRT_2);

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Usage(String),
    #[error("kernel does not mix exponentially: {0}")]
    NotMixing(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn usage<T>(msg: impl Into<String>) -> Result<T, AnalysisError> {
    Err(AnalysisError::Usage(msg.into()))
}

/// Half the L1 distance.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return usage(format!("cannot compare distributions of lengths {} and {}", p.len(), q.len()));
    }
    let l1: f64 = p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

/// Exponent of the uniform-in-time error bound, `-γ / (2(λ₀ + γ))`.
pub fn alpha_bound(gamma: f64, lambda0: f64) -> Result<f64, AnalysisError> {
    if !(gamma > 0.0 && lambda0 > 0.0) || gamma.is_nan() || lambda0.is_nan() {
        return usage(format!("alpha needs gamma > 0 and lambda0 > 0 (got {gamma}, {lambda0})"));
    }
    if gamma.is_infinite() {
        return Ok(-0.5);
    }
    Ok(-gamma / (2.0 * (lambda0 + gamma)))
}

/// How particles are placed at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Independent draws from `μ₀`.
    #[default]
    Iid,
    /// `⌊N μ₀(x)⌋` particles per state, remainders to the largest fractional parts.
    Proportional,
}

pub fn initial_positions<R: Rng + ?Sized>(
    mu0: &Distribution,
    n: usize,
    mode: InitMode,
    rng: &mut R,
) -> Vec<usize> {
    match mode {
        InitMode::Iid => (0..n).map(|_| mu0.sample(rng)).collect(),
        InitMode::Proportional => {
            let scaled: Vec<f64> = mu0.weights().iter().map(|w| w * n as f64).collect();
            let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
            let mut placed: usize = counts.iter().sum();
            let mut order: Vec<usize> = (0..scaled.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = scaled[a] - scaled[a].floor();
                let fb = scaled[b] - scaled[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            for &i in order.iter().cycle() {
                if placed >= n {
                    break;
                }
                if mu0.weights()[i] > 0.0 {
                    counts[i] += 1;
                    placed += 1;
                }
            }
            // Floors can overshoot only through round-off in `w * n`.
            while placed > n {
                let i = counts.iter().enumerate().max_by_key(|(_, c)| **c).map(|(i, _)| i).unwrap();
                counts[i] -= 1;
                placed -= 1;
            }
            counts.iter().enumerate().flat_map(|(x, &c)| std::iter::repeat_n(x, c)).collect()
        }
    }
}

/// Indicators of every state plus the constant function 1.
pub fn default_test_functions(size: usize) -> Vec<Vec<f64>> {
    let mut fs: Vec<Vec<f64>> = (0..size)
        .map(|x| (0..size).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
        .collect();
    fs.push(vec![1.0; size]);
    fs
}

fn check_test_functions(size: usize, fs: &[Vec<f64>]) -> Result<(), AnalysisError> {
    if fs.is_empty() {
        return usage("at least one test function is required");
    }
    for (k, f) in fs.iter().enumerate() {
        if f.len() != size {
            return usage(format!("test function {k} has {} values for {size} states", f.len()));
        }
        if f.iter().any(|v| v.is_nan() || v.abs() > 1.0) {
            return usage(format!("test function {k} is not bounded by 1"));
        }
    }
    Ok(())
}

fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Mean over test functions of `|p(f) - q(f)|`.
fn mean_abs_error(p: &Distribution, q: &Distribution, fs: &[Vec<f64>]) -> f64 {
    fs.iter().map(|f| (p.expect(f) - q.expect(f)).abs()).sum::<f64>() / fs.len() as f64
}

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// 95% percentile interval of a bootstrapped statistic. Resamples whose
/// statistic is undefined are dropped.
fn bootstrap_interval(
    seed: u64,
    mut statistic: impl FnMut(&mut StreamRng) -> Option<f64>,
) -> Option<(f64, f64)> {
    let mut rng = derive_rng_stream(seed, BOOTSTRAP_STREAM);
    let mut values: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .filter_map(|_| statistic(&mut rng))
        .filter(|v| v.is_finite())
        .collect();
    if values.len() < 2 {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some((quantile(&values, 0.025), quantile(&values, 0.975)))
}

fn resample_indices<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..len)).collect()
}

/// OLS slope of `ln e` on `ln N`; undefined if any error is zero.
fn log_log_slope(ns: &[usize], errors: &[f64]) -> Option<f64> {
    if ns.len() < 2 || errors.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return None;
    }
    let points: Vec<(f64, f64)> = ns.iter().zip(errors).map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    Some(least_squares_slope(&points))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub n_particles: usize,
    pub mean_abs_error: f64,
    pub std_error: f64,
    /// `2(1+√2) ‖f‖∞ / √N · E[1 / P_{μ₀^N}(n < τ_∂)]`.
    pub bound: f64,
    pub exceeds_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub points: Vec<ErrorPoint>,
    pub fitted_slope: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
    /// Errors of every replica, one row per particle count.
    #[serde(skip)]
    pub replica_errors: Vec<Vec<f64>>,
}

impl ErrorCurve {
    pub fn within_bound(&self) -> bool {
        self.points.iter().all(|p| !p.exceeds_bound)
    }
}

pub struct ConvergenceSetup<'a> {
    pub matrix: &'a SubstochasticMatrix,
    pub mu0: &'a Distribution,
    pub steps: usize,
    pub particle_counts: &'a [usize],
    pub replicas: usize,
    pub test_functions: &'a [Vec<f64>],
    pub init: InitMode,
}

/// Error at a fixed step `n` for each particle count in `particle_counts`.
///
/// Replica `r` of the `k`-th particle count uses stream `(k, r)` of the plan.
pub fn convergence_experiment(
    setup: &ConvergenceSetup<'_>,
    plan: &ReplicaPlan,
) -> Result<ErrorCurve, AnalysisError> {
    let size = setup.matrix.size();
    if setup.mu0.len() != size {
        return Err(OracleError::LengthMismatch { expected: size, got: setup.mu0.len() }.into());
    }
    check_test_functions(size, setup.test_functions)?;
    if setup.particle_counts.is_empty() {
        return usage("particle count list is empty");
    }
    if setup.particle_counts.windows(2).any(|w| w[0] >= w[1]) {
        return usage("particle counts must be strictly increasing");
    }
    if setup.replicas == 0 {
        return usage("replicas must be positive");
    }
    let norm = setup.test_functions.iter().map(|f| sup_norm(f)).sum::<f64>() / setup.test_functions.len() as f64;

    let mut points = Vec::new();
    let mut replica_errors = Vec::new();
    for (group, &n) in setup.particle_counts.iter().enumerate() {
        let outcomes = plan.run(group as u32, setup.replicas, |_, rng| {
            let positions = initial_positions(setup.mu0, n, setup.init, rng);
            let start = empirical_law(&positions, size);
            let oracle = conditional_distribution_exact(setup.matrix, &start, setup.steps)?;
            let log_survival = log_survival_probability_exact(setup.matrix, &start, setup.steps)?;
            let record = run_trajectory(setup.matrix, positions, setup.steps, rng, &mut |_: &ParticleEnsemble<usize>, _: &StepReport| {})?;
            let law = empirical_law(record.final_ensemble.positions(), size);
            Ok::<_, AnalysisError>((mean_abs_error(&law, &oracle, setup.test_functions), (-log_survival).exp()))
        })?;
        let errors: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        let inv_survival = outcomes.iter().map(|o| o.1).sum::<f64>() / outcomes.len() as f64;
        let (mean, se) = mean_and_std_error(&errors);
        let bound = RATE_CONSTANT * norm / (n as f64).sqrt() * inv_survival;
        points.push(ErrorPoint { n_particles: n, mean_abs_error: mean, std_error: se, bound, exceeds_bound: mean > bound });
        replica_errors.push(errors);
    }

    let means: Vec<f64> = points.iter().map(|p| p.mean_abs_error).collect();
    let fitted_slope = log_log_slope(setup.particle_counts, &means);
    let slope_ci = if fitted_slope.is_some() && setup.replicas >= 2 {
        bootstrap_interval(plan.seed, |rng| {
            let resampled: Vec<f64> = replica_errors
                .iter()
                .map(|errs| {
                    let idx = resample_indices(rng, errs.len());
                    idx.iter().map(|&i| errs[i]).sum::<f64>() / errs.len() as f64
                })
                .collect();
            log_log_slope(setup.particle_counts, &resampled)
        })
    } else {
        None
    };
    Ok(ErrorCurve { points, fitted_slope, slope_ci, replica_errors })
}

fn empirical_law(positions: &[usize], size: usize) -> Distribution {
    let mut counts = vec![0usize; size];
    for &x in positions {
        counts[x] += 1;
    }
    Distribution::from_counts(&counts).expect("ensemble is never empty")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformSweep {
    /// Mean error over replicas at each step `0..=horizon`.
    pub per_step_error: Vec<f64>,
    pub per_step_std_error: Vec<f64>,
    pub sup_error: f64,
    /// Error at the reference step (or the last step if the horizon is shorter).
    pub reference_error: f64,
    /// OLS slope of `e(n)` on `n` over the tail half of the steps.
    pub drift_slope: f64,
    pub drift_ci: Option<(f64, f64)>,
    pub gamma: f64,
    pub lambda0: Option<f64>,
    pub alpha: Option<f64>,
    pub drift_ci_contains_zero: bool,
    pub sup_within_twice_reference: bool,
    #[serde(skip)]
    pub replica_errors: Vec<Vec<f64>>,
}

pub struct UniformSetup<'a> {
    pub matrix: &'a SubstochasticMatrix,
    pub mu0: &'a Distribution,
    pub horizon: usize,
    pub particles: usize,
    pub replicas: usize,
    pub test_functions: &'a [Vec<f64>],
    pub init: InitMode,
}

/// Records the error against a precomputed conditional path at every step.
struct PathErrors<'a> {
    path: &'a [Distribution],
    test_functions: &'a [Vec<f64>],
    size: usize,
    errors: Vec<f64>,
}

impl PathErrors<'_> {
    fn record(&mut self, ensemble: &ParticleEnsemble<usize>) {
        let law = empirical_law(ensemble.positions(), self.size);
        let oracle = &self.path[ensemble.step_index()];
        self.errors.push(mean_abs_error(&law, oracle, self.test_functions));
    }
}

impl Observer<usize> for PathErrors<'_> {
    fn on_start(&mut self, ensemble: &ParticleEnsemble<usize>) {
        self.record(ensemble);
    }

    fn on_step(&mut self, ensemble: &ParticleEnsemble<usize>, _: &StepReport) {
        self.record(ensemble);
    }
}

fn tail_drift(curve: &[f64]) -> f64 {
    let start = curve.len() / 2;
    let points: Vec<(f64, f64)> = curve[start..].iter().enumerate().map(|(k, &e)| ((start + k) as f64, e)).collect();
    if points.len() < 2 {
        0.0
    } else {
        least_squares_slope(&points)
    }
}

/// Error at every step up to `horizon` with a fixed particle count.
///
/// Requires a kernel whose conditional semigroup mixes exponentially; the
/// replica `r` uses stream `(0, r)` of the plan.
pub fn uniform_in_time_experiment(
    setup: &UniformSetup<'_>,
    plan: &ReplicaPlan,
) -> Result<UniformSweep, AnalysisError> {
    let size = setup.matrix.size();
    if setup.mu0.len() != size {
        return Err(OracleError::LengthMismatch { expected: size, got: setup.mu0.len() }.into());
    }
    check_test_functions(size, setup.test_functions)?;
    if setup.replicas == 0 {
        return usage("replicas must be positive");
    }
    let mixing = estimate_mixing_rate(setup.matrix, MIXING_HORIZON);
    if mixing.non_mixing {
        return Err(AnalysisError::NotMixing(format!(
            "fitted rate {:e} over {} steps, worst distance stays at {}",
            mixing.gamma,
            MIXING_HORIZON,
            mixing.distances.last().copied().unwrap_or(0.0)
        )));
    }
    let lambda0 = qsd_exact(setup.matrix, DEFAULT_QSD_TOL, DEFAULT_QSD_MAX_ITER).ok().map(|q| q.lambda0);
    let alpha = lambda0.and_then(|l| alpha_bound(mixing.gamma, l).ok());

    let replica_errors = plan.run(0, setup.replicas, |_, rng| {
        let positions = initial_positions(setup.mu0, setup.particles, setup.init, rng);
        let start = empirical_law(&positions, size);
        let path = conditional_path(setup.matrix, &start, setup.horizon)?;
        let mut observer = PathErrors {
            path: &path,
            test_functions: setup.test_functions,
            size,
            errors: Vec::with_capacity(setup.horizon + 1),
        };
        run_trajectory(setup.matrix, positions, setup.horizon, rng, &mut observer)?;
        Ok::<_, AnalysisError>(observer.errors)
    })?;

    let steps = setup.horizon + 1;
    let mut per_step_error = Vec::with_capacity(steps);
    let mut per_step_std_error = Vec::with_capacity(steps);
    for n in 0..steps {
        let column: Vec<f64> = replica_errors.iter().map(|e| e[n]).collect();
        let (mean, se) = mean_and_std_error(&column);
        per_step_error.push(mean);
        per_step_std_error.push(se);
    }
    let sup_error = per_step_error.iter().copied().fold(0.0, f64::max);
    let reference_error = per_step_error[REFERENCE_STEP.min(setup.horizon)];
    let drift_slope = tail_drift(&per_step_error);
    let drift_ci = if steps >= 4 && setup.replicas >= 2 {
        bootstrap_interval(plan.seed, |rng| {
            let idx = resample_indices(rng, replica_errors.len());
            let curve: Vec<f64> = (0..steps)
                .map(|n| idx.iter().map(|&i| replica_errors[i][n]).sum::<f64>() / idx.len() as f64)
                .collect();
            Some(tail_drift(&curve))
        })
    } else {
        None
    };
    let drift_ci_contains_zero = match drift_ci {
        Some((lo, hi)) => lo <= 0.0 && 0.0 <= hi,
        None => drift_slope == 0.0,
    };
    Ok(UniformSweep {
        sup_within_twice_reference: sup_error <= 2.0 * reference_error,
        per_step_error,
        per_step_std_error,
        sup_error,
        reference_error,
        drift_slope,
        drift_ci,
        gamma: mixing.gamma,
        lambda0,
        alpha,
        drift_ci_contains_zero,
        replica_errors,
    })
}

/// Accumulates binned counts at the steps after the burn-in.
struct TimeAverage<B> {
    binning: B,
    burn_in: usize,
    totals: Vec<u64>,
    error: Option<EngineError>,
}

impl<S: Clone + std::fmt::Debug, B: crate::kernel::Binning<S>> Observer<S> for TimeAverage<B> {
    fn on_step(&mut self, ensemble: &ParticleEnsemble<S>, _: &StepReport) {
        if ensemble.step_index() <= self.burn_in || self.error.is_some() {
            return;
        }
        match empirical_counts(ensemble.positions(), &self.binning) {
            Ok(counts) => self.totals.iter_mut().zip(counts).for_each(|(t, c)| *t += c as u64),
            Err(e) => self.error = Some(e),
        }
    }
}

/// Time average of the binned empirical measures over the steps
/// `⌊horizon · burn_in_fraction⌋ + 1 ..= horizon` of one trajectory.
pub fn qsd_estimate<K, R>(
    kernel: &K,
    init_positions: Vec<K::State>,
    horizon: usize,
    burn_in_fraction: f64,
    rng: &mut R,
) -> Result<Distribution, AnalysisError>
where
    K: AbsorbedKernel,
    R: Rng + ?Sized,
{
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return usage(format!("burn-in fraction must lie in [0, 1), got {burn_in_fraction}"));
    }
    let burn_in = (horizon as f64 * burn_in_fraction).floor() as usize;
    if horizon <= burn_in {
        return usage(format!("horizon {horizon} leaves no steps after a burn-in of {burn_in_fraction}"));
    }
    let binning = kernel.binning();
    let bins = crate::kernel::Binning::num_bins(&binning);
    let mut observer = TimeAverage { binning, burn_in, totals: vec![0; bins], error: None };
    run_trajectory(kernel, init_positions, horizon, rng, &mut observer)?;
    if let Some(e) = observer.error {
        return Err(e.into());
    }
    let total: u64 = observer.totals.iter().sum();
    Ok(Distribution::from_normalized(observer.totals.iter().map(|&c| c as f64 / total as f64).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn running_example() -> SubstochasticMatrix {
        SubstochasticMatrix::from_rows(vec![vec![0.5, 0.3], vec![0.4, 0.4]]).unwrap()
    }

    fn d(w: &[f64]) -> Distribution {
        Distribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap(), 0.0);
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tv_distance(&d(&[0.5, 0.5]), &d(&[0.625, 0.375])).unwrap() - 0.125).abs() < 1e-15);
        assert!(tv_distance(&d(&[1.0]), &d(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_bound(0.7, 0.7).unwrap(), -0.25);
        assert!((alpha_bound(0.1, 0.3).unwrap() + 0.125).abs() < 1e-15);
        assert!((alpha_bound(1e6, 1.0).unwrap() + 0.5).abs() < 1e-6);
        assert!(alpha_bound(0.0, 1.0).is_err());
        assert!(alpha_bound(1.0, -1.0).is_err());
        assert!(alpha_bound(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn proportional_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mu = d(&[0.5, 0.25, 0.25]);
        assert_eq!(initial_positions(&mu, 4, InitMode::Proportional, &mut rng), vec![0, 0, 1, 2]);
        let thirds = d(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let p = initial_positions(&thirds, 10, InitMode::Proportional, &mut rng);
        assert_eq!(p, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let skewed = d(&[0.0, 1.0]);
        assert_eq!(initial_positions(&skewed, 3, InitMode::Proportional, &mut rng), vec![1, 1, 1]);
    }

    #[test]
    fn iid_init_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = initial_positions(&d(&[0.0, 0.4, 0.6]), 1000, InitMode::Iid, &mut rng);
        assert_eq!(p.len(), 1000);
        assert!(p.iter().all(|&x| x == 1 || x == 2));
    }

    #[test]
    fn default_functions() {
        let fs = default_test_functions(2);
        assert_eq!(fs, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn single_state_chain_has_zero_error() {
        let m = SubstochasticMatrix::from_rows(vec![vec![0.9]]).unwrap();
        let mu = Distribution::dirac(1, 0);
        let fs = vec![vec![1.0]];
        let curve = convergence_experiment(
            &ConvergenceSetup {
                matrix: &m,
                mu0: &mu,
                steps: 5,
                particle_counts: &[2, 10],
                replicas: 3,
                test_functions: &fs,
                init: InitMode::Iid,
            },
            &ReplicaPlan::new(1, 1),
        )
        .unwrap();
        assert!(curve.points.iter().all(|p| p.mean_abs_error == 0.0));
        assert!(curve.fitted_slope.is_none());
        assert!(curve.within_bound());
    }

    #[test]
    fn convergence_rejects_bad_setups() {
        let m = running_example();
        let mu = Distribution::dirac(2, 0);
        let fs = default_test_functions(2);
        let run = |ns: &[usize], fs: &[Vec<f64>], replicas| {
            convergence_experiment(
                &ConvergenceSetup {
                    matrix: &m,
                    mu0: &mu,
                    steps: 1,
                    particle_counts: ns,
                    replicas,
                    test_functions: fs,
                    init: InitMode::Iid,
                },
                &ReplicaPlan::new(0, 1),
            )
        };
        assert!(run(&[10, 10], &fs, 2).is_err());
        assert!(run(&[], &fs, 2).is_err());
        assert!(run(&[10], &fs, 0).is_err());
        assert!(run(&[10], &[vec![2.0, 0.0]], 2).is_err());
        assert!(run(&[10], &[vec![1.0]], 2).is_err());
        assert!(run(&[1], &fs, 2).is_err());
    }

    #[test]
    fn bound_matches_formula_for_a_dirac_start() {
        let m = running_example();
        let mu = Distribution::dirac(2, 0);
        let fs = vec![vec![1.0, 0.0]];
        let curve = convergence_experiment(
            &ConvergenceSetup {
                matrix: &m,
                mu0: &mu,
                steps: 10,
                particle_counts: &[100],
                replicas: 4,
                test_functions: &fs,
                init: InitMode::Iid,
            },
            &ReplicaPlan::new(2, 2),
        )
        .unwrap();
        let p = crate::oracle::survival_probability_exact(&m, &mu, 10).unwrap();
        let expected = RATE_CONSTANT / 10.0 / p;
        assert!((curve.points[0].bound - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn uniform_sweep_at_horizon_zero() {
        let m = running_example();
        let mu = Distribution::new(vec![0.5, 0.5]).unwrap();
        let fs = default_test_functions(2);
        let sweep = uniform_in_time_experiment(
            &UniformSetup {
                matrix: &m,
                mu0: &mu,
                horizon: 0,
                particles: 50,
                replicas: 3,
                test_functions: &fs,
                init: InitMode::Iid,
            },
            &ReplicaPlan::new(4, 1),
        )
        .unwrap();
        assert_eq!(sweep.per_step_error.len(), 1);
        assert_eq!(sweep.sup_error, sweep.per_step_error[0]);
        // The oracle starts from the empirical law, so step 0 is exact.
        assert_eq!(sweep.sup_error, 0.0);
    }

    #[test]
    fn uniform_sweep_rejects_non_mixing_kernels() {
        let m = SubstochasticMatrix::from_rows(vec![vec![0.9, 0.0], vec![0.0, 0.8]]).unwrap();
        let mu = Distribution::uniform(2);
        let fs = default_test_functions(2);
        let err = uniform_in_time_experiment(
            &UniformSetup {
                matrix: &m,
                mu0: &mu,
                horizon: 5,
                particles: 10,
                replicas: 2,
                test_functions: &fs,
                init: InitMode::Iid,
            },
            &ReplicaPlan::new(4, 1),
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::NotMixing(_)));
    }

    #[test]
    fn qsd_estimate_argument_checks() {
        let m = running_example();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(qsd_estimate(&m, vec![0, 0], 10, 1.0, &mut rng).is_err());
        assert!(qsd_estimate(&m, vec![0, 0], 1, 0.5, &mut rng).is_ok());
        assert!(qsd_estimate(&m, vec![0, 0], 0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn qsd_estimate_of_the_running_example() {
        let m = running_example();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let est = qsd_estimate(&m, vec![0; 1000], 500, 0.5, &mut rng).unwrap();
        let exact = qsd_exact(&m, DEFAULT_QSD_TOL, DEFAULT_QSD_MAX_ITER).unwrap();
        assert!(tv_distance(&est, &exact.qsd).unwrap() < 0.05);
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&xs, 1.0), 5.0);
    }

    fn simplex(len: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
            let total: f64 = w.iter().sum();
            Distribution::new(w.into_iter().map(|x| x / total).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric((p, q, r) in (1usize..8).prop_flat_map(|k| (simplex(k), simplex(k), simplex(k)))) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
            prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
            if p != q {
                prop_assert!(pq > 0.0);
            }
            let pr = tv_distance(&p, &r).unwrap();
            let rq = tv_distance(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }

        #[test]
        fn alpha_monotonicity(g1 in 1e-3f64..10.0, g2 in 1e-3f64..10.0, l1 in 1e-3f64..10.0, l2 in 1e-3f64..10.0) {
            let (glo, ghi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let (llo, lhi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(alpha_bound(ghi, l1).unwrap() <= alpha_bound(glo, l1).unwrap());
            prop_assert!(alpha_bound(g1, llo).unwrap() <= alpha_bound(g1, lhi).unwrap());
            let a = alpha_bound(g1, l1).unwrap();
            prop_assert!(a > -0.5 && a < 0.0);
        }
    }
}
