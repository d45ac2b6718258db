//! Exact reference computations on finite substochastic kernels.
//!
//! Everything here iterates the normalized conditional map
//! `ν ↦ νP / ‖νP‖₁`, renormalizing at each step so long horizons never
//! underflow. Survival masses are accumulated in log space.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::SubstochasticMatrix;

/// Probability weights must sum to one within this tolerance.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_QSD_TOL: f64 = 1e-12;
pub const DEFAULT_QSD_MAX_ITER: usize = 1_000_000;

/// Mixing distances at or below this are treated as round-off.
const MIXING_FLOOR: f64 = 1e-12;
const NON_MIXING_RATE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution has {got} weights but the kernel has {expected} states")]
    LengthMismatch { expected: usize, got: usize },
    #[error("conditioning on null event: survival mass vanished at step {step}")]
    NullConditioning { step: usize },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// A probability vector over a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, OracleError> {
        if weights.is_empty() {
            return Err(OracleError::InvalidDistribution("no weights".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(OracleError::InvalidDistribution(format!("weight {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(OracleError::InvalidDistribution(format!("weights sum to {total}")));
        }
        Ok(Distribution(weights))
    }

    pub fn dirac(size: usize, state: usize) -> Self {
        assert!(state < size, "dirac state {state} outside {size} states");
        let mut w = vec![0.0; size];
        w[state] = 1.0;
        Distribution(w)
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0);
        Distribution(vec![1.0 / size as f64; size])
    }

    /// Normalizes nonnegative counts; `None` if they are all zero.
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        let total: usize = counts.iter().sum();
        (total > 0).then(|| Distribution(counts.iter().map(|&c| c as f64 / total as f64).collect()))
    }

    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        Distribution(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Expectation of `f` (given as one value per state).
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Draws a state by inverse CDF; round-off past the last weight lands on
    /// the last state with positive weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Power-iteration fixed point of the conditional map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsdResult {
    pub qsd: Distribution,
    /// `-ln` of the Perron eigenvalue: per-step decay rate of survival from the QSD.
    pub lambda0: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// γ estimate from the decay of the worst-case Dirac-to-Dirac TV distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingEstimate {
    /// Fitted slope of `-ln d(n)`; `+∞` when `d` vanishes identically.
    pub gamma: f64,
    /// `d(n)` for `n = 0..=horizon`.
    pub distances: Vec<f64>,
    /// Number of leading points above the round-off floor used for the fit.
    pub fitted_prefix: usize,
    /// The distance hit the round-off floor before half the horizon.
    pub truncated: bool,
    /// `d` is zero from the start (a single state, or identical rows).
    pub degenerate: bool,
    /// No measurable decay: exponential mixing fails for this kernel.
    pub non_mixing: bool,
}

fn check_len(matrix: &SubstochasticMatrix, mu: &Distribution) -> Result<(), OracleError> {
    if mu.len() != matrix.size() {
        return Err(OracleError::LengthMismatch { expected: matrix.size(), got: mu.len() });
    }
    Ok(())
}

/// `νP` without normalization.
fn push_forward(matrix: &SubstochasticMatrix, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(matrix.row(i)) {
            *o += vi * p;
        }
    }
}

/// One renormalized step; returns the survival mass of the step.
fn conditioned_step(matrix: &SubstochasticMatrix, v: &mut Vec<f64>, scratch: &mut Vec<f64>) -> f64 {
    push_forward(matrix, v, scratch);
    let mass: f64 = scratch.iter().sum();
    if mass > 0.0 && mass.is_finite() {
        scratch.iter_mut().for_each(|x| *x /= mass);
    }
    std::mem::swap(v, scratch);
    mass
}

/// `P_μ(X_n ∈ · | n < τ_∂)`.
pub fn conditional_distribution_exact(
    matrix: &SubstochasticMatrix,
    mu0: &Distribution,
    n: usize,
) -> Result<Distribution, OracleError> {
    check_len(matrix, mu0)?;
    let mut v = mu0.weights().to_vec();
    let mut scratch = vec![0.0; v.len()];
    for step in 1..=n {
        let mass = conditioned_step(matrix, &mut v, &mut scratch);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(OracleError::NullConditioning { step });
        }
    }
    Ok(Distribution(v))
}

/// Conditional laws at every step `0..=horizon`.
pub fn conditional_path(
    matrix: &SubstochasticMatrix,
    mu0: &Distribution,
    horizon: usize,
) -> Result<Vec<Distribution>, OracleError> {
    check_len(matrix, mu0)?;
    let mut v = mu0.weights().to_vec();
    let mut scratch = vec![0.0; v.len()];
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(Distribution(v.clone()));
    for step in 1..=horizon {
        let mass = conditioned_step(matrix, &mut v, &mut scratch);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(OracleError::NullConditioning { step });
        }
        path.push(Distribution(v.clone()));
    }
    Ok(path)
}

/// `ln P_μ(n < τ_∂)`, as a sum of per-step log mass ratios.
pub fn log_survival_probability_exact(
    matrix: &SubstochasticMatrix,
    mu0: &Distribution,
    n: usize,
) -> Result<f64, OracleError> {
    check_len(matrix, mu0)?;
    let mut v = mu0.weights().to_vec();
    let mut scratch = vec![0.0; v.len()];
    let mut log_mass = 0.0;
    for _ in 0..n {
        let mass = conditioned_step(matrix, &mut v, &mut scratch);
        if mass <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_mass += mass.ln();
    }
    Ok(log_mass)
}

/// `P_μ(n < τ_∂) = ‖μPⁿ‖₁`.
pub fn survival_probability_exact(
    matrix: &SubstochasticMatrix,
    mu0: &Distribution,
    n: usize,
) -> Result<f64, OracleError> {
    log_survival_probability_exact(matrix, mu0, n).map(f64::exp)
}

/// Quasi-stationary distribution by power iteration from the uniform law.
///
/// Iterates until the TV change between successive normalized iterates drops
/// below `tol`. Periodic or reducible kernels generally oscillate or stall and
/// surface as [`OracleError::NonConvergence`].
pub fn qsd_exact(
    matrix: &SubstochasticMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<QsdResult, OracleError> {
    let size = matrix.size();
    let mut v = vec![1.0 / size as f64; size];
    let mut scratch = vec![0.0; size];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let previous = v.clone();
        conditioned_step(matrix, &mut v, &mut scratch);
        residual = tv_weights(&previous, &v);
        if residual < tol {
            push_forward(matrix, &v, &mut scratch);
            let eigenvalue = scratch.iter().sum::<f64>().min(1.0);
            return Ok(QsdResult {
                qsd: Distribution(v),
                lambda0: -eigenvalue.ln(),
                eigenvalue,
                iterations,
                residual,
            });
        }
    }
    Err(OracleError::NonConvergence { iterations, residual })
}

fn tv_weights(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Estimates the exponential mixing rate γ of the conditioned semigroup.
///
/// `d(n)` is the largest TV distance between the `n`-step conditional laws
/// started from two Dirac masses. γ is the least-squares slope of `-ln d(n)`
/// over the tail half of the points above the round-off floor.
pub fn estimate_mixing_rate(matrix: &SubstochasticMatrix, horizon: usize) -> MixingEstimate {
    let size = matrix.size();
    let mut laws: Vec<Vec<f64>> = (0..size).map(|x| Distribution::dirac(size, x).0).collect();
    let mut scratch = vec![0.0; size];
    let mut distances = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        if n > 0 {
            for law in laws.iter_mut() {
                conditioned_step(matrix, law, &mut scratch);
            }
        }
        let mut d: f64 = 0.0;
        for a in 0..size {
            for b in a + 1..size {
                d = d.max(tv_weights(&laws[a], &laws[b]));
            }
        }
        distances.push(d);
    }

    let fitted_prefix = distances.iter().take_while(|&&d| d > MIXING_FLOOR).count();
    if fitted_prefix == 0 {
        return MixingEstimate {
            gamma: f64::INFINITY,
            distances,
            fitted_prefix,
            truncated: false,
            degenerate: true,
            non_mixing: false,
        };
    }
    let truncated = fitted_prefix < horizon / 2;
    let start = fitted_prefix / 2;
    let points: Vec<(f64, f64)> = (start..fitted_prefix)
        .map(|n| (n as f64, -distances[n].ln()))
        .collect();
    let gamma = if points.len() >= 2 {
        least_squares_slope(&points)
    } else {
        // A single usable step: d(0) > floor ≥ d(1).
        f64::INFINITY
    };
    MixingEstimate {
        gamma,
        non_mixing: gamma < NON_MIXING_RATE,
        distances,
        fitted_prefix,
        truncated,
        degenerate: false,
    }
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::tv_distance;

    fn running_example() -> SubstochasticMatrix {
        SubstochasticMatrix::from_rows(vec![vec![0.5, 0.3], vec![0.4, 0.4]]).unwrap()
    }

    #[test]
    fn zero_steps_is_identity() {
        let m = running_example();
        let mu = Distribution::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(conditional_distribution_exact(&m, &mu, 0).unwrap(), mu);
        assert_eq!(survival_probability_exact(&m, &mu, 0).unwrap(), 1.0);
    }

    #[test]
    fn one_step_from_state_zero() {
        let m = running_example();
        let d = conditional_distribution_exact(&m, &Distribution::dirac(2, 0), 1).unwrap();
        assert!((d.weights()[0] - 0.625).abs() < 1e-15);
        assert!((d.weights()[1] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn survival_one_and_two_steps() {
        let m = running_example();
        let mu = Distribution::dirac(2, 0);
        assert!((survival_probability_exact(&m, &mu, 1).unwrap() - 0.8).abs() < 1e-15);
        assert!((survival_probability_exact(&m, &mu, 2).unwrap() - 0.64).abs() < 1e-15);
    }

    #[test]
    fn survival_does_not_underflow_in_log_space() {
        let m = SubstochasticMatrix::from_rows(vec![vec![1e-3]]).unwrap();
        let log_s = log_survival_probability_exact(&m, &Distribution::dirac(1, 0), 1000).unwrap();
        assert!((log_s - 1000.0 * 1e-3f64.ln()).abs() < 1e-9);
        // The conditional law still behaves even though the mass is ~1e-3000.
        let d = conditional_distribution_exact(&m, &Distribution::dirac(1, 0), 1000).unwrap();
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn length_mismatch() {
        let m = running_example();
        assert_eq!(
            conditional_distribution_exact(&m, &Distribution::dirac(3, 0), 1),
            Err(OracleError::LengthMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn qsd_of_running_example() {
        let r = qsd_exact(&running_example(), DEFAULT_QSD_TOL, DEFAULT_QSD_MAX_ITER).unwrap();
        assert!((r.qsd.weights()[0] - 4.0 / 7.0).abs() < 1e-11);
        assert!((r.qsd.weights()[1] - 3.0 / 7.0).abs() < 1e-11);
        assert!((r.eigenvalue - 0.8).abs() < 1e-12);
        assert!((r.lambda0 + 0.8f64.ln()).abs() < 1e-12);
        assert!(r.residual < DEFAULT_QSD_TOL);
    }

    #[test]
    fn qsd_of_stochastic_matrix_is_stationary_law() {
        // Stationary law of [[0.9,0.1],[0.2,0.8]] is (2/3, 1/3).
        let m = SubstochasticMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let r = qsd_exact(&m, DEFAULT_QSD_TOL, DEFAULT_QSD_MAX_ITER).unwrap();
        assert!(r.lambda0.abs() < 1e-12);
        assert!((r.qsd.weights()[0] - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn periodic_kernel_does_not_converge() {
        let m = SubstochasticMatrix::from_rows(vec![vec![0.0, 0.5], vec![0.8, 0.0]]).unwrap();
        match qsd_exact(&m, DEFAULT_QSD_TOL, 10_000) {
            Err(OracleError::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 10_000);
                assert!(residual > 0.01);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn qsd_is_conditionally_invariant() {
        let m = running_example();
        let r = qsd_exact(&m, 1e-12, DEFAULT_QSD_MAX_ITER).unwrap();
        let next = conditional_distribution_exact(&m, &r.qsd, 1).unwrap();
        assert!(tv_distance(&r.qsd, &next).unwrap() <= 10.0 * 1e-12);
    }

    #[test]
    fn mixing_rate_of_running_example_is_ln_8() {
        let est = estimate_mixing_rate(&running_example(), 40);
        // Direct check of the d(n) recursion: d(n) = d(1) * 0.125^(n-1).
        for n in 2..10 {
            let ratio = est.distances[n] / est.distances[n - 1];
            assert!((ratio - 0.125).abs() < 1e-9, "ratio at {n}: {ratio}");
        }
        assert!((est.gamma - 8f64.ln()).abs() < 1e-3, "gamma {}", est.gamma);
        assert!(est.truncated, "d(n) hits the floor near n = 13");
        assert!(!est.non_mixing && !est.degenerate);
    }

    #[test]
    fn single_state_is_degenerate() {
        let m = SubstochasticMatrix::from_rows(vec![vec![0.5]]).unwrap();
        let est = estimate_mixing_rate(&m, 10);
        assert!(est.distances.iter().all(|&d| d == 0.0));
        assert!(est.gamma.is_infinite() && est.degenerate);
    }

    #[test]
    fn reducible_kernel_does_not_mix() {
        let m = SubstochasticMatrix::from_rows(vec![
            vec![0.5, 0.3, 0.0, 0.0],
            vec![0.4, 0.4, 0.0, 0.0],
            vec![0.0, 0.0, 0.6, 0.2],
            vec![0.0, 0.0, 0.1, 0.7],
        ])
        .unwrap();
        let est = estimate_mixing_rate(&m, 50);
        assert!(est.gamma.abs() < 1e-6);
        assert!(est.non_mixing);
        assert_eq!(*est.distances.last().unwrap(), 1.0);
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.5]).is_ok());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.5, 1.5]).is_err());
        assert!(Distribution::new(vec![]).is_err());
        assert_eq!(Distribution::from_counts(&[3, 1]).unwrap().weights(), &[0.75, 0.25]);
        assert!(Distribution::from_counts(&[0, 0]).is_none());
    }

    #[test]
    fn path_matches_pointwise_laws() {
        let m = running_example();
        let mu = Distribution::dirac(2, 0);
        let path = conditional_path(&m, &mu, 12).unwrap();
        assert_eq!(path.len(), 13);
        for (n, law) in path.iter().enumerate() {
            assert_eq!(*law, conditional_distribution_exact(&m, &mu, n).unwrap());
        }
    }

    #[test]
    fn sampling_frequencies() {
        use rand::SeedableRng;
        let d = Distribution::new(vec![0.2, 0.0, 0.8]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 1e5 - 0.2).abs() < 0.006);
    }
}
