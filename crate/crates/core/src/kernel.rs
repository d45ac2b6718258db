//! One-step absorbed Markov kernels.
//!
//! A kernel moves a live state one unit of time forward and either lands in
//! the live state space `E` or in the cemetery point. Every kernel in this
//! crate must give every live state a strictly positive chance of surviving
//! one step; the particle engine relies on this to terminate.

use std::fmt;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

/// Row sums may exceed one by this much before validation rejects them.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Result of one kernel transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome<S> {
    Alive(S),
    Absorbed,
}

impl<S> StepOutcome<S> {
    pub fn is_absorbed(&self) -> bool {
        matches!(self, StepOutcome::Absorbed)
    }

    pub fn alive(self) -> Option<S> {
        match self {
            StepOutcome::Alive(s) => Some(s),
            StepOutcome::Absorbed => None,
        }
    }
}

/// Describes the live state space, so consumers know whether bins are states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// `size` states, each its own bin.
    Finite { size: usize },
    /// Continuous states reduced to `bins` cells by the kernel's binning rule.
    Binned { bins: usize },
}

impl StateSpace {
    pub fn bins(&self) -> usize {
        match *self {
            StateSpace::Finite { size } => size,
            StateSpace::Binned { bins } => bins,
        }
    }
}

/// Maps live states to histogram cells.
pub trait Binning<S> {
    fn num_bins(&self) -> usize;

    /// `None` means the state lies outside the binned region.
    fn bin_of(&self, state: &S) -> Option<usize>;
}

/// Each finite state is its own bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityBinning {
    pub size: usize,
}

impl Binning<usize> for IdentityBinning {
    fn num_bins(&self) -> usize {
        self.size
    }

    fn bin_of(&self, state: &usize) -> Option<usize> {
        (*state < self.size).then_some(*state)
    }
}

/// A discrete-time Markov kernel on `E ∪ {∂}` observed one step at a time.
///
/// Implementations are immutable; all randomness comes from the caller's
/// generator, so the same `(state, rng state)` pair always gives the same
/// outcome.
pub trait AbsorbedKernel {
    type State: Clone + fmt::Debug;
    type Bins: Binning<Self::State>;

    fn sample_step<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R)
        -> StepOutcome<Self::State>;

    fn state_space(&self) -> StateSpace;

    /// The rule used to form empirical distributions over this kernel's states.
    fn binning(&self) -> Self::Bins;
}

impl<K: AbsorbedKernel + ?Sized> AbsorbedKernel for &K {
    type State = K::State;
    type Bins = K::Bins;

    fn sample_step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        rng: &mut R,
    ) -> StepOutcome<Self::State> {
        (**self).sample_step(state, rng)
    }

    fn state_space(&self) -> StateSpace {
        (**self).state_space()
    }

    fn binning(&self) -> Self::Bins {
        (**self).binning()
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel: {0}")]
    Invalid(ValidationReport),
    #[error("state index {state} out of range for a {size}-state kernel")]
    StateOutOfRange { state: usize, size: usize },
    #[error("kernel document: {0}")]
    Document(String),
}

/// One reason a candidate matrix is not a valid absorbed kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    Ragged { row: usize, len: usize, expected: usize },
    NonFinite { row: usize, col: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    RowSumExceedsOne { row: usize, sum: f64 },
    ZeroSurvival { row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Empty => write!(f, "matrix has no rows"),
            Violation::Ragged { row, len, expected } => {
                write!(f, "rows[{row}] has {len} entries, expected {expected}")
            }
            Violation::NonFinite { row, col } => write!(f, "rows[{row}][{col}] is not finite"),
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "rows[{row}][{col}] = {value} is negative")
            }
            Violation::RowSumExceedsOne { row, sum } => {
                write!(f, "rows[{row}] sums to {sum} > 1")
            }
            Violation::ZeroSurvival { row } => {
                write!(f, "rows[{row}] has zero survival probability")
            }
        }
    }
}

/// Outcome of [`validate`]. `absorption` is only filled for valid matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub absorption: Vec<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks that `rows` is a square substochastic matrix where every row keeps
/// some survival mass.
pub fn validate(rows: &[Vec<f64>]) -> ValidationReport {
    let mut violations = Vec::new();
    if rows.is_empty() {
        violations.push(Violation::Empty);
    }
    let size = rows.len();
    let mut absorption = Vec::with_capacity(size);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != size {
            violations.push(Violation::Ragged { row: i, len: row.len(), expected: size });
            continue;
        }
        let mut row_ok = true;
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                violations.push(Violation::NonFinite { row: i, col: j });
                row_ok = false;
            } else if p < 0.0 {
                violations.push(Violation::NegativeEntry { row: i, col: j, value: p });
                row_ok = false;
            }
        }
        if !row_ok {
            continue;
        }
        let sum: f64 = row.iter().sum();
        if sum > 1.0 + ROW_SUM_TOLERANCE {
            violations.push(Violation::RowSumExceedsOne { row: i, sum });
        } else if sum <= 0.0 {
            violations.push(Violation::ZeroSurvival { row: i });
        } else {
            absorption.push((1.0 - sum).max(0.0));
        }
    }
    if !violations.is_empty() {
        absorption.clear();
    }
    ValidationReport { violations, absorption }
}

/// Finite-state absorbed kernel: `p[i][j]` is the probability of moving from
/// `i` to `j`, and `1 - Σ_j p[i][j]` is the probability of absorption from `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstochasticMatrix {
    size: usize,
    entries: Vec<f64>,
    absorption: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDocument {
    size: usize,
    rows: Vec<Vec<f64>>,
}

impl SubstochasticMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        let report = validate(&rows);
        if !report.is_valid() {
            return Err(KernelError::Invalid(report));
        }
        let size = rows.len();
        let entries = rows.into_iter().flatten().collect();
        Ok(SubstochasticMatrix { size, entries, absorption: report.absorption })
    }

    /// Parses `{"size": S, "rows": [[...], ...]}`.
    pub fn from_json_str(text: &str) -> Result<Self, KernelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: KernelDocument = serde_path_to_error::deserialize(de)
            .map_err(|e| KernelError::Document(describe_json_error(&e)))?;
        Self::from_document(doc)
    }

    pub(crate) fn from_json_value(value: serde_json::Value) -> Result<Self, KernelError> {
        let doc: KernelDocument = serde_path_to_error::deserialize(value)
            .map_err(|e| KernelError::Document(describe_json_error(&e)))?;
        Self::from_document(doc)
    }

    fn from_document(doc: KernelDocument) -> Result<Self, KernelError> {
        if doc.size != doc.rows.len() {
            return Err(KernelError::Document(format!(
                "field `size` is {} but `rows` has {} entries",
                doc.size,
                doc.rows.len()
            )));
        }
        Self::from_rows(doc.rows)
    }

    pub fn identity(size: usize) -> Self {
        let rows = (0..size)
            .map(|i| (0..size).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(rows).expect("identity is a valid kernel")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn absorption(&self, i: usize) -> f64 {
        self.absorption[i]
    }

    pub fn survival(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|i| self.row(i).to_vec()).collect()
    }

    /// Inverse-CDF draw over row `state`, with the residual mass meaning absorption.
    pub fn sample_from<R: Rng + ?Sized>(
        &self,
        state: usize,
        rng: &mut R,
    ) -> Result<StepOutcome<usize>, KernelError> {
        if state >= self.size {
            return Err(KernelError::StateOutOfRange { state, size: self.size });
        }
        Ok(self.draw_row(state, rng))
    }

    fn draw_row<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> StepOutcome<usize> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in self.row(state).iter().enumerate() {
            acc += p;
            if u < acc {
                return StepOutcome::Alive(j);
            }
        }
        StepOutcome::Absorbed
    }
}

impl AbsorbedKernel for SubstochasticMatrix {
    type State = usize;
    type Bins = IdentityBinning;

    fn sample_step<R: Rng + ?Sized>(&self, state: &usize, rng: &mut R) -> StepOutcome<usize> {
        assert!(*state < self.size, "state {state} out of range");
        self.draw_row(*state, rng)
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Finite { size: self.size }
    }

    fn binning(&self) -> IdentityBinning {
        IdentityBinning { size: self.size }
    }
}

pub(crate) fn describe_json_error<E: fmt::Display>(err: &serde_path_to_error::Error<E>) -> String {
    let path = err.path().to_string();
    if path == "." || path.is_empty() {
        err.inner().to_string()
    } else {
        format!("at `{path}`: {}", err.inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn running_example() -> Vec<Vec<f64>> {
        vec![vec![0.5, 0.3], vec![0.4, 0.4]]
    }

    #[test]
    fn running_example_is_valid() {
        let report = validate(&running_example());
        assert!(report.is_valid());
        assert!((report.absorption[0] - 0.2).abs() < 1e-15);
        assert!((report.absorption[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_has_no_absorption() {
        let report = validate(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(report.is_valid());
        assert_eq!(report.absorption, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_row_is_rejected() {
        let report = validate(&[vec![0.0, 0.0], vec![0.4, 0.4]]);
        assert_eq!(report.violations, vec![Violation::ZeroSurvival { row: 0 }]);
    }

    #[test]
    fn tolerance_applies_to_row_sums() {
        let ok = validate(&[vec![0.5, 0.5 + 5e-13], vec![0.0, 1.0]]);
        assert!(ok.is_valid());
        assert_eq!(ok.absorption[0], 0.0);
        let bad = validate(&[vec![0.5, 0.5 + 1e-9], vec![0.0, 1.0]]);
        assert!(matches!(bad.violations[0], Violation::RowSumExceedsOne { row: 0, .. }));
    }

    #[test]
    fn negative_and_nan_entries() {
        let report = validate(&[vec![-0.1, 0.5], vec![f64::NAN, 0.2]]);
        assert_eq!(report.violations.len(), 2);
        assert!(report.absorption.is_empty());
    }

    #[test]
    fn deterministic_row_always_survives_in_place() {
        let m = SubstochasticMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(m.sample_from(0, &mut rng).unwrap(), StepOutcome::Alive(0));
        }
    }

    #[test]
    fn out_of_range_state_is_an_error() {
        let m = SubstochasticMatrix::from_rows(running_example()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            m.sample_from(2, &mut rng),
            Err(KernelError::StateOutOfRange { state: 2, size: 2 })
        ));
    }

    #[test]
    fn row_frequencies_match_within_four_sigma() {
        let m = SubstochasticMatrix::from_rows(running_example()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            match m.sample_from(0, &mut rng).unwrap() {
                StepOutcome::Alive(j) => counts[j] += 1,
                StepOutcome::Absorbed => counts[2] += 1,
            }
        }
        for (count, p) in counts.iter().zip([0.5, 0.3, 0.2]) {
            let freq = *count as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * sigma, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn json_document_round() {
        let m = SubstochasticMatrix::from_json_str(r#"{"size": 2, "rows": [[0.5,0.3],[0.4,0.4]]}"#)
            .unwrap();
        assert_eq!(m.rows(), running_example());
    }

    #[test]
    fn json_errors_name_the_field() {
        let err = SubstochasticMatrix::from_json_str("{\"size\": 2,\n \"rows\": [[0.5,\"x\"]]}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("rows[0][1]"), "{err}");
        assert!(err.contains("line 2"), "{err}");

        let err = SubstochasticMatrix::from_json_str(r#"{"size": 2, "rows": [[0.5,0.3],[0.4,0.4]], "extra": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("extra"), "{err}");

        let err = SubstochasticMatrix::from_json_str(r#"{"size": 3, "rows": [[0.5,0.3],[0.4,0.4]]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("size"), "{err}");

        let err = SubstochasticMatrix::from_json_str(r#"{"size": 2, "rows": [[0.0,0.0],[0.4,0.4]]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("rows[0]"), "{err}");
    }
}
