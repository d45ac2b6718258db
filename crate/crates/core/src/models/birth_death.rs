use crate::kernel::{SubstochasticMatrix, ROW_SUM_TOLERANCE};
use crate::models::ModelError;

/// Per-state birth, death and killing probabilities of a chain on `0..S`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathSpec {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
    pub kill: Vec<f64>,
}

impl BirthDeathSpec {
    pub fn len(&self) -> usize {
        self.kill.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kill.is_empty()
    }
}

/// Tridiagonal kernel: up with `birth[i]`, down with `death[i]`, absorbed
/// with `kill[i]`, and the rest of the mass stays at `i`.
pub fn birth_death_matrix(spec: &BirthDeathSpec) -> Result<SubstochasticMatrix, ModelError> {
    let s = spec.len();
    let invalid = |msg: String| Err(ModelError::InvalidSpec(msg));
    if s == 0 {
        return invalid("birth-death chain needs at least one state".into());
    }
    if spec.birth.len() != s || spec.death.len() != s {
        return invalid(format!(
            "birth, death and kill must have equal lengths (got {}, {}, {})",
            spec.birth.len(),
            spec.death.len(),
            s
        ));
    }
    if spec.death[0] != 0.0 {
        return invalid("death[0] must be 0".into());
    }
    if spec.birth[s - 1] != 0.0 {
        return invalid(format!("birth[{}] must be 0", s - 1));
    }
    let mut rows = vec![vec![0.0; s]; s];
    for i in 0..s {
        let (b, d, k) = (spec.birth[i], spec.death[i], spec.kill[i]);
        for (name, p) in [("birth", b), ("death", d), ("kill", k)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name}[{i}] = {p} is not a probability"));
            }
        }
        if k >= 1.0 {
            return invalid(format!("kill[{i}] = 1 leaves no chance of survival"));
        }
        let total = b + d + k;
        if total > 1.0 + ROW_SUM_TOLERANCE {
            return invalid(format!("birth + death + kill = {total} > 1 in state {i}"));
        }
        if i + 1 < s {
            rows[i][i + 1] = b;
        }
        if i > 0 {
            rows[i][i - 1] = d;
        }
        rows[i][i] = (1.0 - total).max(0.0);
    }
    SubstochasticMatrix::from_rows(rows).map_err(|e| ModelError::InvalidSpec(e.to_string()))
}
