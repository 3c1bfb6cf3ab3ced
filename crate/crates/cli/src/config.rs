//! JSON problem description.
//!
//! ```json
//! { "p": 1, "n": 1, "d": [1.0], "l": 1.0,
//!   "theta1": [[[1.0, 0.0]]], "theta2": [[[1.0, 0.0]]], "beta": [[[-1.0, 0.0]]],
//!   "mode": { "enforce_identity": false } }
//! ```
//!
//! Complex numbers are `[re, im]`; `theta1`/`theta2` are `n` rows of `p`
//! entries and `beta` is `n x n`.

use dkinv_core::linalg::{c, CMatrix};
use dkinv_core::{DiagonalStructure, Realization};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFlags {
    /// Reject data violating the structure identity even for pure inversion.
    #[serde(default)]
    pub enforce_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: usize,
    pub n: usize,
    pub d: Vec<f64>,
    pub l: f64,
    pub theta1: Vec<Vec<[f64; 2]>>,
    pub theta2: Vec<Vec<[f64; 2]>>,
    pub beta: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub mode: ModeFlags,
}

/// A realization in sorted component order plus the map back to the
/// caller's order: `perm[sorted] = original`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub realization: Realization,
    pub perm: Vec<usize>,
    pub mode: ModeFlags,
}

impl Problem {
    pub fn original_index(&self, sorted: usize) -> usize {
        self.perm[sorted]
    }

    /// Reorders a matrix made of `p x p` blocks from sorted to original
    /// component order.
    pub fn unpermute_blocks(&self, m: &CMatrix) -> CMatrix {
        let p = self.perm.len();
        let mut out = m.clone();
        for r in 0..m.nrows() {
            for col in 0..m.ncols() {
                let (rb, ri) = (r / p, r % p);
                let (cb, ci) = (col / p, col % p);
                out[(rb * p + self.perm[ri], cb * p + self.perm[ci])] = m[(r, col)];
            }
        }
        out
    }
}

/// 1-based line of the first occurrence of `"key"` in `text`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |k| k + 1)
}

fn matrix(
    rows: &[Vec<[f64; 2]>],
    shape: (usize, usize),
    name: &str,
    invalid: &dyn Fn(&str, String) -> ConfigError,
) -> Result<CMatrix, ConfigError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        let got: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(invalid(
            name,
            format!("{name} must be {}x{} (rows of [re, im] pairs), got row lengths {got:?}", shape.0, shape.1),
        ));
    }
    let mut m = CMatrix::zeros(shape.0, shape.1);
    for (r, row) in rows.iter().enumerate() {
        for (col, z) in row.iter().enumerate() {
            if !(z[0].is_finite() && z[1].is_finite()) {
                return Err(invalid(name, format!("{name}[{r}][{col}] is not finite")));
            }
            m[(r, col)] = c(z[0], z[1]);
        }
    }
    Ok(m)
}

impl ProblemConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_string(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates shapes and values and builds the realization, sorting `d`
    /// into non-increasing order when necessary.
    pub fn to_problem(&self, text: &str, path: &str) -> Result<Problem, ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            path: path.to_string(),
            line: line_of(text, key),
            message,
        };
        if self.p == 0 || self.n == 0 {
            return Err(invalid("p", "p and n must be positive".into()));
        }
        if self.d.len() != self.p {
            return Err(invalid("d", format!("d has {} entries, expected p = {}", self.d.len(), self.p)));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(invalid("l", format!("l must be a positive number, got {}", self.l)));
        }
        let (diag, perm) = DiagonalStructure::sorted(&self.d).map_err(|e| invalid("d", e.to_string()))?;
        if perm.iter().enumerate().any(|(k, &o)| k != o) {
            log::warn!("{path}: d is not non-increasing; components reordered as {perm:?} (sorted -> original)");
        }
        let t1 = matrix(&self.theta1, (self.n, self.p), "theta1", &invalid)?;
        let t2 = matrix(&self.theta2, (self.n, self.p), "theta2", &invalid)?;
        let beta = matrix(&self.beta, (self.n, self.n), "beta", &invalid)?;
        let t1 = CMatrix::from_fn(self.n, self.p, |r, k| t1[(r, perm[k])]);
        let t2 = CMatrix::from_fn(self.n, self.p, |r, k| t2[(r, perm[k])]);
        let realization =
            Realization::new(t1, t2, beta, diag, self.l).map_err(|e| invalid("theta1", e.to_string()))?;
        Ok(Problem { realization, perm, mode: self.mode.clone() })
    }

    pub fn load(path: &Path) -> Result<(Self, Problem), ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        let cfg = Self::from_json(&text, &shown)?;
        let problem = cfg.to_problem(&text, &shown)?;
        Ok((cfg, problem))
    }

    /// Config for an existing realization (components already sorted).
    pub fn from_realization(r: &Realization) -> Self {
        let rows = |m: &CMatrix| -> Vec<Vec<[f64; 2]>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
        };
        Self {
            p: r.p(),
            n: r.n(),
            d: r.diag().d().to_vec(),
            l: r.length(),
            theta1: rows(r.theta1()),
            theta2: rows(r.theta2()),
            beta: rows(r.beta()),
            mode: ModeFlags::default(),
        }
    }
}
