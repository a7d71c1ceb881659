//! Exact and limiting joint moments of `V_n(Q, t) = Σ_{k <= [nt]} Q(X_k)`.
//!
//! [`exact_joint_moment`] evaluates the finite-`n` lattice sum over
//! contraction vectors, [`limit_joint_moment`] the corresponding integral for
//! the Tchebycheff process, and [`clt_variance`] / [`nclt_constants`] the
//! normalisations of the two limit regimes.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::Serialize;

mod clt;
mod lattice;
mod limit;
mod model;

pub use clt::{
    clt_variance, karamata_ratio, nclt_constants, nclt_convergence, sigma_sq, zn_covariance, CltTerm, CltVariance,
    ConvergenceRow, NcltConstants, ZnCovariance, DEFAULT_TRUNCATION,
};
pub use lattice::{
    diagonal_mass, diagonal_mass_with, exact_joint_moment, exact_joint_moment_with, pair_sum, Compensated,
    LatticeOptions, DEFAULT_LATTICE_BUDGET,
};
pub use limit::{limit_joint_moment, pair_integral, LimitMethod, Sampler, DEFAULT_QUAD_LEVEL, MC_BATCH};
pub use model::{CovarianceModel, SlowlyVarying};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Exact,
    #[serde(rename = "MC")]
    MonteCarlo,
    Quadrature,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "Exact",
            Method::MonteCarlo => "MC",
            Method::Quadrature => "Quadrature",
        })
    }
}

/// A computed moment. `stderr` is present exactly for Monte Carlo results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentResult {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub method: Method,
    pub meta: BTreeMap<String, String>,
}

impl MomentResult {
    pub fn new(value: f64, method: Method) -> Self {
        MomentResult { value, stderr: None, n_samples: None, seed: None, method, meta: BTreeMap::new() }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, Method::Exact)
    }

    pub fn mc(value: f64, stderr: f64, n_samples: u64, seed: u64) -> Self {
        MomentResult {
            value,
            stderr: Some(stderr),
            n_samples: Some(n_samples),
            seed: Some(seed),
            method: Method::MonteCarlo,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Display) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    /// Standard error, zero for deterministic methods.
    pub fn se(&self) -> f64 {
        self.stderr.unwrap_or(0.0)
    }
}

/// `[n t]`, robust to `n t` landing just below an integer in floating point.
pub fn lattice_len(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_part() {
        assert_eq!(lattice_len(100, 0.29), 29);
        assert_eq!(lattice_len(10, 0.35), 3);
        assert_eq!(lattice_len(7, 1.0), 7);
        assert_eq!(lattice_len(3, 0.2), 0);
    }
}
