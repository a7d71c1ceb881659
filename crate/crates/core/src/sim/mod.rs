//! Random-matrix and classical Monte Carlo simulators.
//!
//! Every replication draws from its own ChaCha stream derived from the
//! master seed, so results do not depend on the number of worker threads.

mod classical;
mod family;
mod limits;
mod matrix;

pub use classical::{GaussianSequence, SequenceMethod, CHOLESKY_LIMIT};
pub use family::{
    correlated_matrices, empirical_gram, sample_correlated_family, CorrelatedFamilyConfig, GramEstimate,
    FAMILY_MODEL_TOL,
};
pub use limits::{simulate_limits, LimitRow, LimitsConfig, LimitsTable, Regime, SimKind, DEFAULT_FREE_MATRIX_N};
pub use matrix::{
    alternating_moment, asymptotic_freeness_check, estimate_poly_moment, goe_increment, matrix_poly,
    poly_trace_state, sample_increments, sample_matrix_bm, sample_rep, trace_state, MatrixEnsembleConfig,
    MAX_MATRIX_N,
};

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[]).0.is_nan());
    }
}
