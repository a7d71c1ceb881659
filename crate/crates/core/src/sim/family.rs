use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::classical::GaussianSequence;
use super::matrix::MAX_MATRIX_N;
use super::mean_se;
use crate::error::{Error, Result};
use crate::moments::CovarianceModel;
use crate::rng::stream_rng;

/// Toeplitz matrices with an eigenvalue below `-FAMILY_MODEL_TOL` are rejected.
pub const FAMILY_MODEL_TOL: f64 = 1e-6;
const MAX_FAMILY_ENTRIES: usize = 40_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatedFamilyConfig {
    /// Number of family members `X_1, …, X_m`.
    pub m: usize,
    pub model: CovarianceModel,
    pub matrix_n: usize,
    pub seed: u64,
    pub reps: usize,
}

impl CorrelatedFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::domain("family needs at least one member"));
        }
        if self.matrix_n < 2 {
            return Err(Error::domain(format!("matrix dimension must be >= 2, got {}", self.matrix_n)));
        }
        if self.matrix_n > MAX_MATRIX_N {
            return Err(Error::size(format!("matrix dimension {} exceeds {MAX_MATRIX_N}", self.matrix_n)));
        }
        if self.m.saturating_mul(self.matrix_n * self.matrix_n) > MAX_FAMILY_ENTRIES {
            return Err(Error::size(format!(
                "{} matrices of size {} exceed the memory budget of {MAX_FAMILY_ENTRIES} entries",
                self.m, self.matrix_n
            )));
        }
        if self.reps == 0 {
            return Err(Error::domain("reps must be >= 1"));
        }
        Ok(())
    }
}

/// `X_k = (A_k + A_kᵀ)/√2`, where every entry of `A_k` runs through an
/// independent copy of `seq` scaled by `1/√n`. For a dense factor `C` this is
/// `X_k = Σ_j C_kj W_j` with `W_j` independent GOE matrices of variance one.
pub fn correlated_matrices<R: Rng + ?Sized>(seq: &GaussianSequence, n: usize, rng: &mut R) -> Vec<DMatrix<f64>> {
    let scale = (n as f64).sqrt().recip();
    // column e = i + n j holds the sequence of entry (i, j)
    let z = seq.sample_many(rng, n * n);
    let s = scale * std::f64::consts::FRAC_1_SQRT_2;
    (0..seq.len()).map(|k| DMatrix::from_fn(n, n, |i, j| (z[(k, i + n * j)] + z[(k, j + n * i)]) * s)).collect()
}

fn family_sequence(cfg: &CorrelatedFamilyConfig) -> Result<GaussianSequence> {
    cfg.validate()?;
    GaussianSequence::new(&cfg.model, cfg.m)
}

pub fn sample_correlated_family(cfg: &CorrelatedFamilyConfig) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let seq = family_sequence(cfg)?;
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|r| correlated_matrices(&seq, cfg.matrix_n, &mut stream_rng(cfg.seed, r as u64)))
        .collect())
}

/// Replication means and standard errors of `τ(X_k X_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramEstimate {
    pub mean: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub reps: usize,
}

pub fn empirical_gram(cfg: &CorrelatedFamilyConfig) -> Result<GramEstimate> {
    let seq = family_sequence(cfg)?;
    let m = cfg.m;
    let n = cfg.matrix_n as f64;
    let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let xs = correlated_matrices(&seq, cfg.matrix_n, &mut stream_rng(cfg.seed, r as u64));
            let mut out = Vec::with_capacity(m * (m + 1) / 2);
            for k in 0..m {
                for l in 0..=k {
                    out.push(xs[k].dot(&xs[l]) / n);
                }
            }
            out
        })
        .collect();
    let mut mean = DMatrix::zeros(m, m);
    let mut stderr = DMatrix::zeros(m, m);
    let mut idx = 0;
    for k in 0..m {
        for l in 0..=k {
            let vals: Vec<f64> = per_rep.iter().map(|v| v[idx]).collect();
            let (mu, se) = mean_se(&vals);
            mean[(k, l)] = mu;
            mean[(l, k)] = mu;
            stderr[(k, l)] = se;
            stderr[(l, k)] = se;
            idx += 1;
        }
    }
    Ok(GramEstimate { mean, stderr, reps: cfg.reps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::poly_trace_state;

    fn cfg(model: CovarianceModel, m: usize, n: usize, reps: usize) -> CorrelatedFamilyConfig {
        CorrelatedFamilyConfig { m, model, matrix_n: n, seed: 21, reps }
    }

    #[test]
    fn delta_family_is_uncorrelated() {
        let g = empirical_gram(&cfg(CovarianceModel::Delta, 3, 60, 40)).unwrap();
        assert!(g.mean[(0, 1)].abs() <= 3.0 * g.stderr[(0, 1)] + 1e-3);
        assert!((g.mean[(2, 2)] - 1.0).abs() < 0.05);
    }

    #[test]
    fn geometric_family_gram() {
        let g = empirical_gram(&cfg(CovarianceModel::geometric(0.5).unwrap(), 4, 60, 40)).unwrap();
        for k in 0..4usize {
            for l in 0..4 {
                let want = 0.5f64.powi(k.abs_diff(l) as i32);
                assert!((g.mean[(k, l)] - want).abs() <= 3.0 * g.stderr[(k, l)] + 0.02, "{k},{l}");
            }
        }
    }

    #[test]
    fn marginals_are_semicircular() {
        let c = cfg(CovarianceModel::geometric(0.5).unwrap(), 3, 80, 20);
        let fam = sample_correlated_family(&c).unwrap();
        let vals: Vec<f64> = fam.iter().map(|r| poly_trace_state(&r[2], &[0.0, 0.0, 0.0, 0.0, 1.0])).collect();
        let (m, se) = mean_se(&vals);
        assert!((m - 2.0).abs() < 3.0 * se + 0.1, "{m}");
        assert_eq!(fam, sample_correlated_family(&c).unwrap());
    }

    #[test]
    fn rejects_indefinite_models() {
        let c = cfg(CovarianceModel::table(vec![1.0, 0.9, -0.9]).unwrap(), 3, 4, 1);
        assert!(matches!(empirical_gram(&c), Err(Error::Model(_))));
    }
}
