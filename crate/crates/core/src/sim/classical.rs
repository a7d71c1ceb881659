use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freecalc::CovMatrix;
use crate::moments::CovarianceModel;

/// Sequences up to this length use a dense factor, longer ones circulant embedding.
pub const CHOLESKY_LIMIT: usize = 512;
const MAX_EMBEDDING: usize = 1 << 24;
/// Eigenvalues of the circulant above `-CLIP_REL · λ_max` are clipped to zero.
const CLIP_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceMethod {
    Cholesky,
    Eigen,
    Circulant,
}

#[derive(Clone)]
enum Sampler {
    Dense(DMatrix<f64>),
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
}

/// Centred stationary Gaussian sequences `X_0, …, X_{len-1}` with
/// `E[X_k X_l] = ρ(k - l)`.
#[derive(Clone)]
pub struct GaussianSequence {
    len: usize,
    sampler: Sampler,
    pub method: SequenceMethod,
    /// Embedding size for the circulant method, `len` otherwise.
    pub embedding: usize,
    /// Whether a slightly negative spectrum was clipped.
    pub clipped: bool,
}

impl std::fmt::Debug for GaussianSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianSequence")
            .field("len", &self.len)
            .field("method", &self.method)
            .field("embedding", &self.embedding)
            .field("clipped", &self.clipped)
            .finish()
    }
}

impl GaussianSequence {
    pub fn new(model: &CovarianceModel, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("sequence length must be positive"));
        }
        if len <= CHOLESKY_LIMIT {
            Self::dense(model, len, super::FAMILY_MODEL_TOL)
        } else {
            Self::circulant(model, len)
        }
    }

    /// Factor `C` with `C Cᵀ = [ρ(i - j)]`: Cholesky, or a clipped
    /// eigen-decomposition when the Toeplitz matrix is singular.
    pub fn dense(model: &CovarianceModel, len: usize, tol: f64) -> Result<Self> {
        let lags = model.lags(len);
        let cov = CovMatrix::with_tolerance(DMatrix::from_fn(len, len, |i, j| lags[i.abs_diff(j)]), tol)?;
        let clipped = cov.was_clipped();
        if !clipped {
            if let Some(ch) = cov.matrix().clone().cholesky() {
                return Ok(GaussianSequence {
                    len,
                    sampler: Sampler::Dense(ch.l()),
                    method: SequenceMethod::Cholesky,
                    embedding: len,
                    clipped,
                });
            }
        }
        let eig = cov.matrix().clone().symmetric_eigen();
        let mut c = eig.eigenvectors.clone();
        for (j, l) in eig.eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            c.column_mut(j).scale_mut(s);
        }
        Ok(GaussianSequence { len, sampler: Sampler::Dense(c), method: SequenceMethod::Eigen, embedding: len, clipped })
    }

    pub fn circulant(model: &CovarianceModel, len: usize) -> Result<Self> {
        let mut m = (2 * (len.max(2) - 1)).next_power_of_two();
        let cap = (16 * m).min(MAX_EMBEDDING);
        let mut planner = FftPlanner::new();
        loop {
            let fft = planner.plan_fft_forward(m);
            let mut c: Vec<Complex<f64>> =
                (0..m).map(|j| Complex::new(model.rho(j.min(m - j) as i64), 0.0)).collect();
            fft.process(&mut c);
            let max = c.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min >= -CLIP_REL * max {
                let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
                return Ok(GaussianSequence {
                    len,
                    sampler: Sampler::Circulant { sqrt_eig, fft },
                    method: SequenceMethod::Circulant,
                    embedding: m,
                    clipped: min < 0.0,
                });
            }
            if m >= cap {
                return Err(Error::Model(format!(
                    "circulant embedding of size {m} still has a negative eigenvalue ({min:.3e})"
                )));
            }
            m *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `count` independent sequences as the columns of a `len × count` matrix.
    pub fn sample_many<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        match &self.sampler {
            Sampler::Dense(c) => {
                let z = DMatrix::from_fn(c.ncols(), count, |_, _| rng.sample::<f64, _>(StandardNormal));
                c * z
            }
            Sampler::Circulant { .. } => {
                let mut out = DMatrix::zeros(self.len, count);
                for j in 0..count {
                    out.column_mut(j).copy_from_slice(&self.sample(rng));
                }
                out
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.sampler {
            Sampler::Dense(c) => {
                let z: Vec<f64> = (0..c.ncols()).map(|_| rng.sample(StandardNormal)).collect();
                (0..self.len).map(|i| c.row(i).iter().zip(&z).map(|(a, b)| a * b).sum()).collect()
            }
            Sampler::Circulant { sqrt_eig, fft } => {
                let mut z: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|s| Complex::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                fft.process(&mut z);
                z[..self.len].iter().map(|v| v.re).collect()
            }
        }
    }
}
