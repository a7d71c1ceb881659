//! Semicircular laws, the free Wick rule and free moment/cumulant conversion.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::combinat::{catalan, nc_pairings, MAX_PAIRING_N, MAX_PARTITION_N};
use crate::error::{Error, Result};

/// Default tolerance on the smallest eigenvalue of an accepted covariance.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// The semicircular distribution `S(m, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemicircleLaw {
    pub mean: f64,
    pub variance: f64,
}

impl SemicircleLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::domain(format!("semicircle law needs a finite mean and positive variance, got ({mean}, {variance})")));
        }
        Ok(SemicircleLaw { mean, variance })
    }

    pub fn standard() -> Self {
        SemicircleLaw { mean: 0.0, variance: 1.0 }
    }

    pub fn support(&self) -> (f64, f64) {
        let r = 2.0 * self.variance.sqrt();
        (self.mean - r, self.mean + r)
    }

    /// `E[(X - m)^k]`: zero for odd `k`, `C_{k/2} σ^k` for even `k`.
    pub fn central_moment(&self, k: usize) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        catalan(k / 2) as f64 * self.variance.powi((k / 2) as i32)
    }

    /// Raw moment `E[X^k]`, by binomial shift of the central moments.
    pub fn moment(&self, k: usize) -> f64 {
        let mut acc = 0.0;
        let mut binom = 1.0f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k + 1 - j) as f64 / j as f64;
            }
            if j % 2 == 0 {
                acc += binom * self.mean.powi((k - j) as i32) * self.central_moment(j);
            }
        }
        acc
    }

    pub fn density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        let r2 = 4.0 * self.variance - d * d;
        if r2 <= 0.0 {
            0.0
        } else {
            r2.sqrt() / (2.0 * std::f64::consts::PI * self.variance)
        }
    }
}

/// Checks `k <= 64` and returns [`SemicircleLaw::moment`].
pub fn semicircle_moment(law: &SemicircleLaw, k: usize) -> Result<f64> {
    if k > 64 {
        return Err(Error::size(format!("semicircle moments are limited to k <= 64, got {k}")));
    }
    Ok(law.moment(k))
}

pub fn semicircle_density(law: &SemicircleLaw, x: f64) -> f64 {
    law.density(x)
}

/// A symmetric positive semidefinite covariance `Γ` over a finite index set.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    min_eigenvalue: f64,
    clipped: bool,
}

impl CovMatrix {
    /// Accepts `matrix` if it is symmetric and its smallest eigenvalue is at
    /// least `-PSD_TOLERANCE`; slightly negative spectra are clipped to zero.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(matrix, PSD_TOLERANCE)
    }

    pub fn with_tolerance(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::Model(format!("covariance must be square, got {}x{}", n, matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("covariance has non-finite entries".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::Model(format!("covariance is not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        if n == 0 {
            return Ok(CovMatrix { matrix, min_eigenvalue: 0.0, clipped: false });
        }
        let eig = matrix.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -tol {
            return Err(Error::Model(format!(
                "covariance is not positive semidefinite: smallest eigenvalue {min:.3e} < -{tol:.0e}"
            )));
        }
        if min >= 0.0 {
            return Ok(CovMatrix { matrix, min_eigenvalue: min, clipped: false });
        }
        let mut vals = eig.eigenvalues.clone();
        vals.iter_mut().for_each(|v| *v = v.max(0.0));
        let v = &eig.eigenvectors;
        let mut clipped = v * DMatrix::from_diagonal(&vals) * v.transpose();
        // restore exact symmetry after the reconstruction
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (clipped[(i, j)] + clipped[(j, i)]);
                clipped[(i, j)] = m;
                clipped[(j, i)] = m;
            }
        }
        Ok(CovMatrix { matrix: clipped, min_eigenvalue: min, clipped: true })
    }

    /// Reads a square matrix, one comma-separated row per line. A first line
    /// that does not parse as numbers is taken as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if rows.is_empty() && lineno == 0 => continue,
                Err(_) => return Err(Error::Parse(format!("line {}: cannot parse `{line}`", lineno + 1))),
            }
        }
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Parse(format!("row {} has {} entries, expected {n}", i + 1, r.len())));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `Γ(i, j) = ρ(i - j)` for `0 <= i, j < m`.
    pub fn toeplitz(m: usize, rho: impl Fn(i64) -> f64) -> Result<Self> {
        let lags: Vec<f64> = (0..m as i64).map(&rho).collect();
        Self::new(DMatrix::from_fn(m, m, |i, j| lags[i.abs_diff(j)]))
    }

    pub fn identity(n: usize) -> Self {
        CovMatrix { matrix: DMatrix::identity(n, n), min_eigenvalue: 1.0, clipped: false }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Smallest eigenvalue of the matrix as supplied (before clipping).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn was_clipped(&self) -> bool {
        self.clipped
    }
}

fn pairing_cache(n: usize) -> &'static [Vec<(usize, usize)>] {
    static CACHE: OnceLock<Vec<Vec<Vec<(usize, usize)>>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| (0..=MAX_PAIRING_N / 2).map(|k| nc_pairings(2 * k)).collect());
    &all[n / 2]
}

/// `φ(X_{w_1} ... X_{w_n})` for a centered semicircular family with covariance `Γ`.
///
/// Sums `Π Γ(w_a, w_b)` over all non-crossing pairings of the word positions.
/// Indices in `word` are 0-based rows of `Γ`.
pub fn wick_joint_moment(gamma: &CovMatrix, word: &[usize]) -> Result<f64> {
    wick_with(word, |a, b| gamma.get(a, b), gamma.dim())
}

/// As [`wick_joint_moment`] with `Γ` given as a function of two indices.
pub fn wick_with(word: &[usize], gamma: impl Fn(usize, usize) -> f64, dim: usize) -> Result<f64> {
    let n = word.len();
    if n > MAX_PAIRING_N {
        return Err(Error::size(format!("word length {n} exceeds {MAX_PAIRING_N}")));
    }
    if let Some(&bad) = word.iter().find(|&&w| w >= dim) {
        return Err(Error::domain(format!("word index {bad} is outside the covariance of size {dim}")));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pairing in pairing_cache(n) {
        let mut prod = 1.0;
        for &(a, b) in pairing {
            prod *= gamma(word[a], word[b]);
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    Ok(total)
}

/// Free moments `m_1..=m_n` from free cumulants `κ_1, κ_2, ...`.
///
/// `kappa[0]` is `κ_1`; cumulants beyond the slice are zero.
pub fn free_moment_sequence(kappa: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > MAX_PARTITION_N {
        return Err(Error::size(format!("moment order {n} exceeds {MAX_PARTITION_N}")));
    }
    // m_k = Σ_s κ_s [z^{k-s}] M(z)^s, M(z) = Σ_{j>=0} m_j z^j, m_0 = 1.
    let mut m = vec![0.0; n + 1];
    m[0] = 1.0;
    for k in 1..=n {
        // powers[s][j] = [z^j] M(z)^s restricted to known m_0..m_{k-1}
        let mut acc = 0.0;
        let mut power = vec![0.0; k];
        power[0] = 1.0;
        for s in 1..=k {
            let mut next = vec![0.0; k];
            for (i, &pi) in power.iter().enumerate() {
                if pi == 0.0 {
                    continue;
                }
                for j in 0..(k - i) {
                    next[i + j] += pi * m[j];
                }
            }
            power = next;
            let kappa_s = kappa.get(s - 1).copied().unwrap_or(0.0);
            if kappa_s != 0.0 {
                acc += kappa_s * power[k - s];
            }
        }
        m[k] = acc;
    }
    m.remove(0);
    Ok(m)
}

/// `m_n = Σ_{π ∈ NC(n)} Π_{V ∈ π} κ_{|V|}`.
pub fn free_moments_from_cumulants(kappa: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    Ok(*free_moment_sequence(kappa, n)?.last().unwrap())
}

/// Inverse of [`free_moment_sequence`]: `κ_1..=κ_n` from `m_1..=m_n`.
pub fn cumulants_from_moments(moments: &[f64]) -> Result<Vec<f64>> {
    let n = moments.len();
    if n > MAX_PARTITION_N {
        return Err(Error::size(format!("moment order {n} exceeds {MAX_PARTITION_N}")));
    }
    let mut kappa: Vec<f64> = Vec::with_capacity(n);
    for k in 1..=n {
        // m_k depends on κ_k only through the one-block partition.
        let without = free_moments_from_cumulants(&kappa, k)?;
        kappa.push(moments[k - 1] - without);
    }
    Ok(kappa)
}
