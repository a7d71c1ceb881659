//! Symmetric eigenvalues.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Above this dimension [`Eigensolver::Auto`] switches to tridiagonal QR.
pub const AUTO_JACOBI_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Eigensolver {
    /// Cyclic Jacobi rotations.
    Jacobi,
    /// Householder tridiagonalisation followed by implicit QR (nalgebra).
    Tridiagonal,
    /// Jacobi up to [`AUTO_JACOBI_LIMIT`], tridiagonal above.
    #[default]
    Auto,
}

impl std::str::FromStr for Eigensolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(Eigensolver::Jacobi),
            "tridiagonal" | "qr" => Ok(Eigensolver::Tridiagonal),
            "auto" => Ok(Eigensolver::Auto),
            other => Err(Error::Parse(format!("unknown eigensolver `{other}` (expected jacobi|tridiagonal|auto)"))),
        }
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>, solver: Eigensolver) -> Result<Vec<f64>> {
    let use_jacobi = match solver {
        Eigensolver::Jacobi => true,
        Eigensolver::Tridiagonal => false,
        Eigensolver::Auto => a.nrows() <= AUTO_JACOBI_LIMIT,
    };
    let mut vals = if use_jacobi {
        jacobi_eigenvalues(a, JACOBI_TOL, JACOBI_MAX_SWEEPS)?.0
    } else {
        a.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(|x, y| x.total_cmp(y));
    Ok(vals)
}

/// Cyclic Jacobi: returns the eigenvalues (unsorted) and the number of sweeps.
///
/// Converges when the off-diagonal Frobenius norm drops below `tol` times
/// the Frobenius norm of `a`.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>, tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::domain(format!("matrix must be square, got {}x{}", n, a.ncols())));
    }
    let mut m: Vec<f64> = a.iter().copied().collect(); // column-major, symmetric
    let idx = |i: usize, j: usize| j * n + i;
    let total: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let off = |m: &[f64]| {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..j {
                s += 2.0 * m[idx(i, j)] * m[idx(i, j)];
            }
        }
        s.sqrt()
    };
    for sweep in 0..=max_sweeps {
        if off(&m) <= tol * total {
            return Ok(((0..n).map(|i| m[idx(i, i)]).collect(), sweep));
        }
        if sweep == max_sweeps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[idx(k, p)];
                    let akq = m[idx(k, q)];
                    m[idx(k, p)] = c * akp - s * akq;
                    m[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[idx(p, k)];
                    let aqk = m[idx(q, k)];
                    m[idx(p, k)] = c * apk - s * aqk;
                    m[idx(q, k)] = s * apk + c * aqk;
                }
                m[idx(p, q)] = 0.0;
                m[idx(q, p)] = 0.0;
            }
        }
    }
    Err(Error::Accuracy(format!(
        "Jacobi eigensolver did not converge after {max_sweeps} sweeps (off-diagonal norm {:.3e})",
        off(&m)
    )))
}
