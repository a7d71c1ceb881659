use serde::Serialize;

use super::lattice::{pair_sum, Compensated};
use super::limit::{limit_joint_moment, LimitMethod};
use super::model::{CovarianceModel, SlowlyVarying};
use super::{lattice_len, lattice::exact_joint_moment_with, lattice::LatticeOptions};
use crate::error::{Error, Result};
use crate::kernels::ncfbm_cov;
use crate::poly::TchebExpansion;

pub const DEFAULT_TRUNCATION: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltTerm {
    pub s: usize,
    pub a_s: f64,
    /// `Σ_k ρ(k)^s` (truncated where the model has no closed form).
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltVariance {
    /// `Σ_s a_s² σ_s²`.
    pub free: f64,
    /// `Σ_s s! a_s² σ_s²`.
    pub classical: f64,
    /// Bound on the neglected lags, summed over terms (zero for closed forms).
    pub tail_bound: f64,
    pub truncation: u64,
    pub terms: Vec<CltTerm>,
}

fn factorial(s: usize) -> f64 {
    (1..=s).map(|k| k as f64).product()
}

/// `Σ_{|k| <= truncation} ρ(k)^s` plus a bound on the remaining lags.
pub fn sigma_sq(model: &CovarianceModel, s: usize, truncation: u64) -> Result<(f64, f64)> {
    match model {
        CovarianceModel::Delta => Ok((1.0, 0.0)),
        CovarianceModel::Geometric { a } => {
            let x = a.powi(s as i32);
            Ok(((1.0 + x) / (1.0 - x), 0.0))
        }
        CovarianceModel::Table { values } => {
            let mut acc = Compensated::default();
            acc.add(1.0);
            for v in values.iter().skip(1) {
                acc.add(2.0 * v.powi(s as i32));
            }
            Ok((acc.value(), 0.0))
        }
        CovarianceModel::FractionalNoise { h } => {
            let e = s as f64 * (2.0 - 2.0 * h);
            if *h > 0.5 && e <= 1.0 {
                return Err(Error::domain(format!(
                    "Σ ρ(k)^{s} diverges for fractional noise with {s}·(2 - 2H) = {e} <= 1 (long-range dependence; use the non-central normalisation)"
                )));
            }
            let mut acc = Compensated::default();
            acc.add(1.0);
            for k in (1..=truncation).rev() {
                acc.add(2.0 * model.rho(k as i64).powi(s as i32));
            }
            // |ρ(k)| <= H|2H-1| (k-1)^{2H-2} by the mean value theorem
            let c = h * (2.0 * h - 1.0).abs();
            let t = truncation as f64;
            let tail = if e > 1.0 { 2.0 * c.powi(s as i32) * (t - 1.0).max(1.0).powf(1.0 - e) / (e - 1.0) } else { 0.0 };
            Ok((acc.value(), tail))
        }
        CovarianceModel::PowerLaw { d, l } => {
            let e = s as f64 * d;
            if e <= 1.0 {
                return Err(Error::domain(format!(
                    "Σ ρ(k)^{s} diverges for a power law with {s}·D = {e} <= 1 (long-range dependence; use the non-central normalisation)"
                )));
            }
            let mut acc = Compensated::default();
            acc.add(1.0);
            // add small terms first
            for k in (1..=truncation).rev() {
                acc.add(2.0 * model.rho(k as i64).powi(s as i32));
            }
            let t = truncation as f64;
            // ∫_T^∞ x^{-e} L(x)^s dx, with L frozen at its value at T
            let tail = 2.0 * l.eval(t).powi(s as i32).abs() * t.powf(1.0 - e) / (e - 1.0);
            Ok((acc.value(), tail))
        }
    }
}

/// Limit variance of `n^{-1/2} Σ_{k <= n} Q(X_k)` under short-range dependence.
pub fn clt_variance(expansion: &TchebExpansion, model: &CovarianceModel, truncation: u64) -> Result<CltVariance> {
    let Some(rank) = expansion.rank else {
        return Err(Error::domain("the polynomial has no non-constant term (rank undefined)"));
    };
    if let Some((d, _)) = model.power_tail() {
        if rank as f64 * d <= 1.0 {
            return Err(Error::domain(format!(
                "Σ |ρ(k)|^{rank} diverges: rank·D = {} <= 1 puts the model in the long-range regime; use the non-central normalisation",
                rank as f64 * d
            )));
        }
    }
    let mut terms = Vec::new();
    let mut free = 0.0;
    let mut classical = 0.0;
    let mut tail_bound = 0.0;
    for (s, a) in expansion.terms() {
        if s == 0 {
            continue;
        }
        let (sig, tail) = sigma_sq(model, s, truncation)?;
        free += a * a * sig;
        classical += factorial(s) * a * a * sig;
        tail_bound += a * a * tail;
        terms.push(CltTerm { s, a_s: a, sigma_sq: sig });
    }
    Ok(CltVariance { free, classical, tail_bound, truncation, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NcltConstants {
    /// `n^{1 - qD/2} L(n)^{q/2}`.
    pub normalization: f64,
    /// `a_q / sqrt((1 - qD/2)(1 - qD))`.
    pub limit_coeff: f64,
    /// `1 - qD/2`.
    pub h: f64,
}

fn check_long_range(q: usize, d: f64) -> Result<()> {
    if q == 0 {
        return Err(Error::domain("q must be >= 1"));
    }
    if !(d > 0.0 && d * (q as f64) < 1.0) {
        return Err(Error::domain(format!("D must lie in (0, 1/q) = (0, {}), got {d}", 1.0 / q as f64)));
    }
    Ok(())
}

pub fn nclt_constants(q: usize, d: f64, l: &SlowlyVarying, n: u64, a_q: f64) -> Result<NcltConstants> {
    check_long_range(q, d)?;
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    let qd = q as f64 * d;
    let nf = n as f64;
    Ok(NcltConstants {
        normalization: nf.powf(1.0 - qd / 2.0) * l.eval(nf).powf(q as f64 / 2.0),
        limit_coeff: a_q / ((1.0 - qd / 2.0) * (1.0 - qd)).sqrt(),
        h: 1.0 - qd / 2.0,
    })
}

/// `Σ_{j <= [nt]} j^{-qD} L(j)^q` divided by `[nt]^{1-qD} L([nt])^q / (1 - qD)`.
pub fn karamata_ratio(q: usize, d: f64, l: &SlowlyVarying, n: u64, t: f64) -> Result<f64> {
    if q == 0 || !(d > 0.0) {
        return Err(Error::domain("need q >= 1 and D > 0"));
    }
    let qd = q as f64 * d;
    if qd >= 1.0 {
        return Err(Error::domain(format!("Karamata's estimate needs qD < 1, got {qd}")));
    }
    if !(t > 0.0) || n == 0 {
        return Err(Error::domain("need n >= 1 and t > 0"));
    }
    let m = lattice_len(n as usize, t);
    if m == 0 {
        return Err(Error::domain("[nt] = 0"));
    }
    let mut acc = Compensated::default();
    for j in (1..=m).rev() {
        let x = j as f64;
        acc.add(x.powf(-qd) * l.eval(x).powi(q as i32));
    }
    let mf = m as f64;
    Ok(acc.value() / (mf.powf(1.0 - qd) * l.eval(mf).powi(q as i32) / (1.0 - qd)))
}

/// Covariance of `Z_n(t) = n^{-H} L(n)^{-1/2} Σ_{k <= nt} X_k` for a model
/// with a power-law tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZnCovariance {
    pub value: f64,
    /// `V(n) / (n^{2H} L(n))` with `V(m) = Σ_{k,l <= m} ρ(k - l)`.
    pub k_fit: f64,
    /// `k_fit · ncfbm_cov(H, s, t)`.
    pub reference: f64,
    pub h: f64,
}

pub fn zn_covariance(model: &CovarianceModel, n: u64, t: f64, s: f64) -> Result<ZnCovariance> {
    let Some((d, l)) = model.power_tail() else {
        return Err(Error::domain("the Z_n covariance check needs a model with a power-law tail"));
    };
    if !(t > 0.0 && s > 0.0) || n == 0 {
        return Err(Error::domain("need n >= 1 and positive times"));
    }
    let h = 1.0 - d / 2.0;
    let nf = n as f64;
    let scale = nf.powf(2.0 * h) * l.eval(nf);
    let v = |m: usize| pair_sum(1, m, m, model, None);
    let (a, b) = (lattice_len(n as usize, t), lattice_len(n as usize, s));
    let value = (v(a) + v(b) - v(a.abs_diff(b))) / (2.0 * scale);
    let k_fit = v(n as usize) / scale;
    Ok(ZnCovariance { value, k_fit, reference: k_fit * ncfbm_cov(h, s, t)?, h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub scaled_moment: f64,
    pub limit: f64,
    pub abs_err: f64,
}

/// Scaled `p`-th moment `E[V_n(U_q, 1)^p] / norm^p` against its limit
/// `limit_coeff^p φ(R(1)^p)` along a grid of `n`.
pub fn nclt_convergence(
    q: usize,
    d: f64,
    l: &SlowlyVarying,
    p: usize,
    n_grid: &[u64],
    limit_method: LimitMethod,
    budget: u64,
) -> Result<Vec<ConvergenceRow>> {
    check_long_range(q, d)?;
    let model = CovarianceModel::power_law(d, *l)?;
    let h = 1.0 - q as f64 * d / 2.0;
    let base = if p == 2 { 1.0 } else { limit_joint_moment(q, h, &vec![1.0; p], limit_method)?.value };
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let c = nclt_constants(q, d, l, n, 1.0)?;
        let exact =
            exact_joint_moment_with(&vec![q; p], &vec![1.0; p], n as usize, &model, LatticeOptions { budget })?.value;
        let scaled = exact / c.normalization.powi(p as i32);
        let limit = c.limit_coeff.powi(p as i32) * base;
        rows.push(ConvergenceRow { n, scaled_moment: scaled, limit, abs_err: (scaled - limit).abs() });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Basis;
    use approx::assert_relative_eq;

    fn u(k: usize) -> TchebExpansion {
        TchebExpansion::basis_element(Basis::Tchebycheff, k)
    }

    #[test]
    fn closed_forms() {
        let g = CovarianceModel::geometric(0.5).unwrap();
        assert_eq!(clt_variance(&u(1), &g, 10).unwrap().free, 3.0);
        let v = clt_variance(&u(2), &g, 10).unwrap();
        assert_eq!(v.free, 5.0 / 3.0);
        assert_eq!(v.classical, 10.0 / 3.0);
        assert_eq!(v.tail_bound, 0.0);
        let e = TchebExpansion::new(Basis::Tchebycheff, vec![0.0, 0.5, -2.0, 1.5]);
        assert_relative_eq!(clt_variance(&e, &CovarianceModel::Delta, 10).unwrap().free, 0.25 + 4.0 + 2.25);
    }

    #[test]
    fn table_matches_direct_sum() {
        let m = CovarianceModel::table(vec![1.0, 0.5, 0.25]).unwrap();
        let v = clt_variance(&u(2), &m, 10).unwrap();
        assert_relative_eq!(v.free, 1.0 + 2.0 * (0.25 + 0.0625));
    }

    #[test]
    fn power_law_tail() {
        let pl = CovarianceModel::power_law(0.7, SlowlyVarying::one()).unwrap();
        let short = clt_variance(&u(2), &pl, 1_000).unwrap();
        let long = clt_variance(&u(2), &pl, 100_000).unwrap();
        assert!(long.free > short.free);
        assert!(long.free - short.free <= short.tail_bound);
        let e = clt_variance(&u(1), &pl, 10).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
        assert!(clt_variance(&TchebExpansion::new(Basis::Tchebycheff, vec![3.0]), &pl, 10).is_err());
    }

    #[test]
    fn nclt_examples() {
        let c = nclt_constants(2, 0.3, &SlowlyVarying::one(), 10_000, 1.0).unwrap();
        assert_relative_eq!(c.h, 0.7, epsilon = 1e-15);
        assert_relative_eq!(c.limit_coeff, 1.889822365046136, max_relative = 1e-12);
        assert_relative_eq!(c.normalization, 10_000f64.powf(0.7), max_relative = 1e-12);
        assert!(nclt_constants(1, 1.0, &SlowlyVarying::one(), 10, 1.0).is_err());
        assert!(nclt_constants(2, 0.5, &SlowlyVarying::one(), 10, 1.0).is_err());
    }

    #[test]
    fn karamata_small_and_trend() {
        let one = SlowlyVarying::one();
        assert_relative_eq!(karamata_ratio(2, 0.3, &one, 1, 1.0).unwrap(), 1.0 - 0.6, epsilon = 1e-15);
        let r: Vec<f64> = [100u64, 10_000, 1_000_000].iter().map(|&n| karamata_ratio(2, 0.3, &one, n, 1.0).unwrap()).collect();
        assert!((r[0] - 1.0).abs() > (r[1] - 1.0).abs() && (r[1] - 1.0).abs() > (r[2] - 1.0).abs());
        assert!(karamata_ratio(2, 0.5, &one, 10, 1.0).is_err());
    }

    #[test]
    fn zn_covariance_shape() {
        let pl = CovarianceModel::power_law(0.4, SlowlyVarying::one()).unwrap();
        let z = zn_covariance(&pl, 100_000, 1.0, 1.0).unwrap();
        assert_relative_eq!(z.value, z.k_fit, max_relative = 1e-12);
        let k = 2.0 / ((1.0 - 0.4) * (2.0 - 0.4));
        assert!((z.k_fit - k).abs() / k < 0.02);
        let z = zn_covariance(&pl, 100_000, 0.5, 1.0).unwrap();
        assert!((z.value - z.reference).abs() / z.reference < 0.02);
    }

    #[test]
    fn second_moment_converges() {
        let rows =
            nclt_convergence(2, 0.3, &SlowlyVarying::one(), 2, &[1_000, 10_000], LimitMethod::quadrature(), 1 << 40)
                .unwrap();
        assert!(rows[1].abs_err < rows[0].abs_err);
        assert_relative_eq!(rows[0].limit, 1.0 / (0.7 * 0.4), max_relative = 1e-12);
    }
}
