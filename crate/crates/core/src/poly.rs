//! Tchebycheff (second kind) and Hermite polynomial algebra.
//!
//! Both families are monic and generated by three-term recursions:
//!
//! ```text
//! x U_k(x) = U_{k+1}(x) + U_{k-1}(x),       U_0 = 1, U_1 = x
//! x H_k(x) = H_{k+1}(x) + k H_{k-1}(x),     H_0 = 1, H_1 = x
//! ```
//!
//! Evaluation is generic over the scalar type so that the same recursion
//! runs in `f64` and in exact rationals. Basis conversion is always carried
//! out in exact arithmetic: `f64` inputs are dyadic rationals and convert
//! losslessly, so the rank of a polynomial is never an artefact of rounding.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest degree accepted by [`decompose`] unless overridden.
pub const DEFAULT_MAX_DEGREE: usize = 64;
/// Coefficients below this magnitude are treated as zero when computing a rank.
pub const DEFAULT_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Tchebycheff,
    Hermite,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Tchebycheff => f.write_str("tcheb"),
            Basis::Hermite => f.write_str("hermite"),
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcheb" | "tchebycheff" | "chebyshev" | "u" => Ok(Basis::Tchebycheff),
            "hermite" | "h" => Ok(Basis::Hermite),
            other => Err(Error::Parse(format!("unknown basis `{other}` (expected tcheb|hermite)"))),
        }
    }
}

/// `U_k(x)` by the three-term recursion.
pub fn tcheb_u<T>(k: usize, x: T) -> T
where
    T: Num + Clone,
{
    let mut prev = T::one();
    if k == 0 {
        return prev;
    }
    let mut cur = x.clone();
    for _ in 1..k {
        let next = x.clone() * cur.clone() - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_k(x)` (probabilists' Hermite) by the three-term recursion.
pub fn hermite_h<T>(k: usize, x: T) -> T
where
    T: Num + Clone + FromPrimitive,
{
    let mut prev = T::one();
    if k == 0 {
        return prev;
    }
    let mut cur = x.clone();
    for j in 1..k {
        let jj = T::from_usize(j).expect("degree fits the scalar type");
        let next = x.clone() * cur.clone() - jj * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Evaluates the `k`-th member of `basis` at `x`.
pub fn eval_basis(basis: Basis, k: usize, x: f64) -> f64 {
    match basis {
        Basis::Tchebycheff => tcheb_u(k, x),
        Basis::Hermite => hermite_h(k, x),
    }
}

/// Monomial coefficients (index = power) of every basis polynomial up to `max_degree`.
///
/// Row `k` has length `k + 1`; the entries are integers for both families.
pub fn basis_table(basis: Basis, max_degree: usize) -> Vec<Vec<BigInt>> {
    let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(max_degree + 1);
    rows.push(vec![BigInt::one()]);
    if max_degree == 0 {
        return rows;
    }
    rows.push(vec![BigInt::zero(), BigInt::one()]);
    for k in 1..max_degree {
        let weight = match basis {
            Basis::Tchebycheff => BigInt::one(),
            Basis::Hermite => BigInt::from(k),
        };
        let mut next = vec![BigInt::zero(); k + 2];
        for (d, c) in rows[k].iter().enumerate() {
            next[d + 1] += c;
        }
        for (d, c) in rows[k - 1].iter().enumerate() {
            next[d] -= &weight * c;
        }
        rows.push(next);
    }
    rows
}

/// Monomial coefficients of a single basis polynomial, as `f64`.
pub fn basis_monomials(basis: Basis, k: usize) -> Vec<f64> {
    basis_table(basis, k)
        .pop()
        .unwrap()
        .iter()
        .map(|c| c.to_f64().unwrap())
        .collect()
}

/// A polynomial expressed in the Tchebycheff or Hermite basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TchebExpansion {
    /// `coeffs[s]` is the coefficient of the degree-`s` basis element.
    pub coeffs: Vec<f64>,
    pub basis: Basis,
    /// Smallest `s >= 1` with a non-zero coefficient.
    pub rank: Option<usize>,
}

impl TchebExpansion {
    /// Builds an expansion from basis coefficients, snapping tiny entries to zero.
    pub fn new(basis: Basis, coeffs: Vec<f64>) -> Self {
        Self::with_snap(basis, coeffs, DEFAULT_SNAP)
    }

    pub fn with_snap(basis: Basis, mut coeffs: Vec<f64>, snap: f64) -> Self {
        for c in coeffs.iter_mut() {
            if c.abs() < snap {
                *c = 0.0;
            }
        }
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        let rank = coeffs.iter().enumerate().skip(1).find(|(_, c)| **c != 0.0).map(|(s, _)| s);
        TchebExpansion { coeffs, basis, rank }
    }

    /// The single basis element of degree `k`.
    pub fn basis_element(basis: Basis, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Self::new(basis, coeffs)
    }

    pub fn coeff(&self, s: usize) -> f64 {
        self.coeffs.get(s).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Non-zero `(s, a_s)` pairs in increasing degree.
    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs.iter().copied().enumerate().filter(|(_, c)| *c != 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms().map(|(s, a)| a * eval_basis(self.basis, s, x)).sum()
    }

    /// Monomial coefficients of the represented polynomial.
    pub fn to_monomials(&self) -> Vec<f64> {
        let exact: Vec<BigRational> = self
            .coeffs
            .iter()
            .map(|c| BigRational::from_float(*c).expect("finite coefficient"))
            .collect();
        reconstruct_exact(self.basis, &exact).iter().map(rational_to_f64).collect()
    }
}

/// Exact counterpart of [`TchebExpansion`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactExpansion {
    pub coeffs: Vec<BigRational>,
    pub basis: Basis,
    pub rank: Option<usize>,
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Converts monomial coefficients to `basis` by back-substitution against the
/// recursion-generated (monic, lower-triangular) basis table.
pub fn decompose_exact(monomials: &[BigRational], basis: Basis) -> ExactExpansion {
    let mut rest: Vec<BigRational> = monomials.to_vec();
    while rest.len() > 1 && rest.last().unwrap().is_zero() {
        rest.pop();
    }
    if rest.is_empty() {
        rest.push(BigRational::zero());
    }
    let degree = rest.len() - 1;
    let table = basis_table(basis, degree);
    let mut coeffs = vec![BigRational::zero(); degree + 1];
    for s in (0..=degree).rev() {
        let a = rest[s].clone();
        if a.is_zero() {
            continue;
        }
        for (d, c) in table[s].iter().enumerate() {
            rest[d] -= &a * BigRational::from_integer(c.clone());
        }
        coeffs[s] = a;
    }
    let rank = coeffs.iter().enumerate().skip(1).find(|(_, c)| !c.is_zero()).map(|(s, _)| s);
    ExactExpansion { coeffs, basis, rank }
}

/// Inverse of [`decompose_exact`]: basis coefficients back to monomials.
pub fn reconstruct_exact(basis: Basis, coeffs: &[BigRational]) -> Vec<BigRational> {
    if coeffs.is_empty() {
        return vec![BigRational::zero()];
    }
    let degree = coeffs.len() - 1;
    let table = basis_table(basis, degree);
    let mut out = vec![BigRational::zero(); degree + 1];
    for (s, a) in coeffs.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        for (d, c) in table[s].iter().enumerate() {
            out[d] += a * BigRational::from_integer(c.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct DecomposeOptions {
    pub max_degree: usize,
    pub snap: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { max_degree: DEFAULT_MAX_DEGREE, snap: DEFAULT_SNAP }
    }
}

/// Expresses the polynomial `Σ c_d x^d` in `basis`.
pub fn decompose(monomials: &[f64], basis: Basis) -> Result<TchebExpansion> {
    decompose_with(monomials, basis, DecomposeOptions::default())
}

pub fn decompose_with(monomials: &[f64], basis: Basis, opts: DecomposeOptions) -> Result<TchebExpansion> {
    let mut exact = Vec::with_capacity(monomials.len());
    for (d, c) in monomials.iter().enumerate() {
        let r = BigRational::from_float(*c)
            .ok_or_else(|| Error::domain(format!("coefficient of x^{d} is not finite")))?;
        exact.push(r);
    }
    while exact.len() > 1 && exact.last().unwrap().is_zero() {
        exact.pop();
    }
    let degree = exact.len().saturating_sub(1);
    if degree > opts.max_degree {
        return Err(Error::size(format!(
            "polynomial degree {degree} exceeds the configured maximum {}",
            opts.max_degree
        )));
    }
    let e = decompose_exact(&exact, basis);
    let coeffs = e.coeffs.iter().map(rational_to_f64).collect();
    Ok(TchebExpansion::with_snap(basis, coeffs, opts.snap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn low_order_values() {
        assert_eq!(tcheb_u(0, 7.3), 1.0);
        assert_eq!(tcheb_u(3, 2.0), 4.0);
        assert_eq!(hermite_h(2, 0.0), -1.0);
        assert_eq!(hermite_h(3, 1.0), -2.0);
        assert_eq!(hermite_h(0, -5.5), 1.0);
        assert_eq!(tcheb_u(3, q(2)), q(4));
    }

    #[test]
    fn basis_tables_match_known_polynomials() {
        let u = basis_table(Basis::Tchebycheff, 4);
        assert_eq!(u[2], vec![BigInt::from(-1), BigInt::from(0), BigInt::from(1)]);
        assert_eq!(u[4], [1, 0, -3, 0, 1].iter().map(|&c| BigInt::from(c)).collect::<Vec<_>>());
        let h = basis_table(Basis::Hermite, 4);
        assert_eq!(h[4], [3, 0, -6, 0, 1].iter().map(|&c| BigInt::from(c)).collect::<Vec<_>>());
    }

    #[test]
    fn x_squared_in_tcheb_basis() {
        let e = decompose(&[0.0, 0.0, 1.0], Basis::Tchebycheff).unwrap();
        assert_eq!(e.coeffs, vec![1.0, 0.0, 1.0]);
        assert_eq!(e.rank, Some(2));
    }

    #[test]
    fn rank_differs_between_bases() {
        let p = [1.0, 0.0, -3.0, 0.0, 1.0];
        let t = decompose(&p, Basis::Tchebycheff).unwrap();
        assert_eq!(t.coeffs, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t.rank, Some(4));
        let h = decompose(&p, Basis::Hermite).unwrap();
        assert_eq!(h.coeffs, vec![1.0, 0.0, 3.0, 0.0, 1.0]);
        assert_eq!(h.rank, Some(2));
    }

    #[test]
    fn basis_element_round_trip() {
        let u3 = basis_monomials(Basis::Tchebycheff, 3);
        assert_eq!(u3, vec![0.0, -2.0, 0.0, 1.0]);
        let e = decompose(&u3, Basis::Tchebycheff).unwrap();
        assert_eq!(e.coeffs, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(e.rank, Some(3));
    }

    #[test]
    fn constant_polynomial_has_no_rank() {
        let e = decompose(&[2.5], Basis::Tchebycheff).unwrap();
        assert_eq!(e.rank, None);
        assert_eq!(e.coeff(0), 2.5);
    }

    #[test]
    fn degree_limit_is_enforced() {
        let mut p = vec![0.0; 66];
        p[65] = 1.0;
        assert!(matches!(decompose(&p, Basis::Hermite), Err(Error::Size(_))));
    }

    #[test]
    fn snapping_threshold() {
        let e = TchebExpansion::new(Basis::Tchebycheff, vec![0.0, 1e-14, 0.5]);
        assert_eq!(e.rank, Some(2));
        let e = TchebExpansion::with_snap(Basis::Tchebycheff, vec![0.0, 1e-14, 0.5], 1e-16);
        assert_eq!(e.rank, Some(1));
    }

    #[test]
    fn recursion_residuals_small() {
        let mut x = -3.0;
        while x <= 3.0 {
            for k in 1..20 {
                let r = x * tcheb_u(k, x) - tcheb_u(k + 1, x) - tcheb_u(k - 1, x);
                assert!(r.abs() <= 1e-10 * (1.0 + tcheb_u(k + 1, x).abs()), "U k={k} x={x} r={r}");
                let r = x * hermite_h(k, x) - hermite_h(k + 1, x) - (k as f64) * hermite_h(k - 1, x);
                assert!(r.abs() <= 1e-10 * (1.0 + hermite_h(k + 1, x).abs()), "H k={k} x={x} r={r}");
            }
            x += 0.0625;
        }
    }

    proptest! {
        #[test]
        fn exact_round_trip(coeffs in proptest::collection::vec(-50i64..50, 1..13), hermite in any::<bool>()) {
            let basis = if hermite { Basis::Hermite } else { Basis::Tchebycheff };
            let mono: Vec<BigRational> = coeffs.iter().map(|&c| q(c)).collect();
            let e = decompose_exact(&mono, basis);
            let mut back = reconstruct_exact(basis, &e.coeffs);
            let mut want = mono.clone();
            while want.len() > 1 && want.last().unwrap().is_zero() { want.pop(); }
            back.truncate(want.len().max(1));
            prop_assert_eq!(back, want);
        }

        #[test]
        fn u4_recursion(x in -3.0f64..3.0) {
            let r = tcheb_u(4, x) - (x * tcheb_u(3, x) - tcheb_u(2, x));
            prop_assert!(r.abs() <= 1e-12);
        }

        #[test]
        fn float_round_trip(coeffs in proptest::collection::vec(-4.0f64..4.0, 1..10)) {
            let e = decompose(&coeffs, Basis::Tchebycheff).unwrap();
            let back = e.to_monomials();
            for (d, c) in coeffs.iter().enumerate() {
                let b = back.get(d).copied().unwrap_or(0.0);
                prop_assert!((b - c).abs() <= 1e-12, "degree {} got {} want {}", d, b, c);
            }
        }
    }
}
