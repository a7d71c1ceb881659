use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::classical::GaussianSequence;
use super::family::correlated_matrices;
use super::matrix::{matrix_poly, MAX_MATRIX_N};
use super::mean_se;
use crate::error::{Error, Result};
use crate::kernels::{discretize_operator, free_cumulants_trace, ncfbm_cov, OperatorKind};
use crate::linalg::Eigensolver;
use crate::moments::{
    clt_variance, exact_joint_moment, lattice_len, nclt_constants, CovarianceModel, DEFAULT_TRUNCATION,
};
use crate::poly::{decompose, Basis, TchebExpansion};
use crate::rng::stream_rng;

pub const DEFAULT_FREE_MATRIX_N: usize = 50;
const MAX_FREE_ENTRIES: usize = 40_000_000;
const MAX_CLASSICAL_LEN: usize = 10_000_000;
const REFERENCE_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Free,
    Classical,
}

impl FromStr for SimKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(SimKind::Free),
            "classical" => Ok(SimKind::Classical),
            _ => Err(Error::Parse(format!("unknown simulation kind '{s}' (expected free or classical)"))),
        }
    }
}

impl fmt::Display for SimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimKind::Free => "free",
            SimKind::Classical => "classical",
        })
    }
}

/// Normalisation regime: `√n` (central) or `n^{1-qD/2} L(n)^{q/2}` (non-central).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Clt,
    Nclt,
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clt" => Ok(Regime::Clt),
            "nclt" => Ok(Regime::Nclt),
            _ => Err(Error::Parse(format!("unknown regime '{s}' (expected clt or nclt)"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Clt => "clt",
            Regime::Nclt => "nclt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitsConfig {
    pub kind: SimKind,
    /// The polynomial `Q`, in any basis; its mean is removed before summing.
    pub expansion: TchebExpansion,
    pub model: CovarianceModel,
    pub n_time: usize,
    /// Matrix dimension of the free simulation.
    pub matrix_n: Option<usize>,
    pub reps: usize,
    pub t_list: Vec<f64>,
    pub seed: u64,
    /// Forces a regime; chosen from the model when absent.
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub quantity: String,
    pub empirical: f64,
    pub stderr: f64,
    /// `NaN` where no reference is available.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitsTable {
    pub rows: Vec<LimitRow>,
    pub regime: Regime,
    pub normalization: f64,
    pub meta: BTreeMap<String, String>,
}

fn factorial(s: usize) -> f64 {
    (1..=s).map(|k| k as f64).product()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Per-replication statistics: `V_t²`, `V_t⁴` for each `t`, then `V_s V_t`
/// for each pair, all before normalisation.
fn stats_from_sums(sums: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = sums.iter().map(|v| v * v).collect();
    out.extend(sums.iter().map(|v| v.powi(4)));
    for i in 0..sums.len() {
        for j in i + 1..sums.len() {
            out.push(sums[i] * sums[j]);
        }
    }
    out
}

fn stats_from_matrices(vs: &[DMatrix<f64>]) -> Vec<f64> {
    let n = vs[0].nrows() as f64;
    let squares: Vec<DMatrix<f64>> = vs.iter().map(|v| v * v).collect();
    let mut out: Vec<f64> = vs.iter().map(|v| v.dot(v) / n).collect();
    out.extend(squares.iter().map(|s| s.dot(s) / n));
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            out.push(vs[i].dot(&vs[j]) / n);
        }
    }
    out
}

/// Empirical normalised moments of `V_n(Q, t) = Σ_{k < [n t]} Q(X_k)` against
/// exact finite-`n` and limiting references.
pub fn simulate_limits(cfg: &LimitsConfig) -> Result<LimitsTable> {
    if cfg.reps < 2 {
        return Err(Error::domain("need at least two replications for a standard error"));
    }
    if cfg.n_time == 0 {
        return Err(Error::domain("n_time must be positive"));
    }
    if cfg.t_list.is_empty() || cfg.t_list.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::domain("times must be positive and finite"));
    }
    let basis = match cfg.kind {
        SimKind::Free => Basis::Tchebycheff,
        SimKind::Classical => Basis::Hermite,
    };
    let mut monomials = cfg.expansion.to_monomials();
    let exp = decompose(&monomials, basis)?;
    monomials[0] -= exp.coeff(0);
    let Some(rank) = exp.rank else {
        return Err(Error::domain("Q is constant; nothing to simulate"));
    };
    let tail = cfg.model.power_tail();
    let long_range = matches!(tail, Some((d, _)) if (rank as f64) * d < 1.0);
    let auto = if long_range { Regime::Nclt } else { Regime::Clt };
    let regime = cfg.regime.unwrap_or(auto);
    if regime != auto {
        return Err(Error::domain(match regime {
            Regime::Clt => format!("central normalisation requested but rank {rank} with this power law has qD < 1"),
            Regime::Nclt => "non-central normalisation needs a power-law tail with qD < 1".to_string(),
        }));
    }
    let weight = |s: usize| match cfg.kind {
        SimKind::Free => 1.0,
        SimKind::Classical => factorial(s),
    };

    let lens: Vec<usize> = cfg.t_list.iter().map(|&t| lattice_len(cfg.n_time, t)).collect();
    let total = *lens.iter().max().unwrap();
    if total == 0 {
        return Err(Error::domain("[n t] is zero for every t"));
    }
    let normalization = match regime {
        Regime::Clt => (cfg.n_time as f64).sqrt(),
        Regime::Nclt => {
            let (d, l) = tail.unwrap();
            nclt_constants(rank, d, &l, cfg.n_time as u64, exp.coeff(rank))?.normalization
        }
    };
    let mut meta = BTreeMap::new();
    meta.insert("kind".to_string(), cfg.kind.to_string());
    meta.insert("regime".to_string(), regime.to_string());
    meta.insert("rank".to_string(), rank.to_string());
    meta.insert("n_time".to_string(), cfg.n_time.to_string());
    meta.insert("reps".to_string(), cfg.reps.to_string());
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta.insert("mean_removed".to_string(), exp.coeff(0).to_string());
    meta.insert("normalization".to_string(), normalization.to_string());

    let seq = GaussianSequence::new(&cfg.model, total)?;
    meta.insert("sequence_method".to_string(), format!("{:?}", seq.method).to_lowercase());
    let per_rep: Vec<Vec<f64>> = match cfg.kind {
        SimKind::Classical => {
            if total > MAX_CLASSICAL_LEN {
                return Err(Error::size(format!("sequence length {total} exceeds {MAX_CLASSICAL_LEN}")));
            }
            (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let x = seq.sample(&mut stream_rng(cfg.seed, r as u64));
                    let mut sums = vec![0.0; lens.len()];
                    let mut acc = 0.0;
                    for (k, xk) in x.iter().enumerate() {
                        acc += horner(&monomials, *xk);
                        for (s, &len) in sums.iter_mut().zip(&lens) {
                            if k + 1 == len {
                                *s = acc;
                            }
                        }
                    }
                    stats_from_sums(&sums)
                })
                .collect()
        }
        SimKind::Free => {
            let n = cfg.matrix_n.unwrap_or(DEFAULT_FREE_MATRIX_N);
            if n < 2 {
                return Err(Error::domain("matrix dimension must be >= 2"));
            }
            if n > MAX_MATRIX_N || total.saturating_mul(n * n) > MAX_FREE_ENTRIES {
                return Err(Error::size(format!(
                    "{total} matrices of size {n} exceed the memory budget of {MAX_FREE_ENTRIES} entries"
                )));
            }
            meta.insert("matrix_n".to_string(), n.to_string());
            if cfg.matrix_n.is_none() {
                meta.insert("matrix_n_default".to_string(), "empirical choice".to_string());
            }
            (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let xs = correlated_matrices(&seq, n, &mut stream_rng(cfg.seed, r as u64));
                    let mut acc = DMatrix::zeros(n, n);
                    let mut vs = vec![DMatrix::zeros(n, n); lens.len()];
                    for (k, xk) in xs.iter().enumerate() {
                        // centre by τ_n: at finite n, τ_n(Q(X_k)) is a_0 + O(1/n), not a_0
                        let mut qk = matrix_poly(xk, &monomials);
                        let shift = qk.trace() / n as f64;
                        for i in 0..n {
                            qk[(i, i)] -= shift;
                        }
                        acc += qk;
                        for (v, &len) in vs.iter_mut().zip(&lens) {
                            if k + 1 == len {
                                *v = acc.clone();
                            }
                        }
                    }
                    stats_from_matrices(&vs)
                })
                .collect()
        }
    };
    let column = |idx: usize, scale: f64| -> (f64, f64) {
        let vals: Vec<f64> = per_rep.iter().map(|v| v[idx] / scale).collect();
        mean_se(&vals)
    };

    // exact finite-n second moments
    let exact = |t1: f64, t2: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (s, a) in exp.terms().filter(|(s, _)| *s >= 1) {
            acc += weight(s) * a * a * exact_joint_moment(&[s, s], &[t1, t2], cfg.n_time, &cfg.model)?.value;
        }
        Ok(acc / (normalization * normalization))
    };
    // limiting second moments and fourth moments
    let (cov_limit, m4_limit): (Box<dyn Fn(f64, f64) -> f64>, Box<dyn Fn(f64) -> Result<f64>>) = match regime {
        Regime::Clt => {
            let v = clt_variance(&exp, &cfg.model, DEFAULT_TRUNCATION)?;
            let sigma = match cfg.kind {
                SimKind::Free => v.free,
                SimKind::Classical => v.classical,
            };
            let gauss4 = match cfg.kind {
                SimKind::Free => 2.0,
                SimKind::Classical => 3.0,
            };
            (Box::new(move |a: f64, b: f64| a.min(b) * sigma), Box::new(move |t: f64| Ok(gauss4 * (t * sigma).powi(2))))
        }
        Regime::Nclt => {
            let (d, l) = tail.unwrap();
            let c = nclt_constants(rank, d, &l, cfg.n_time as u64, exp.coeff(rank))?;
            let (lc2, h) = (c.limit_coeff * c.limit_coeff, c.h);
            let w = weight(rank);
            let kind = cfg.kind;
            let cov = move |a: f64, b: f64| w * lc2 * ncfbm_cov(h, a, b).unwrap_or(f64::NAN);
            let m4 = move |t: f64| -> Result<f64> {
                let v = w * lc2 * t.powf(2.0 * h);
                Ok(match (rank, kind) {
                    (1, SimKind::Free) => 2.0 * v * v,
                    (1, SimKind::Classical) => 3.0 * v * v,
                    (2, _) => {
                        let op = discretize_operator(h, t, REFERENCE_GRID, OperatorKind::Dual)?;
                        let k = free_cumulants_trace(&op, 4, Eigensolver::Auto)?;
                        let (t2, t4) = (k[0].kappa_trace, k[2].kappa_trace);
                        let m = match kind {
                            SimKind::Free => t4 + 2.0 * t2 * t2,
                            SimKind::Classical => 48.0 * t4 + 12.0 * t2 * t2,
                        };
                        lc2 * lc2 * m
                    }
                    _ => f64::NAN,
                })
            };
            (Box::new(cov), Box::new(m4))
        }
    };

    let p = cfg.t_list.len();
    let norm2 = normalization * normalization;
    let mut rows = Vec::new();
    for (i, &t) in cfg.t_list.iter().enumerate() {
        let (e, se) = column(i, norm2);
        rows.push(LimitRow { quantity: format!("m2[t={t}]"), empirical: e, stderr: se, reference: exact(t, t)? });
        rows.push(LimitRow { quantity: format!("m2_limit[t={t}]"), empirical: e, stderr: se, reference: cov_limit(t, t) });
    }
    let mut idx = 2 * p;
    for i in 0..p {
        for j in i + 1..p {
            let (a, b) = (cfg.t_list[i], cfg.t_list[j]);
            let (e, se) = column(idx, norm2);
            rows.push(LimitRow { quantity: format!("m11[t={a},{b}]"), empirical: e, stderr: se, reference: exact(a, b)? });
            idx += 1;
        }
    }
    for (i, &t) in cfg.t_list.iter().enumerate() {
        let (e, se) = column(p + i, norm2 * norm2);
        rows.push(LimitRow { quantity: format!("m4[t={t}]"), empirical: e, stderr: se, reference: m4_limit(t)? });
    }
    Ok(LimitsTable { rows, regime, normalization, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: SimKind, model: CovarianceModel, q: usize) -> LimitsConfig {
        LimitsConfig {
            kind,
            expansion: TchebExpansion::basis_element(Basis::Tchebycheff, q),
            model,
            n_time: 100,
            matrix_n: Some(20),
            reps: 40,
            t_list: vec![0.5, 1.0],
            seed: 3,
            regime: None,
        }
    }

    fn row<'a>(t: &'a LimitsTable, q: &str) -> &'a LimitRow {
        t.rows.iter().find(|r| r.quantity == q).unwrap()
    }

    #[test]
    fn regime_is_chosen_from_the_model() {
        let lr = CovarianceModel::fractional_noise(0.85).unwrap();
        let mut c = cfg(SimKind::Classical, lr.clone(), 2);
        c.reps = 4;
        assert_eq!(simulate_limits(&c).unwrap().regime, Regime::Nclt);
        c.regime = Some(Regime::Clt);
        assert!(matches!(simulate_limits(&c), Err(Error::Domain(_))));
        let mut c = cfg(SimKind::Classical, CovarianceModel::geometric(0.5).unwrap(), 2);
        c.reps = 4;
        c.regime = Some(Regime::Nclt);
        assert!(matches!(simulate_limits(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn classical_second_moment_tracks_exact() {
        let mut c = cfg(SimKind::Classical, CovarianceModel::geometric(0.5).unwrap(), 2);
        c.reps = 400;
        let t = simulate_limits(&c).unwrap();
        for q in ["m2[t=0.5]", "m2[t=1]", "m11[t=0.5,1]"] {
            let r = row(&t, q);
            assert!((r.empirical - r.reference).abs() < 4.0 * r.stderr, "{q}: {r:?}");
        }
        // x² = H_2 + 1 in the Hermite basis: the same table
        let mut d = c.clone();
        d.expansion = TchebExpansion::new(Basis::Hermite, vec![5.0, 0.0, 1.0]);
        assert_eq!(simulate_limits(&d).unwrap().rows, t.rows);
    }

    #[test]
    fn free_second_moment_tracks_exact() {
        let mut c = cfg(SimKind::Free, CovarianceModel::geometric(0.5).unwrap(), 2);
        c.n_time = 40;
        c.reps = 20;
        let t = simulate_limits(&c).unwrap();
        let r = row(&t, "m2[t=1]");
        assert!((r.empirical - r.reference).abs() < 4.0 * r.stderr + 0.05 * r.reference, "{r:?}");
        assert_eq!(t.meta["matrix_n"], "20");
        assert_eq!(simulate_limits(&c).unwrap(), t);
    }

    #[test]
    fn constant_polynomial_is_rejected() {
        let mut c = cfg(SimKind::Free, CovarianceModel::Delta, 0);
        c.expansion = TchebExpansion::new(Basis::Tchebycheff, vec![2.0]);
        assert!(simulate_limits(&c).is_err());
    }
}
