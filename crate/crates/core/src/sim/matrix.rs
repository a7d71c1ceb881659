use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::mean_se;
use crate::error::{Error, Result};
use crate::moments::MomentResult;
use crate::rng::stream_rng;

pub const MAX_MATRIX_N: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixEnsembleConfig {
    pub n: usize,
    pub times: Vec<f64>,
    pub seed: u64,
    pub reps: usize,
}

impl MatrixEnsembleConfig {
    pub fn new(n: usize, times: Vec<f64>, seed: u64, reps: usize) -> Result<Self> {
        let cfg = MatrixEnsembleConfig { n, times, seed, reps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain(format!("matrix dimension must be >= 2, got {}", self.n)));
        }
        if self.n > MAX_MATRIX_N {
            return Err(Error::size(format!("matrix dimension {} exceeds {MAX_MATRIX_N}", self.n)));
        }
        if self.reps == 0 {
            return Err(Error::domain("reps must be >= 1"));
        }
        if self.times.is_empty() {
            return Err(Error::domain("need at least one time"));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::domain("times must be finite and non-negative"));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("times must be strictly increasing"));
        }
        Ok(())
    }

    /// Lengths of the increments `(t_{i-1}, t_i]`, with `t_{-1} = 0`.
    pub fn increment_lengths(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::domain(format!("t = {t} is not one of the configured times")))
    }
}

/// `(A + Aᵀ)/√2` with `A` an `n × n` matrix of independent `N(0, dt/n)` entries.
pub fn goe_increment<R: Rng + ?Sized>(rng: &mut R, n: usize, dt: f64) -> DMatrix<f64> {
    let sd = (dt / n as f64).sqrt();
    let a = DMatrix::from_fn(n, n, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) * s)
}

/// Independent increments `M(t_i) - M(t_{i-1})` of one replication, up to
/// and including index `upto`.
pub fn sample_increments(cfg: &MatrixEnsembleConfig, rep: usize, upto: usize) -> Vec<DMatrix<f64>> {
    let mut rng = stream_rng(cfg.seed, rep as u64);
    cfg.increment_lengths()
        .into_iter()
        .take(upto + 1)
        .map(|dt| if dt > 0.0 { goe_increment(&mut rng, cfg.n, dt) } else { DMatrix::zeros(cfg.n, cfg.n) })
        .collect()
}

/// `M(t_0), …, M(t_k)` of one replication.
pub fn sample_rep(cfg: &MatrixEnsembleConfig, rep: usize) -> Vec<DMatrix<f64>> {
    let mut cur = DMatrix::zeros(cfg.n, cfg.n);
    sample_increments(cfg, rep, cfg.times.len() - 1)
        .into_iter()
        .map(|d| {
            cur += d;
            cur.clone()
        })
        .collect()
}

/// Matrix Brownian motion at the configured times, one list per replication.
pub fn sample_matrix_bm(cfg: &MatrixEnsembleConfig) -> Result<Vec<Vec<DMatrix<f64>>>> {
    cfg.validate()?;
    Ok((0..cfg.reps).into_par_iter().map(|r| sample_rep(cfg, r)).collect())
}

/// `(1/n) Tr M`.
pub fn trace_state(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::domain(format!("trace state needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Err(Error::domain("trace state of an empty matrix"));
    }
    Ok(m.trace() / m.nrows() as f64)
}

/// `Σ_k c_k M^k` by Horner's rule.
pub fn matrix_poly(m: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    let mut p = DMatrix::zeros(n, n);
    for (k, &c) in coeffs.iter().enumerate().rev() {
        if k + 1 < coeffs.len() {
            p = &p * m;
        }
        for i in 0..n {
            p[(i, i)] += c;
        }
    }
    p
}

/// `τ(Q(M))` for symmetric `M`, saving the last multiplication.
pub fn poly_trace_state(m: &DMatrix<f64>, coeffs: &[f64]) -> f64 {
    let n = m.nrows() as f64;
    match coeffs.len() {
        0 => 0.0,
        1 => coeffs[0],
        _ => {
            let head = matrix_poly(m, &coeffs[1..]);
            coeffs[0] + head.dot(m) / n
        }
    }
}

/// Replication mean and standard error of `τ_n(Q(M_n(t)))`.
pub fn estimate_poly_moment(cfg: &MatrixEnsembleConfig, poly: &[f64], t: f64) -> Result<MomentResult> {
    cfg.validate()?;
    let idx = cfg.time_index(t)?;
    let vals: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let m = sample_increments(cfg, r, idx).into_iter().reduce(|a, b| a + b).unwrap();
            poly_trace_state(&m, poly)
        })
        .collect();
    let (mean, se) = mean_se(&vals);
    Ok(MomentResult::mc(mean, se, cfg.reps as u64, cfg.seed).with_meta("n", cfg.n).with_meta("t", t))
}

/// `τ_n(P_1 ⋯ P_m)` with `P_j = Q_j(ΔM_{w_j}) - c_j`, where `c_j` is the
/// replication mean of `τ_n(Q_j(ΔM_{w_j}))` and `w` indexes increments.
pub fn alternating_moment(cfg: &MatrixEnsembleConfig, polys: &[Vec<f64>], word: &[usize]) -> Result<MomentResult> {
    cfg.validate()?;
    if polys.len() != word.len() {
        return Err(Error::domain("need one increment index per polynomial"));
    }
    if word.len() < 2 {
        return Err(Error::domain("an alternating product needs at least two factors"));
    }
    let lens = cfg.increment_lengths();
    for &w in word {
        if w >= lens.len() {
            return Err(Error::domain(format!("increment {w} does not exist ({} configured)", lens.len())));
        }
        if lens[w] <= 0.0 {
            return Err(Error::domain(format!("increment {w} has zero length")));
        }
    }
    if let Some(k) = word.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::domain(format!(
            "factors {} and {} use the same increment; alternating products need i_j != i_(j+1)",
            k + 1,
            k + 2
        )));
    }
    let upto = *word.iter().max().unwrap();
    let n = cfg.n;
    let factors = |r: usize| -> Vec<DMatrix<f64>> {
        let inc = sample_increments(cfg, r, upto);
        let mut cache: Vec<(usize, usize, DMatrix<f64>)> = Vec::new();
        polys
            .iter()
            .zip(word)
            .enumerate()
            .map(|(j, (p, &w))| {
                if let Some((_, _, m)) = cache.iter().find(|(pj, pw, _)| polys[*pj] == *p && *pw == w) {
                    return m.clone();
                }
                let m = matrix_poly(&inc[w], p);
                cache.push((j, w, m.clone()));
                m
            })
            .collect()
    };
    // first pass: centring constants
    let traces: Vec<Vec<f64>> =
        (0..cfg.reps).into_par_iter().map(|r| factors(r).iter().map(|m| m.trace() / n as f64).collect()).collect();
    let centre: Vec<f64> =
        (0..polys.len()).map(|j| traces.iter().map(|t| t[j]).sum::<f64>() / cfg.reps as f64).collect();
    let vals: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut fs = factors(r);
            for (m, c) in fs.iter_mut().zip(&centre) {
                for i in 0..n {
                    m[(i, i)] -= c;
                }
            }
            let last = fs.pop().unwrap();
            let mut prod = fs[0].clone();
            for f in &fs[1..] {
                prod = &prod * f;
            }
            prod.dot(&last) / n as f64
        })
        .collect();
    let (mean, se) = mean_se(&vals);
    Ok(MomentResult::mc(mean, se, cfg.reps as u64, cfg.seed)
        .with_meta("n", n)
        .with_meta("word", word.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")))
}

/// Alternating centred products over each pair of consecutive increments.
pub fn asymptotic_freeness_check(cfg: &MatrixEnsembleConfig, polys: &[Vec<f64>]) -> Result<Vec<MomentResult>> {
    if cfg.times.len() < 2 {
        return Err(Error::domain("the freeness check needs at least two times"));
    }
    (0..cfg.times.len() - 1)
        .map(|i| {
            let word: Vec<usize> = (0..polys.len()).map(|j| i + j % 2).collect();
            alternating_moment(cfg, polys, &word)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freecalc::SemicircleLaw;

    fn cfg(n: usize, times: Vec<f64>, reps: usize) -> MatrixEnsembleConfig {
        MatrixEnsembleConfig::new(n, times, 11, reps).unwrap()
    }

    #[test]
    fn config_checks() {
        assert!(MatrixEnsembleConfig::new(1, vec![1.0], 0, 1).is_err());
        assert!(MatrixEnsembleConfig::new(4, vec![1.0, 1.0], 0, 1).is_err());
        assert!(MatrixEnsembleConfig::new(4, vec![1.0], 0, 0).is_err());
        assert!(matches!(MatrixEnsembleConfig::new(5000, vec![1.0], 0, 1), Err(Error::Size(_))));
    }

    #[test]
    fn symmetric_and_reproducible() {
        let c = cfg(20, vec![0.5, 1.0], 3);
        let a = sample_matrix_bm(&c).unwrap();
        let b = sample_matrix_bm(&c).unwrap();
        assert_eq!(a, b);
        for m in a.iter().flatten() {
            assert_eq!(m, &m.transpose());
        }
        assert_ne!(a[0][0], a[1][0]);
    }

    #[test]
    fn entry_variances() {
        let n = 40;
        let c = cfg(n, vec![2.0], 200);
        let ms = sample_matrix_bm(&c).unwrap();
        let (mut off, mut diag) = (0.0, 0.0);
        for m in ms.iter().map(|r| &r[0]) {
            off += m[(0, 1)].powi(2);
            diag += m[(3, 3)].powi(2);
        }
        let off = off / 200.0 * n as f64;
        let diag = diag / 200.0 * n as f64;
        assert!((off - 2.0).abs() < 0.5, "{off}");
        assert!((diag - 4.0).abs() < 1.0, "{diag}");
    }

    #[test]
    fn increment_has_the_right_scale() {
        let c = cfg(100, vec![1.0, 2.5], 20);
        let vals: Vec<f64> = (0..20)
            .map(|r| {
                let m = sample_rep(&c, r);
                let d = &m[1] - &m[0];
                trace_state(&(&d * &d)).unwrap()
            })
            .collect();
        let (mean, se) = mean_se(&vals);
        assert!((mean - 1.5).abs() < 0.05 + 3.0 * se, "{mean}");
    }

    #[test]
    fn trace_state_basics() {
        assert_eq!(trace_state(&DMatrix::identity(7, 7)).unwrap(), 1.0);
        assert!(trace_state(&DMatrix::zeros(2, 3)).is_err());
        let c = cfg(30, vec![1.0], 2);
        let m = sample_rep(&c, 0);
        let k = sample_rep(&c, 1);
        let ab = trace_state(&(&m[0] * &k[0])).unwrap();
        let ba = trace_state(&(&k[0] * &m[0])).unwrap();
        assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn horner_matches_powers() {
        let c = cfg(12, vec![1.0], 1);
        let m = &sample_rep(&c, 0)[0];
        let p = [1.0, -2.0, 0.5, 3.0];
        let direct = DMatrix::identity(12, 12) * 1.0 - m * 2.0 + m * m * 0.5 + m * m * m * 3.0;
        assert!((matrix_poly(m, &p) - &direct).abs().max() < 1e-12);
        assert!((poly_trace_state(m, &p) - direct.trace() / 12.0).abs() < 1e-12);
    }

    #[test]
    fn affine_image_is_semicircular() {
        let c = cfg(150, vec![1.0], 30);
        let law = SemicircleLaw::new(0.5, 4.0).unwrap();
        // a M + b with a = 2, b = 0.5: (a x + b)^k expanded
        for k in 1..=4usize {
            let mut coeffs = vec![0.0; k + 1];
            for (j, c) in coeffs.iter_mut().enumerate() {
                let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
                *c = binom * 2f64.powi(j as i32) * 0.5f64.powi((k - j) as i32);
            }
            let r = estimate_poly_moment(&c, &coeffs, 1.0).unwrap();
            // GOE moments carry an O(1/n) bias
            let tol = 3.0 * r.se() + 0.05 * law.moment(k).abs().max(1.0);
            assert!((r.value - law.moment(k)).abs() < tol, "k={k}: {} vs {}", r.value, law.moment(k));
        }
    }

    #[test]
    fn freeness_preconditions() {
        let c = cfg(10, vec![1.0, 2.0], 2);
        let q = vec![0.0, 0.0, 1.0];
        assert!(alternating_moment(&c, &[q.clone(), q.clone()], &[0, 0]).is_err());
        assert!(asymptotic_freeness_check(&cfg(10, vec![1.0], 2), &[q.clone(), q.clone()]).is_err());
        let z = cfg(10, vec![0.0, 2.0], 2);
        assert!(alternating_moment(&z, &[q.clone(), q.clone()], &[0, 1]).is_err());
        assert_eq!(asymptotic_freeness_check(&c, &[q.clone(), q]).unwrap().len(), 1);
    }

    #[test]
    fn centred_product_of_two_is_small() {
        // τ(P Q) = τ(P) τ(Q) + O(1/n) for independent increments, and the
        // centring makes the first term vanish
        let c = cfg(60, vec![1.0, 2.0], 40);
        let q = vec![0.0, 0.0, 1.0];
        let r = alternating_moment(&c, &[q.clone(), q], &[0, 1]).unwrap();
        assert!(r.value.abs() < 4.0 * r.se() + 0.01, "{} ± {}", r.value, r.se());
    }
}
