use rayon::prelude::*;

use super::model::CovarianceModel;
use super::{lattice_len, MomentResult};
use crate::combinat::{enumerate_contractions, BlockProfile};
use crate::error::{Error, Result};

/// Default cap on `Π [n t_i]` for a lattice sum.
pub const DEFAULT_LATTICE_BUDGET: u64 = 1_000_000_000;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeOptions {
    pub budget: u64,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions { budget: DEFAULT_LATTICE_BUDGET }
    }
}

/// Per-term edge lists `(i, j, α_ij)`, `i < j`, for every `r ∈ B(q_p)`.
fn scalar_terms(q_list: &[usize]) -> Result<Vec<Vec<(usize, usize, u32)>>> {
    let profile = BlockProfile::new(q_list.to_vec())?;
    Ok(enumerate_contractions(&profile, true)?
        .into_iter()
        .map(|c| c.alpha.expect("scalar contraction").edges())
        .collect())
}

fn check_inputs(q_list: &[usize], t_list: &[f64], n: usize) -> Result<Vec<usize>> {
    if q_list.len() != t_list.len() {
        return Err(Error::domain(format!(
            "q_list has {} entries but t_list has {}",
            q_list.len(),
            t_list.len()
        )));
    }
    if q_list.len() < 2 {
        return Err(Error::domain("joint moments need p >= 2 factors"));
    }
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    if let Some(t) = t_list.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::domain(format!("times must be positive, got {t}")));
    }
    Ok(t_list.iter().map(|&t| lattice_len(n, t)).collect())
}

/// Lattice totals: the full sum and the part on near-diagonal points.
struct Sums {
    total: f64,
    near: f64,
}

fn lattice_sums(
    q_list: &[usize],
    lens: &[usize],
    model: &CovarianceModel,
    opts: LatticeOptions,
    track_near: bool,
) -> Result<Sums> {
    let p = q_list.len();
    let points: f64 = lens.iter().map(|&l| l as f64).product();
    // the p = 2 path is a Toeplitz sum of O(n) work; only enumeration is budgeted
    if p > 2 && points > opts.budget as f64 {
        return Err(Error::size(format!(
            "lattice has {points:.3e} points, above the budget of {:.3e}; use a smaller n or raise the budget",
            opts.budget as f64
        )));
    }
    if q_list.iter().sum::<usize>() % 2 == 1 || points == 0.0 {
        return Ok(Sums { total: 0.0, near: 0.0 });
    }
    let terms = scalar_terms(q_list)?;
    if terms.is_empty() {
        return Ok(Sums { total: 0.0, near: 0.0 });
    }
    if p == 2 && !track_near {
        return Ok(Sums { total: pair_sum(terms[0][0].2 as i32, lens[0], lens[1], model, None), near: 0.0 });
    }
    if p == 2 {
        let a = terms[0][0].2 as i32;
        let total = pair_sum(a, lens[0], lens[1], model, None);
        let near = pair_sum(a, lens[0], lens[1], model, Some(2));
        return Ok(Sums { total, near });
    }

    let max_len = *lens.iter().max().unwrap();
    let max_alpha = terms.iter().flatten().map(|e| e.2).max().unwrap_or(1) as usize;
    let off = max_len as i64;
    // pow[a][x + off] = ρ(x)^a
    let base: Vec<f64> = (-off..=off).map(|x| model.rho(x)).collect();
    let mut pow: Vec<Vec<f64>> = vec![vec![1.0; base.len()]];
    for a in 1..=max_alpha {
        pow.push(pow[a - 1].iter().zip(&base).map(|(x, b)| x * b).collect());
    }
    let last = p - 1;
    // Edges split into the ones among the outer indices and the ones touching the last.
    let split: Vec<(Vec<(usize, usize, usize)>, Vec<(usize, usize)>)> = terms
        .iter()
        .map(|edges| {
            let inner: Vec<(usize, usize, usize)> =
                edges.iter().filter(|e| e.1 != last).map(|e| (e.0, e.1, e.2 as usize)).collect();
            let tail: Vec<(usize, usize)> = edges.iter().filter(|e| e.1 == last).map(|e| (e.0, e.2 as usize)).collect();
            (inner, tail)
        })
        .collect();
    let n_last = lens[last];

    let row = |k0: usize| -> (f64, f64) {
        let mut total = Compensated::default();
        let mut near = Compensated::default();
        let mut k = vec![0usize; p - 1];
        k[0] = k0;
        let mut scratch = vec![0.0; n_last];
        loop {
            let outer_near = track_near && {
                let mut hit = false;
                for i in 0..(p - 1) {
                    for j in (i + 1)..(p - 1) {
                        if k[i].abs_diff(k[j]) <= 2 {
                            hit = true;
                        }
                    }
                }
                hit
            };
            let mut point_total = 0.0;
            let mut point_near = 0.0;
            for (inner, tail) in &split {
                let mut partial = 1.0;
                for &(i, j, a) in inner {
                    partial *= pow[a][(k[i] as i64 - k[j] as i64 + off) as usize];
                }
                if partial == 0.0 {
                    continue;
                }
                if !track_near {
                    point_total += partial * tail_sum(tail, &k, &pow, off, n_last);
                    continue;
                }
                scratch.iter_mut().for_each(|x| *x = 1.0);
                for &(i, a) in tail {
                    let start = (off - k[i] as i64) as usize;
                    for (x, y) in scratch.iter_mut().zip(&pow[a][start..start + n_last]) {
                        *x *= y;
                    }
                }
                let mut s = 0.0;
                let mut s_near = 0.0;
                for (kl, x) in scratch.iter().enumerate() {
                    s += x;
                    if outer_near || k.iter().any(|&ki| ki.abs_diff(kl) <= 2) {
                        s_near += x;
                    }
                }
                point_total += partial * s;
                point_near += partial * s_near;
            }
            total.add(point_total);
            near.add(point_near);
            // advance k[1..] odometer
            let mut d = p - 2;
            loop {
                if d == 0 {
                    return (total.value(), near.value());
                }
                k[d] += 1;
                if k[d] < lens[d] {
                    break;
                }
                k[d] = 0;
                d -= 1;
            }
        }
    };
    let rows: Vec<(f64, f64)> = (0..lens[0]).into_par_iter().map(row).collect();
    let mut total = Compensated::default();
    let mut near = Compensated::default();
    for (t, nr) in rows {
        total.add(t);
        near.add(nr);
    }
    Ok(Sums { total: total.value(), near: near.value() })
}

#[inline]
fn tail_sum(tail: &[(usize, usize)], k: &[usize], pow: &[Vec<f64>], off: i64, n_last: usize) -> f64 {
    let slice = |i: usize, a: usize| {
        let start = (off - k[i] as i64) as usize;
        &pow[a][start..start + n_last]
    };
    match tail {
        [] => n_last as f64,
        [(i, a)] => slice(*i, *a).iter().sum(),
        [(i, a), (j, b)] => slice(*i, *a).iter().zip(slice(*j, *b)).map(|(x, y)| x * y).sum(),
        [(i, a), (j, b), (l, c)] => slice(*i, *a)
            .iter()
            .zip(slice(*j, *b))
            .zip(slice(*l, *c))
            .map(|((x, y), z)| x * y * z)
            .sum(),
        _ => {
            let mut acc = vec![1.0; n_last];
            for &(i, a) in tail {
                for (x, y) in acc.iter_mut().zip(slice(i, a)) {
                    *x *= y;
                }
            }
            acc.iter().sum()
        }
    }
}

/// `Σ_{k <= n1, l <= n2} ρ(k - l)^a`, optionally restricted to `|k - l| <= band`,
/// by summing over lags with their multiplicities.
pub fn pair_sum(a: i32, n1: usize, n2: usize, model: &CovarianceModel, band: Option<usize>) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let mut acc = Compensated::default();
    let lo = -(n2 as i64 - 1);
    let hi = n1 as i64 - 1;
    for d in lo..=hi {
        if let Some(b) = band {
            if d.unsigned_abs() as usize > b {
                continue;
            }
        }
        // k - l = d with 1 <= k <= n1, 1 <= l <= n2
        let kmin = 1.max(1 + d);
        let kmax = (n1 as i64).min(n2 as i64 + d);
        let count = kmax - kmin + 1;
        if count > 0 {
            acc.add(count as f64 * model.rho(d).powi(a));
        }
    }
    acc.value()
}

/// `Σ_k Σ_{r ∈ B(q_p)} Π_{i<j} ρ(k_i - k_j)^{α_ij(r)}` over `k_i ∈ {1, ..., [n t_i]}`.
pub fn exact_joint_moment(q_list: &[usize], t_list: &[f64], n: usize, model: &CovarianceModel) -> Result<MomentResult> {
    exact_joint_moment_with(q_list, t_list, n, model, LatticeOptions::default())
}

pub fn exact_joint_moment_with(
    q_list: &[usize],
    t_list: &[f64],
    n: usize,
    model: &CovarianceModel,
    opts: LatticeOptions,
) -> Result<MomentResult> {
    let lens = check_inputs(q_list, t_list, n)?;
    let sums = lattice_sums(q_list, &lens, model, opts, false)?;
    Ok(MomentResult::exact(sums.total)
        .with_meta("n", n)
        .with_meta("model", model)
        .with_meta("lattice_points", lens.iter().map(|&l| l as f64).product::<f64>()))
}

/// Share of the lattice sum carried by points with some `|k_i - k_j| <= 2`.
pub fn diagonal_mass(q_list: &[usize], t_list: &[f64], n: usize, model: &CovarianceModel) -> Result<f64> {
    diagonal_mass_with(q_list, t_list, n, model, LatticeOptions::default())
}

pub fn diagonal_mass_with(
    q_list: &[usize],
    t_list: &[f64],
    n: usize,
    model: &CovarianceModel,
    opts: LatticeOptions,
) -> Result<f64> {
    let lens = check_inputs(q_list, t_list, n)?;
    let sums = lattice_sums(q_list, &lens, model, opts, true)?;
    if sums.total == 0.0 {
        return Err(Error::domain("the lattice sum vanishes, so the diagonal share is undefined"));
    }
    Ok(sums.near / sums.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::model::SlowlyVarying;
    use approx::assert_relative_eq;

    fn brute(q_list: &[usize], lens: &[usize], model: &CovarianceModel) -> f64 {
        let terms = scalar_terms(q_list).unwrap();
        let p = lens.len();
        let mut k = vec![1usize; p];
        let mut total = 0.0;
        loop {
            for edges in &terms {
                total += edges
                    .iter()
                    .map(|&(i, j, a)| model.rho(k[i] as i64 - k[j] as i64).powi(a as i32))
                    .product::<f64>();
            }
            let mut d = p;
            loop {
                if d == 0 {
                    return total;
                }
                d -= 1;
                k[d] += 1;
                if k[d] <= lens[d] {
                    break;
                }
                k[d] = 1;
            }
        }
    }

    #[test]
    fn matches_brute_force() {
        let model = CovarianceModel::table(vec![1.0, 0.6, -0.3, 0.2, 0.05]).unwrap();
        for q in [vec![1, 1, 1, 1], vec![2, 2, 2], vec![1, 2, 3, 2], vec![2, 2, 2, 2, 2], vec![3, 1, 2]] {
            let t: Vec<f64> = (0..q.len()).map(|i| 0.6 + 0.2 * i as f64).collect();
            let n = 5;
            let lens: Vec<usize> = t.iter().map(|&t| lattice_len(n, t)).collect();
            let got = exact_joint_moment(&q, &t, n, &model).unwrap().value;
            let want = brute(&q, &lens, &model);
            assert_relative_eq!(got, want, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn examples() {
        let delta = CovarianceModel::Delta;
        assert_eq!(exact_joint_moment(&[1, 1, 1, 1], &[1.0; 4], 1, &delta).unwrap().value, 2.0);
        let g = CovarianceModel::geometric(0.5).unwrap();
        assert_eq!(exact_joint_moment(&[1, 1, 1], &[1.0; 3], 7, &g).unwrap().value, 0.0);
        let pl = CovarianceModel::power_law(0.3, SlowlyVarying::one()).unwrap();
        let v = exact_joint_moment(&[2, 2], &[1.0, 1.0], 50, &pl).unwrap().value;
        let mut want = 0.0;
        for k in 1..=50i64 {
            for l in 1..=50i64 {
                want += pl.rho(k - l).powi(2);
            }
        }
        assert_relative_eq!(v, want, max_relative = 1e-13);
    }

    #[test]
    fn different_orders_are_orthogonal() {
        let m = CovarianceModel::table(vec![1.0, 0.4, 0.3]).unwrap();
        for q1 in 1..=3 {
            for q2 in 1..=3 {
                if q1 == q2 {
                    continue;
                }
                for n in 1..=4 {
                    assert_eq!(exact_joint_moment(&[q1, q2], &[1.0, 1.0], n, &m).unwrap().value, 0.0);
                }
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let m = CovarianceModel::Delta;
        let e = exact_joint_moment_with(&[1, 1, 1, 1], &[1.0; 4], 100, &m, LatticeOptions { budget: 1000 }).unwrap_err();
        assert!(matches!(e, Error::Size(_)));
        // pairs take the Toeplitz path regardless of the budget
        let pair = exact_joint_moment_with(&[2, 2], &[1.0; 2], 100, &m, LatticeOptions { budget: 10 }).unwrap();
        assert_eq!(pair.value, 100.0);
    }

    #[test]
    fn diagonal_share() {
        let g = CovarianceModel::geometric(0.5).unwrap();
        assert_eq!(diagonal_mass(&[2, 2], &[1.0, 1.0], 1, &g).unwrap(), 1.0);
        assert_eq!(diagonal_mass(&[1, 1, 1, 1], &[1.0; 4], 1, &g).unwrap(), 1.0);
        for n in [3, 10, 40] {
            assert_eq!(diagonal_mass(&[1, 1], &[1.0, 1.0], n, &CovarianceModel::Delta).unwrap(), 1.0);
        }
        let pl = CovarianceModel::power_law(0.3, SlowlyVarying::one()).unwrap();
        let a = diagonal_mass(&[2, 2], &[1.0, 1.0], 1_000, &pl).unwrap();
        let b = diagonal_mass(&[2, 2], &[1.0, 1.0], 10_000, &pl).unwrap();
        assert!(b < a && a < 1.0);
        let c = diagonal_mass(&[1, 1, 1, 1], &[1.0; 4], 12, &pl).unwrap();
        let d = diagonal_mass(&[1, 1, 1, 1], &[1.0; 4], 30, &pl).unwrap();
        assert!(d < c);
    }

    #[test]
    fn pair_sum_band_counts() {
        let ones = CovarianceModel::table(vec![1.0; 100]).unwrap();
        // every pair counted once
        assert_eq!(pair_sum(1, 7, 4, &ones, None), 28.0);
        // |k - l| <= 0 on a 5x5 grid
        assert_eq!(pair_sum(1, 5, 5, &ones, Some(0)), 5.0);
    }
}
