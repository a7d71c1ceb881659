use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Method, MomentResult};
use crate::combinat::{enumerate_contractions, BlockProfile};
use crate::error::{Error, Result};
use crate::quad::tanh_sinh_nodes;
use crate::rng::stream_rng;

pub const MC_BATCH: usize = 1 << 14;
pub const DEFAULT_QUAD_LEVEL: u32 = 5;

/// How the MC draws `(s_1, ..., s_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Uniform on the box `Π [0, t_i]`.
    Uniform,
    /// Each `s_j` is drawn from a density proportional to its strongest
    /// singular factor `|s_j - s_parent|^{-γ}`, which cancels that factor.
    #[default]
    Importance,
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Sampler::Uniform),
            "importance" => Ok(Sampler::Importance),
            other => Err(Error::Parse(format!("unknown sampler `{other}` (expected uniform|importance)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitMethod {
    MonteCarlo { samples: u64, seed: u64, sampler: Sampler },
    Quadrature { level: u32 },
}

impl LimitMethod {
    pub fn mc(samples: u64, seed: u64) -> Self {
        LimitMethod::MonteCarlo { samples, seed, sampler: Sampler::Importance }
    }

    pub fn quadrature() -> Self {
        LimitMethod::Quadrature { level: DEFAULT_QUAD_LEVEL }
    }
}

/// Singular exponents `γ_ij = α_ij (2 - 2H) / q` of one contraction term.
#[derive(Debug, Clone)]
struct Term {
    /// `(i, j, γ_ij)` with `i < j`.
    edges: Vec<(usize, usize, f64)>,
}

fn check_h(q: usize, h: f64) -> Result<()> {
    if q == 0 {
        return Err(Error::domain("q must be >= 1"));
    }
    if q >= 2 && !(h > 0.5 && h < 1.0) {
        return Err(Error::domain("H must lie in (1/2,1)"));
    }
    if q == 1 && !(h > 0.0 && h < 1.0) {
        return Err(Error::domain("H must lie in (0,1)"));
    }
    Ok(())
}

fn terms(q: usize, h: f64, p: usize) -> Result<Vec<Term>> {
    let profile = BlockProfile::uniform(q, p)?;
    let mut out = Vec::new();
    for c in enumerate_contractions(&profile, true)? {
        let alpha = c.alpha.expect("scalar contraction");
        let mut edges = Vec::new();
        for (i, j, a) in alpha.edges() {
            let g = a as f64 * (2.0 - 2.0 * h) / q as f64;
            if g >= 1.0 {
                return Err(Error::domain(format!(
                    "the factor |s_{} - s_{}|^-{g} is not integrable (exponent >= 1) for r = {:?}",
                    i + 1,
                    j + 1,
                    c.r
                )));
            }
            edges.push((i, j, g));
        }
        out.push(Term { edges });
    }
    Ok(out)
}

/// `φ(R(t_1) ... R(t_p))` for the order-`q` Tchebycheff process of index `H`:
/// `(H(2H-1))^{p/2} Σ_{r ∈ B} ∫ Π_{i<j} |s_i - s_j|^{-α_ij(r)(2-2H)/q} ds`.
pub fn limit_joint_moment(q: usize, h: f64, t_list: &[f64], method: LimitMethod) -> Result<MomentResult> {
    check_h(q, h)?;
    let p = t_list.len();
    if p < 2 {
        return Err(Error::domain("joint moments need p >= 2 times"));
    }
    if let Some(t) = t_list.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::domain(format!("times must be positive, got {t}")));
    }
    let terms = terms(q, h, p)?;
    let prefactor = (h * (2.0 * h - 1.0)).powf(p as f64 / 2.0);
    let mut result = match method {
        LimitMethod::MonteCarlo { samples, seed, sampler } => {
            if samples == 0 {
                return Err(Error::domain("samples must be positive"));
            }
            if terms.is_empty() {
                let mut r = MomentResult::mc(0.0, 0.0, samples, seed);
                r.meta.insert("terms".into(), "0".into());
                r
            } else {
                let per_term = (samples / terms.len() as u64).max(1);
                let mut value = 0.0;
                let mut var = 0.0;
                for (ti, term) in terms.iter().enumerate() {
                    let (m, se) = mc_term(term, t_list, per_term, seed, ti as u64, sampler);
                    value += m;
                    var += se * se;
                }
                let mut r = MomentResult::mc(prefactor * value, prefactor * var.sqrt(), per_term * terms.len() as u64, seed);
                r.meta.insert("sampler".into(), format!("{sampler:?}").to_lowercase());
                r
            }
        }
        LimitMethod::Quadrature { level } => {
            if p > 3 {
                return Err(Error::domain(format!("quadrature is available for p <= 3, got p = {p}")));
            }
            if level == 0 || level > 10 {
                return Err(Error::domain("quadrature level must lie in 1..=10"));
            }
            let fine: f64 = terms.iter().map(|tm| quad_term(tm, t_list, level)).sum();
            let coarse: f64 = terms.iter().map(|tm| quad_term(tm, t_list, level - 1)).sum();
            let mut r = MomentResult::new(prefactor * fine, Method::Quadrature);
            r.meta.insert("level".into(), level.to_string());
            r.meta.insert("refinement_delta".into(), format!("{:e}", prefactor * (fine - coarse).abs()));
            r
        }
    };
    result.meta.insert("q".into(), q.to_string());
    result.meta.insert("H".into(), h.to_string());
    result.meta.insert("terms".into(), terms.len().to_string());
    Ok(result)
}

/// Sampling plan for one term: `parent[j]` with the exponent of that edge.
fn tree(term: &Term, p: usize) -> Vec<Option<(usize, f64)>> {
    let mut parent = vec![None; p];
    for j in 1..p {
        let mut best: Option<(usize, f64)> = None;
        for &(a, b, g) in &term.edges {
            if b == j && g > 0.0 && best.is_none_or(|(_, bg)| g >= bg) {
                best = Some((a, g));
            }
        }
        parent[j] = best;
    }
    parent
}

/// Mass of `|s - c|^{-β}` over `s ∈ [0, t]`.
fn power_mass(c: f64, t: f64, beta: f64) -> f64 {
    let e = 1.0 - beta;
    if c <= t {
        (c.powf(e) + (t - c).powf(e)) / e
    } else {
        (c.powf(e) - (c - t).powf(e)) / e
    }
}

/// Draws `s ∈ [0, t]` with density `∝ |s - c|^{-β}`; returns `(s, |s - c|)`.
fn power_draw<R: Rng>(rng: &mut R, c: f64, t: f64, beta: f64) -> (f64, f64) {
    let e = 1.0 - beta;
    let inv = 1.0 / e;
    let u: f64 = rng.random();
    if c <= t {
        let left = c.powf(e);
        let right = (t - c).powf(e);
        let v: f64 = rng.random();
        if u * (left + right) < left {
            let d = (v * left).powf(inv).min(c);
            (c - d, d)
        } else {
            let d = (v * right).powf(inv).min(t - c);
            (c + d, d)
        }
    } else {
        let lo = (c - t).powf(e);
        let hi = c.powf(e);
        let d = (lo + u * (hi - lo)).powf(inv).clamp(c - t, c);
        (c - d, d)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

/// Mean and standard error of the integral of one term.
fn mc_term(term: &Term, t: &[f64], samples: u64, seed: u64, term_index: u64, sampler: Sampler) -> (f64, f64) {
    let p = t.len();
    let plan = match sampler {
        Sampler::Importance => tree(term, p),
        Sampler::Uniform => vec![None; p],
    };
    let batches = samples.div_ceil(MC_BATCH as u64);
    let stats: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, (term_index << 32) | b);
            let count = if b + 1 == batches { samples - b * MC_BATCH as u64 } else { MC_BATCH as u64 };
            let mut s = vec![0.0; p];
            let mut acc = Moments::default();
            for _ in 0..count {
                let mut w = 1.0;
                for j in 0..p {
                    match plan[j] {
                        None => {
                            s[j] = rng.random::<f64>() * t[j];
                            w *= t[j];
                        }
                        Some((a, beta)) => {
                            s[j] = power_draw(&mut rng, s[a], t[j], beta).0;
                            w *= power_mass(s[a], t[j], beta);
                        }
                    }
                }
                for &(i, j, g) in &term.edges {
                    if plan[j].is_some_and(|(a, _)| a == i) {
                        continue; // cancelled by the proposal density
                    }
                    w *= (s[i] - s[j]).abs().powf(-g);
                }
                acc.push(w);
            }
            acc
        })
        .collect();
    let total = stats.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    (total.mean, (var / total.n).sqrt())
}

/// Nested tanh-sinh over `s_1, ..., s_p` with break points at the earlier `s_i`.
fn quad_term(term: &Term, t: &[f64], level: u32) -> f64 {
    fn rec(j: usize, s: &mut Vec<f64>, term: &Term, t: &[f64], level: u32) -> f64 {
        let p = t.len();
        if j == p {
            return 1.0;
        }
        let mut cuts: Vec<f64> = vec![0.0, t[j]];
        for &(i, jj, _) in &term.edges {
            if jj == j && s[i] > 0.0 && s[i] < t[j] {
                cuts.push(s[i]);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for node in tanh_sinh_nodes(lo, hi, level) {
                let mut f = 1.0;
                for &(i, jj, g) in &term.edges {
                    if jj != j {
                        continue;
                    }
                    let dist = if s[i] == lo {
                        node.from_lo
                    } else if s[i] == hi {
                        node.to_hi
                    } else {
                        (node.x - s[i]).abs()
                    };
                    f *= dist.powf(-g);
                }
                s.push(node.x);
                f *= rec(j + 1, s, term, t, level);
                s.pop();
                total += node.weight * f;
            }
        }
        total
    }
    let mut s = Vec::with_capacity(t.len());
    rec(0, &mut s, term, t, level)
}

/// `∫_0^{t1} ∫_0^{t2} |u - v|^{-γ} du dv`.
pub fn pair_integral(t1: f64, t2: f64, gamma: f64) -> f64 {
    let e = 2.0 - gamma;
    (t1.powf(e) + t2.powf(e) - (t1 - t2).abs().powf(e)) / ((1.0 - gamma) * e)
}
