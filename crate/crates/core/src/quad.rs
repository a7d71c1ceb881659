//! One-dimensional quadrature rules.

use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
///
/// Fails with [`Error::Accuracy`] once `max_evals` evaluations are spent,
/// reporting the bound reached so far.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_evals: usize) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 3;
    let mut stack = vec![(a, b, fa, fm, fb, whole, tol, 0u32)];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut exhausted = false;
    while let Some((a, b, fa, fm, fb, whole, tol, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let width_ok = m > a && b > m && lm > a && rm < b;
        if delta.abs() <= 15.0 * tol || depth >= 60 || !width_ok || exhausted {
            value += left + right + delta / 15.0;
            error += delta.abs() / 15.0;
            continue;
        }
        if evals >= max_evals {
            exhausted = true;
        }
        stack.push((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1));
        stack.push((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1));
    }
    if !value.is_finite() {
        return Err(Error::Accuracy(format!("integrand is not finite on [{a}, {b}]")));
    }
    if exhausted && error > tol {
        return Err(Error::Accuracy(format!(
            "adaptive Simpson stopped after {evals} evaluations with error bound {error:.3e} (requested {tol:.1e})"
        )));
    }
    Ok(Estimate { value, error, evaluations: evals })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<Vec<Option<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    {
        let c = cache.lock().unwrap();
        if let Some(Some(hit)) = c.get(n) {
            return hit.clone();
        }
    }
    let rule = legendre_rule(n);
    let mut c = cache.lock().unwrap();
    if c.len() <= n {
        c.resize(n + 1, None);
    }
    c[n] = Some(rule.clone());
    rule
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre: `panels` equal panels of `order` nodes each.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(lo + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// A tanh-sinh node on `[a, b]`: the abscissa plus its distances to both ends.
#[derive(Debug, Clone, Copy)]
pub struct TsNode {
    pub x: f64,
    pub from_lo: f64,
    pub to_hi: f64,
    pub weight: f64,
}

/// Tanh-sinh nodes with step `2^-level`, scaled to `[a, b]`.
///
/// Distances to the end points are computed directly rather than by
/// subtraction, so integrands with algebraic end-point singularities can be
/// evaluated without cancellation.
pub fn tanh_sinh_nodes(a: f64, b: f64, level: u32) -> Vec<TsNode> {
    let half = 0.5 * (b - a);
    let h = 0.5f64.powi(level as i32);
    let mut out = Vec::new();
    let pi2 = std::f64::consts::FRAC_PI_2;
    let push = |u: f64, out: &mut Vec<TsNode>| {
        let s = pi2 * u.sinh();
        let c = s.cosh();
        let w = h * pi2 * u.cosh() / (c * c) * half;
        // 1 + tanh(s) = 2 / (1 + e^{-2s}), 1 - tanh(s) = 2 / (1 + e^{2s})
        let from_lo = 2.0 * half / (1.0 + (-2.0 * s).exp());
        let to_hi = 2.0 * half / (1.0 + (2.0 * s).exp());
        if from_lo > 0.0 && to_hi > 0.0 && w > 0.0 {
            let x = if from_lo <= to_hi { a + from_lo } else { b - to_hi };
            out.push(TsNode { x, from_lo, to_hi, weight: w });
        }
    };
    push(0.0, &mut out);
    let mut k = 1;
    loop {
        let u = k as f64 * h;
        if u > 4.0 {
            break;
        }
        push(u, &mut out);
        push(-u, &mut out);
        k += 1;
    }
    out
}

pub fn tanh_sinh(f: impl Fn(&TsNode) -> f64, a: f64, b: f64, level: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    tanh_sinh_nodes(a, b, level).iter().map(|n| n.weight * f(n)).sum()
}
