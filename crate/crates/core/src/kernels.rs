//! Kernels of the Tchebycheff processes and their Hilbert–Schmidt operators.
//!
//! The order-`q` kernel is
//!
//! ```text
//! f(t, x_1..x_q) = c(H, q) ∫_0^t Π_i (s - x_i)_+^{-(1/2 + (1-H)/q)} ds
//! c(H, q)        = sqrt(H(2H-1)) / B(1/2 - (1-H)/q, (2-2H)/q)^{q/2}
//! ```
//!
//! For `q = 2` the operator `g ↦ ∫ f(·, y) g(y) dy` factors as `B B*` with
//! `B: L²[0,t] → L²(R)`, so it shares its non-zero spectrum with `B* B`,
//! the operator on `[0, t]` with kernel `sqrt(H(2H-1)) |u - v|^{H-1}`.
//! [`OperatorKind::Dual`] discretises that form; [`OperatorKind::Space`]
//! discretises `A_f` itself on a truncated window of the real line.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::freecalc::free_moment_sequence;
use crate::linalg::{symmetric_eigenvalues, Eigensolver};
use crate::quad::{adaptive_simpson, composite_gauss_legendre};

pub const MAX_GRID: usize = 4096;
pub const DEFAULT_GRID: usize = 1024;
pub const KERNEL_TOL: f64 = 1e-9;
pub const KERNEL_MAX_EVALS: usize = 2_000_000;
/// Relative agreement required between trace and eigenvalue cumulants.
pub const SPECTRAL_TOL: f64 = 1e-9;

/// `½ (t^{2H} + s^{2H} - |t - s|^{2H})`.
pub fn ncfbm_cov(h: f64, s: f64, t: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::domain(format!("H must lie in (0,1), got {h}")));
    }
    if s < 0.0 || t < 0.0 {
        return Err(Error::domain("times must be non-negative"));
    }
    let e = 2.0 * h;
    Ok(0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub q: usize,
    pub h: f64,
    pub t: f64,
}

impl KernelSpec {
    pub fn new(q: usize, h: f64, t: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::domain("q must be >= 1"));
        }
        if q >= 2 && !(h > 0.5 && h < 1.0) {
            return Err(Error::domain("H must lie in (1/2,1)"));
        }
        if q == 1 && !(h > 0.0 && h < 1.0) {
            return Err(Error::domain("H must lie in (0,1)"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("t must be positive, got {t}")));
        }
        Ok(KernelSpec { q, h, t })
    }

    /// Exponent `1/2 + (1-H)/q` of each factor `(s - x_i)_+`.
    pub fn exponent(&self) -> f64 {
        0.5 + (1.0 - self.h) / self.q as f64
    }

    pub fn constant(&self) -> f64 {
        let q = self.q as f64;
        (self.h * (2.0 * self.h - 1.0)).sqrt()
            / beta(0.5 - (1.0 - self.h) / q, (2.0 - 2.0 * self.h) / q).powf(q / 2.0)
    }
}

/// `c_H` of the moving-average form of `S_H`, valid for every `H ∈ (0,1)`.
pub fn fbm_constant(h: f64) -> f64 {
    if h == 0.5 {
        return 1.0;
    }
    // B(H - 1/2, 2 - 2H) through Γ so that negative first arguments work
    let b = gamma(h - 0.5) * gamma(2.0 - 2.0 * h) / gamma(1.5 - h);
    (2.0 * h / ((h - 0.5) * b)).sqrt()
}

/// `c_H [(t - x)_+^{H-1/2} - (-x)_+^{H-1/2}]`.
pub fn fbm_kernel(h: f64, t: f64, x: f64) -> f64 {
    let e = h - 0.5;
    let pos = |y: f64| if y > 0.0 { y.powf(e) } else { 0.0 };
    if h == 0.5 {
        return if x >= 0.0 && x < t { 1.0 } else { 0.0 };
    }
    fbm_constant(h) * (pos(t - x) - pos(-x))
}

/// `f_{H,q}(t, x)`; `+∞` where coincident arguments make it diverge.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    kernel_eval_with(spec, x, KERNEL_TOL, KERNEL_MAX_EVALS)
}

pub fn kernel_eval_with(spec: &KernelSpec, x: &[f64], tol: f64, max_evals: usize) -> Result<f64> {
    if x.len() != spec.q {
        return Err(Error::domain(format!("kernel of order {} needs {} arguments, got {}", spec.q, spec.q, x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("kernel arguments must be finite"));
    }
    if spec.q == 1 && spec.h <= 0.5 {
        return Ok(fbm_kernel(spec.h, spec.t, x[0]));
    }
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top >= spec.t {
        return Ok(0.0);
    }
    let e = spec.exponent();
    let ties = x.iter().filter(|&&v| v == top).count();
    let mu_top = ties as f64 * e;
    if top >= 0.0 && mu_top >= 1.0 {
        return Ok(f64::INFINITY);
    }
    // s = top + w^κ removes the (s - top)^{-μ} factor.
    let mu = if top >= 0.0 { mu_top } else { e };
    let kappa = 1.0 / (1.0 - mu);
    let rest: Vec<f64> = x.iter().copied().filter(|&v| v != top).map(|v| top - v).collect();
    // jacobian κ w^{κ-1} times (w^κ)^{-μ_top}; the power is 0 when top >= 0
    let jac_pow = kappa * (1.0 - mu_top) - 1.0;
    let integrand = |w: f64| -> f64 {
        let d = w.powf(kappa);
        let mut f = if jac_pow == 0.0 { kappa } else { kappa * w.powf(jac_pow) };
        for g in &rest {
            f *= (g + d).powf(-e);
        }
        f
    };
    let lo = (0.0f64.max(top) - top).powf(1.0 / kappa);
    let hi = (spec.t - top).powf(1.0 / kappa);
    let est = adaptive_simpson(integrand, lo, hi, tol / spec.constant().max(1e-300), max_evals)?;
    Ok(spec.constant() * est.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelNorm {
    /// Frobenius norm² of the discretised operator.
    pub grid: f64,
    /// `t^{2H}`.
    pub analytic: f64,
    pub m: usize,
    /// Set when the grid value is more than 10% off the analytic one.
    pub coarse: bool,
}

/// `∫ f_{H,q}(t, x)² dx` on an `m`-cell grid, reduced to
/// `H(2H-1) ∫∫_{[0,t]²} |u - v|^{2H-2}` and evaluated on the dual operator.
pub fn kernel_l2_norm_sq(spec: &KernelSpec, m: usize) -> Result<KernelNorm> {
    if spec.q == 1 && spec.h <= 0.5 {
        return Err(Error::domain("the grid reduction needs H > 1/2"));
    }
    check_grid(m)?;
    let row = dual_row(spec.h, spec.t, m);
    let mut acc = m as f64 * row[0] * row[0];
    for (d, k) in row.iter().enumerate().skip(1) {
        acc += 2.0 * (m - d) as f64 * k * k;
    }
    let analytic = spec.t.powf(2.0 * spec.h);
    Ok(KernelNorm { grid: acc, analytic, m, coarse: ((acc - analytic) / analytic).abs() > 0.1 })
}

fn check_grid(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::domain("grid needs at least one cell"));
    }
    if m > MAX_GRID {
        return Err(Error::size(format!("grid of {m} cells exceeds the limit of {MAX_GRID}")));
    }
    Ok(())
}

/// First row of the dual matrix: `sqrt(H(2H-1)) ∫_{cell_j} |u_0 - v|^{H-1} dv`.
fn dual_row(h: f64, t: f64, m: usize) -> Vec<f64> {
    let delta = t / m as f64;
    let c = (h * (2.0 * h - 1.0)).sqrt() / h;
    let half = 0.5 * delta;
    (0..m)
        .map(|d| {
            if d == 0 {
                2.0 * c * half.powf(h)
            } else {
                let x = d as f64 * delta;
                c * ((x + half).powf(h) - (x - half).powf(h))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorKind {
    /// Collocation on `[0, t]` of `sqrt(H(2H-1)) |u - v|^{H-1}`.
    Dual,
    /// Galerkin discretisation of `A_f` on `[x_min, x_max]`.
    Space { x_min: f64, x_max: f64 },
}

impl OperatorKind {
    /// The window `[-8t, t]`.
    pub fn default_space(t: f64) -> Self {
        OperatorKind::Space { x_min: -8.0 * t, x_max: t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOperator {
    pub kind: OperatorKind,
    pub h: f64,
    pub t: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
    pub delta: f64,
    pub matrix: DMatrix<f64>,
    /// `t^{2H}` minus the Frobenius norm² of `matrix`.
    pub missing_mass: f64,
}

impl DiscretizedOperator {
    pub fn frobenius_sq(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum()
    }
}

/// Discretises the Rosenblatt (`q = 2`) operator on `m` cells.
pub fn discretize_operator(h: f64, t: f64, m: usize, kind: OperatorKind) -> Result<DiscretizedOperator> {
    let spec = KernelSpec::new(2, h, t)?;
    check_grid(m)?;
    let (x_min, x_max, matrix) = match kind {
        OperatorKind::Dual => {
            let row = dual_row(h, t, m);
            (0.0, t, DMatrix::from_fn(m, m, |i, j| row[i.abs_diff(j)]))
        }
        OperatorKind::Space { x_min, x_max } => {
            if !(x_min < x_max) {
                return Err(Error::domain("need x_min < x_max"));
            }
            (x_min, x_max, space_matrix(&spec, x_min, x_max, m))
        }
    };
    let mut op = DiscretizedOperator {
        kind,
        h,
        t,
        x_min,
        x_max,
        m,
        delta: (x_max - x_min) / m as f64,
        matrix,
        missing_mass: 0.0,
    };
    op.missing_mass = t.powf(2.0 * h) - op.frobenius_sq();
    Ok(op)
}

fn space_matrix(spec: &KernelSpec, x_min: f64, x_max: f64, m: usize) -> DMatrix<f64> {
    let delta = (x_max - x_min) / m as f64;
    let t = spec.t;
    let e = spec.h / 2.0; // 1 - exponent for q = 2
    // panel breaks: 0, t and every cell edge in between
    let mut breaks = vec![0.0, t];
    for i in 0..=m {
        let x = x_min + i as f64 * delta;
        if x > 0.0 && x < t {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in breaks.windows(2) {
        let (xs, ws) = composite_gauss_legendre(w[0], w[1], 1, 12);
        nodes.extend(xs);
        weights.extend(ws);
    }
    let pos = |y: f64| if y > 0.0 { y.powf(e) } else { 0.0 };
    // rows: cells, columns: quadrature nodes, scaled by sqrt(weight)
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let lo = x_min + i as f64 * delta;
            let hi = lo + delta;
            nodes.iter().zip(&weights).map(|(&s, &w)| (pos(s - lo) - pos(s - hi)) / e * w.sqrt()).collect()
        })
        .collect();
    let n = nodes.len();
    let emat = DMatrix::from_fn(m, n, |i, k| rows[i][k]);
    let mut a = &emat * emat.transpose() * (spec.constant() / delta);
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantRow {
    pub p: usize,
    /// `Tr(A^p)` from matrix powers.
    pub kappa_trace: f64,
    /// `Σ_j λ_j^p`.
    pub kappa_eigen: f64,
}

/// Free cumulants `κ_p = Tr(A^p)`, `2 <= p <= p_max`, computed two ways.
pub fn free_cumulants_trace(op: &DiscretizedOperator, p_max: usize, solver: Eigensolver) -> Result<Vec<CumulantRow>> {
    if !(2..=10).contains(&p_max) {
        return Err(Error::domain(format!("p_max must lie in 2..=10, got {p_max}")));
    }
    let a = &op.matrix;
    let half = p_max.div_ceil(2);
    let mut powers: Vec<DMatrix<f64>> = vec![a.clone()];
    while powers.len() < half {
        let next = powers.last().unwrap() * a;
        powers.push(next);
    }
    let eig = symmetric_eigenvalues(a, solver)?;
    let mut rows = Vec::with_capacity(p_max - 1);
    for p in 2..=p_max {
        let i = p / 2;
        let j = p - i;
        let tr = powers[i - 1].dot(&powers[j - 1]);
        let ev: f64 = eig.iter().map(|l| l.powi(p as i32)).sum();
        let scale: f64 = eig.iter().map(|l| l.abs().powi(p as i32)).sum::<f64>().max(f64::MIN_POSITIVE);
        if (tr - ev).abs() > SPECTRAL_TOL * scale {
            return Err(Error::Accuracy(format!(
                "trace and eigenvalue cumulants disagree at p = {p}: {tr:e} vs {ev:e}"
            )));
        }
        rows.push(CumulantRow { p, kappa_trace: tr, kappa_eigen: ev });
    }
    Ok(rows)
}

/// Moments `m_1..=m_{n_max}` of `R_H(t)` from `κ_1 = 0` and `κ_p = Tr(A^p)`.
pub fn rosenblatt_moments_via_cumulants(
    h: f64,
    t: f64,
    m: usize,
    n_max: usize,
    solver: Eigensolver,
) -> Result<Vec<f64>> {
    if !(1..=8).contains(&n_max) {
        return Err(Error::domain(format!("n_max must lie in 1..=8, got {n_max}")));
    }
    let op = discretize_operator(h, t, m, OperatorKind::Dual)?;
    let mut kappa = vec![0.0];
    if n_max >= 2 {
        kappa.extend(free_cumulants_trace(&op, n_max, solver)?.iter().map(|r| r.kappa_trace));
    }
    free_moment_sequence(&kappa, n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn cov_examples() {
        assert_relative_eq!(ncfbm_cov(0.7, 1.3, 1.3).unwrap(), 1.3f64.powf(1.4), max_relative = 1e-15);
        assert_relative_eq!(ncfbm_cov(0.5, 0.4, 1.1).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(ncfbm_cov(0.8, 0.0, 2.0).unwrap(), 0.0);
        assert!(ncfbm_cov(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cov_is_psd() {
        let mut rng = stream_rng(5, 0);
        for &h in &[0.55, 0.7, 0.9] {
            for _ in 0..20 {
                let ts: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 3.0).collect();
                let g = DMatrix::from_fn(8, 8, |i, j| ncfbm_cov(h, ts[i], ts[j]).unwrap());
                assert!(g.symmetric_eigenvalues().min() >= -1e-9);
            }
        }
    }

    #[test]
    fn first_order_matches_closed_form() {
        for &h in &[0.6, 0.75, 0.9] {
            let spec = KernelSpec::new(1, h, 1.5).unwrap();
            for &x in &[-3.0, -0.4, 0.0, 0.2, 1.0, 1.49, 2.0] {
                let q = kernel_eval(&spec, &[x]).unwrap();
                let c = fbm_kernel(h, 1.5, x);
                assert!((q - c).abs() <= 1e-8, "h={h} x={x}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn fbm_kernel_has_fbm_variance() {
        // ∫ (c_H [(t-x)_+^{H-1/2} - (-x)_+^{H-1/2}])² dx = t^{2H}
        for &h in &[0.3, 0.7] {
            let t = 1.0;
            let f = |x: f64| fbm_kernel(h, t, x).powi(2);
            let near = adaptive_simpson(|u: f64| f(t - u * u) * 2.0 * u, 0.0, 1.0, 1e-8, 1_000_000).unwrap().value;
            // x = -y, y = (v / (1 - v))^4
            let far = adaptive_simpson(
                |v: f64| {
                    if v <= 0.0 || v >= 1.0 {
                        return 0.0;
                    }
                    let z = v / (1.0 - v);
                    f(-z.powi(4)) * 4.0 * z.powi(3) / (1.0 - v).powi(2)
                },
                0.0,
                1.0,
                1e-8,
                2_000_000,
            )
            .unwrap()
            .value;
            assert!((near + far - 1.0).abs() < 2e-3, "h={h}: {}", near + far);
        }
    }

    #[test]
    fn support_and_symmetry() {
        let spec = KernelSpec::new(2, 0.7, 1.0).unwrap();
        assert_eq!(kernel_eval(&spec, &[1.2, 3.0]).unwrap(), 0.0);
        assert_eq!(kernel_eval(&spec, &[0.3, 0.3]).unwrap(), f64::INFINITY);
        let mut rng = stream_rng(9, 1);
        for _ in 0..100 {
            let x: f64 = rng.random::<f64>() * 3.0 - 2.0;
            let y: f64 = rng.random::<f64>() * 3.0 - 2.0;
            assert_eq!(kernel_eval(&spec, &[x, y]).unwrap(), kernel_eval(&spec, &[y, x]).unwrap());
        }
        let v = kernel_eval(&spec, &[-0.5, 0.2]).unwrap();
        assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn rosenblatt_kernel_by_direct_quadrature() {
        // f(t,x,y) = c ∫_{max(x,y,0)}^t (s-x)^{H/2-1} (s-y)^{H/2-1} ds
        let spec = KernelSpec::new(2, 0.7, 1.0).unwrap();
        let (x, y) = (-0.3, 0.25);
        let a = 0.35 - 1.0;
        // s = y + u^κ with κ (1 + a) = 1
        let kappa = 1.0 / (1.0 + a);
        let g = |u: f64| kappa * (y + u.powf(kappa) - x).powf(a);
        let direct =
            spec.constant() * adaptive_simpson(g, 0.0, (1.0 - y).powf(1.0 / kappa), 1e-12, 1_000_000).unwrap().value;
        assert_relative_eq!(kernel_eval(&spec, &[x, y]).unwrap(), direct, max_relative = 1e-7);
    }

    #[test]
    fn norm_on_grids() {
        let spec = KernelSpec::new(2, 0.7, 1.0).unwrap();
        let n = kernel_l2_norm_sq(&spec, 2048).unwrap();
        assert!((n.grid - 1.0).abs() < 0.01, "{}", n.grid);
        assert!(!n.coarse);
        let s = KernelSpec::new(1, 0.8, 2.0).unwrap();
        let n = kernel_l2_norm_sq(&s, 2048).unwrap();
        assert!((n.grid / 2f64.powf(1.6) - 1.0).abs() < 0.01);
        // slow Δ^{2H-1} convergence near H = 1/2
        let s = KernelSpec::new(1, 0.6, 1.0).unwrap();
        assert!((kernel_l2_norm_sq(&s, 2048).unwrap().grid - 0.898).abs() < 1e-3);
        assert!(kernel_l2_norm_sq(&spec, 4).unwrap().coarse);
        assert!(matches!(kernel_l2_norm_sq(&spec, 5000), Err(Error::Size(_))));
    }

    #[test]
    fn norm_scales_with_time() {
        let a = 1.7;
        let one = kernel_l2_norm_sq(&KernelSpec::new(2, 0.8, 1.0).unwrap(), 512).unwrap();
        let big = kernel_l2_norm_sq(&KernelSpec::new(2, 0.8, a).unwrap(), 512).unwrap();
        assert_relative_eq!(big.grid, a.powf(1.6) * one.grid, max_relative = 1e-12);
        assert_relative_eq!(big.analytic, a.powf(1.6) * one.analytic, max_relative = 1e-12);
    }

    #[test]
    fn dual_matches_norm_and_spectrum() {
        let op = discretize_operator(0.7, 1.0, 256, OperatorKind::Dual).unwrap();
        assert_eq!(op.matrix, op.matrix.transpose());
        let n = kernel_l2_norm_sq(&KernelSpec::new(2, 0.7, 1.0).unwrap(), 256).unwrap();
        let rows = free_cumulants_trace(&op, 6, Eigensolver::Jacobi).unwrap();
        assert_relative_eq!(rows[0].kappa_trace, n.grid, max_relative = 1e-12);
        for r in &rows {
            assert!((r.kappa_trace - r.kappa_eigen).abs() <= 1e-9 * r.kappa_trace.abs());
        }
        // ‖A²‖_HS <= ‖A‖_HS²
        assert!(rows[2].kappa_trace.sqrt() <= rows[0].kappa_trace + 1e-12);
    }

    #[test]
    fn space_operator_is_psd_with_reported_truncation() {
        let op = discretize_operator(0.7, 1.0, 96, OperatorKind::Space { x_min: -4.0, x_max: 1.0 }).unwrap();
        assert_eq!(op.matrix, op.matrix.transpose());
        let ev = symmetric_eigenvalues(&op.matrix, Eigensolver::Jacobi).unwrap();
        assert!(ev[0] > -1e-10);
        assert!(op.missing_mass > 0.0 && op.missing_mass < 0.6);
        // cells to the right of t carry nothing
        let op = discretize_operator(0.7, 1.0, 40, OperatorKind::Space { x_min: -1.0, x_max: 3.0 }).unwrap();
        for i in 0..40 {
            let lo = -1.0 + i as f64 * op.delta;
            if lo >= 1.0 {
                assert!((0..40).all(|j| op.matrix[(i, j)] == 0.0));
            }
        }
    }

    #[test]
    fn moments_from_cumulants() {
        let m = rosenblatt_moments_via_cumulants(0.7, 1.0, 256, 4, Eigensolver::Auto).unwrap();
        assert_eq!(m[0], 0.0);
        let op = discretize_operator(0.7, 1.0, 256, OperatorKind::Dual).unwrap();
        let k = free_cumulants_trace(&op, 4, Eigensolver::Auto).unwrap();
        assert_relative_eq!(m[1], k[0].kappa_trace, max_relative = 1e-14);
        assert_relative_eq!(m[3], k[2].kappa_trace + 2.0 * k[0].kappa_trace.powi(2), max_relative = 1e-12);
    }
}
