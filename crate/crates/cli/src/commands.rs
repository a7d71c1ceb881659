use std::collections::BTreeMap;

use wignerlab::combinat::{enumerate_contractions_bounded, enumerate_nc, BlockProfile, NcKind, MAX_PAIRING_N};
use wignerlab::freecalc::{free_moment_sequence, wick_joint_moment, CovMatrix};
use wignerlab::kernels::{
    discretize_operator, free_cumulants_trace, kernel_eval, kernel_l2_norm_sq, rosenblatt_moments_via_cumulants,
    DiscretizedOperator, KernelSpec, OperatorKind,
};
use wignerlab::linalg::Eigensolver;
use wignerlab::moments::{
    clt_variance, exact_joint_moment_with, karamata_ratio, limit_joint_moment, nclt_convergence, CovarianceModel,
    LatticeOptions, LimitMethod, MomentResult, Sampler, SlowlyVarying,
};
use wignerlab::poly::{decompose, eval_basis, Basis, TchebExpansion};
use wignerlab::sim::{
    asymptotic_freeness_check, estimate_poly_moment, simulate_limits, LimitsConfig, MatrixEnsembleConfig, Regime,
    SimKind,
};
use wignerlab::{Error, Result};

use crate::args::*;
use crate::report::{Cell, Report};

pub const DEFAULT_SEED: u64 = 42;

pub fn run(cmd: Command) -> Result<Report> {
    match cmd {
        Command::Poly(c) => poly(c),
        Command::Contractions(a) => contractions(a),
        Command::Nc(a) => nc(a),
        Command::Free(c) => free(c),
        Command::Moment(c) => moment(c),
        Command::Clt(c) => clt(c),
        Command::Karamata(a) => karamata(a),
        Command::Converge(a) => converge(a),
        Command::Kernel(c) => kernel(c),
        Command::Simulate(c) => simulate(c),
    }
}

fn with_meta(mut r: Report, meta: &BTreeMap<String, String>) -> Report {
    for (k, v) in meta {
        r = r.meta(k, v.as_str());
    }
    r
}

fn moment_report(res: &MomentResult) -> Report {
    let mut columns = vec!["value"];
    let mut row = vec![Cell::Float(res.value)];
    if let Some(se) = res.stderr {
        columns.push("stderr");
        row.push(Cell::Float(se));
    }
    columns.push("method");
    row.push(Cell::Text(res.method.to_string()));
    if let Some(seed) = res.seed {
        columns.push("seed");
        row.push(seed.into());
    }
    let mut r = with_meta(Report::single(&columns, row), &res.meta);
    if let Some(n) = res.n_samples {
        r = r.meta("n_samples", n);
    }
    r.versioned()
}

fn limit_method(mc: &McArgs) -> Result<LimitMethod> {
    match mc.method.as_str() {
        "mc" => Ok(LimitMethod::MonteCarlo {
            samples: mc.samples,
            seed: mc.seed.unwrap_or(DEFAULT_SEED),
            sampler: mc.sampler.parse::<Sampler>()?,
        }),
        "quadrature" => Ok(LimitMethod::Quadrature { level: mc.level }),
        other => Err(Error::Parse(format!("unknown method `{other}` (expected mc|quadrature)"))),
    }
}

fn poly(cmd: PolyCmd) -> Result<Report> {
    match cmd {
        PolyCmd::Eval { basis, k, x } => Ok(Report::scalar(eval_basis(basis.parse()?, k, x))),
        PolyCmd::Decompose { basis, coeffs } => {
            let e = decompose(&coeffs, basis.parse()?)?;
            let mut r = Report::table(&["degree", "coefficient"]);
            for (s, c) in e.coeffs.iter().enumerate() {
                r.push(vec![s.into(), (*c).into()]);
            }
            let rank = e.rank.map_or(Cell::Text("none".into()), |k| k.into());
            Ok(r.trailer("rank", rank).meta("basis", e.basis.to_string()))
        }
    }
}

fn contractions(a: ContractionsArgs) -> Result<Report> {
    let profile = BlockProfile::new(a.q)?;
    let p = profile.p();
    let mut columns: Vec<String> = (1..p).map(|k| format!("r_{k}")).collect();
    columns.push("scalar".into());
    for i in 1..=p {
        for j in i + 1..=p {
            columns.push(format!("alpha_{i}_{j}"));
        }
    }
    let mut r = Report::with_columns(columns);
    for c in enumerate_contractions_bounded(&profile, a.scalar_only, a.bound)? {
        let mut row: Vec<Cell> = c.r.iter().map(|&v| v.into()).collect();
        row.push(c.scalar.into());
        match &c.alpha {
            Some(alpha) => row.extend(alpha.flatten().into_iter().map(Cell::from)),
            None => row.extend(std::iter::repeat_n(Cell::Empty, p * (p - 1) / 2)),
        }
        r.push(row);
    }
    Ok(r)
}

fn nc(a: NcArgs) -> Result<Report> {
    let kind: NcKind = a.kind.parse()?;
    let all = enumerate_nc(kind, a.n)?;
    if a.count_only {
        return Ok(Report::single(&["count"], vec![all.len().into()]).meta("kind", a.kind.as_str()).meta("n", a.n));
    }
    let mut r = Report::table(&["blocks"]);
    for s in &all {
        let text: String = s
            .blocks
            .iter()
            .map(|b| format!("({})", b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        r.push(vec![text.into()]);
    }
    Ok(r.trailer("count", all.len()))
}

fn free(cmd: FreeCmd) -> Result<Report> {
    match cmd {
        FreeCmd::Wick { gamma, word } => {
            let text = std::fs::read_to_string(&gamma)
                .map_err(|e| Error::Io(format!("cannot read {}: {e}", gamma.display())))?;
            let cov = CovMatrix::from_csv(&text)?;
            if word.len() > MAX_PAIRING_N {
                return Err(Error::Size(format!("word length {} exceeds {MAX_PAIRING_N}", word.len())));
            }
            let zero_based = word
                .iter()
                .map(|&w| w.checked_sub(1).ok_or_else(|| Error::Domain("word indices are 1-based".into())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Report::scalar(wick_joint_moment(&cov, &zero_based)?))
        }
        FreeCmd::Moments { cumulants, n } => {
            let m = free_moment_sequence(&cumulants, n)?;
            let mut r = Report::table(&["k", "moment"]);
            for (k, v) in m.iter().enumerate() {
                r.push(vec![(k + 1).into(), (*v).into()]);
            }
            Ok(r)
        }
    }
}

fn moment(cmd: MomentCmd) -> Result<Report> {
    match cmd {
        MomentCmd::Exact { q, t, n, rho, budget } => {
            let model: CovarianceModel = rho.parse()?;
            let res = exact_joint_moment_with(&q, &t, n as usize, &model, LatticeOptions { budget })?;
            Ok(moment_report(&res))
        }
        MomentCmd::Limit { q, h, t, mc } => {
            let res = limit_joint_moment(q, h, &t, limit_method(&mc)?)?;
            Ok(moment_report(&res))
        }
    }
}

fn clt(cmd: CltCmd) -> Result<Report> {
    let CltCmd::Variance { coeffs, basis, rho, truncation } = cmd;
    let model: CovarianceModel = rho.parse()?;
    let expansion = TchebExpansion::new(basis.parse()?, coeffs);
    let v = clt_variance(&expansion, &model, truncation)?;
    let mut r = Report::table(&["s", "a_s", "sigma_sq"]);
    for term in &v.terms {
        r.push(vec![term.s.into(), term.a_s.into(), term.sigma_sq.into()]);
    }
    Ok(r
        .trailer("free", v.free)
        .trailer("classical", v.classical)
        .trailer("tail_bound", v.tail_bound)
        .meta("model", model.to_string())
        .meta("truncation", v.truncation))
}

fn karamata(a: KaramataArgs) -> Result<Report> {
    let l: SlowlyVarying = a.l.parse()?;
    l.validate()?;
    let ratio = karamata_ratio(a.q, a.d, &l, a.n, a.t)?;
    Ok(Report::single(&["value", "method"], vec![ratio.into(), "Exact".into()])
        .meta("n", a.n)
        .meta("L", l.to_string()))
}

fn converge(a: ConvergeArgs) -> Result<Report> {
    let l: SlowlyVarying = a.l.parse()?;
    l.validate()?;
    let method = limit_method(&a.mc)?;
    let rows = nclt_convergence(a.q, a.d, &l, a.p, &a.n_grid, method, a.budget)?;
    let mut r = Report::table(&["n", "scaled_moment", "limit", "abs_err"]);
    for row in rows {
        r.push(vec![row.n.into(), row.scaled_moment.into(), row.limit.into(), row.abs_err.into()]);
    }
    let mut r = r.meta("q", a.q).meta("p", a.p).meta("L", l.to_string());
    if a.p != 2 {
        if let LimitMethod::MonteCarlo { samples, seed, .. } = method {
            r = r.meta("seed", seed).meta("n_samples", samples).versioned();
        }
    }
    Ok(r)
}

fn operator(op: &OperatorArgs) -> Result<(DiscretizedOperator, Eigensolver)> {
    let kind = match op.operator.as_str() {
        "dual" => OperatorKind::Dual,
        "space" => OperatorKind::default_space(op.t),
        other => return Err(Error::Parse(format!("unknown operator `{other}` (expected dual|space)"))),
    };
    Ok((discretize_operator(op.h, op.t, op.grid, kind)?, op.solver.parse()?))
}

fn kernel(cmd: KernelCmd) -> Result<Report> {
    match cmd {
        KernelCmd::Eval { q, h, t, x } => Ok(Report::scalar(kernel_eval(&KernelSpec::new(q, h, t)?, &x)?)),
        KernelCmd::Norm { q, h, t, grid } => {
            let n = kernel_l2_norm_sq(&KernelSpec::new(q, h, t)?, grid)?;
            Ok(Report::single(&["value", "analytic", "grid", "coarse"], vec![n.grid.into(), n.analytic.into(), n.m.into(), n.coarse.into()]))
        }
        KernelCmd::Cumulants { op, pmax } => {
            let (d, solver) = operator(&op)?;
            let rows = free_cumulants_trace(&d, pmax, solver)?;
            let mut r = Report::table(&["p", "kappa_trace", "kappa_eigen"]);
            for row in rows {
                r.push(vec![row.p.into(), row.kappa_trace.into(), row.kappa_eigen.into()]);
            }
            Ok(r.meta("operator", op.operator.as_str()).meta("grid", d.m).meta("missing_mass", d.missing_mass))
        }
        KernelCmd::Moments { op, nmax } => {
            if op.operator != "dual" {
                return Err(Error::Domain("moments are computed on the dual operator only".into()));
            }
            let m = rosenblatt_moments_via_cumulants(op.h, op.t, op.grid, nmax, op.solver.parse()?)?;
            let mut r = Report::table(&["k", "moment"]);
            for (k, v) in m.iter().enumerate() {
                r.push(vec![(k + 1).into(), (*v).into()]);
            }
            Ok(r.meta("grid", op.grid))
        }
    }
}

fn simulate(cmd: SimulateCmd) -> Result<Report> {
    match cmd {
        SimulateCmd::Wigner { n, reps, t, poly, seed } => {
            let cfg = MatrixEnsembleConfig::new(n, vec![t], seed.unwrap_or(DEFAULT_SEED), reps)?;
            Ok(moment_report(&estimate_poly_moment(&cfg, &poly, t)?))
        }
        SimulateCmd::Freeness { n, times, reps, poly, factors, seed } => {
            let seed = seed.unwrap_or(DEFAULT_SEED);
            let cfg = MatrixEnsembleConfig::new(n, times.clone(), seed, reps)?;
            let polys = vec![poly; factors];
            let rows = asymptotic_freeness_check(&cfg, &polys)?;
            let mut r = Report::table(&["increments", "value", "stderr"]);
            for (i, res) in rows.iter().enumerate() {
                r.push(vec![format!("{},{}", i + 1, i + 2).into(), res.value.into(), res.se().into()]);
            }
            Ok(r.meta("n", n).meta("seed", seed).meta("n_samples", reps).versioned())
        }
        SimulateCmd::Limits { kind, q, coeffs, basis, rho, ntime, matrix_n, reps, t, regime, seed } => {
            let kind: SimKind = kind.parse()?;
            let basis: Basis = match basis {
                Some(b) => b.parse()?,
                None if kind == SimKind::Free => Basis::Tchebycheff,
                None => Basis::Hermite,
            };
            let expansion = match (coeffs, q) {
                (Some(c), _) => TchebExpansion::new(basis, c),
                (None, Some(q)) => TchebExpansion::basis_element(basis, q),
                (None, None) => return Err(Error::Domain("give --q or --coeffs".into())),
            };
            let cfg = LimitsConfig {
                kind,
                expansion,
                model: rho.parse()?,
                n_time: ntime as usize,
                matrix_n,
                reps,
                t_list: t,
                seed: seed.unwrap_or(DEFAULT_SEED),
                regime: regime.map(|s| s.parse::<Regime>()).transpose()?,
            };
            let table = simulate_limits(&cfg)?;
            let mut r = Report::table(&["quantity", "empirical", "stderr", "reference"]);
            for row in &table.rows {
                r.push(vec![row.quantity.as_str().into(), row.empirical.into(), row.stderr.into(), row.reference.into()]);
            }
            let r = r.trailer("regime", table.regime.to_string()).trailer("normalization", table.normalization);
            Ok(with_meta(r, &table.meta).meta("seed", cfg.seed).meta("n_samples", reps).versioned())
        }
    }
}
