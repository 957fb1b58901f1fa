use cvmet_core::applications::{fit_scaling, OptomechModel, ScalingFit};
use cvmet_core::bch::{exact_to_c64, expansion_table, verify_factorization, ExactComplex, Variant};
use cvmet_core::cvspace::FockDim;
use cvmet_core::qfi::{
    asymptotic_qfi, crb_precision, precision_ratio, qfi_fd_strategy, qfi_generator,
    with_dimension_loop, QfiEstimate, QfiMethod,
};
use cvmet_core::strategies::{StrategyConfig, StrategyKind};
use cvmet_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{Command, RunConfig, SweepParam};
use crate::error::CliError;
use crate::table::{Cell, Table};

/// One QFI estimate by the requested route, with the dimension loop where
/// a truncation is involved.
pub fn estimate(cfg: &RunConfig, strategy: &StrategyConfig, method: QfiMethod) -> Result<QfiEstimate, CoreError> {
    let which = cfg.parameter;
    match method {
        QfiMethod::FiniteDifference => {
            with_dimension_loop(&cfg.dimension, |d| qfi_fd_strategy(strategy, which, d, cfg.fd_step))
        }
        QfiMethod::GeneratorExact => with_dimension_loop(&cfg.dimension, |d| qfi_generator(strategy, which, d)),
        QfiMethod::Asymptotic => asymptotic_qfi(strategy, which),
    }
}

pub fn qfi_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let est = estimate(cfg, &cfg.strategy, cfg.method)?;
    let precision = crb_precision(&est, cfg.nu)?;
    let mut t = Table::new(vec![
        "strategy", "parameter", "N", "m", "theta1", "theta2", "method", "value", "step_used",
        "converged", "dim_used", "delta_theta",
    ]);
    let s = &cfg.strategy;
    t.push(vec![
        s.strategy.as_str().into(),
        cfg.parameter.as_str().into(),
        s.n_queries.into(),
        s.m.into(),
        s.theta1.into(),
        s.theta2.into(),
        est.method.as_str().into(),
        est.value.into(),
        est.step_used.into(),
        est.converged.into(),
        est.diagnostic("dim_used").map_or(Cell::Empty, |d| Cell::Int(d as i64)),
        precision.delta_theta.into(),
    ]);
    Ok(t)
}

fn sweep_point(cfg: &RunConfig, param: SweepParam, v: f64) -> StrategyConfig {
    let mut s = cfg.strategy.clone();
    match param {
        SweepParam::NQueries => s.n_queries = v as u32,
        SweepParam::M => s.m = v as u32,
        SweepParam::Theta1 => s.theta1 = v,
        SweepParam::Theta2 => s.theta2 = v,
    }
    s
}

/// Unsupported routes leave an empty cell; every other error aborts.
fn optional(r: Result<QfiEstimate, CoreError>) -> Result<Option<QfiEstimate>, CoreError> {
    match r {
        Ok(e) => Ok(Some(e)),
        Err(CoreError::Unsupported(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn sweep_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing sweep section".into()))?;
    let rows: Vec<Result<Vec<Cell>, CoreError>> = sweep
        .values
        .par_iter()
        .map(|&v| {
            let s = sweep_point(cfg, sweep.param, v);
            let run = |m: QfiMethod| -> Result<Option<QfiEstimate>, CoreError> {
                if cfg.methods.contains(&m) {
                    optional(estimate(cfg, &s, m))
                } else {
                    Ok(None)
                }
            };
            let fd = run(QfiMethod::FiniteDifference)?;
            let gen = run(QfiMethod::GeneratorExact)?;
            let asym = run(QfiMethod::Asymptotic)?;
            let best = gen.as_ref().or(fd.as_ref()).or(asym.as_ref());
            let delta = match best {
                Some(e) => Some(crb_precision(e, cfg.nu)?.delta_theta),
                None => None,
            };
            let converged = [&fd, &gen].iter().all(|e| e.as_ref().is_none_or(|e| e.converged));
            let dim_used = [&gen, &fd]
                .iter()
                .filter_map(|e| e.as_ref().and_then(|e| e.diagnostic("dim_used")))
                .fold(None, |a: Option<f64>, d| Some(a.map_or(d, |a| a.max(d))));
            Ok(vec![
                s.n_queries.into(),
                s.m.into(),
                s.theta1.into(),
                s.theta2.into(),
                s.strategy.as_str().into(),
                fd.map(|e| e.value).into(),
                gen.map(|e| e.value).into(),
                asym.map(|e| e.value).into(),
                delta.into(),
                converged.into(),
                dim_used.map_or(Cell::Empty, |d| Cell::Int(d as i64)),
            ])
        })
        .collect();
    let mut t = Table::new(vec![
        "N", "m", "theta1", "theta2", "strategy", "F_fd", "F_gen", "F_asym", "delta_theta",
        "converged", "dim_used",
    ]);
    for row in rows {
        t.push(row?);
    }
    Ok(t)
}

pub fn ratio_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let r = &cfg.ratio;
    let mut t = Table::new(vec!["m", "N", "ratio_measured", "ratio_formula"]);
    for &m in &r.m_values {
        let base = StrategyConfig {
            theta1: r.theta1,
            theta2: r.theta2,
            n_queries: r.n_queries,
            m,
            strategy: StrategyKind::CoherentSuperposition,
            probe: cfg.strategy.probe,
        };
        let res = precision_ratio(&base, r.method, &cfg.dimension)?;
        if !res.in_regime {
            eprintln!("warning: m = {m}, N = {} is outside the large-N regime", r.n_queries);
        }
        if !res.converged {
            eprintln!("warning: m = {m}: QFI did not converge in the truncation");
        }
        t.push(vec![m.into(), r.n_queries.into(), res.ratio.into(), res.formula.into()]);
    }
    Ok(t)
}

/// `p/q` rendering of an exact rational.
fn fraction(r: &cvmet_core::bch::Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::AB => "C",
        Variant::BA => "C_prime",
    }
}

pub fn bch_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut t = Table::new(vec!["m", "n", "variant", "power", "coeff_re", "coeff_im"]);
    for m in 1..=cfg.bch.m_max {
        for variant in [Variant::AB, Variant::BA] {
            for (n, term) in expansion_table(m, variant).terms {
                for (power, c) in term.terms() {
                    let c: &ExactComplex = c;
                    t.push(vec![
                        m.into(),
                        n.into(),
                        variant_name(variant).into(),
                        power.into(),
                        fraction(&c.re).into(),
                        fraction(&c.im).into(),
                    ]);
                    debug_assert!(exact_to_c64(c).is_finite());
                }
            }
        }
    }
    Ok(t)
}

pub fn factorization_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let f = &cfg.factorization;
    let dim = FockDim::new(f.dim)?;
    let mut jobs = Vec::new();
    for &m in &f.m_values {
        for &l in &f.lambdas {
            for v in [Variant::AB, Variant::BA] {
                jobs.push((m, l, v));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(m, l, v)| (m, l, v, verify_factorization(m, l, dim, v)))
        .collect();
    let mut t = Table::new(vec!["m", "lambda_im", "variant", "dim", "residual", "status"]);
    for (m, l, v, r) in results {
        let (residual, status) = match r {
            Ok(x) => (Cell::Float(x), "ok".to_string()),
            Err(CoreError::Envelope { mass, .. }) => (Cell::Empty, format!("envelope ({mass:.3e})")),
            Err(e) => return Err(e.into()),
        };
        t.push(vec![m.into(), l.into(), variant_name(v).into(), f.dim.into(), residual, status.into()]);
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct OptomechPoint {
    pub n: u32,
    pub delta2_g: f64,
    pub qfi_g: f64,
    pub derivative_converged: bool,
    /// Closed large-N expression, when it is defined.
    pub large_n: Option<f64>,
}

pub fn optomech_points(cfg: &RunConfig) -> Result<Vec<OptomechPoint>, CoreError> {
    let o = &cfg.optomech;
    o.n_values
        .par_iter()
        .map(|&n| {
            let model = OptomechModel::new(&o.params.with_steps(n))?;
            let h = model.homodyne(None)?;
            let f = model.qfi_g()?;
            let large_n = model.large_n_delta2_g().ok();
            Ok(OptomechPoint { n, delta2_g: h.delta2_g, qfi_g: f.value, derivative_converged: h.converged, large_n })
        })
        .collect()
}

/// Largest relative deviation from the mean of `values`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).abs() / mean.abs()).fold(0.0, f64::max)
}

/// `delta^2 g * g^2 * N^6` over the upper half of the sweep.
pub fn plateau_values(points: &[OptomechPoint], g: f64) -> Vec<f64> {
    let half = points.len() / 2;
    points[half..].iter().map(|p| p.delta2_g * g * g * (p.n as f64).powi(6)).collect()
}

pub fn optomech_fit(points: &[OptomechPoint]) -> Result<ScalingFit, CoreError> {
    let pts: Vec<_> = points.iter().map(|p| (p.n as f64, p.delta2_g)).collect();
    fit_scaling(&pts, true)
}

pub fn optomech_tables(cfg: &RunConfig) -> Result<(Table, Table), CliError> {
    let points = optomech_points(cfg)?;
    let mut t = Table::new(vec!["N", "delta2_g"]);
    for p in &points {
        t.push(vec![p.n.into(), p.delta2_g.into()]);
    }
    let fit = optomech_fit(&points)?;
    let plateau = relative_spread(&plateau_values(&points, cfg.optomech.params.g));
    let mut s = Table::new(vec!["slope", "intercept", "r_squared", "plateau_spread"]);
    s.push(vec![fit.slope.into(), fit.intercept.into(), fit.r_squared.into(), plateau.into()]);
    Ok((t, s))
}

/// Path of the companion fit summary next to the main CSV.
pub fn fit_path(csv: &std::path::Path) -> std::path::PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("optomech");
    csv.with_file_name(format!("{stem}.fit.csv"))
}

/// Tables produced by a data command, in output order.
pub fn tables_for(command: Command, cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    cfg.validate(command)?;
    Ok(match command {
        Command::Qfi => vec![qfi_table(cfg)?],
        Command::Sweep => vec![sweep_table(cfg)?],
        Command::Ratio => vec![ratio_table(cfg)?],
        Command::BchTable => vec![bch_table(cfg)?],
        Command::FactorizationCheck => vec![factorization_table(cfg)?],
        Command::Optomech => {
            let (a, b) = optomech_tables(cfg)?;
            vec![a, b]
        }
        Command::Claims => vec![crate::claims::claims_table(&crate::claims::run_all(cfg))],
    })
}
