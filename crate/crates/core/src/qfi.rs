//! Quantum Fisher information of pure strategy outputs.
//!
//! Three routes are provided: central finite differences on any state
//! builder, exact evaluation through the branch derivative generators, and
//! the leading-order closed forms. The first two are cross-checks of each
//! other; the third is what the large-`N` comparisons aim at.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bch::{phase_derivative_generator, theta1_linear_generator, BranchKind, PPoly};
use crate::cvspace::{
    build_quadrature, check_block_envelope, moment, prepare_probe, variance, CvState,
    DimensionLoop, FockDim, Quadrature, C64,
};
use crate::error::{Error, Result};
use crate::strategies::{strategy_output, StrategyConfig, StrategyKind};

/// Relative agreement required between the `h` and `h/2` estimates.
pub const FD_REL_TOL: f64 = 1e-4;
/// Number of step halvings tried after the first pair disagrees.
pub const FD_MAX_REDUCTIONS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QfiMethod {
    FiniteDifference,
    GeneratorExact,
    Asymptotic,
}

impl QfiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            QfiMethod::FiniteDifference => "finite_difference",
            QfiMethod::GeneratorExact => "generator_exact",
            QfiMethod::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Theta1,
    Theta2,
}

impl Parameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Theta1 => "theta1",
            Parameter::Theta2 => "theta2",
        }
    }

    pub fn value(self, cfg: &StrategyConfig) -> f64 {
        match self {
            Parameter::Theta1 => cfg.theta1,
            Parameter::Theta2 => cfg.theta2,
        }
    }

    pub fn set(self, cfg: &StrategyConfig, v: f64) -> StrategyConfig {
        match self {
            Parameter::Theta1 => cfg.with_theta1(v),
            Parameter::Theta2 => cfg.with_theta2(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfiEstimate {
    pub value: f64,
    pub method: QfiMethod,
    pub step_used: Option<f64>,
    pub converged: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl QfiEstimate {
    fn new(value: f64, method: QfiMethod) -> Self {
        Self { value, method, step_used: None, converged: true, diagnostics: BTreeMap::new() }
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionResult {
    pub delta_theta: f64,
    pub nu: u32,
    pub source: QfiEstimate,
}

impl PrecisionResult {
    /// `delta_theta * sqrt(nu)`, the repetition-free precision.
    pub fn scaled(&self) -> f64 {
        self.delta_theta * (self.nu as f64).sqrt()
    }
}

/// `4(<dpsi|dpsi> - |<psi|dpsi>|^2)` for a normalised `psi`, clamped at 0.
pub fn pure_qfi(psi: &DVector<C64>, dpsi: &DVector<C64>) -> f64 {
    let overlap = psi.dotc(dpsi);
    (4.0 * (dpsi.norm_squared() - overlap.norm_sqr())).max(0.0)
}

pub fn default_step(theta: f64) -> f64 {
    1e-4 * theta.abs().max(1.0)
}

fn fd_at<F>(builder: &mut F, theta0: f64, h: f64, psi: &DVector<C64>) -> Result<f64>
where
    F: FnMut(f64) -> Result<DVector<C64>>,
{
    let plus = builder(theta0 + h)?;
    let minus = builder(theta0 - h)?;
    let dpsi = (plus - minus) / C64::new(2.0 * h, 0.0);
    Ok(pure_qfi(psi, &dpsi))
}

fn agree(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Central-difference QFI with a mandatory `(h, h/2)` Richardson check. When
/// the pair disagrees the step is halved, up to [`FD_MAX_REDUCTIONS`] times.
pub fn qfi_fd<F>(mut builder: F, theta0: f64, step: Option<f64>) -> Result<QfiEstimate>
where
    F: FnMut(f64) -> Result<DVector<C64>>,
{
    let mut h = step.unwrap_or_else(|| default_step(theta0));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let psi = builder(theta0)?;
    let mut coarse = fd_at(&mut builder, theta0, h, &psi)?;
    let mut reductions = 0;
    loop {
        let fine = fd_at(&mut builder, theta0, h / 2.0, &psi)?;
        let converged = agree(coarse, fine, FD_REL_TOL);
        if converged || reductions == FD_MAX_REDUCTIONS {
            let extrapolated = ((4.0 * fine - coarse) / 3.0).max(0.0);
            let mut est = QfiEstimate::new(extrapolated, QfiMethod::FiniteDifference);
            est.step_used = Some(h);
            est.converged = converged;
            est.diagnostics.insert("f_h".into(), coarse);
            est.diagnostics.insert("f_h_half".into(), fine);
            let scale = coarse.abs().max(fine.abs());
            let residual = if scale > 0.0 { (coarse - fine).abs() / scale } else { 0.0 };
            est.diagnostics.insert("richardson_residual".into(), residual);
            est.diagnostics.insert("step_reductions".into(), reductions as f64);
            return Ok(est);
        }
        reductions += 1;
        h /= 2.0;
        coarse = fine;
    }
}

/// Finite-difference QFI of a strategy output at a fixed truncation.
pub fn qfi_fd_strategy(cfg: &StrategyConfig, which: Parameter, dim: FockDim, step: Option<f64>) -> Result<QfiEstimate> {
    cfg.validate()?;
    let theta0 = which.value(cfg);
    let mut est = qfi_fd(
        |t| Ok(strategy_output(&which.set(cfg, t), dim)?.amplitudes().clone()),
        theta0,
        step,
    )?;
    est.diagnostics.insert("dim_used".into(), dim.get() as f64);
    Ok(est)
}

/// Per-branch derivative generators `g_b` (with their branch sign folded in)
/// and the quadrature they are polynomials of.
pub fn branch_generators(cfg: &StrategyConfig, which: Parameter) -> Result<(Quadrature, Vec<PPoly<C64>>)> {
    cfg.validate()?;
    let n = cfg.n_queries;
    let cs_like = matches!(cfg.strategy, StrategyKind::CoherentSuperposition | StrategyKind::Composite);
    if cfg.strategy == StrategyKind::Composite && cfg.m != 1 {
        return Err(Error::Unsupported("the composite realisation is linear only (m = 1)".into()));
    }
    match which {
        Parameter::Theta2 => {
            if cs_like {
                let g = phase_derivative_generator(cfg.m, cfg.theta1, n, BranchKind::CsBranch);
                Ok((Quadrature::P, vec![g.clone(), g.neg()]))
            } else {
                let g0 = PPoly::monomial(cfg.m, C64::new(n as f64, 0.0));
                let g1 = phase_derivative_generator(cfg.m, cfg.theta1, n, BranchKind::SwitchBranch);
                Ok((Quadrature::P, vec![g0, g1]))
            }
        }
        Parameter::Theta1 => {
            if cfg.m != 1 {
                return Err(Error::Unsupported(format!(
                    "exact theta1 generators are only available for m = 1 (got m = {}); use finite differences",
                    cfg.m
                )));
            }
            if cs_like {
                Ok((
                    Quadrature::X,
                    vec![
                        theta1_linear_generator(cfg.theta2, n, BranchKind::CsBranch, 1.0),
                        theta1_linear_generator(cfg.theta2, n, BranchKind::CsBranch, -1.0),
                    ],
                ))
            } else {
                let g0 = theta1_linear_generator(cfg.theta2, n, BranchKind::SwitchBranch, 1.0);
                let g1 = PPoly::monomial(1, C64::new(n as f64, 0.0));
                Ok((Quadrature::X, vec![g0, g1]))
            }
        }
    }
}

fn real_part(g: &PPoly<C64>) -> Result<PPoly<C64>> {
    let scale = g.terms().fold(1.0f64, |a, (_, c)| a.max(c.norm()));
    if g.max_imag() > 1e-12 * scale {
        return Err(Error::Contract("branch generator is not Hermitian".into()));
    }
    let mut out = PPoly::zero();
    for (k, c) in g.terms() {
        out = out.add(&PPoly::monomial(k, C64::new(c.re, 0.0)));
    }
    Ok(out)
}

/// `(<g>, <g^2>)` on the probe; exact while `g^2` keeps the probe inside the
/// truncation.
fn generator_moments(g: &PPoly<C64>, q: Quadrature, probe: &CvState) -> Result<(f64, f64)> {
    let g = real_part(g)?;
    let deg = g.degree().unwrap_or(0);
    check_block_envelope(probe.amplitudes().as_slice(), probe.dim(), deg.max(1))?;
    let v = g.apply(q, probe)?;
    Ok((probe.amplitudes().dotc(&v).re, v.norm_squared()))
}

/// Exact QFI from the branch derivative generators:
/// `F = 4(1/2 sum_b <g_b^2> - (1/2 sum_b <g_b>)^2)`.
pub fn qfi_generator(cfg: &StrategyConfig, which: Parameter, dim: FockDim) -> Result<QfiEstimate> {
    let (q, gens) = branch_generators(cfg, which)?;
    let probe = prepare_probe(&cfg.probe, dim)?;
    let weight = 1.0 / gens.len() as f64;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut mean_sq = 0.0;
    for g in &gens {
        let (m1, m2) = generator_moments(g, q, &probe)?;
        mean += weight * m1;
        second += weight * m2;
        mean_sq += weight * m1 * m1;
    }
    let value = (4.0 * (second - mean * mean)).max(0.0);
    let mut est = QfiEstimate::new(value, QfiMethod::GeneratorExact);
    est.diagnostics.insert("dim_used".into(), dim.get() as f64);
    est.diagnostics.insert("mean_generator".into(), mean);
    // leading-order shorthand 4|<g>|^2 (branch-averaged)
    est.diagnostics.insert("squared_mean_form".into(), 4.0 * mean_sq);
    Ok(est)
}

/// Run a fixed-dimension QFI evaluation under the dimension-doubling loop.
pub fn with_dimension_loop<F>(dl: &DimensionLoop, mut eval: F) -> Result<QfiEstimate>
where
    F: FnMut(FockDim) -> Result<QfiEstimate>,
{
    let out = dl.run(&mut eval, |e: &QfiEstimate| e.value)?;
    let mut est = out.value;
    est.converged = est.converged && out.converged;
    est.diagnostics.insert("dim_used".into(), out.dim_used.get() as f64);
    Ok(est)
}

/// Leading-order closed forms.
///
/// * switch, `m = 1`: `F_theta1 = theta2^2 N^4 + 4N^2 Var X`,
///   `F_theta2 = theta1^2 N^4 + 4N^2 Var P`;
/// * coherent superposition, `m = 1`: `F_theta2 = 16 N^4 theta1^2`,
///   `F_theta1 = 16 N^4 theta2^2`;
/// * `m >= 2`, `theta2`: `2^(2(m+2)) theta1^(2m) N^(2(m+1)) / (m+1)^2` for the
///   coherent superposition and `theta1^(2m) N^(2(m+1))` for the switch.
pub fn asymptotic_qfi(cfg: &StrategyConfig, which: Parameter) -> Result<QfiEstimate> {
    cfg.validate()?;
    let n = cfg.n_queries as f64;
    let m = cfg.m;
    let cs_like = cfg.strategy != StrategyKind::Switch;
    let value = match (cs_like, which, m) {
        (false, Parameter::Theta1, 1) | (false, Parameter::Theta2, 1) => {
            let (other, quad) = match which {
                Parameter::Theta1 => (cfg.theta2, Quadrature::X),
                Parameter::Theta2 => (cfg.theta1, Quadrature::P),
            };
            let var = probe_variance(cfg, quad)?;
            other * other * n.powi(4) + 4.0 * n * n * var
        }
        (true, Parameter::Theta2, 1) => 16.0 * n.powi(4) * cfg.theta1 * cfg.theta1,
        (true, Parameter::Theta1, 1) => 16.0 * n.powi(4) * cfg.theta2 * cfg.theta2,
        (_, Parameter::Theta1, _) => {
            return Err(Error::Unsupported(format!(
                "no closed form for theta1 at m = {m}"
            )))
        }
        (cs, Parameter::Theta2, _) => {
            let base = cfg.theta1.powi(2 * m as i32) * n.powi(2 * (m as i32 + 1));
            if cs {
                base * 2f64.powi(2 * (m as i32 + 2)) / ((m + 1) as f64).powi(2)
            } else {
                base
            }
        }
    };
    Ok(QfiEstimate::new(value, QfiMethod::Asymptotic))
}

fn probe_variance(cfg: &StrategyConfig, q: Quadrature) -> Result<f64> {
    let dim = FockDim::new(64)?;
    let probe = prepare_probe(&cfg.probe, dim)?;
    probe.check_envelope(1)?;
    variance(&probe, &build_quadrature(dim, q)?)
}

/// `<P>` of the probe.
pub fn probe_mean_p(probe: &crate::cvspace::ProbeSpec) -> Result<f64> {
    let dim = FockDim::new(64)?;
    let state = prepare_probe(probe, dim)?;
    Ok(moment(&state, &build_quadrature(dim, Quadrature::P)?, 1)?.re)
}

/// Cramér–Rao precision `1/sqrt(nu F)`.
pub fn crb_precision(f: &QfiEstimate, nu: u32) -> Result<PrecisionResult> {
    if nu == 0 {
        return Err(Error::Domain("nu must be positive".into()));
    }
    if !(f.value > 0.0) {
        return Err(Error::Unidentifiable(format!("QFI is {} (must be positive)", f.value)));
    }
    Ok(PrecisionResult { delta_theta: 1.0 / (nu as f64 * f.value).sqrt(), nu, source: f.clone() })
}

/// Large-`N` condition `N |theta1| >= 10 (|<P>| + 1)` on the probe.
pub fn large_n_gate(cfg: &StrategyConfig) -> Result<bool> {
    let p = probe_mean_p(&cfg.probe)?;
    Ok(cfg.n_queries as f64 * cfg.theta1.abs() >= 10.0 * (p.abs() + 1.0))
}

/// `(m + 1) / 2^(m + 2)`.
pub fn ratio_formula(m: u32) -> f64 {
    (m + 1) as f64 / 2f64.powi(m as i32 + 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub m: u32,
    pub n_queries: u32,
    pub ratio: f64,
    pub formula: f64,
    pub in_regime: bool,
    pub converged: bool,
    pub cs: QfiEstimate,
    pub switch: QfiEstimate,
}

/// `delta theta2 |cs / delta theta2 |switch` at equal `N`, both QFIs from the
/// same method (`GeneratorExact` or `FiniteDifference`).
pub fn precision_ratio(base: &StrategyConfig, method: QfiMethod, dl: &DimensionLoop) -> Result<RatioResult> {
    let cs_cfg = StrategyConfig { strategy: StrategyKind::CoherentSuperposition, ..base.clone() };
    let sw_cfg = StrategyConfig { strategy: StrategyKind::Switch, ..base.clone() };
    let eval = |cfg: &StrategyConfig| -> Result<QfiEstimate> {
        match method {
            QfiMethod::GeneratorExact => with_dimension_loop(dl, |d| qfi_generator(cfg, Parameter::Theta2, d)),
            QfiMethod::FiniteDifference => {
                with_dimension_loop(dl, |d| qfi_fd_strategy(cfg, Parameter::Theta2, d, None))
            }
            QfiMethod::Asymptotic => asymptotic_qfi(cfg, Parameter::Theta2),
        }
    };
    let cs = eval(&cs_cfg)?;
    let switch = eval(&sw_cfg)?;
    let d_cs = crb_precision(&cs, 1)?.delta_theta;
    let d_sw = crb_precision(&switch, 1)?.delta_theta;
    Ok(RatioResult {
        m: base.m,
        n_queries: base.n_queries,
        ratio: d_cs / d_sw,
        formula: ratio_formula(base.m),
        in_regime: large_n_gate(base)?,
        converged: cs.converged && switch.converged,
        cs,
        switch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvspace::{Propagator, ProbeSpec};

    fn cfg(kind: StrategyKind, m: u32, t1: f64, t2: f64, n: u32) -> StrategyConfig {
        StrategyConfig { theta1: t1, theta2: t2, n_queries: n, m, strategy: kind, probe: ProbeSpec::Vacuum }
    }

    fn dim(d: usize) -> FockDim {
        FockDim::new(d).unwrap()
    }

    #[test]
    fn displaced_vacuum_has_qfi_two() {
        let d = dim(40);
        let p = Propagator::new(&build_quadrature(d, Quadrature::P).unwrap()).unwrap();
        let vac = CvState::vacuum(d);
        let est = qfi_fd(|t| p.apply(t, vac.amplitudes()), 0.0, None).unwrap();
        assert!((est.value - 2.0).abs() < 1e-8);
        assert!(est.converged);
        assert_eq!(est.step_used, Some(1e-4));
    }

    #[test]
    fn constant_builder_has_zero_qfi() {
        let v = CvState::vacuum(dim(8)).amplitudes().clone();
        let est = qfi_fd(|_| Ok(v.clone()), 0.3, None).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn bad_step_is_rejected() {
        let v = CvState::vacuum(dim(8)).amplitudes().clone();
        assert!(qfi_fd(|_| Ok(v.clone()), 0.0, Some(0.0)).is_err());
    }

    #[test]
    fn cs_linear_generator_value() {
        let c = cfg(StrategyKind::CoherentSuperposition, 1, 0.1, 0.1, 4);
        let est = qfi_generator(&c, Parameter::Theta2, dim(32)).unwrap();
        assert!((est.value - 168.96).abs() < 1e-9 * 168.96);
    }

    #[test]
    fn switch_linear_generator_values() {
        let c = cfg(StrategyKind::Switch, 1, 0.1, 0.1, 4);
        for which in [Parameter::Theta1, Parameter::Theta2] {
            let est = qfi_generator(&c, which, dim(32)).unwrap();
            assert!((est.value - 34.56).abs() < 1e-9 * 34.56, "{which:?}: {}", est.value);
        }
    }

    #[test]
    fn theta1_nonlinear_is_unsupported() {
        let c = cfg(StrategyKind::Switch, 2, 0.1, 0.1, 4);
        assert!(matches!(qfi_generator(&c, Parameter::Theta1, dim(32)), Err(Error::Unsupported(_))));
        assert!(matches!(asymptotic_qfi(&c, Parameter::Theta1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn asymptotic_examples() {
        let sw = cfg(StrategyKind::Switch, 1, 0.1, 0.1, 4);
        assert!((asymptotic_qfi(&sw, Parameter::Theta1).unwrap().value - 34.56).abs() < 1e-9);
        let cs = cfg(StrategyKind::CoherentSuperposition, 3, 0.1, 0.1, 6);
        let expect = 1024.0 * 1e-6 * 1_679_616.0 / 16.0;
        assert!((asymptotic_qfi(&cs, Parameter::Theta2).unwrap().value - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn crb_examples() {
        let f = QfiEstimate::new(100.0, QfiMethod::Asymptotic);
        assert!((crb_precision(&f, 1).unwrap().delta_theta - 0.1).abs() < 1e-15);
        let zero = QfiEstimate::new(0.0, QfiMethod::Asymptotic);
        assert!(matches!(crb_precision(&zero, 1), Err(Error::Unidentifiable(_))));
    }

    #[test]
    fn ratio_formula_values() {
        assert_eq!(ratio_formula(1), 0.25);
        assert_eq!(ratio_formula(2), 3.0 / 16.0);
        assert_eq!(ratio_formula(3), 0.125);
    }

    #[test]
    fn pure_qfi_ignores_phase_direction() {
        let psi = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let dpsi = &psi * C64::new(0.0, 3.0);
        assert_eq!(pure_qfi(&psi, &dpsi), 0.0);
    }
}
