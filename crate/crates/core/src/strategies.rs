//! Output states of the three coding strategies on (control qubit) x (mode).
//!
//! * switch: `(|0> U1^N U2^N |phi> + |1> U2^N U1^N |phi>)/sqrt(2)` with
//!   `U1 = exp(-i theta1 X)`, `U2 = exp(-i theta2 P^m)`;
//! * coherent superposition: `(|0> U+^2N |phi> + |1> U-^2N |phi>)/sqrt(2)` with
//!   `U± = exp(-i(theta1 X ± theta2 P^m))`;
//! * composite: evolution under `G1 X + G2 sigma_z P` for a time `T`.
//!
//! The generic builders are paired with factorized closed forms assembled
//! from the `bch` terms, which serve as independent checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bch::{cs_branch_exponent, exp_anti_hermitian, switch_reorder_exponent};
use crate::cvspace::{
    build_quadrature, check_block_envelope, evolve_with, prepare_probe, FockDim,
    ModeRegister, Operator, ProbeSpec, Propagator, Quadrature, C64, NORM_TOL,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Switch,
    CoherentSuperposition,
    Composite,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Switch => "switch",
            StrategyKind::CoherentSuperposition => "coherent_superposition",
            StrategyKind::Composite => "composite",
        }
    }
}

/// Coding parameters shared by all strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub n_queries: u32,
    pub m: u32,
    pub strategy: StrategyKind,
    #[serde(default)]
    pub probe: ProbeSpec,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1.is_finite() && self.theta2.is_finite()) {
            return Err(Error::Domain("theta1 and theta2 must be finite".into()));
        }
        if self.n_queries == 0 {
            return Err(Error::Domain("n_queries must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Domain("nonlinearity order m must be positive".into()));
        }
        Ok(())
    }

    pub fn with_theta1(&self, theta1: f64) -> Self {
        Self { theta1, ..self.clone() }
    }

    pub fn with_theta2(&self, theta2: f64) -> Self {
        Self { theta2, ..self.clone() }
    }

    pub fn queries(&self) -> QueryCount {
        QueryCount::for_strategy(self.strategy, self.n_queries)
    }
}

/// Black-box queries consumed by one run of a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCount {
    pub u1: u32,
    pub u2: u32,
    pub u_plus: u32,
    pub u_minus: u32,
}

impl QueryCount {
    pub fn for_strategy(kind: StrategyKind, n: u32) -> Self {
        match kind {
            StrategyKind::Switch => Self { u1: n, u2: n, u_plus: 0, u_minus: 0 },
            StrategyKind::CoherentSuperposition | StrategyKind::Composite => {
                Self { u1: 0, u2: 0, u_plus: 2 * n, u_minus: 2 * n }
            }
        }
    }
}

/// Pure state of a `control_dim`-level register times one mode, stored as
/// control-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct QState {
    control_dim: usize,
    fock: FockDim,
    amplitudes: DVector<C64>,
}

impl QState {
    pub fn from_amplitudes(control_dim: usize, fock: FockDim, amplitudes: DVector<C64>) -> Result<Self> {
        if control_dim == 0 || amplitudes.len() != control_dim * fock.get() {
            return Err(Error::DimensionMismatch {
                expected: control_dim * fock.get(),
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Contract(format!("joint state norm {norm} is not 1")));
        }
        Ok(Self { control_dim, fock, amplitudes })
    }

    /// `sum_b |b> |block_b>` from unnormalised blocks (already carrying weights).
    pub fn from_blocks(fock: FockDim, blocks: &[DVector<C64>]) -> Result<Self> {
        let d = fock.get();
        let mut amplitudes = DVector::zeros(blocks.len() * d);
        for (b, block) in blocks.iter().enumerate() {
            if block.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: block.len() });
            }
            amplitudes.rows_mut(b * d, d).copy_from(block);
        }
        Self::from_amplitudes(blocks.len(), fock, amplitudes)
    }

    /// `(|0>|phi0> + |1>|phi1>)/sqrt(2)`.
    pub fn balanced(phi0: &DVector<C64>, phi1: &DVector<C64>, fock: FockDim) -> Result<Self> {
        let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_blocks(fock, &[phi0 * w, phi1 * w])
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn fock(&self) -> FockDim {
        self.fock
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn block(&self, b: usize) -> DVector<C64> {
        let d = self.fock.get();
        self.amplitudes.rows(b * d, d).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &QState) -> Result<C64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amplitudes.len(),
                got: other.amplitudes.len(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|<self|other>|`, insensitive to a global phase.
    pub fn fidelity(&self, other: &QState) -> Result<f64> {
        Ok(self.overlap(other)?.norm())
    }

    pub fn with_global_phase(&self, phase: f64) -> Self {
        Self { amplitudes: &self.amplitudes * C64::from_polar(1.0, phase), ..self.clone() }
    }

    /// Reduced density matrix of the control register.
    pub fn control_density(&self) -> DMatrix<C64> {
        let k = self.control_dim;
        let blocks: Vec<_> = (0..k).map(|b| self.block(b)).collect();
        DMatrix::from_fn(k, k, |i, j| blocks[j].dotc(&blocks[i]))
    }

    pub fn control_purity(&self) -> f64 {
        let rho = self.control_density();
        (&rho * &rho).trace().re
    }

    /// `sum_{b,b'} O_{b b'} <block_b|block_b'>` for an operator on the control register.
    pub fn control_expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim().get() != self.control_dim {
            return Err(Error::DimensionMismatch { expected: self.control_dim, got: op.dim().get() });
        }
        let blocks: Vec<_> = (0..self.control_dim).map(|b| self.block(b)).collect();
        let mut acc = C64::new(0.0, 0.0);
        for (i, bi) in blocks.iter().enumerate() {
            for (j, bj) in blocks.iter().enumerate() {
                let o = op.entries()[(i, j)];
                if o != C64::new(0.0, 0.0) {
                    acc += o * bi.dotc(bj);
                }
            }
        }
        Ok(acc)
    }

    /// `arg <phi0|phi1>` between the first two control blocks.
    pub fn branch_relative_phase(&self) -> f64 {
        self.block(0).dotc(&self.block(1)).arg()
    }

    /// Occupation of control levels outside `keep`.
    pub fn occupation_outside(&self, keep: &[usize]) -> f64 {
        (0..self.control_dim)
            .filter(|b| !keep.contains(b))
            .map(|b| self.block(b).norm_squared())
            .sum()
    }

    /// Safe-envelope check of every block for operations involving `P^m`.
    pub fn check_envelope(&self, m: u32) -> Result<()> {
        for b in 0..self.control_dim {
            let block = self.block(b);
            let w = block.norm_squared();
            if w > 0.0 {
                let unit = block / C64::new(w.sqrt(), 0.0);
                check_block_envelope(unit.as_slice(), self.fock, m)?;
            }
        }
        Ok(())
    }
}

impl ModeRegister for QState {
    fn mode_dim(&self) -> FockDim {
        self.fock
    }

    fn blocks(&self) -> Vec<DVector<C64>> {
        (0..self.control_dim).map(|b| self.block(b)).collect()
    }

    fn with_blocks(&self, blocks: Vec<DVector<C64>>) -> Result<Self> {
        if blocks.len() != self.control_dim {
            return Err(Error::DimensionMismatch { expected: self.control_dim, got: blocks.len() });
        }
        Self::from_blocks(self.fock, &blocks)
    }
}

struct Quadratures {
    x: Operator,
    p: Operator,
    pm: Operator,
}

fn quadratures(dim: FockDim, m: u32) -> Result<Quadratures> {
    let x = build_quadrature(dim, Quadrature::X)?;
    let p = build_quadrature(dim, Quadrature::P)?;
    let pm = p.pow(m);
    Ok(Quadratures { x, p, pm })
}

fn expect_kind(cfg: &StrategyConfig, kind: StrategyKind) -> Result<()> {
    cfg.validate()?;
    if cfg.strategy != kind {
        return Err(Error::Unsupported(format!(
            "builder for {} called with strategy {}",
            kind.as_str(),
            cfg.strategy.as_str()
        )));
    }
    Ok(())
}

fn apply_times(u: &Operator, v: DVector<C64>, times: u32) -> DVector<C64> {
    (0..times).fold(v, |acc, _| u.entries() * acc)
}

fn finish(state: QState, m: u32) -> Result<QState> {
    state.check_envelope(m)?;
    Ok(state)
}

/// Generic switch construction: each of the `2N` gates is applied literally.
pub fn switch_output(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    expect_kind(cfg, StrategyKind::Switch)?;
    let q = quadratures(dim, cfg.m)?;
    let phi = prepare_probe(&cfg.probe, dim)?.amplitudes().clone();
    let u1 = Propagator::new(&q.x)?.unitary(cfg.theta1);
    let u2 = Propagator::new(&q.pm)?.unitary(cfg.theta2);
    let n = cfg.n_queries;
    // |0>: U1^N U2^N |phi>, i.e. the U2 queries act first
    let first = apply_times(&u1, apply_times(&u2, phi.clone(), n), n);
    let second = apply_times(&u2, apply_times(&u1, phi, n), n);
    finish(QState::balanced(&first, &second, dim)?, cfg.m)
}

/// Linear switch in the closed form
/// `(exp(-i N^2 theta1 theta2)|0> + |1>) exp(-iN theta2 P) exp(-iN theta1 X)|phi>/sqrt(2)`.
///
/// The reordering phase sits on `|0>` with a negative sign for `[X, P] = i`;
/// moving it to `|1>` flips its sign (up to a global phase).
pub fn switch_closed_form_linear(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    expect_kind(cfg, StrategyKind::Switch)?;
    if cfg.m != 1 {
        return Err(Error::Unsupported("the linear closed form needs m = 1".into()));
    }
    let q = quadratures(dim, 1)?;
    let n = cfg.n_queries as f64;
    let phi = prepare_probe(&cfg.probe, dim)?;
    let common = evolve_with(&phi, &Propagator::new(&q.x)?, n * cfg.theta1)?;
    let common = evolve_with(&common, &Propagator::new(&q.p)?, n * cfg.theta2)?;
    let v = common.amplitudes();
    let phase = C64::from_polar(1.0, -n * n * cfg.theta1 * cfg.theta2);
    finish(QState::balanced(&(v * phase), v, dim)?, 1)
}

/// Switch state in the factorized form
/// `exp(-iN theta1 X) exp(-iN theta2 P^m) (|0> + exp(theta2 E)|1>)|phi>/sqrt(2)`,
/// where `E` is the reordering exponent built from `C_n - C'_n`.
pub fn switch_factorized(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    expect_kind(cfg, StrategyKind::Switch)?;
    let q = quadratures(dim, cfg.m)?;
    let n = cfg.n_queries as f64;
    let phi = prepare_probe(&cfg.probe, dim)?.amplitudes().clone();
    let exponent = switch_reorder_exponent(cfg.m, cfg.theta1, cfg.n_queries)
        .scale(&C64::new(cfg.theta2, 0.0));
    let reorder = exp_anti_hermitian(&exponent, dim)?;
    let px = Propagator::new(&q.x)?;
    let ppm = Propagator::new(&q.pm)?;
    let front = |v: &DVector<C64>| -> Result<DVector<C64>> {
        px.apply(n * cfg.theta1, &ppm.apply(n * cfg.theta2, v)?)
    };
    let zero = front(&phi)?;
    let one = front(&reorder.apply(&phi)?)?;
    finish(QState::balanced(&zero, &one, dim)?, cfg.m)
}

/// Coherent superposition: each branch is one exponential of
/// `theta1 X ± theta2 P^m` over `tau = 2N`.
pub fn cs_output(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    expect_kind(cfg, StrategyKind::CoherentSuperposition)?;
    let q = quadratures(dim, cfg.m)?;
    let phi = prepare_probe(&cfg.probe, dim)?.amplitudes().clone();
    let tau = 2.0 * cfg.n_queries as f64;
    let plus = Operator::linear_combination(&[(cfg.theta1, &q.x), (cfg.theta2, &q.pm)])?;
    let minus = Operator::linear_combination(&[(cfg.theta1, &q.x), (-cfg.theta2, &q.pm)])?;
    let b0 = Propagator::new(&plus)?.apply(tau, &phi)?;
    let b1 = Propagator::new(&minus)?.apply(tau, &phi)?;
    finish(QState::balanced(&b0, &b1, dim)?, cfg.m)
}

/// Coherent superposition in the factorized form
/// `exp(-iT theta1 X) exp(∓iT theta2 P^m) exp(±theta2 E)|phi>`, `T = 2N`.
pub fn cs_factorized(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    expect_kind(cfg, StrategyKind::CoherentSuperposition)?;
    let q = quadratures(dim, cfg.m)?;
    let t = 2.0 * cfg.n_queries as f64;
    let phi = prepare_probe(&cfg.probe, dim)?.amplitudes().clone();
    let e = cs_branch_exponent(cfg.m, cfg.theta1, cfg.n_queries);
    let px = Propagator::new(&q.x)?;
    let ppm = Propagator::new(&q.pm)?;
    let branch = |sign: f64| -> Result<DVector<C64>> {
        let tail = exp_anti_hermitian(&e.scale(&C64::new(sign * cfg.theta2, 0.0)), dim)?;
        let v = tail.apply(&phi)?;
        px.apply(t * cfg.theta1, &ppm.apply(sign * t * cfg.theta2, &v)?)
    };
    finish(QState::balanced(&branch(1.0)?, &branch(-1.0)?, dim)?, cfg.m)
}

/// Couplings of the composite Hamiltonian `G1 X + G2 sigma_z P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub g1: f64,
    pub g2: f64,
    pub t: f64,
    /// Only used for the mapping `theta_j = T G_j / 2N`.
    pub n_queries: u32,
}

impl CompositeParams {
    /// Couplings that realise `(theta1, theta2)` with `N` queries in time `t`.
    pub fn from_thetas(theta1: f64, theta2: f64, n_queries: u32, t: f64) -> Self {
        let scale = 2.0 * n_queries as f64 / t;
        Self { g1: theta1 * scale, g2: theta2 * scale, t, n_queries }
    }

    /// `(theta1, theta2) = (T G1 / 2N, T G2 / 2N)`.
    pub fn thetas(&self) -> (f64, f64) {
        let scale = self.t / (2.0 * self.n_queries as f64);
        (self.g1 * scale, self.g2 * scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::Domain("evolution time T must be positive".into()));
        }
        if self.n_queries == 0 {
            return Err(Error::Domain("n_queries must be positive".into()));
        }
        Ok(())
    }
}

/// Joint evolution under `G1 (I ⊗ X) + G2 (sigma_z ⊗ P)` for time `T`, applied to
/// `(|0> + |1>)|phi>/sqrt(2)`.
pub fn composite_output(p: &CompositeParams, m: u32, probe: &ProbeSpec, dim: FockDim) -> Result<QState> {
    p.validate()?;
    if m != 1 {
        return Err(Error::Unsupported(format!(
            "the composite realisation is linear only (m = 1), got m = {m}"
        )));
    }
    let q = quadratures(dim, 1)?;
    let sigma_z = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]));
    let id2 = DMatrix::<C64>::identity(2, 2);
    let h = id2.kronecker(q.x.entries()) * C64::new(p.g1, 0.0)
        + sigma_z.kronecker(q.p.entries()) * C64::new(p.g2, 0.0);
    let joint = Propagator::new(&Operator::hermitian(h)?)?;
    let phi = prepare_probe(probe, dim)?;
    let start = QState::balanced(phi.amplitudes(), phi.amplitudes(), dim)?;
    let out = joint.apply(p.t, start.amplitudes())?;
    finish(QState::from_amplitudes(2, dim, out)?, 1)
}

/// Dispatch on `cfg.strategy`. The composite kind uses `T = 1`.
pub fn strategy_output(cfg: &StrategyConfig, dim: FockDim) -> Result<QState> {
    match cfg.strategy {
        StrategyKind::Switch => switch_output(cfg, dim),
        StrategyKind::CoherentSuperposition => cs_output(cfg, dim),
        StrategyKind::Composite => {
            cfg.validate()?;
            let p = CompositeParams::from_thetas(cfg.theta1, cfg.theta2, cfg.n_queries, 1.0);
            composite_output(&p, cfg.m, &cfg.probe, dim)
        }
    }
}
