//! Cavity optomechanics with a free mirror, homodyne estimation of the
//! radiation-pressure coupling, and a log-log power-law fitter.
//!
//! The Hamiltonian is `omega_c a^dagger a + P^2/(2 mass) + g a^dagger a X`. It
//! commutes with the photon number, so the cavity state `(|0> + |1>)/sqrt(2)`
//! splits the mirror into two branches evolving independently for `N tau`.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cvspace::{
    build_quadrature, prepare_probe, FockDim, Operator, ProbeSpec, Propagator, Quadrature, C64,
};
use crate::error::{Error, Result};
use crate::qfi::{default_step, qfi_fd, QfiEstimate, FD_MAX_REDUCTIONS, FD_REL_TOL};
use crate::strategies::QState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptomechParams {
    pub g: f64,
    pub mass: f64,
    pub omega_c: f64,
    pub tau: f64,
    pub n_steps: u32,
    #[serde(default)]
    pub mirror_probe: ProbeSpec,
    pub mirror_dim: FockDim,
    pub cavity_dim: FockDim,
}

impl Default for OptomechParams {
    fn default() -> Self {
        Self {
            g: 0.1,
            mass: 1.0,
            omega_c: 1.0,
            tau: 0.2,
            n_steps: 8,
            mirror_probe: ProbeSpec::Vacuum,
            mirror_dim: FockDim::new(512).expect("valid"),
            cavity_dim: FockDim::new(3).expect("valid"),
        }
    }
}

impl OptomechParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Domain("mass must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Domain("tau must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Domain("n_steps must be positive".into()));
        }
        if self.cavity_dim.get() < 3 {
            return Err(Error::InvalidDimension { got: self.cavity_dim.get(), min: 3 });
        }
        if !(self.g.is_finite() && self.omega_c.is_finite()) {
            return Err(Error::Domain("g and omega_c must be finite".into()));
        }
        Ok(())
    }

    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..self.clone() }
    }

    pub fn with_steps(&self, n_steps: u32) -> Self {
        Self { n_steps, ..self.clone() }
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.tau
    }
}

/// Joint Hamiltonian on cavity (outer) ⊗ mirror (inner).
pub fn optomech_hamiltonian(p: &OptomechParams) -> Result<Operator> {
    p.validate()?;
    let dc = p.cavity_dim;
    let dm = p.mirror_dim;
    let n = Operator::number(dc);
    let x = build_quadrature(dm, Quadrature::X)?;
    let kinetic = build_quadrature(dm, Quadrature::P)?.pow(2).scaled(0.5 / p.mass);
    let id_c = DMatrix::<C64>::identity(dc.get(), dc.get());
    let id_m = DMatrix::<C64>::identity(dm.get(), dm.get());
    let h = n.entries().kronecker(&id_m) * C64::new(p.omega_c, 0.0)
        + id_c.kronecker(kinetic.entries())
        + n.entries().kronecker(x.entries()) * C64::new(p.g, 0.0);
    Operator::hermitian(h)
}

/// Mirror Hamiltonian conditioned on `photons` photons, read off the joint
/// operator. Blocks coupling different photon numbers must vanish.
pub fn photon_block(h: &Operator, p: &OptomechParams, photons: usize) -> Result<Operator> {
    let d = p.mirror_dim.get();
    let c = p.cavity_dim.get();
    if photons >= c {
        return Err(Error::DimensionMismatch { expected: c, got: photons + 1 });
    }
    for other in 0..c {
        if other != photons {
            let off = h.entries().view((photons * d, other * d), (d, d));
            let leak = off.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if leak != 0.0 {
                return Err(Error::Contract(format!(
                    "Hamiltonian couples photon numbers {photons} and {other} ({leak:e})"
                )));
            }
        }
    }
    Operator::hermitian(h.entries().view((photons * d, photons * d), (d, d)).into_owned())
}

/// Mirror operators shared by every coupling value, with the coupling-free
/// vacuum branch evolved once and branch states memoised per `g`.
pub struct OptomechModel {
    params: OptomechParams,
    kinetic: Operator,
    x: Operator,
    probe: DVector<C64>,
    empty_branch: DVector<C64>,
    cache: RefCell<HashMap<u64, QState>>,
}

impl OptomechModel {
    pub fn new(p: &OptomechParams) -> Result<Self> {
        p.validate()?;
        let dm = p.mirror_dim;
        let kinetic = build_quadrature(dm, Quadrature::P)?.pow(2).scaled(0.5 / p.mass);
        let x = build_quadrature(dm, Quadrature::X)?;
        let probe = prepare_probe(&p.mirror_probe, dm)?.amplitudes().clone();
        let empty_branch = Propagator::new(&kinetic)?.apply(p.total_time(), &probe)?;
        Ok(Self { params: p.clone(), kinetic, x, probe, empty_branch, cache: RefCell::default() })
    }

    pub fn params(&self) -> &OptomechParams {
        &self.params
    }

    /// `omega_c n + P^2/(2 mass) + g n X`.
    pub fn branch_hamiltonian(&self, photons: usize, g: f64) -> Result<Operator> {
        let n = photons as f64;
        let id = Operator::identity(self.params.mirror_dim);
        Operator::linear_combination(&[(self.params.omega_c * n, &id), (1.0, &self.kinetic), (g * n, &self.x)])
    }

    /// Joint state at coupling `g`.
    pub fn state(&self, g: f64) -> Result<QState> {
        if let Some(s) = self.cache.borrow().get(&g.to_bits()) {
            return Ok(s.clone());
        }
        let p = &self.params;
        let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let one = Propagator::new(&self.branch_hamiltonian(1, g)?)?.apply(p.total_time(), &self.probe)?;
        let mut blocks = vec![DVector::zeros(p.mirror_dim.get()); p.cavity_dim.get()];
        blocks[0] = &self.empty_branch * w;
        blocks[1] = one * w;
        let state = QState::from_blocks(p.mirror_dim, &blocks)?;
        state.check_envelope(1)?;
        self.cache.borrow_mut().insert(g.to_bits(), state.clone());
        Ok(state)
    }

    fn mean_x(&self, g: f64) -> Result<f64> {
        Ok(cavity_quadrature_moments(&self.state(g)?)?.0)
    }

    /// Error-transfer estimate `(<X^2> - <X>^2) / |d<X>/dg|^2` for homodyne
    /// detection of the cavity quadrature.
    pub fn homodyne(&self, fd_step: Option<f64>) -> Result<HomodyneResult> {
        let g = self.params.g;
        let (mean_x, mean_x2) = cavity_quadrature_moments(&self.state(g)?)?;
        let mut h = fd_step.unwrap_or_else(|| default_step(g));
        if !(h > 0.0) {
            return Err(Error::Domain("finite-difference step must be positive".into()));
        }
        let central = |h: f64| -> Result<f64> { Ok((self.mean_x(g + h)? - self.mean_x(g - h)?) / (2.0 * h)) };
        let mut coarse = central(h)?;
        let mut reductions = 0;
        let (derivative, converged) = loop {
            let fine = central(h / 2.0)?;
            let ok = (coarse - fine).abs() <= FD_REL_TOL * coarse.abs().max(fine.abs());
            if ok || reductions == FD_MAX_REDUCTIONS {
                break ((4.0 * fine - coarse) / 3.0, ok);
            }
            reductions += 1;
            h /= 2.0;
            coarse = fine;
        };
        if derivative.abs() < 1e-9 {
            return Err(Error::Unidentifiable(format!("d<X_cav>/dg = {derivative:e} vanishes at g = {g}")));
        }
        let var = mean_x2 - mean_x * mean_x;
        Ok(HomodyneResult {
            delta2_g: var / (derivative * derivative),
            mean_x,
            mean_x2,
            derivative,
            step_used: h,
            converged,
        })
    }

    /// `<U>` with `U = e^{-i(g^2 T^3/(6 mass) + omega_c T)} e^{-i g X T} e^{i T^2 P/(2 mass)}`
    /// on the mirror probe, `T = N tau`.
    pub fn displacement_kinetic_mean(&self) -> Result<C64> {
        let p = &self.params;
        let t = p.total_time();
        let pm = build_quadrature(p.mirror_dim, Quadrature::P)?;
        let kicked = Propagator::new(&pm)?.apply(-t * t / (2.0 * p.mass), &self.probe)?;
        let shifted = Propagator::new(&self.x)?.apply(p.g * t, &kicked)?;
        let phase = p.g * p.g * t.powi(3) / (6.0 * p.mass) + p.omega_c * t;
        Ok(self.probe.dotc(&shifted) * C64::from_polar(1.0, -phase))
    }

    /// Large-N expression `72 mass^2 (1 - <U+U^dag>^2/8) / (g^2 N^6 |<U-U^dag>|^2)`.
    pub fn large_n_delta2_g(&self) -> Result<f64> {
        let p = &self.params;
        let u = self.displacement_kinetic_mean()?;
        let sum = 2.0 * u.re;
        let diff2 = 4.0 * u.im * u.im;
        if diff2 == 0.0 {
            return Err(Error::Unidentifiable("<U - U^dag> vanishes".into()));
        }
        let n6 = (p.n_steps as f64).powi(6);
        Ok(72.0 * p.mass * p.mass * (1.0 - sum * sum / 8.0) / (p.g * p.g * n6 * diff2))
    }

    /// QFI of the joint state with respect to `g`, by finite differences.
    pub fn qfi_g(&self) -> Result<QfiEstimate> {
        qfi_fd(|g| Ok(self.state(g)?.amplitudes().clone()), self.params.g, None)
    }
}

/// `(exp(-iH_0 N tau)|0>|phi> + exp(-iH_1 N tau)|1>|phi>)/sqrt(2)` on the
/// cavity register, with the cavity levels above one left empty.
pub fn optomech_state(p: &OptomechParams) -> Result<QState> {
    OptomechModel::new(p)?.state(p.g)
}

/// `<X_cav>` and `<X_cav^2>` on the joint state.
pub fn cavity_quadrature_moments(state: &QState) -> Result<(f64, f64)> {
    let dc = FockDim::new(state.control_dim())?;
    let x = build_quadrature(dc, Quadrature::X)?;
    let x2 = x.pow(2);
    Ok((state.control_expectation(&x)?.re, state.control_expectation(&x2)?.re))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneResult {
    pub delta2_g: f64,
    pub mean_x: f64,
    pub mean_x2: f64,
    pub derivative: f64,
    pub step_used: f64,
    pub converged: bool,
}

pub fn homodyne_g_variance(p: &OptomechParams, fd_step: Option<f64>) -> Result<HomodyneResult> {
    OptomechModel::new(p)?.homodyne(fd_step)
}

pub fn optomech_qfi_g(p: &OptomechParams) -> Result<QfiEstimate> {
    OptomechModel::new(p)?.qfi_g()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(log N, log y)`.
    pub points: Vec<(f64, f64)>,
    /// Set when a power law was requested and `r_squared >= 0.99`.
    pub power_law_ok: Option<bool>,
}

/// Ordinary least squares of `log y` against `log N`.
pub fn fit_scaling(points: &[(f64, f64)], expect_power_law: bool) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::Domain(format!("at least 4 points are required, got {}", points.len())));
    }
    if let Some(bad) = points.iter().find(|(n, y)| !(*n > 0.0 && *y > 0.0)) {
        return Err(Error::Domain(format!("non-positive point ({}, {})", bad.0, bad.1)));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(n, y)| (n.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: logs,
        power_law_ok: expect_power_law.then_some(r_squared >= 0.99),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> OptomechParams {
        OptomechParams { mirror_dim: FockDim::new(96).unwrap(), ..OptomechParams::default() }
    }

    #[test]
    fn no_coupling_gives_identical_branches() {
        let p = OptomechParams { g: 0.0, omega_c: 0.0, ..small() };
        let s = optomech_state(&p).unwrap();
        assert!((s.block(0) - s.block(1)).norm() < 1e-14);
        assert!((s.control_purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_kinetic_mean_on_vacuum() {
        let p = small().with_steps(10);
        let t = p.total_time();
        let a = t * t / (2.0 * p.mass);
        let b = p.g * t;
        let phase = p.g * p.g * t.powi(3) / (6.0 * p.mass) + p.omega_c * t;
        let expect = C64::from_polar((-(a * a + b * b) / 4.0).exp(), a * b / 2.0 - phase);
        let got = OptomechModel::new(&p).unwrap().displacement_kinetic_mean().unwrap();
        assert!((got - expect).norm() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn photon_number_is_conserved() {
        let s = optomech_state(&small()).unwrap();
        assert_eq!(s.occupation_outside(&[0, 1]), 0.0);
    }

    #[test]
    fn second_moment_is_one() {
        let s = optomech_state(&small()).unwrap();
        let (_, x2) = cavity_quadrature_moments(&s).unwrap();
        assert!((x2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_hamiltonian_blocks_match_branches() {
        let p = OptomechParams { mirror_dim: FockDim::new(24).unwrap(), ..OptomechParams::default() };
        let h = optomech_hamiltonian(&p).unwrap();
        let model = OptomechModel::new(&p).unwrap();
        for photons in 0..3 {
            let block = photon_block(&h, &p, photons).unwrap();
            let branch = model.branch_hamiltonian(photons, p.g).unwrap();
            assert!((block.entries() - branch.entries()).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_two_level_cavity() {
        let p = OptomechParams { cavity_dim: FockDim::new(2).unwrap(), ..small() };
        assert!(matches!(optomech_state(&p), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0].iter().map(|&n: &f64| (n, 7.0 * n.powi(-3))).collect();
        let fit = fit_scaling(&pts, true).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.power_law_ok, Some(true));
    }

    #[test]
    fn constant_series() {
        let pts: Vec<_> = (1..=5).map(|n| (n as f64, 2.5)).collect();
        let fit = fit_scaling(&pts, false).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)], false).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)], false).is_err());
    }
}
