use cvmet_core::applications::{
    cavity_quadrature_moments, homodyne_g_variance, optomech_state, OptomechParams,
};
use cvmet_core::bch::{
    nested_commutator_oracle, verify_factorization, zassenhaus_term, Rational, Variant,
};
use cvmet_core::cvspace::{prepare_probe, ProbeSpec, C64};
use cvmet_core::qfi::{
    asymptotic_qfi, qfi_fd_strategy, qfi_generator, Parameter,
};
use cvmet_core::strategies::{
    composite_output, cs_factorized, cs_output, switch_closed_form_linear, switch_factorized,
    switch_output, CompositeParams, QState, StrategyConfig, StrategyKind,
};
use cvmet_core::FockDim;
use num_complex::Complex;
use num_traits::Zero;

fn cfg(kind: StrategyKind, m: u32, t1: f64, t2: f64, n: u32) -> StrategyConfig {
    StrategyConfig { theta1: t1, theta2: t2, n_queries: n, m, strategy: kind, probe: ProbeSpec::Vacuum }
}

fn dim(d: usize) -> FockDim {
    FockDim::new(d).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn switch_linear_fd_matches_variance_formula() {
    for n in [2u32, 4, 6, 8] {
        let c = cfg(StrategyKind::Switch, 1, 0.1, 0.1, n);
        let nf = n as f64;
        let expect = 0.01 * nf.powi(4) + 4.0 * nf * nf * 0.5;
        for which in [Parameter::Theta1, Parameter::Theta2] {
            let f = qfi_fd_strategy(&c, which, dim(64), None).unwrap();
            assert!(f.converged);
            assert!(rel(f.value, expect) < 1e-6, "N={n} {which:?}: {} vs {expect}", f.value);
        }
    }
}

#[test]
fn cs_linear_depends_on_theta1_only() {
    let base = cfg(StrategyKind::CoherentSuperposition, 1, 0.1, 0.1, 4);
    let f0 = qfi_fd_strategy(&base, Parameter::Theta2, dim(64), None).unwrap().value;
    assert!(rel(f0, 168.96) < 1e-6, "{f0}");
    for t2 in [0.02, 0.05, 0.2] {
        let f = qfi_fd_strategy(&base.with_theta2(t2), Parameter::Theta2, dim(64), None).unwrap().value;
        assert!(rel(f, f0) < 1e-6);
    }
    let moved = qfi_fd_strategy(&base.with_theta1(0.2), Parameter::Theta2, dim(64), None).unwrap().value;
    // 16 N^4 theta1^2 + 8 N^2
    assert!(rel(moved, 16.0 * 256.0 * 0.04 + 128.0) < 1e-6);
}

#[test]
fn cs_theta1_generator_against_fd() {
    let c = cfg(StrategyKind::CoherentSuperposition, 1, 0.1, 0.07, 3);
    let gen = qfi_generator(&c, Parameter::Theta1, dim(64)).unwrap().value;
    let fd = qfi_fd_strategy(&c, Parameter::Theta1, dim(64), None).unwrap().value;
    assert!(rel(gen, fd) < 1e-6, "{gen} vs {fd}");
}

#[test]
fn nonlinear_generators_against_fd() {
    for kind in [StrategyKind::Switch, StrategyKind::CoherentSuperposition] {
        for m in [2u32, 3] {
            let c = cfg(kind, m, 0.05, 0.03, 2);
            let gen = qfi_generator(&c, Parameter::Theta2, dim(128)).unwrap().value;
            let fd = qfi_fd_strategy(&c, Parameter::Theta2, dim(128), None).unwrap().value;
            assert!(rel(gen, fd) < 1e-5, "{kind:?} m={m}: {gen} vs {fd}");
        }
    }
}

#[test]
fn generator_route_with_coherent_probe() {
    let mut c = cfg(StrategyKind::Switch, 2, 0.05, 0.03, 2);
    c.probe = ProbeSpec::Coherent { re: 0.3, im: -0.2 };
    let gen = qfi_generator(&c, Parameter::Theta2, dim(128)).unwrap().value;
    let fd = qfi_fd_strategy(&c, Parameter::Theta2, dim(128), None).unwrap().value;
    assert!(rel(gen, fd) < 1e-5, "{gen} vs {fd}");
}

#[test]
fn asymptotic_matches_switch_linear_exactly() {
    let c = cfg(StrategyKind::Switch, 1, 0.1, 0.1, 6);
    let a = asymptotic_qfi(&c, Parameter::Theta2).unwrap().value;
    let g = qfi_generator(&c, Parameter::Theta2, dim(64)).unwrap().value;
    assert!(rel(a, g) < 1e-12);
}

fn fidelity(a: &QState, b: &QState) -> f64 {
    a.fidelity(b).unwrap()
}

#[test]
fn closed_forms_match_generic_construction() {
    for m in [1u32, 2] {
        for n in [2u32, 4] {
            let sw = cfg(StrategyKind::Switch, m, 0.06, 0.04, n);
            let generic = switch_output(&sw, dim(96)).unwrap();
            let fact = switch_factorized(&sw, dim(96)).unwrap();
            assert!(fidelity(&generic, &fact) > 1.0 - 1e-9, "switch m={m} N={n}");
            let cs = cfg(StrategyKind::CoherentSuperposition, m, 0.06, 0.04, n);
            let generic = cs_output(&cs, dim(96)).unwrap();
            let fact = cs_factorized(&cs, dim(96)).unwrap();
            assert!(fidelity(&generic, &fact) > 1.0 - 1e-9, "cs m={m} N={n}");
        }
    }
}

#[test]
fn linear_switch_relative_phase_sign() {
    let c = cfg(StrategyKind::Switch, 1, 0.1, 0.08, 3);
    let generic = switch_output(&c, dim(64)).unwrap();
    let closed = switch_closed_form_linear(&c, dim(64)).unwrap();
    assert!(fidelity(&generic, &closed) > 1.0 - 1e-12);
    // arg <phi0|phi1> = +N^2 theta1 theta2
    let expect = 9.0 * 0.1 * 0.08;
    assert!((generic.branch_relative_phase() - expect).abs() < 1e-10);
    // the opposite sign on |1> gives a different state
    let flipped = QState::balanced(
        &closed.block(0).map(|z| z * 2f64.sqrt()),
        &(closed.block(1).map(|z| z * 2f64.sqrt()) * C64::from_polar(1.0, -2.0 * expect)),
        dim(64),
    )
    .unwrap();
    assert!(fidelity(&generic, &flipped) < 1.0 - 1e-3);
}

#[test]
fn composite_equals_cs() {
    for &t in &[0.5, 1.0, 3.0] {
        let c = cfg(StrategyKind::CoherentSuperposition, 1, 0.05, 0.08, 3);
        let p = CompositeParams::from_thetas(c.theta1, c.theta2, c.n_queries, t);
        let (t1, t2) = p.thetas();
        assert!((t1 - 0.05).abs() < 1e-15 && (t2 - 0.08).abs() < 1e-15);
        let comp = composite_output(&p, 1, &ProbeSpec::Vacuum, dim(64)).unwrap();
        let cs = cs_output(&c, dim(64)).unwrap();
        assert!(fidelity(&comp, &cs) > 1.0 - 1e-12);
    }
}

/// Independent `[X^(k), P^m]` via `[X, P^j] = i j P^(j-1)` in integer form.
fn commutator_chain(m: u32, depth: u32) -> Option<(u32, i128)> {
    let mut power = m;
    let mut coeff: i128 = 1;
    for _ in 0..depth {
        if power == 0 {
            return None;
        }
        coeff *= power as i128;
        power -= 1;
    }
    Some((power, coeff))
}

#[test]
fn zassenhaus_terms_against_integer_chain() {
    for m in 1..=6u32 {
        for n in 2..=m + 2 {
            let term = zassenhaus_term(m, n, Variant::AB);
            assert_eq!(term, nested_commutator_oracle(m, n));
            match commutator_chain(m, n - 1) {
                None => assert!(term.is_zero()),
                Some((power, c)) => {
                    // (-1)^(n-1)/n! * i^(n-1) * c = (-i)^(n-1) c / n!
                    let fact: i128 = (1..=n as i128).product();
                    let mag = Rational::new(c, fact);
                    let expect = match (n - 1) % 4 {
                        0 => Complex::new(mag, Rational::zero()),
                        1 => Complex::new(Rational::zero(), -mag),
                        2 => Complex::new(-mag, Rational::zero()),
                        _ => Complex::new(Rational::zero(), mag),
                    };
                    assert_eq!(term.coeff(power), expect, "m={m} n={n}");
                    assert_eq!(term.degree(), Some(power));
                }
            }
            let primed = zassenhaus_term(m, n, Variant::BA);
            let factor = Complex::new(Rational::from_integer(-((n - 1) as i128)), Rational::zero());
            assert_eq!(primed, term.scale(&factor));
        }
    }
}

#[test]
fn factorization_residuals_small_lambda() {
    for m in [1u32, 2, 3] {
        for variant in [Variant::AB, Variant::BA] {
            let r = verify_factorization(m, 0.1, dim(128), variant).unwrap();
            assert!(r < 1e-7, "m={m} {variant:?}: {r}");
        }
    }
}

/// `<phi0|phi1> = exp(-G) exp(-i phi)` for a free mirror starting in vacuum.
fn overlap_oracle(p: &OptomechParams) -> C64 {
    let t = p.total_time();
    let g = p.g;
    let decay = g * g * (t * t + t.powi(4) / (4.0 * p.mass * p.mass)) / 4.0;
    let phase = p.omega_c * t - g * g * t.powi(3) / (12.0 * p.mass);
    C64::from_polar((-decay).exp(), -phase)
}

#[test]
fn optomech_overlap_and_homodyne_mean() {
    for n in [4u32, 8, 16] {
        let p = OptomechParams::default().with_steps(n);
        let s = optomech_state(&p).unwrap();
        let ov = s.block(0).dotc(&s.block(1)) * 2.0;
        let oracle = overlap_oracle(&p);
        assert!((ov - oracle).norm() < 1e-10, "N={n}: {ov} vs {oracle}");
        let (x, x2) = cavity_quadrature_moments(&s).unwrap();
        assert!((x - ov.re / 2f64.sqrt()).abs() < 1e-10);
        assert!((x2 - 1.0).abs() < 1e-10);
    }
}

#[test]
fn optomech_overlap_decreases_with_n() {
    let mut last = 1.0;
    for n in 4..=16u32 {
        let s = optomech_state(&OptomechParams::default().with_steps(n)).unwrap();
        let mag = (s.block(0).dotc(&s.block(1)) * 2.0).norm();
        assert!(mag < last);
        last = mag;
    }
}

#[test]
fn homodyne_variance_against_analytic_derivative() {
    let p = OptomechParams::default().with_steps(10);
    let h = homodyne_g_variance(&p, None).unwrap();
    let eps = 1e-6;
    let d = (overlap_oracle(&p.with_g(p.g + eps)).re - overlap_oracle(&p.with_g(p.g - eps)).re)
        / (2.0 * eps)
        / 2f64.sqrt();
    assert!(rel(h.derivative, d) < 1e-6);
    let x = overlap_oracle(&p).re / 2f64.sqrt();
    assert!(rel(h.delta2_g, (1.0 - x * x) / (d * d)) < 1e-5);
}

#[test]
fn probes_stay_normalized() {
    for spec in [
        ProbeSpec::Vacuum,
        ProbeSpec::Fock { n: 3 },
        ProbeSpec::Coherent { re: 1.0, im: 0.5 },
        ProbeSpec::SqueezedVacuum { r: 0.4 },
    ] {
        let s = prepare_probe(&spec, dim(64)).unwrap();
        assert!((s.amplitudes().norm() - 1.0).abs() < 1e-12);
    }
}
