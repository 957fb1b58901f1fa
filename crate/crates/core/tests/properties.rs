use cvmet_core::applications::{fit_scaling, optomech_state, OptomechParams};
use cvmet_core::bch::{zassenhaus_term, Rational, Variant};
use cvmet_core::cvspace::{
    build_quadrature, moment, prepare_probe, Operator, ProbeSpec, Propagator, Quadrature, C64,
};
use cvmet_core::qfi::{qfi_fd, qfi_generator, ratio_formula, Parameter};
use cvmet_core::strategies::{cs_output, switch_output, StrategyConfig, StrategyKind};
use cvmet_core::FockDim;
use num_complex::Complex;
use proptest::prelude::*;

fn dim(d: usize) -> FockDim {
    FockDim::new(d).unwrap()
}

fn kind() -> impl Strategy<Value = StrategyKind> {
    prop_oneof![Just(StrategyKind::Switch), Just(StrategyKind::CoherentSuperposition)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truncated_commutator_structure(d in 2usize..40) {
        let x = build_quadrature(dim(d), Quadrature::X).unwrap();
        let p = build_quadrature(dim(d), Quadrature::P).unwrap();
        let c = x.commutator(&p).unwrap();
        for i in 0..d {
            for j in 0..d {
                let expect = if i != j {
                    C64::new(0.0, 0.0)
                } else if i + 1 == d {
                    C64::new(0.0, 1.0 - d as f64)
                } else {
                    C64::new(0.0, 1.0)
                };
                prop_assert!((c.entries()[(i, j)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn propagators_are_unitary(d in 4usize..48, m in 1u32..4, tau in -2.0f64..2.0) {
        let op = build_quadrature(dim(d), Quadrature::P).unwrap().pow(m);
        let u = Propagator::new(&op).unwrap().unitary(tau);
        prop_assert!(u.unitarity_deviation() < 1e-10);
    }

    #[test]
    fn primed_terms_are_scaled_unprimed(m in 1u32..=12, n in 2u32..=14) {
        let c = zassenhaus_term(m, n, Variant::AB);
        let f = Complex::new(Rational::from_integer(-((n - 1) as i128)), Rational::from_integer(0));
        prop_assert_eq!(zassenhaus_term(m, n, Variant::BA), c.scale(&f));
    }

    #[test]
    fn qfi_is_gauge_invariant(k in kind(), t1 in 0.02f64..0.1, t2 in 0.02f64..0.1, n in 1u32..4, phase in -3.0f64..3.0) {
        let cfg = StrategyConfig { theta1: t1, theta2: t2, n_queries: n, m: 1, strategy: k, probe: ProbeSpec::Vacuum };
        let build = |t: f64| -> cvmet_core::Result<_> {
            let c = cfg.with_theta2(t);
            let s = match k {
                StrategyKind::Switch => switch_output(&c, dim(48))?,
                _ => cs_output(&c, dim(48))?,
            };
            Ok(s)
        };
        let plain = qfi_fd(|t| Ok(build(t)?.amplitudes().clone()), t2, None).unwrap();
        let rotated = qfi_fd(|t| Ok(build(t)?.with_global_phase(phase).amplitudes().clone()), t2, None).unwrap();
        prop_assert!((plain.value - rotated.value).abs() <= 1e-10 * plain.value.max(1.0));
        prop_assert!(plain.value >= 0.0);
    }

    #[test]
    fn generator_qfi_is_nonnegative(k in kind(), m in 1u32..4, t1 in -0.2f64..0.2, n in 1u32..50) {
        let cfg = StrategyConfig { theta1: t1, theta2: 0.05, n_queries: n, m, strategy: k, probe: ProbeSpec::Vacuum };
        let f = qfi_generator(&cfg, Parameter::Theta2, dim(32)).unwrap();
        prop_assert!(f.value >= 0.0);
    }

    #[test]
    fn theta_independent_output_has_zero_qfi(t in -1.0f64..1.0) {
        let v = prepare_probe(&ProbeSpec::Coherent { re: 0.4, im: 0.1 }, dim(32)).unwrap();
        let f = qfi_fd(|_| Ok(v.amplitudes().clone()), t, None).unwrap();
        prop_assert_eq!(f.value, 0.0);
    }

    #[test]
    fn photon_number_is_conserved(g in -0.3f64..0.3, wc in 0.0f64..3.0, n in 1u32..12) {
        let p = OptomechParams {
            g,
            omega_c: wc,
            n_steps: n,
            mirror_dim: dim(96),
            ..OptomechParams::default()
        };
        let s = optomech_state(&p).unwrap();
        prop_assert_eq!(s.occupation_outside(&[0, 1]), 0.0);
        prop_assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn power_laws_are_recovered(c in 0.01f64..100.0, k in -8.0f64..8.0) {
        let pts: Vec<_> = [3.0f64, 5.0, 9.0, 17.0, 33.0].iter().map(|&n| (n, c * n.powf(k))).collect();
        let fit = fit_scaling(&pts, true).unwrap();
        prop_assert!((fit.slope - k).abs() < 1e-9);
        prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
    }

    #[test]
    fn coherent_probe_moments(re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let d = dim(64);
        let s = prepare_probe(&ProbeSpec::Coherent { re, im }, d).unwrap();
        let x = build_quadrature(d, Quadrature::X).unwrap();
        let p = build_quadrature(d, Quadrature::P).unwrap();
        prop_assert!((moment(&s, &x, 1).unwrap().re - re * 2f64.sqrt()).abs() < 1e-9);
        prop_assert!((moment(&s, &p, 1).unwrap().re - im * 2f64.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn ratio_formula_strictly_decreasing() {
    for m in 1..4 {
        assert!(ratio_formula(m + 1) < ratio_formula(m));
    }
}

#[test]
fn number_operator_is_hermitian() {
    assert!(Operator::number(dim(7)).is_hermitian());
}
