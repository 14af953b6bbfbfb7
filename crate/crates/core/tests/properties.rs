use proptest::prelude::*;

use sqq_core::blowup::{conserved_quantities, delta_constant, BlowupReport, Certificate, DeltaMode};
use sqq_core::config::ScenarioConfig;
use sqq_core::dynamics::{step, SolverConfig};
use sqq_core::peakon::SinglePeakon;
use sqq_core::scenario::fmt_f64;
use sqq_core::weakform::{weak_residual, PeakonInstant, TestFunction};
use sqq_core::{FieldState, Grid};

fn bumps(g: &Grid, params: &[(f64, f64, f64)]) -> Vec<f64> {
    g.sample(|x| params.iter().map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp()).sum())
}

fn bump_params() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.1f64..3.0, -4.0f64..4.0, 0.3f64..2.0), 1..4)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn helmholtz_inverse_is_linear(p in bump_params(), q in bump_params(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Grid::new(10.0, 256).unwrap();
        let (m1, m2) = (bumps(&g, &p), bumps(&g, &q));
        let combo: Vec<f64> = m1.iter().zip(&m2).map(|(x, y)| a * x + b * y).collect();
        let (u1, u2, u) = (g.helmholtz_invert(&m1).unwrap(), g.helmholtz_invert(&m2).unwrap(), g.helmholtz_invert(&combo).unwrap());
        let scale = max_abs(&combo).max(1.0);
        for j in 0..g.cells() {
            prop_assert!((u[j] - a * u1[j] - b * u2[j]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn helmholtz_round_trip_preserves_mass(p in bump_params(), cells in prop::sample::select(vec![64usize, 500, 4096])) {
        let g = Grid::new(10.0, cells).unwrap();
        let m = bumps(&g, &p);
        let u = g.helmholtz_invert(&m).unwrap();
        let back = g.helmholtz_apply(&u).unwrap();
        // Applying the operator amplifies rounding in `u` by its norm, 1 + 4/dx^2.
        let tol = 16.0 * f64::EPSILON * (1.0 + 4.0 / g.dx().powi(2)) * max_abs(&m);
        for j in 0..cells {
            prop_assert!((back[j] - m[j]).abs() <= tol);
        }
        prop_assert!((g.quadrature(&u) - g.quadrature(&m)).abs() <= 1e-12 * g.quadrature(&m).abs().max(1.0));
    }

    #[test]
    fn sharp_delta_never_exceeds_the_cubic_one(h1 in 1e-3f64..1e3, h2 in 1e-3f64..1e3) {
        let paper = delta_constant(h1, h2, DeltaMode::Paper).unwrap();
        let sharp = delta_constant(h1, h2, DeltaMode::Sharp).unwrap();
        prop_assert!(sharp <= paper * (1.0 + 1e-15));
    }

    #[test]
    fn cubic_delta_certification_implies_sharp(h1 in 0.01f64..10.0, h2 in 0.01f64..10.0, m0 in -100.0f64..0.0, n0 in 1e-3f64..10.0) {
        let paper = BlowupReport::from_values(h1, h2, DeltaMode::Paper, 0.0, m0, n0).unwrap();
        let sharp = BlowupReport::from_values(h1, h2, DeltaMode::Sharp, 0.0, m0, n0).unwrap();
        prop_assert!(!paper.condition_met || sharp.condition_met);
        if paper.condition_met {
            prop_assert!(sharp.t1.unwrap() <= paper.t1.unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn certificate_roots_satisfy_vieta(delta in 1e-3f64..10.0, m0 in -1e3f64..-1e-3, n0 in 1e-3f64..10.0) {
        let c = Certificate::evaluate(delta, m0, n0).unwrap();
        let dn = delta * n0;
        prop_assert_eq!(c.condition_met, m0 * m0 > 2.0 * dn);
        if let Some((t1, t2)) = c.roots {
            prop_assert!(0.0 < t1 && t1 <= t2);
            prop_assert!(((t1 + t2) - (-2.0 * m0 / dn)).abs() <= 1e-12 * (-2.0 * m0 / dn));
            prop_assert!(((t1 * t2) - 2.0 / dn).abs() <= 1e-12 * (2.0 / dn));
        }
    }

    #[test]
    fn floats_round_trip_through_csv_text(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn rk4_step_conserves_masses(p in bump_params(), q in bump_params()) {
        let g = Grid::new(10.0, 256).unwrap();
        let s = FieldState::new(&g, 0.0, bumps(&g, &p), bumps(&g, &q)).unwrap();
        let before = conserved_quantities(&s, &g).unwrap();
        let cfg = SolverConfig { m_stop: 1e12, ..Default::default() };
        let next = step(&s, &g, &cfg).unwrap();
        prop_assert!(next.t > 0.0);
        prop_assert!(next.m.iter().zip(&s.m).any(|(a, b)| a != b));
        let after = conserved_quantities(&next, &g).unwrap();
        prop_assert!((after.0 - before.0).abs() <= 1e-12 * before.0);
        prop_assert!((after.1 - before.1).abs() <= 1e-12 * before.1);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected(key in "[a-z_]{3,12}") {
        prop_assume!(![
            "kind", "grid", "solver", "peakon", "initial", "seeds", "profile_times", "track", "ode", "verify", "blowup", "output",
        ].contains(&key.as_str()));
        let text = format!(r#"{{"kind": "simulate", "grid": {{"L": 5, "N": 32}}, "{key}": 1}}"#);
        prop_assert!(ScenarioConfig::from_json(&text).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weak_residual_is_linear_and_translation_covariant(
        c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, speed in -2.0f64..2.0,
        center in -2.0f64..2.0, k in 0.1f64..5.0, shift in -3.0f64..3.0,
    ) {
        let cand = PeakonInstant::single_with_speed(c1, c2, speed, 0.3);
        let phi = TestFunction::new(center, 2.0);
        let base = weak_residual(&cand, &phi, 6).unwrap();
        let scaled = weak_residual(&cand, &phi.scaled(k), 6).unwrap();
        let tol = 1e-12 * (1.0 + c1.abs() * c2.abs()).powi(2) * k;
        prop_assert!((scaled.residual_u - k * base.residual_u).abs() <= tol);
        prop_assert!((scaled.residual_v - k * base.residual_v).abs() <= tol);
        let moved = weak_residual(&cand.shifted(shift), &TestFunction::new(center + shift, 2.0), 6).unwrap();
        prop_assert!((moved.residual_u - base.residual_u).abs() <= 1e-10 * (1.0 + base.magnitude()));
        prop_assert!((moved.residual_v - base.residual_v).abs() <= 1e-10 * (1.0 + base.magnitude()));
    }

    #[test]
    fn exact_single_peakons_pass_the_weak_test(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, t in -1.0f64..1.0) {
        let pk = SinglePeakon::new(c1, c2);
        let phi = TestFunction::new(pk.position(t) + 0.7, 2.0);
        let r = weak_residual(&PeakonInstant::single(&pk, t), &phi, 8).unwrap();
        prop_assert!(r.magnitude() <= 1e-4 * c1.abs().max(1.0));
    }
}
