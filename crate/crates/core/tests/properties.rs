//! Invariants of the solver, the equilibrium functions, the survival
//! diagnostics and the simulator.

mod common;

use common::{equal_preference, gamma_delta, reference};
use equishoot::equilibrium::{clearing_map, consumption_rates, drift_vol, solve_initial_share, wealth_weight};
use equishoot::ode::{integrate_h, rhs, series_slope, HCoefficients, IntegrationSettings, OdeState, Outcome};
use equishoot::shooting::{certify, classify_xi, find_xi0, ShootingOptions, Side};
use equishoot::sim::{simulate, simulate_refined, Scheme, SimConfig};
use equishoot::survival::{classify, prieto_eta};
use equishoot::params::regime_of;
use equishoot::{derive_params, survival_regime, Error, RawParams};
use proptest::prelude::*;

fn raw_strategy() -> impl Strategy<Value = RawParams> {
    (0.05f64..0.95, 0.05f64..0.5, -0.05f64..0.05, 0.0f64..0.1, -0.1f64..1.2).prop_map(
        |(gamma, sigma_d, mu_d, beta2, frac)| {
            let delta = -frac * gamma;
            RawParams::with_gamma_delta(gamma, delta, sigma_d, mu_d, beta2)
        },
    )
}

proptest! {
    #[test]
    fn accepted_params_have_positive_slope_denominator(raw in raw_strategy()) {
        if let Ok(p) = derive_params(raw) {
            let s2 = raw.sigma_d * raw.sigma_d;
            prop_assert_eq!(p.delta(), 2.0 * (raw.beta2 - raw.beta1) / s2);
            prop_assert!(p.delta() > -p.gamma() && p.delta() < 0.0);
            prop_assert!(p.a_cap() > 1.0 + p.delta() - 2.0 * p.delta() / p.gamma());
            prop_assert!(p.gamma() * (p.a_cap() - p.delta() - 1.0) + 2.0 * p.delta() > 0.0);
            let again = derive_params(raw).unwrap();
            prop_assert_eq!(p.a_cap().to_bits(), again.a_cap().to_bits());
            prop_assert_eq!(p.delta().to_bits(), again.delta().to_bits());
        }
    }

    #[test]
    fn regime_depends_only_on_gamma_and_delta(raw in raw_strategy(), sigma2 in 0.1f64..0.4, mu2 in -0.02f64..0.02) {
        if let Ok(p) = derive_params(raw) {
            let other = RawParams::with_gamma_delta(p.gamma(), p.delta(), sigma2, mu2, raw.beta2);
            if let Ok(q) = derive_params(other) {
                if (q.delta() - p.delta()).abs() < 1e-14 * p.delta().abs().max(1.0)
                    && (q.delta() + q.gamma() * q.gamma()).abs() > 1e-12
                {
                    prop_assert_eq!(survival_regime(&p), survival_regime(&q));
                }
            }
            prop_assert_eq!(survival_regime(&p), regime_of(p.gamma(), p.delta()));
        }
    }

    #[test]
    fn rhs_bounded_on_series_near_origin(xi in 0.01f64..1.0, k in 1.0f64..10.0) {
        let c = HCoefficients::from(&derive_params(RawParams::reference()).unwrap());
        let y = 1e-8 * k;
        let h = c.gamma + series_slope(xi, &c) * y;
        let (dh, _) = rhs(&OdeState { y, h, i_log: (c.gamma - 1.0) * y }, xi, &c).unwrap();
        prop_assert!(dh.abs() < 100.0, "{}", dh);
    }

    #[test]
    fn cubic_term_vanishes_without_delta(y in 0.01f64..0.99, h in 0.3f64..1.0, xi in 0.01f64..1.0) {
        let c = HCoefficients { gamma: 0.5, sigma2: 0.04, delta: 0.0, a_cap: 3.5 };
        let s = OdeState { y, h, i_log: -0.1 };
        let (dh, di) = rhs(&s, xi, &c).unwrap();
        let a2 = xi / 0.04 * (-0.1f64).exp() - 3.5;
        let g = 0.5;
        let a1 = -(1.0 + g) / y + 2.0 * g + 1.0;
        let expect = g * (1.0 + g) / y + a1 * h / (1.0 - y) + a2 * h * h / (1.0 - y);
        prop_assert!((dh - expect).abs() < 1e-9 * expect.abs().max(1.0), "{} vs {}", dh, expect);
        prop_assert!((di - (h - 1.0) / (1.0 - y)).abs() < 1e-15);
    }

    #[test]
    fn consumption_clears_exactly(d in 1e-3f64..1e3, y in 1e-9f64..(1.0 - 1e-9)) {
        let (c1, c2) = consumption_rates(d, y).unwrap();
        prop_assert!((c1 + c2 - d).abs() <= f64::EPSILON * d);
        prop_assert!(c1 >= 0.0 && c2 >= 0.0);
    }

    #[test]
    fn eta_depends_on_drift_to_variance_ratio(gamma in 0.05f64..0.95, mu in -0.05f64..0.05, sigma in 0.05f64..0.5, c in 0.1f64..10.0) {
        let a = prieto_eta(gamma, mu, sigma);
        let b = prieto_eta(gamma, c * mu, c.sqrt() * sigma);
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subcritical_curves_are_ordered_and_bounded(a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let p = derive_params(RawParams::reference()).unwrap();
        let c = HCoefficients::from(&p);
        let seed = p.subcritical_seed_bound();
        let (x1, x2) = (a.min(b) * seed, a.max(b) * seed);
        let pts: Vec<f64> = (1..40).map(|k| k as f64 / 40.0).collect();
        let tol = 1e-10;
        let settings = IntegrationSettings::new(tol).with_checkpoints(pts.clone());
        let c1 = integrate_h(x1, &c, &settings).unwrap();
        let c2 = integrate_h(x2, &c, &settings).unwrap();
        let reached = |o: &Outcome| matches!(o, Outcome::ReachedEnd { .. });
        prop_assert!(reached(&c1.outcome) && reached(&c2.outcome));
        for &y in &pts {
            let (s1, s2) = (c1.checkpoint(y).unwrap(), c2.checkpoint(y).unwrap());
            prop_assert!(s1.h <= s2.h + tol, "y {}: {} > {}", y, s1.h, s2.h);
        }
        // Subcritical curves leave [gamma, 1] from below near y = 1 and settle
        // on the root in (0, 1) of gamma - A l + delta l (1 - l/gamma).
        let (g, a, d) = (p.gamma(), p.a_cap(), p.delta());
        let (qa, qb, qc) = (-d / g, d - a, g);
        let l = (-qb - (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        prop_assert!(l > 0.0 && l < g);
        for curve in [&c1, &c2] {
            for &h in &curve.h {
                prop_assert!(h > 0.0 && h <= 1.0 + tol);
            }
            prop_assert!((curve.h.last().unwrap() - l).abs() < 5e-3, "{} vs {}", curve.h.last().unwrap(), l);
        }
    }

    #[test]
    fn launch_offset_does_not_matter(frac in 0.1f64..1.5) {
        let p = derive_params(RawParams::reference()).unwrap();
        let c = HCoefficients::from(&p);
        let xi = frac * p.subcritical_seed_bound();
        let tol = 1e-10;
        let at = |eps0: f64| {
            let mut s = IntegrationSettings::new(tol).with_checkpoints(vec![0.1]);
            s.eps0 = eps0;
            let s = s.with_checkpoints(vec![0.1]);
            integrate_h(xi, &c, &s).unwrap().checkpoint(0.1).unwrap().h
        };
        let (h1, h2) = (at(1e-8), at(5e-9));
        prop_assert!((h1 - h2).abs() < tol, "{} vs {}", h1, h2);
    }
}

#[test]
fn classification_is_monotone_in_xi() {
    for s in [reference(), equal_preference()] {
        let c = HCoefficients::from(&s.params);
        let opts = ShootingOptions::default();
        let xis: Vec<f64> = (1..=60).map(|k| s.cs.xi0 * (0.4 + 0.02 * k as f64)).collect();
        let mut seen_super = false;
        for xi in xis {
            match classify_xi(xi, &c, &opts) {
                Ok(Side::Supercritical) => seen_super = true,
                Ok(Side::Subcritical) => assert!(!seen_super, "subcritical {xi} above a supercritical value"),
                Err(Error::Indeterminate { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(seen_super);
    }
}

#[test]
fn shooting_is_deterministic_and_above_seed() {
    let p = derive_params(RawParams::reference()).unwrap();
    let a = find_xi0(&p, &ShootingOptions::default()).unwrap();
    let b = find_xi0(&p, &ShootingOptions::default()).unwrap();
    assert_eq!(a.xi0.to_bits(), b.xi0.to_bits());
    assert_eq!(a.slope_end.to_bits(), b.slope_end.to_bits());
    assert!(a.xi0 >= p.subcritical_seed_bound());
    let c = HCoefficients::from(&p);
    let opts = ShootingOptions::default();
    assert_eq!(classify_xi(a.xi0 - 4.0 * a.bracket_width, &c, &opts).unwrap(), Side::Subcritical);
    assert_eq!(classify_xi(a.xi0 + 4.0 * a.bracket_width + 1e-9, &c, &opts).unwrap(), Side::Supercritical);
}

#[test]
fn critical_curve_stays_between_gamma_and_one() {
    for s in [reference(), equal_preference(), &gamma_delta(0.6, -0.45)] {
        let g = s.params.gamma();
        assert!(s.cs.curve.h.iter().all(|&h| h >= g - 1e-10 && h <= 1.0 + 1e-10));
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
        assert!(grid.iter().all(|&y| (g..=1.0).contains(&s.eq.h(y))));
    }
}

#[test]
fn ode_residual_within_limit_on_certified_runs() {
    for s in [reference(), equal_preference(), &gamma_delta(0.6, -0.45), &gamma_delta(0.5, -0.4)] {
        let report = certify(&s.cs, &s.params);
        assert!(report.checks.ode_residual, "{} > {}", report.residuals.ode_residual, report.residuals.ode_residual_limit);
        assert!(report.passed, "{report:?}");
    }
}

#[test]
fn volatility_identity_and_monotone_wealth_weight() {
    let s = reference();
    let p = &s.params;
    let (_, hs) = (0, &s.cs.curve.h);
    for (k, &y) in s.cs.curve.y.iter().enumerate() {
        if y <= 0.0 || y >= 1.0 {
            continue;
        }
        let (_, sig) = drift_vol(y, &s.eq).unwrap();
        assert!(sig > 0.0);
        assert!((sig * s.eq.h(y) / (1.0 - y) - p.sigma_d()).abs() < 1e-14, "y {y}");
        let _ = hs[k];
    }
    let g: Vec<f64> = [0.0, 0.2, 0.4, 0.8, 0.999, 1.0].iter().map(|&y| wealth_weight(y, &s.eq).unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] > w[1]), "{g:?}");
    assert_eq!(g[5], 0.0);
    let fine: Vec<f64> = (0..=1000).map(|k| wealth_weight(k as f64 / 1000.0, &s.eq).unwrap()).collect();
    assert!(fine.windows(2).all(|w| w[0] > w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn initial_share_round_trip(y in 1e-3f64..0.999) {
        let s = reference();
        let theta = clearing_map(y, &s.eq).unwrap();
        let y0 = solve_initial_share(theta, &s.eq).unwrap();
        prop_assert!((clearing_map(y0, &s.eq).unwrap() - theta).abs() <= 1e-10 * theta.max(1.0));
        prop_assert!((y0 - y).abs() < 1e-9, "{} vs {}", y0, y);
    }
}

#[test]
fn initial_share_range() {
    let s = reference();
    let upper = s.eq.g0() * s.params.d0();
    assert!(matches!(solve_initial_share(upper, &s.eq), Err(Error::ThetaOutOfRange { .. })));
    assert!(matches!(solve_initial_share(0.0, &s.eq), Err(Error::ThetaOutOfRange { .. })));
    assert!(solve_initial_share(upper * (1.0 - 1e-9), &s.eq).unwrap() < 1e-6);
    assert!(solve_initial_share(upper * 1e-9, &s.eq).unwrap() > 0.99);
    let half = 0.5 * clearing_map(0.5, &s.eq).unwrap();
    let y0 = solve_initial_share(half, &s.eq).unwrap();
    assert!((clearing_map(y0, &s.eq).unwrap() - half).abs() < 1e-10);
}

#[test]
fn classification_is_anchor_invariant() {
    let sets = [reference(), equal_preference(), &gamma_delta(0.6, -0.45), &gamma_delta(0.5, -0.2)];
    for s in sets {
        let reports: Vec<_> = [0.3, 0.5, 0.7].iter().map(|&a| classify(&s.params, &s.eq, a).unwrap()).collect();
        for r in &reports[1..] {
            assert_eq!(r.classification, reports[0].classification);
            assert_eq!(r.s0_diverges, reports[0].s0_diverges);
            assert_eq!(r.s1_diverges, reports[0].s1_diverges);
            assert_eq!(r.speed_finite, reports[0].speed_finite);
        }
    }
}

fn short_config(scheme: Scheme) -> SimConfig {
    SimConfig { n_paths: 200, horizon: 50.0, dt: 1e-3, seed: 42, scheme, ..Default::default() }
}

fn max_excess(a: &[f64], b: &[f64], bars: impl Fn(usize) -> f64) -> f64 {
    (0..a.len()).map(|i| (a[i] - b[i]).abs() - bars(i)).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn simulation_is_seed_deterministic() {
    let s = reference();
    let cfg = SimConfig { n_paths: 50, horizon: 5.0, ..short_config(Scheme::LogitTransform) };
    let a = simulate(&s.eq, &cfg).unwrap();
    let b = simulate(&s.eq, &cfg).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| simulate(&s.eq, &cfg).unwrap());
    assert_eq!(a, c);
    let d = simulate(&s.eq, &SimConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.terminal, d.terminal);
    let sum: f64 = a.occupation.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn halving_dt_stays_within_error_bars() {
    let s = reference();
    for scheme in [Scheme::EulerMaruyama, Scheme::LogitTransform] {
        let (coarse, fine) = simulate_refined(&s.eq, &short_config(scheme)).unwrap();
        let excess = max_excess(&coarse.occupation, &fine.occupation, |i| coarse.std_error[i].max(fine.std_error[i]));
        assert!(excess < 0.0, "{scheme:?}: {excess}");
    }
}

#[test]
fn schemes_agree_within_twice_error_bars() {
    let s = reference();
    let em = simulate(&s.eq, &short_config(Scheme::EulerMaruyama)).unwrap();
    let lt = simulate(&s.eq, &short_config(Scheme::LogitTransform)).unwrap();
    let excess = max_excess(&em.occupation, &lt.occupation, |i| 2.0 * em.std_error[i].hypot(lt.std_error[i]));
    assert!(excess < 0.0, "{excess}");
}

#[test]
fn clamps_are_rare_when_both_survive() {
    let s = reference();
    for scheme in [Scheme::EulerMaruyama, Scheme::LogitTransform] {
        let stats = simulate(&s.eq, &short_config(scheme)).unwrap();
        assert!(stats.clamp_rate < 1e-4, "{scheme:?}: {}", stats.clamp_rate);
        assert!(stats.nonfinite_paths.is_empty());
    }
}

#[test]
fn restricted_share_drifts_to_one_without_preference_gap() {
    let s = equal_preference();
    let medians: Vec<f64> = [20.0, 80.0, 320.0]
        .iter()
        .map(|&horizon| {
            let cfg = SimConfig { n_paths: 200, horizon, dt: 1e-2, seed: 5, ..Default::default() };
            simulate(&s.eq, &cfg).unwrap().terminal_median()
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
    assert!(medians[2] > 0.99, "{medians:?}");
}

#[test]
fn invalid_simulation_config_rejected() {
    let s = reference();
    let cfg = SimConfig { clamp_eps: 0.0, ..Default::default() };
    assert!(matches!(simulate(&s.eq, &cfg), Err(Error::Config(_))));
}
