//! Independent closed-form and numerical oracles for the solver outputs.

mod common;

use common::{equal_preference, gamma_delta, reference, rel};
use equishoot::equilibrium::{drift_ratio, drift_vol, rate_and_mpr, wealth_weight};
use equishoot::numerics::quad::integrate as quad;
use equishoot::numerics::{loglog_fit, logspace};
use equishoot::ode::{rhs, series_slope, series_start, solve_f, FCoefficients, FStart, HCoefficients, OdeState};
use equishoot::shooting::{certify, find_xi0, ShootingOptions};
use equishoot::sim::{ergodic_distance, uniform_edges, OccupationStats, StationaryDistribution};
use equishoot::survival::{classify, prieto_classify, prieto_left_ratio, scale_density, Classification};
use equishoot::{derive_params, Error, RawParams, ValidationError};
use rand::SeedableRng;

#[test]
fn reference_constants_by_hand() {
    let p = derive_params(RawParams::reference()).unwrap();
    // 2 (0.05 - 0.056) / 0.04 and (0.1 + 0.04 - 0.5 (0.02 - 0.02)) / 0.04.
    assert!((p.delta() + 0.3).abs() < 1e-12);
    assert!((p.a_cap() - 3.5).abs() < 1e-12);
    let mut raw = RawParams::reference();
    raw.beta1 = 0.062;
    match derive_params(raw) {
        Err(ValidationError::DeltaOutOfRange { delta, .. }) => assert!((delta + 0.6).abs() < 1e-12),
        other => panic!("expected DeltaOutOfRange, got {other:?}"),
    }
}

#[test]
fn series_slope_matches_local_expansion() {
    let c = HCoefficients::from(&derive_params(RawParams::reference()).unwrap());
    // xi = (A - 1) sigma^2 kills the first-order term; xi = 0.06 gives -0.1.
    assert!(series_slope((c.a_cap - 1.0) * c.sigma2, &c).abs() < 1e-15);
    assert!((series_slope(0.06, &c) + 0.1).abs() < 1e-12);
    // Along the truncated series the ODE's own slope tends to h1 as y -> 0;
    // the O(y) gap shrinks linearly.
    for xi in [0.02, 0.06, 0.2, 0.4] {
        let h1 = series_slope(xi, &c);
        let gap = |y: f64| {
            let s = OdeState { y, h: c.gamma + h1 * y, i_log: (c.gamma - 1.0) * y };
            rhs(&s, xi, &c).unwrap().0 - h1
        };
        let (g1, g2) = (gap(1e-4), gap(5e-5));
        assert!(g1.abs() < 1e-2, "xi {xi}: {g1}");
        assert!((g1 / g2 - 2.0).abs() < 1e-2, "xi {xi}: ratio {}", g1 / g2);
    }
    let s = series_start(0.06, &c, 1e-8);
    assert_eq!(s.y, 1e-8);
    assert!((s.h - (0.5 - 0.1e-8)).abs() < 1e-18);
    assert!((s.i_log + 0.5e-8).abs() < 1e-20);
}

#[test]
fn terminal_slope_and_identity_on_reference() {
    let s = reference();
    let (g, d, a, s2): (f64, f64, f64, f64) = (0.5, -0.3, 3.5, 0.04);
    let slope = (1.0 - g) * (g * g + g - d) / (g * (a - d - 1.0) + 2.0 * d);
    assert!((slope - 0.65625).abs() < 1e-15);
    assert!(rel(s.cs.slope_end, slope) < 1e-4, "{}", s.cs.slope_end);
    let f_limit = a - g + d * (1.0 - g) / g;
    assert!((f_limit - 2.7).abs() < 1e-12);
    assert!(rel(s.cs.i_end.exp(), s2 / s.cs.xi0 * f_limit) < 1e-4);
    assert!(rel(s.cs.f_end, 2.7) < 1e-4);
    assert!((s.cs.h_end - 1.0).abs() < 1e-6);
    assert!(s.certified);
}

#[test]
fn equal_preference_slope() {
    let s = equal_preference();
    let (g, a) = (0.5, 3.5);
    let slope = (1.0 - g) * (g * g + g) / (g * (a - 1.0));
    assert!(rel(s.cs.slope_end, slope) < 1e-4, "{} vs {slope}", s.cs.slope_end);
    assert!(s.certified);
    // Continuity in delta: a small negative delta lands close by.
    let near = gamma_delta(0.5, -1e-3);
    assert!((near.cs.slope_end - s.cs.slope_end).abs() < 5e-3);
}

fn f_closed(gamma: f64, delta: f64, a3: f64) -> f64 {
    let s = a3 + delta;
    gamma / (2.0 * delta) * (s + (s * s + 4.0 * delta).sqrt())
}

#[test]
fn comparison_terminal_values() {
    // -1 gives the constant solution f = gamma.
    let f = f_closed(0.5, -0.3, -1.0);
    assert!((f - 0.5).abs() < 1e-12);
    let mut checked = 0;
    for gamma in [0.3, 0.5, 0.7] {
        for frac in [0.2, 0.5, 0.8] {
            let delta = -frac * gamma;
            let hi = delta * (1.0 - gamma) / gamma - gamma;
            for w in [0.0, 0.4, 0.8] {
                let a3 = -1.0 + w * (hi + 1.0);
                let s = a3 + delta;
                if s * s + 4.0 * delta < 0.0 {
                    continue;
                }
                let sol = solve_f(FCoefficients { gamma, delta, a3 }, FStart::Origin, 1e-12, 1e-8, 1e-6).unwrap();
                let expect = f_closed(gamma, delta, a3);
                assert!((sol.f_end - expect).abs() < 1e-5, "({gamma}, {delta}, {a3}): {} vs {expect}", sol.f_end);
                assert!(sol.f_end < 1.0);
                checked += 1;
            }
        }
    }
    assert!(checked >= 10, "only {checked} triples");
}

#[test]
fn equilibrium_limits() {
    let s = reference();
    let eq = &s.eq;
    // r(1-) = beta1 + gamma mu_d - gamma (gamma + 1) sigma^2 / 2 = 0.046.
    let r_limit: f64 = 0.056 + 0.5 * 0.01 - 0.5 * 0.5 * 1.5 * 0.04;
    assert!((r_limit - 0.046).abs() < 1e-15);
    let (r, kappa) = rate_and_mpr(1.0 - 1e-9, eq).unwrap();
    assert!((r - r_limit).abs() < 1e-6, "{r}");
    assert!((kappa - 0.5 * 0.2).abs() < 1e-6);
    let rs: Vec<f64> = [1e-4, 1e-2, 0.5].iter().map(|&y| rate_and_mpr(y, eq).unwrap().0).collect();
    assert!(rs[0] < rs[1] && rs[1] < rs[2]);
    let (_, sig0) = drift_vol(1e-9, eq).unwrap();
    assert!((sig0 - 0.2 / 0.5).abs() < 1e-6);
    let (_, sig1) = drift_vol(1.0 - 1e-9, eq).unwrap();
    assert!(sig1 < 1e-8);
}

fn fitted_limit(f: impl Fn(f64) -> f64) -> f64 {
    // Linear fit in d of f(d) on small distances, read off at d = 0.
    let ds = logspace(1e-6, 1e-4, 15);
    let n = ds.len() as f64;
    let vs: Vec<f64> = ds.iter().map(|&d| f(d)).collect();
    let md = ds.iter().sum::<f64>() / n;
    let mv = vs.iter().sum::<f64>() / n;
    let sxx: f64 = ds.iter().map(|d| (d - md) * (d - md)).sum();
    let sxv: f64 = ds.iter().zip(&vs).map(|(d, v)| (d - md) * (v - mv)).sum();
    mv - sxv / sxx * md
}

#[test]
fn drift_ratio_boundary_expansions() {
    for s in [reference(), &gamma_delta(0.6, -0.45)] {
        let (g, d) = (s.params.gamma(), s.params.delta());
        let left = fitted_limit(|y| y * drift_ratio(y, &s.eq).unwrap());
        assert!(rel(left, (1.0 + g) / 2.0) < 0.02, "{left}");
        let right = fitted_limit(|u| u * drift_ratio(1.0 - u, &s.eq).unwrap());
        let expect = ((g - 1.0) * g + d) / (2.0 * g);
        assert!(rel(right, expect) < 0.02, "{right} vs {expect}");
    }
}

#[test]
fn prieto_left_expansion() {
    for gamma in [0.3, 0.5, 0.8] {
        let left = fitted_limit(|y| y * prieto_left_ratio(gamma, y));
        assert!(rel(left, (1.0 + gamma) / 2.0) < 0.02);
    }
    // 0.5 (2 + 0.5 - 0) and 0.5 (2.5 - 2 * 0.01 / 0.04).
    let a = prieto_classify(0.5, 0.0, 0.2).unwrap();
    assert!((a.eta - 1.25).abs() < 1e-12);
    let b = prieto_classify(0.5, 0.01, 0.2).unwrap();
    assert!((b.eta - 1.0).abs() < 1e-12);
}

#[test]
fn scale_density_exponents() {
    let s = reference();
    let ys = logspace(1e-5, 1e-3, 12);
    let rho0: Vec<f64> = ys.iter().map(|&y| scale_density(y, 0.5, &s.eq).unwrap()).collect();
    let (slope0, _) = loglog_fit(&ys, &rho0);
    assert!(rel(-slope0, 1.5) < 0.02, "{slope0}");
    let rho1: Vec<f64> = ys.iter().map(|&u| scale_density(1.0 - u, 0.5, &s.eq).unwrap()).collect();
    let (slope1, _) = loglog_fit(&ys, &rho1);
    // 1 - gamma - delta/gamma = 0.5 + 0.6.
    assert!(rel(-slope1, 1.1) < 0.02, "{slope1}");
    assert_eq!(scale_density(0.5, 0.5, &s.eq).unwrap(), 1.0);
    assert!(matches!(scale_density(1.0, 0.5, &s.eq), Err(Error::Domain { .. })));
}

#[test]
fn classification_examples() {
    let r = classify(&reference().params, &reference().eq, 0.5).unwrap();
    assert_eq!(r.classification, Classification::BothSurvive);
    // gamma + delta/gamma + 1 = 0.5 - 0.6 + 1.
    assert!(rel(r.speed_tail_exponent1, 0.9) < 0.02);
    let z = equal_preference();
    let r0 = classify(&z.params, &z.eq, 0.5).unwrap();
    assert_eq!(r0.classification, Classification::Trader2Extinct);
    assert_eq!(r0.s1_diverges, Some(false));
    // 1 - gamma = 0.5 at delta = 0.
    assert!(rel(r0.exp1, 0.5) < 0.02);
}

#[test]
fn boundary_delta_is_inconclusive() {
    // delta = -gamma^2 puts both exponents at one.
    let s = gamma_delta(0.5, -0.25);
    let r = classify(&s.params, &s.eq, 0.5).unwrap();
    assert_eq!(r.s1_diverges, None);
    assert_eq!(r.speed_finite, None);
    assert_eq!(r.classification, Classification::Indeterminate);
    assert!(matches!(equishoot::survival::speed_mass(&s.eq, 0.5), Err(Error::InconclusiveTail { .. })));
}

#[test]
fn stationary_density_solves_zero_flux_equation() {
    // 0.5 d(sigma_Y^2 p)/dy = mu_Y p, checked by centered differences of
    // drift_vol, independently of the scale-function quadrature.
    let s = reference();
    let st = StationaryDistribution::new(&s.eq).unwrap();
    for y in [0.05f64, 0.2, 0.5, 0.8, 0.95, 0.999] {
        let e = 1e-5 * y.min(1.0 - y);
        let flux = |x: f64| drift_vol(x, &s.eq).unwrap().1.powi(2) * st.density(x);
        let lhs = 0.5 * (flux(y + e) - flux(y - e)) / (2.0 * e);
        let rhs = drift_vol(y, &s.eq).unwrap().0 * st.density(y);
        assert!((lhs - rhs).abs() <= 1e-5 * rhs.abs().max(lhs.abs()), "y {y}: {lhs} vs {rhs}");
    }
}

#[test]
fn stationary_density_tails() {
    let s = reference();
    let st = StationaryDistribution::new(&s.eq).unwrap();
    let ds = logspace(1e-5, 1e-3, 10);
    let near0: Vec<f64> = ds.iter().map(|&y| st.density(y)).collect();
    let (s0, _) = loglog_fit(&ds, &near0);
    assert!(rel(s0, 1.5) < 0.02, "{s0}");
    let near1: Vec<f64> = ds.iter().map(|&u| st.density(1.0 - u)).collect();
    let (s1, _) = loglog_fit(&ds, &near1);
    assert!(rel(-s1, 0.9) < 0.02, "{s1}");
    assert!((st.cdf(1.0) - 1.0).abs() < 1e-12);
    let z = equal_preference();
    assert!(matches!(StationaryDistribution::new(&z.eq), Err(Error::NotNormalizable { .. })));
}

#[test]
fn stationary_density_integrates_to_one() {
    // Direct quadrature of the density, in u = 1 - y = v^10 near one so the
    // u^{-0.9} singularity becomes bounded, against the exact tail exponent
    // below u = 1e-12.
    let s = reference();
    let st = StationaryDistribution::new(&s.eq).unwrap();
    let lower = |y: f64| st.density(y);
    let upper = |v: f64| 10.0 * v.powi(9) * st.density_complement(v.powi(10));
    let u_min: f64 = 1e-12;
    let mid = quad(&lower, 0.0, 0.5, 1e-10, 1e-9);
    let top = quad(&upper, u_min.powf(0.1), 0.5f64.powf(0.1), 1e-10, 1e-9);
    let rest = st.density_complement(u_min) * u_min / (1.0 - 0.9);
    assert!((mid + top + rest - 1.0).abs() < 1e-6, "{}", mid + top + rest);
}

#[test]
fn exact_samples_calibrate_distance() {
    let s = reference();
    let st = StationaryDistribution::new(&s.eq).unwrap();
    let masses = st.bin_masses(&uniform_edges(50));
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut last = f64::INFINITY;
    for n in [1_000, 10_000, 100_000] {
        let stats = OccupationStats::from_samples(&st.sample(&mut rng, n), 50);
        let d = ergodic_distance(&stats.occupation, &masses).unwrap();
        assert!(d < last * 1.5, "{n}: {d}");
        last = d;
    }
    assert!(last < 0.02);
}

#[test]
fn wealth_weight_at_endpoints() {
    let s = reference();
    let g0 = 2.0 / s.cs.xi0 * 0.5f64.powf(-0.5);
    assert!(rel(wealth_weight(0.0, &s.eq).unwrap(), g0) < 1e-14);
    assert_eq!(wealth_weight(1.0, &s.eq).unwrap(), 0.0);
    assert!(wealth_weight(1.0 - 1e-9, &s.eq).unwrap() < 1e-8 * g0);
}

#[test]
fn loosened_bracket_fails_certification() {
    let p = derive_params(RawParams::reference()).unwrap();
    let opts = ShootingOptions { xi_tol: 1e-9, ..Default::default() };
    let cs = find_xi0(&p, &opts).unwrap();
    let report = certify(&cs, &p);
    assert!(!report.checks.h_end);
    assert!(!report.passed);
}
