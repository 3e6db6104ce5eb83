//! Bisection on the shooting parameter and certification of the critical
//! solution.
//!
//! Near `y = 1` the critical trajectory is a saddle of the augmented system:
//! in `t = -ln(1 - y)` the linearisation about `(h, F) = (1, F*)` has one
//! unstable and one stable eigenvalue. Any error in `xi` is amplified like
//! `(1 - y)^{-lambda_u}`, so the integrated curve is only reliable up to a
//! cutoff. The two bracketing curves of the final bisection step diverge in
//! opposite directions beyond it; where they still agree the critical curve
//! is pinned between them. Terminal values come from generalized Richardson
//! extrapolation over that trusted stretch, using the exponent lattice
//! generated by `1` and the stable exponent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::extrap::{asymptotic_terms, extrapolate, Extrapolated, Term};
use crate::numerics::rk::{OdeSystem, Stepper, StepperOptions};
use crate::ode::{integrate_h, rhs, HCoefficients, IntegrationSettings, OdeState, Outcome, SolutionCurve};
use crate::params::ModelParams;

/// Largest `1 - y` sampled for the terminal extrapolation.
const SAMPLE_U0: f64 = 1.0 / 16.0;
const SAMPLE_RATIO: f64 = std::f64::consts::SQRT_2;
/// The doubling search gives up above this multiple of the seed.
const CEILING_FACTOR: f64 = 1e8;
/// Highest correction exponent considered in the terminal expansions.
const TERM_LIMIT: f64 = 6.0;
/// Exponents closer than this are treated as resonant (logarithmic terms).
const RESONANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingOptions {
    /// Bisection stops when `xi_hi - xi_lo <= xi_tol * xi_lo`, or when the
    /// bracket cannot be split in floating point.
    pub xi_tol: f64,
    pub ode_tol: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// `h(y_end)` within this distance of one is indeterminate; `None`
    /// means `10 * ode_tol`.
    pub margin: Option<f64>,
    /// Bracketing curves count as agreeing at `u = 1 - y` while
    /// `|h_hi - h_lo| <= trust_tol * u`.
    pub trust_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            xi_tol: 1e-15,
            ode_tol: 1e-12,
            eps0: crate::ode::DEFAULT_EPS0,
            eps1: crate::ode::DEFAULT_EPS1,
            margin: None,
            trust_tol: 1e-7,
        }
    }
}

impl ShootingOptions {
    fn margin(&self) -> f64 {
        self.margin.unwrap_or(10.0 * self.ode_tol)
    }

    fn settings(&self) -> IntegrationSettings {
        let mut s = IntegrationSettings::new(self.ode_tol);
        s.eps0 = self.eps0;
        s.y_end = 1.0 - self.eps1;
        s.with_checkpoints(sample_points(self.eps1).iter().map(|u| 1.0 - u).collect())
    }
}

/// `1 - y` values of the extrapolation samples, decreasing.
fn sample_points(eps1: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = SAMPLE_U0;
    while u > eps1 {
        out.push(u);
        u /= SAMPLE_RATIO;
    }
    out
}

/// Subcritical/supercritical test for one shooting parameter.
pub fn classify_xi(xi: f64, c: &HCoefficients, opts: &ShootingOptions) -> Result<Side> {
    classify_curve(&integrate_h(xi, c, &opts.settings())?, opts.margin())
}

fn classify_curve(curve: &SolutionCurve, margin: f64) -> Result<Side> {
    match curve.outcome {
        Outcome::CrossedOne { .. } | Outcome::Exploded { .. } => Ok(Side::Supercritical),
        Outcome::ReachedEnd { h_end, .. } if h_end < 1.0 - margin => Ok(Side::Subcritical),
        Outcome::ReachedEnd { h_end, .. } => Err(Error::Indeterminate { xi: curve.xi, h_end }),
    }
}

/// Power-law correction to the linear approach `h = 1 - g1 (1 - y)` beyond
/// the trusted cutoff `u_t`:
/// `h = 1 - u (g1 + (g_t - g1)(u/u_t)^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailModel {
    pub u_trusted: f64,
    pub g_trusted: f64,
    pub i_trusted: f64,
    pub g1: f64,
    pub exponent: f64,
}

impl TailModel {
    pub fn h(&self, u: f64) -> f64 {
        1.0 - u * self.g(u)
    }

    fn g(&self, u: f64) -> f64 {
        self.g1 + (self.g_trusted - self.g1) * (u / self.u_trusted).powf(self.exponent)
    }

    /// `I` from the integrated tail of `dI/du = g(u)`, anchored at the cutoff.
    pub fn i_log(&self, u: f64) -> f64 {
        let p1 = 1.0 + self.exponent;
        let ut = self.u_trusted;
        let tail = self.g1 * (ut - u)
            + (self.g_trusted - self.g1) * (ut.powf(p1) - u.powf(p1)) / (p1 * ut.powf(self.exponent));
        self.i_trusted - tail
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalSolution {
    pub xi0: f64,
    #[serde(skip)]
    pub curve: SolutionCurve,
    /// Extrapolated `h(1)`.
    pub h_end: f64,
    pub h_end_error: f64,
    /// Extrapolated `h'(1) = lim (1 - h)/(1 - y)`.
    pub slope_end: f64,
    pub slope_end_error: f64,
    /// Extrapolated `I(1)`.
    pub i_end: f64,
    pub i_end_error: f64,
    /// Extrapolated `(xi0/sigma_d^2) exp(I(1))`.
    pub f_end: f64,
    /// Exponent of the stable mode in `(1 - h)/(1 - y) - h'(1)`.
    pub stable_exponent: f64,
    /// Relative error of `exp(I(1))` against `(sigma_d^2/xi0)(A - gamma + delta(1 - gamma)/gamma)`.
    pub identity_residual: f64,
    pub bracket_width: f64,
    pub bisection_steps: usize,
    /// Number of extrapolation samples on which the bracketing curves agree.
    pub trusted_samples: usize,
    pub tail: TailModel,
    /// Last grid index produced by the integrator; later nodes are tail model.
    pub trusted_len: usize,
    pub options: ShootingOptions,
}

/// Locates `xi0` by bisection and extrapolates the terminal data.
pub fn find_xi0(p: &ModelParams, opts: &ShootingOptions) -> Result<CriticalSolution> {
    let c = HCoefficients::from(p);
    let settings = opts.settings();
    let margin = opts.margin();
    let run = |xi: f64| -> Result<(Side, SolutionCurve)> {
        let curve = integrate_h(xi, &c, &settings)?;
        Ok((classify_curve(&curve, margin)?, curve))
    };

    // Every xi below the seed bound gives a global sub-unity solution.
    let seed = p.subcritical_seed_bound();
    let mut xi_lo = 0.5 * seed;
    let (mut side_lo, mut curve_lo) = run(xi_lo)?;
    let mut halvings = 0;
    while side_lo != Side::Subcritical {
        halvings += 1;
        if halvings > 60 {
            return Err(Error::BracketFailure { ceiling: seed });
        }
        xi_lo *= 0.5;
        (side_lo, curve_lo) = run(xi_lo)?;
    }
    let ceiling = CEILING_FACTOR * seed;
    let mut xi_hi = 2.0 * seed;
    let mut curve_hi = loop {
        if xi_hi > ceiling {
            return Err(Error::BracketFailure { ceiling });
        }
        match run(xi_hi)? {
            (Side::Supercritical, curve) => break curve,
            (Side::Subcritical, curve) => {
                xi_lo = xi_hi;
                curve_lo = curve;
                xi_hi *= 2.0;
            }
        }
    };

    let mut steps = 0;
    loop {
        let mid = 0.5 * (xi_lo + xi_hi);
        if xi_hi - xi_lo <= opts.xi_tol * xi_lo || mid <= xi_lo || mid >= xi_hi {
            break;
        }
        steps += 1;
        match run(mid) {
            Ok((Side::Subcritical, curve)) => {
                xi_lo = mid;
                curve_lo = curve;
            }
            Ok((Side::Supercritical, curve)) => {
                xi_hi = mid;
                curve_hi = curve;
            }
            Err(Error::Indeterminate { .. }) => {
                if xi_hi - xi_lo > opts.xi_tol * xi_lo.max(1.0) * 1e3 {
                    return Err(Error::ToleranceFailure { xi: mid });
                }
                break;
            }
            Err(e) => return Err(e),
        }
    }

    terminal_data(p, &c, opts, xi_lo, xi_hi, curve_lo, &curve_hi, steps)
}

#[allow(clippy::too_many_arguments)]
fn terminal_data(
    p: &ModelParams,
    c: &HCoefficients,
    opts: &ShootingOptions,
    xi_lo: f64,
    xi_hi: f64,
    curve_lo: SolutionCurve,
    curve_hi: &SolutionCurve,
    bisection_steps: usize,
) -> Result<CriticalSolution> {
    // Trusted samples: the bracketing curves agree to trust_tol * u.
    let mut us = Vec::new();
    let mut hs = Vec::new();
    let mut is = Vec::new();
    for u in sample_points(opts.eps1) {
        let y = 1.0 - u;
        let (Some(a), Some(b)) = (curve_lo.checkpoint(y), curve_hi.checkpoint(y)) else {
            break;
        };
        if (b.h - a.h).abs() > opts.trust_tol * u {
            break;
        }
        us.push(u);
        hs.push(0.5 * (a.h + b.h));
        is.push(0.5 * (a.i_log + b.i_log));
    }
    if us.is_empty() {
        // Nothing is pinned by the bracket; fall back to the first sample of
        // the subcritical curve and let certification judge the result.
        let u = SAMPLE_U0;
        let a = curve_lo.checkpoint(1.0 - u).ok_or(Error::ToleranceFailure { xi: xi_lo })?;
        us.push(u);
        hs.push(a.h);
        is.push(a.i_log);
    }
    let trusted_samples = us.len();
    let gs: Vec<f64> = us.iter().zip(&hs).map(|(u, h)| (1.0 - h) / u).collect();
    let fs: Vec<f64> = is.iter().map(|i| xi_lo / p.sigma2() * i.exp()).collect();

    // Stable exponent from the numerically extrapolated F(1); iterate since
    // the correction terms themselves depend on it.
    let mut f_end = *fs.last().unwrap();
    let mut p_exp = 0.5;
    let mut terms_h = Vec::new();
    for _ in 0..4 {
        p_exp = stable_exponent(c, f_end);
        terms_h = shifted_terms(p_exp);
        f_end = extrapolate(&us, &fs, &terms_h).value;
    }
    let terms_g = asymptotic_terms(&[p_exp, 1.0], TERM_LIMIT, RESONANCE);
    let slope: Extrapolated = extrapolate(&us, &gs, &terms_g);
    let h_end = extrapolate(&us, &hs, &terms_h);
    let i_end = extrapolate(&us, &is, &terms_h);

    let identity_lhs = i_end.value.exp();
    let identity_rhs = p.sigma2() / xi_lo * p.critical_f_limit();
    let identity_residual = ((identity_lhs - identity_rhs) / identity_rhs).abs();

    let u_t = *us.last().unwrap();
    let tail = TailModel {
        u_trusted: u_t,
        g_trusted: *gs.last().unwrap(),
        i_trusted: *is.last().unwrap(),
        g1: slope.value,
        exponent: p_exp,
    };
    let mut curve = curve_lo.truncated(1.0 - u_t);
    let trusted_len = curve.len();
    let mut u = u_t / SAMPLE_RATIO;
    while u > opts.eps1 {
        curve.y.push(1.0 - u);
        curve.h.push(tail.h(u));
        curve.i_log.push(tail.i_log(u));
        u /= SAMPLE_RATIO.sqrt();
    }
    let u_end = opts.eps1;
    curve.y.push(1.0 - u_end);
    curve.h.push(tail.h(u_end));
    curve.i_log.push(tail.i_log(u_end));
    curve.outcome = Outcome::ReachedEnd { h_end: tail.h(u_end), i_end: tail.i_log(u_end) };

    Ok(CriticalSolution {
        xi0: xi_lo,
        curve,
        h_end: h_end.value,
        h_end_error: h_end.error,
        slope_end: slope.value,
        slope_end_error: slope.error,
        i_end: i_end.value,
        i_end_error: i_end.error,
        f_end,
        stable_exponent: p_exp,
        identity_residual,
        bracket_width: xi_hi - xi_lo,
        bisection_steps,
        trusted_samples,
        tail,
        trusted_len,
        options: *opts,
    })
}

/// Exponent `|lambda_s| - 1` of the stable mode in `(1 - h)/(1 - y)`, from
/// the linearisation of `(h, F)` about `(1, f_end)` in `t = -ln(1 - y)`.
pub fn stable_exponent(c: &HCoefficients, f_end: f64) -> f64 {
    let trace = c.gamma + 2.0 * (f_end - c.a_cap) + 2.0 * c.delta - 3.0 * c.delta / c.gamma;
    let lambda_s = 0.5 * (trace - (trace * trace + 4.0 * f_end).sqrt());
    -lambda_s - 1.0
}

/// Correction terms of `h - h(1)`: `u` itself, and `u` times each term of
/// the slope quotient.
fn shifted_terms(p: f64) -> Vec<Term> {
    let mut out = vec![Term { exponent: 1.0, log_power: 0 }];
    out.extend(
        asymptotic_terms(&[p, 1.0], TERM_LIMIT, RESONANCE)
            .into_iter()
            .map(|t| Term { exponent: 1.0 + t.exponent, ..t }),
    );
    out
}

// ---------------------------------------------------------------------------
// Certification.

/// Acceptance thresholds applied by [`certify`].
pub const H_END_TOL: f64 = 1e-6;
pub const SLOPE_REL_TOL: f64 = 1e-4;
pub const IDENTITY_REL_TOL: f64 = 1e-4;
pub const BOUNDS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub h_end: f64,
    pub slope_rel: f64,
    pub identity_rel: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub bounds_violation: f64,
    /// Centered-difference residual of the stored grid; see [`ode_residual`].
    pub ode_residual: f64,
    pub ode_residual_limit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Checks {
    pub h_end: bool,
    pub slope: bool,
    pub identity: bool,
    pub bounds: bool,
    pub ode_residual: bool,
    pub slope_positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub xi0: f64,
    pub h_end: f64,
    pub slope_end: f64,
    pub slope_closed_form: f64,
    pub identity_lhs: f64,
    pub identity_rhs: f64,
    pub residuals: Residuals,
    pub checks: Checks,
    pub passed: bool,
}

/// Checks a critical solution against the boundary values, the closed-form
/// terminal slope, the exponential identity, the bounds `gamma <= h <= 1`
/// and the ODE itself.
pub fn certify(cs: &CriticalSolution, p: &ModelParams) -> CertificateReport {
    let c = HCoefficients::from(p);
    let slope_closed_form = p.terminal_slope();
    let identity_lhs = cs.i_end.exp();
    let identity_rhs = p.sigma2() / cs.xi0 * p.critical_f_limit();
    let h_min = cs.curve.h.iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = cs.curve.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bounds_violation = (p.gamma() - h_min).max(h_max - 1.0).max(0.0);
    let ode_residual_limit = 10.0 * cs.options.ode_tol;
    let ode_residual = ode_residual(cs, &c);
    let residuals = Residuals {
        h_end: (cs.h_end - 1.0).abs(),
        slope_rel: ((cs.slope_end - slope_closed_form) / slope_closed_form).abs(),
        identity_rel: ((identity_lhs - identity_rhs) / identity_rhs).abs(),
        h_min,
        h_max,
        bounds_violation,
        ode_residual,
        ode_residual_limit,
    };
    let checks = Checks {
        h_end: residuals.h_end <= H_END_TOL,
        slope: residuals.slope_rel <= SLOPE_REL_TOL,
        identity: residuals.identity_rel <= IDENTITY_REL_TOL,
        bounds: bounds_violation <= BOUNDS_TOL,
        ode_residual: ode_residual <= ode_residual_limit,
        slope_positive: cs.slope_end > 0.0,
    };
    let passed = checks.h_end
        && checks.slope
        && checks.identity
        && checks.bounds
        && checks.ode_residual
        && checks.slope_positive;
    CertificateReport {
        xi0: cs.xi0,
        h_end: cs.h_end,
        slope_end: cs.slope_end,
        slope_closed_form,
        identity_lhs,
        identity_rhs,
        residuals,
        checks,
        passed,
    }
}

struct Augmented<'a> {
    xi: f64,
    c: &'a HCoefficients,
}

impl OdeSystem<2> for Augmented<'_> {
    fn rhs(&self, y: f64, s: &[f64; 2]) -> Result<[f64; 2]> {
        let (dh, di) = rhs(&OdeState { y, h: s[0], i_log: s[1] }, self.xi, self.c)?;
        Ok([dh, di])
    }
}

/// Centered-difference residual of the stored grid. At a node `k` the
/// exact local solution through `(y_k, h_k, I_k)` is re-integrated to both
/// neighbours at a much tighter tolerance; the stored centered difference
/// `h_{k+1} - h_{k-1}` is compared with the exact one, in the integrator's
/// error norm `|dh| / max(|h_k|, 1)`.
pub fn ode_residual(cs: &CriticalSolution, c: &HCoefficients) -> f64 {
    let sys = Augmented { xi: cs.xi0, c };
    let n = cs.trusted_len;
    if n < 3 {
        return f64::INFINITY;
    }
    let tight = StepperOptions::with_tol((1e-3 * cs.options.ode_tol).max(1e-15));
    let flow = |from: &OdeState, to: f64| -> Result<f64> {
        let mut st = Stepper::new(&sys, from.y, [from.h, from.i_log], 1e-3 * (to - from.y), tight)?;
        while st.x() != to {
            st.step_toward(to)?;
        }
        Ok(st.state()[0])
    };
    let stride = (n / 200).max(1);
    let mut worst: f64 = 0.0;
    for k in (1..n - 1).step_by(stride) {
        let node = cs.curve.state(k);
        let stored = cs.curve.h[k + 1] - cs.curve.h[k - 1];
        let r = flow(&node, cs.curve.y[k + 1])
            .and_then(|up| Ok(up - flow(&node, cs.curve.y[k - 1])?))
            .map(|exact| (stored - exact).abs() / node.h.abs().max(1.0))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(r);
    }
    worst
}
