//! The governing singular ODE for `h` and its constant-coefficient
//! comparison equation for `f`.
//!
//! The governing equation is path dependent: its quadratic coefficient
//! contains `exp(I(y))` with `I(y) = int_0^y (h(q) - 1)/(1 - q) dq`. Carrying
//! `I` as a second state component turns it into an ordinary 2-D IVP.
//!
//! Both equations have a regular singular point at `y = 0`; integration is
//! launched at `y = eps0` from a first-order series.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::extrap::{exponent_lattice, richardson, Extrapolated};
use crate::numerics::rk::{single_step, OdeSystem, Stepper, StepperOptions};
use crate::params::ModelParams;

pub const DEFAULT_EPS0: f64 = 1e-8;
pub const DEFAULT_EPS1: f64 = 1e-6;
/// `|h|` above this ends the integration as an explosion.
pub const EXPLOSION_CEILING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeState {
    pub y: f64,
    pub h: f64,
    pub i_log: f64,
}

/// Constants of the `h` equation. Unlike [`ModelParams`] this accepts
/// `delta = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HCoefficients {
    pub gamma: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub a_cap: f64,
}

impl From<&ModelParams> for HCoefficients {
    fn from(p: &ModelParams) -> Self {
        Self { gamma: p.gamma(), sigma2: p.sigma2(), delta: p.delta(), a_cap: p.a_cap() }
    }
}

/// Shared right-hand side of both equations: `quad` is the coefficient of
/// `h^2 / (1 - y)` (`a_2` for `h`, the constant `a_3` for `f`).
#[inline]
fn riccati_cubic(gamma: f64, delta: f64, y: f64, h: f64, quad: f64) -> f64 {
    let u = 1.0 - y;
    // a0 + a1 h/(1-y), with the 1/y singular part isolated so that the
    // cancellation at y -> 0 happens in (gamma - h) rather than between
    // two large terms.
    let singular = (1.0 + gamma) * (gamma - h) / (y * u);
    let regular = ((2.0 * gamma + 1.0) * h - gamma * (1.0 + gamma)) / u;
    let h2 = h * h;
    singular + regular + quad * h2 / u + delta * y * h2 * (1.0 - h / gamma) / u
}

fn check_domain(y: f64) -> Result<()> {
    if y > 0.0 && y < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { y })
    }
}

/// `(dh/dy, dI/dy)` at `state` for shooting parameter `xi`.
pub fn rhs(state: &OdeState, xi: f64, c: &HCoefficients) -> Result<(f64, f64)> {
    check_domain(state.y)?;
    let a2 = xi / c.sigma2 * state.i_log.exp() - c.a_cap;
    let dh = riccati_cubic(c.gamma, c.delta, state.y, state.h, a2);
    let di = (state.h - 1.0) / (1.0 - state.y);
    Ok((dh, di))
}

/// First-order coefficient of the series `h = gamma + h1 y + O(y^2)`.
pub fn series_slope(xi: f64, c: &HCoefficients) -> f64 {
    c.gamma * c.gamma * (1.0 + xi / c.sigma2 - c.a_cap) / (2.0 + c.gamma)
}

/// Launch state at `y = eps0`.
pub fn series_start(xi: f64, c: &HCoefficients, eps0: f64) -> OdeState {
    OdeState {
        y: eps0,
        h: c.gamma + series_slope(xi, c) * eps0,
        i_log: (c.gamma - 1.0) * eps0,
    }
}

struct HSystem<'a> {
    xi: f64,
    c: &'a HCoefficients,
}

impl OdeSystem<2> for HSystem<'_> {
    fn rhs(&self, y: f64, s: &[f64; 2]) -> Result<[f64; 2]> {
        let (dh, di) = rhs(&OdeState { y, h: s[0], i_log: s[1] }, self.xi, self.c)?;
        Ok([dh, di])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Outcome {
    /// `h` reached one at `y_cross`.
    CrossedOne { y_cross: f64 },
    /// Integration reached `y_end` with `h < 1` throughout.
    ReachedEnd { h_end: f64, i_end: f64 },
    /// `|h|` exceeded the explosion ceiling at `y_blow`.
    Exploded { y_blow: f64 },
}

#[derive(Debug, Clone)]
pub struct IntegrationSettings {
    /// Relative (and absolute) tolerance of the embedded pair.
    pub tol: f64,
    pub eps0: f64,
    pub y_end: f64,
    /// Points the stepper must land on exactly; values there are kept in
    /// [`SolutionCurve::checkpoints`].
    pub checkpoints: Vec<f64>,
}

impl IntegrationSettings {
    pub fn new(tol: f64) -> Self {
        Self { tol, eps0: DEFAULT_EPS0, y_end: 1.0 - DEFAULT_EPS1, checkpoints: Vec::new() }
    }

    pub fn with_checkpoints(mut self, mut pts: Vec<f64>) -> Self {
        pts.retain(|&y| y > self.eps0 && y < self.y_end);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        self.checkpoints = pts;
        self
    }
}

/// A numerically solved `h_xi` on its adaptive grid.
#[derive(Debug, Clone)]
pub struct SolutionCurve {
    pub xi: f64,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub i_log: Vec<f64>,
    pub outcome: Outcome,
    pub checkpoints: Vec<OdeState>,
    pub steps: usize,
}

impl SolutionCurve {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn state(&self, k: usize) -> OdeState {
        OdeState { y: self.y[k], h: self.h[k], i_log: self.i_log[k] }
    }

    /// `F_xi(y) = (xi / sigma_d^2) exp(I(y))` at grid node `k`.
    pub fn f_xi(&self, k: usize, sigma2: f64) -> f64 {
        self.xi / sigma2 * self.i_log[k].exp()
    }

    /// Value at checkpoint `y`, if the integration got there.
    pub fn checkpoint(&self, y: f64) -> Option<OdeState> {
        self.checkpoints.iter().find(|s| s.y == y).copied()
    }

    /// Keeps only nodes with `y <= y_max`.
    pub fn truncated(&self, y_max: f64) -> SolutionCurve {
        let n = self.y.partition_point(|&v| v <= y_max);
        SolutionCurve {
            xi: self.xi,
            y: self.y[..n].to_vec(),
            h: self.h[..n].to_vec(),
            i_log: self.i_log[..n].to_vec(),
            outcome: self.outcome,
            checkpoints: self.checkpoints.iter().filter(|s| s.y <= y_max).copied().collect(),
            steps: self.steps,
        }
    }

    /// CSV with header `y,h,i_log`, one row per node, shortest round-trip
    /// decimal representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "y,h,i_log")?;
        for k in 0..self.len() {
            writeln!(w, "{},{},{}", self.y[k], self.h[k], self.i_log[k])?;
        }
        Ok(())
    }
}

/// Integrates the augmented `(h, I)` system from the series launch to
/// `settings.y_end`, stopping early when `h` reaches one or explodes.
pub fn integrate_h(xi: f64, c: &HCoefficients, settings: &IntegrationSettings) -> Result<SolutionCurve> {
    if !(settings.y_end > settings.eps0 && settings.y_end < 1.0) || settings.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < eps0 < y_end < 1 and tol > 0 (eps0 = {}, y_end = {}, tol = {})",
            settings.eps0, settings.y_end, settings.tol
        )));
    }
    let sys = HSystem { xi, c };
    let s0 = series_start(xi, c, settings.eps0);
    let opts = StepperOptions::with_tol(settings.tol);
    let mut st = Stepper::new(&sys, s0.y, [s0.h, s0.i_log], 0.1 * settings.eps0, opts)?;
    let mut curve = SolutionCurve {
        xi,
        y: vec![s0.y],
        h: vec![s0.h],
        i_log: vec![s0.i_log],
        outcome: Outcome::ReachedEnd { h_end: s0.h, i_end: s0.i_log },
        checkpoints: Vec::new(),
        steps: 0,
    };
    let mut stops = settings.checkpoints.iter().copied().chain(std::iter::once(settings.y_end));
    let mut target = stops.next().unwrap();
    loop {
        let (x_prev, s_prev) = st.step_toward(target)?;
        let (x, s) = (st.x(), *st.state());
        if s[0] >= 1.0 {
            let (yc, sc) = refine_crossing(&sys, x_prev, &s_prev, x - x_prev, settings.tol)?;
            curve.y.push(yc);
            curve.h.push(sc[0]);
            curve.i_log.push(sc[1]);
            curve.outcome = Outcome::CrossedOne { y_cross: yc };
            break;
        }
        if s[0].abs() > EXPLOSION_CEILING {
            curve.outcome = Outcome::Exploded { y_blow: x };
            break;
        }
        curve.y.push(x);
        curve.h.push(s[0]);
        curve.i_log.push(s[1]);
        if x == target {
            if x == settings.y_end {
                curve.outcome = Outcome::ReachedEnd { h_end: s[0], i_end: s[1] };
                break;
            }
            curve.checkpoints.push(OdeState { y: x, h: s[0], i_log: s[1] });
            target = stops.next().unwrap();
        }
    }
    curve.steps = st.steps();
    Ok(curve)
}

/// Bisects on the step length inside `[x0, x0 + dx]` for the first point
/// with `h >= 1`. Returns the upper end of the final bracket.
fn refine_crossing<S: OdeSystem<2>>(
    sys: &S,
    x0: f64,
    s0: &[f64; 2],
    dx: f64,
    tol: f64,
) -> Result<(f64, [f64; 2])> {
    let mut lo = 0.0;
    let mut hi = dx;
    let mut s_hi = single_step(sys, x0, s0, dx)?;
    for _ in 0..200 {
        if hi - lo <= tol * x0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s_mid = single_step(sys, x0, s0, mid)?;
        if s_mid[0] >= 1.0 {
            hi = mid;
            s_hi = s_mid;
        } else {
            lo = mid;
        }
    }
    Ok((x0 + hi, s_hi))
}

// ---------------------------------------------------------------------------
// Comparison equation with constant quadratic coefficient.

/// Constants of the comparison equation `f' = a0 + a1 f/(1-y) + a3 f^2/(1-y) + cubic`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FCoefficients {
    pub gamma: f64,
    pub delta: f64,
    pub a3: f64,
}

impl FCoefficients {
    /// The admissible range `[-1, delta (1 - gamma)/gamma - gamma)` for `a3`.
    pub fn a3_range(gamma: f64, delta: f64) -> (f64, f64) {
        (-1.0, delta * (1.0 - gamma) / gamma - gamma)
    }

    /// Closed-form terminal value
    /// `f(1) = gamma/(2 delta) (a3 + delta + sqrt((a3 + delta)^2 + 4 delta))`.
    pub fn terminal_closed_form(&self) -> f64 {
        let s = self.a3 + self.delta;
        let disc = s * s + 4.0 * self.delta;
        if self.delta == 0.0 {
            // Limit delta -> 0 of the root: -gamma / a3.
            return -self.gamma / self.a3;
        }
        self.gamma / (2.0 * self.delta) * (s + disc.sqrt())
    }

    /// `(1 - y) f'` at `y = 1` as a polynomial in `f`.
    fn limit_numerator(&self, f: f64) -> f64 {
        self.gamma * f + self.a3 * f * f + self.delta * f * f * (1.0 - f / self.gamma)
    }

    fn limit_numerator_slope(&self, f: f64) -> f64 {
        self.gamma + 2.0 * self.a3 * f + self.delta * (2.0 * f - 3.0 * f * f / self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FStart {
    /// `f(0) = gamma`, launched by series.
    Origin,
    /// `f(t0) = f0` at an interior point.
    Interior { t0: f64, f0: f64 },
}

impl OdeSystem<1> for FCoefficients {
    fn rhs(&self, y: f64, s: &[f64; 1]) -> Result<[f64; 1]> {
        check_domain(y)?;
        Ok([riccati_cubic(self.gamma, self.delta, y, s[0], self.a3)])
    }
}

#[derive(Debug, Clone)]
pub struct FSolution {
    pub coeffs: FCoefficients,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    /// Extrapolated `f(1)`.
    pub f_end: f64,
    pub f_end_error: f64,
    /// Exponent of the leading correction `f(y) - f(1) ~ (1 - y)^q`.
    pub approach_exponent: f64,
}

/// Integrates the comparison equation to `1 - eps1` and extrapolates `f(1)`.
pub fn solve_f(coeffs: FCoefficients, start: FStart, tol: f64, eps0: f64, eps1: f64) -> Result<FSolution> {
    let (y0, f0) = match start {
        FStart::Origin => {
            let f1 = coeffs.gamma * coeffs.gamma * (1.0 + coeffs.a3) / (2.0 + coeffs.gamma);
            (eps0, coeffs.gamma + f1 * eps0)
        }
        FStart::Interior { t0, f0 } => {
            check_domain(t0)?;
            (t0, f0)
        }
    };
    let y_end = 1.0 - eps1;
    // Geometric samples of 1 - y for the terminal extrapolation.
    let ratio = 2.0;
    let mut samples_u = Vec::new();
    let mut u = 1.0 / 16.0;
    while u >= eps1 * (1.0 - 1e-12) {
        if 1.0 - u > y0 {
            samples_u.push(u);
        }
        u /= ratio;
    }
    let opts = StepperOptions::with_tol(tol);
    let dx0 = if matches!(start, FStart::Origin) { 0.1 * eps0 } else { 1e-4 * (1.0 - y0) };
    let mut st = Stepper::new(&coeffs, y0, [f0], dx0, opts)?;
    let mut ys = vec![y0];
    let mut fs = vec![f0];
    let mut sampled = Vec::with_capacity(samples_u.len());
    let stops = samples_u.iter().map(|u| (1.0 - u, true)).chain(std::iter::once((y_end, false)));
    for (target, is_sample) in stops {
        while st.x() < target {
            st.step_toward(target)?;
            ys.push(st.x());
            fs.push(st.state()[0]);
        }
        if is_sample {
            sampled.push(st.state()[0]);
        }
    }
    // Local exponent from the numerically observed limit, refined once.
    let mut estimate = *fs.last().unwrap();
    let mut extrap = Extrapolated { value: estimate, error: f64::INFINITY, depth: 0 };
    let mut q = 1.0;
    for _ in 0..3 {
        q = -coeffs.limit_numerator_slope(estimate);
        if !(q > 0.0) {
            break;
        }
        let exps = exponent_lattice(&[1.0, q], 6.0, 1e-3);
        extrap = richardson(&sampled, ratio, &exps);
        estimate = extrap.value;
    }
    debug_assert!(coeffs.limit_numerator(estimate).abs() < 1e-3 || !estimate.is_finite());
    Ok(FSolution {
        coeffs,
        y: ys,
        f: fs,
        f_end: extrap.value,
        f_end_error: extrap.error,
        approach_exponent: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, RawParams};

    fn reference() -> HCoefficients {
        HCoefficients::from(&derive_params(RawParams::reference()).unwrap())
    }

    #[test]
    fn cubic_term_vanishes_without_delta() {
        let mut c = reference();
        c.delta = 0.0;
        let s = OdeState { y: 0.4, h: 0.7, i_log: -0.2 };
        let (dh, _) = rhs(&s, 0.12, &c).unwrap();
        let (y, h) = (s.y, s.h);
        let a0 = c.gamma * (1.0 + c.gamma) / y;
        let a1 = ((2.0 * c.gamma + 1.0) * y - (1.0 + c.gamma)) / y;
        let a2 = 0.12 / c.sigma2 * s.i_log.exp() - c.a_cap;
        let quadratic = a0 + a1 / (1.0 - y) * h + a2 / (1.0 - y) * h * h;
        assert!((dh - quadratic).abs() < 1e-13 * quadratic.abs().max(1.0));
    }

    #[test]
    fn rhs_matches_textbook_form() {
        let c = reference();
        let s = OdeState { y: 0.3, h: 0.8, i_log: -0.1 };
        let (dh, di) = rhs(&s, 0.15, &c).unwrap();
        let (y, h, g, d) = (s.y, s.h, c.gamma, c.delta);
        let a0 = g * (1.0 + g) / y;
        let a1 = ((2.0 * g + 1.0) * y - (1.0 + g)) / y;
        let a2 = 0.15 / c.sigma2 * s.i_log.exp() - c.a_cap;
        let direct = a0 + a1 / (1.0 - y) * h + a2 / (1.0 - y) * h * h
            + d * y / (1.0 - y) * h * h * (1.0 - h / g);
        assert!((dh - direct).abs() < 1e-12 * direct.abs().max(1.0));
        assert!((di - (h - 1.0) / (1.0 - y)).abs() < 1e-15);
    }

    #[test]
    fn integral_rate_zero_at_one() {
        let s = OdeState { y: 0.6, h: 1.0, i_log: -0.3 };
        assert_eq!(rhs(&s, 0.1, &reference()).unwrap().1, 0.0);
    }

    #[test]
    fn domain_checked() {
        let c = reference();
        for y in [0.0, 1.0, -0.1, 1.5] {
            let s = OdeState { y, h: 0.5, i_log: 0.0 };
            assert!(matches!(rhs(&s, 0.1, &c), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn series_slope_examples() {
        let c = reference();
        let xi_flat = (c.a_cap - 1.0) * c.sigma2;
        assert!(series_slope(xi_flat, &c).abs() < 1e-15);
        let s = series_start(xi_flat, &c, 1e-8);
        assert_eq!(s.h, c.gamma);
        assert!((s.i_log - (c.gamma - 1.0) * 1e-8).abs() < 1e-24);
        assert!((series_slope(0.06, &c) + 0.1).abs() < 1e-14);
    }

    #[test]
    fn rhs_bounded_near_origin() {
        // Launch states lie on the series; the 1/y terms must cancel.
        let c = reference();
        for xi in [0.01, 0.06, 0.2] {
            for k in 1..=10 {
                let y = 1e-8 * k as f64;
                let h = c.gamma + series_slope(xi, &c) * y;
                let (dh, _) = rhs(&OdeState { y, h, i_log: (c.gamma - 1.0) * y }, xi, &c).unwrap();
                assert!(dh.abs() < 10.0, "dh = {dh} at y = {y}");
            }
        }
    }

    #[test]
    fn crossing_is_refined() {
        let c = reference();
        let curve = integrate_h(5.0, &c, &IntegrationSettings::new(1e-10)).unwrap();
        match curve.outcome {
            Outcome::CrossedOne { y_cross } => {
                let last = curve.len() - 1;
                assert_eq!(curve.y[last], y_cross);
                assert!(curve.h[last] >= 1.0 && curve.h[last] < 1.0 + 1e-6);
            }
            o => panic!("expected crossing, got {o:?}"),
        }
    }

    #[test]
    fn constant_comparison_solution() {
        let fc = FCoefficients { gamma: 0.5, delta: -0.3, a3: -1.0 };
        assert!((fc.terminal_closed_form() - 0.5).abs() < 1e-15);
        let sol = solve_f(fc, FStart::Origin, 1e-11, 1e-8, 1e-6).unwrap();
        assert!(sol.f.iter().all(|f| (f - 0.5).abs() < 1e-12));
        assert!((sol.f_end - 0.5).abs() < 1e-10);
    }
}
