//! Dormand–Prince 5(4) embedded pair with PI step-size control.
//!
//! The stepper is deliberately small: fixed-size states, a caller-driven
//! step loop, and a pure `single_step` used for event refinement.

use crate::error::{Error, Result};

// Butcher tableau (Dormand & Prince 1980).
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients: b - b_hat.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side of `s' = f(x, s)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, x: f64, s: &[f64; N]) -> Result<[f64; N]>;
}

#[derive(Debug, Clone, Copy)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step relative to `max(|x|, 1)`.
    pub min_step_rel: f64,
    pub max_steps: usize,
}

impl StepperOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, min_step_rel: 1e-15, max_steps: 2_000_000 }
    }
}

fn axpy<const N: usize>(s: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *s;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step of size `dx` from `(x, s)` whose first stage
/// `k1 = f(x, s)` is already known. Returns the 5th-order state, the error
/// vector and the last stage (which equals `f(x + dx, s_new)`).
fn dp5_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    x: f64,
    s: &[f64; N],
    k1: &[f64; N],
    dx: f64,
) -> Result<([f64; N], [f64; N], [f64; N])> {
    let k2 = sys.rhs(x + C2 * dx, &axpy(s, &[(dx * A21, k1)]))?;
    let k3 = sys.rhs(x + C3 * dx, &axpy(s, &[(dx * A31, k1), (dx * A32, &k2)]))?;
    let k4 = sys.rhs(
        x + C4 * dx,
        &axpy(s, &[(dx * A41, k1), (dx * A42, &k2), (dx * A43, &k3)]),
    )?;
    let k5 = sys.rhs(
        x + C5 * dx,
        &axpy(s, &[(dx * A51, k1), (dx * A52, &k2), (dx * A53, &k3), (dx * A54, &k4)]),
    )?;
    let k6 = sys.rhs(
        x + dx,
        &axpy(
            s,
            &[(dx * A61, k1), (dx * A62, &k2), (dx * A63, &k3), (dx * A64, &k4), (dx * A65, &k5)],
        ),
    )?;
    let s_new = axpy(
        s,
        &[(dx * A71, k1), (dx * A73, &k3), (dx * A74, &k4), (dx * A75, &k5), (dx * A76, &k6)],
    );
    let k7 = sys.rhs(x + dx, &s_new)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = dx
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok((s_new, err, k7))
}

/// Error-free single step, used to refine event locations inside an
/// accepted step.
pub fn single_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    x: f64,
    s: &[f64; N],
    dx: f64,
) -> Result<[f64; N]> {
    let k1 = sys.rhs(x, s)?;
    Ok(dp5_step(sys, x, s, &k1, dx)?.0)
}

/// Adaptive stepper state. Drive it with [`Stepper::step_toward`].
pub struct Stepper<'a, const N: usize, S: OdeSystem<N>> {
    sys: &'a S,
    opts: StepperOptions,
    x: f64,
    s: [f64; N],
    k1: [f64; N],
    dx: f64,
    err_prev: f64,
    steps: usize,
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const ALPHA: f64 = 0.17;
const BETA: f64 = 0.04;

impl<'a, const N: usize, S: OdeSystem<N>> Stepper<'a, N, S> {
    pub fn new(sys: &'a S, x0: f64, s0: [f64; N], dx0: f64, opts: StepperOptions) -> Result<Self> {
        let k1 = sys.rhs(x0, &s0)?;
        Ok(Self { sys, opts, x: x0, s: s0, k1, dx: dx0, err_prev: 1e-4, steps: 0 })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn state(&self) -> &[f64; N] {
        &self.s
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn err_norm(&self, s_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * self.s[i].abs().max(s_new[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    }

    /// Takes one accepted step toward `x_target` (never past it). Returns
    /// the previous `(x, s)` so callers can refine events inside the step.
    pub fn step_toward(&mut self, x_target: f64) -> Result<(f64, [f64; N])> {
        let dir = (x_target - self.x).signum();
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(Error::StepSizeUnderflow { y: self.x });
            }
            let remaining = (x_target - self.x).abs();
            let mut dx = self.dx.abs().min(remaining);
            let last = dx >= remaining;
            if last {
                dx = remaining;
            }
            let min_step = self.opts.min_step_rel * self.x.abs().max(1.0);
            if dx < min_step && !last {
                return Err(Error::StepSizeUnderflow { y: self.x });
            }
            let trial = dp5_step(self.sys, self.x, &self.s, &self.k1, dir * dx);
            let (s_new, err, k7) = match trial {
                Ok(t) if t.0.iter().all(|v| v.is_finite()) => t,
                // Non-finite stage or domain excursion: shrink and retry.
                _ => {
                    self.dx = dx * FAC_MIN;
                    if self.dx < min_step {
                        return Err(Error::StepSizeUnderflow { y: self.x });
                    }
                    continue;
                }
            };
            let e = self.err_norm(&s_new, &err);
            if e <= 1.0 {
                let fac = if e == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * e.powf(-ALPHA) * self.err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
                };
                self.err_prev = e.max(1e-4);
                let prev = (self.x, self.s);
                self.x = if last { x_target } else { self.x + dir * dx };
                self.s = s_new;
                self.k1 = k7;
                // A clipped final step says nothing about the natural size.
                if !last {
                    self.dx = dx * fac;
                }
                self.steps += 1;
                return Ok(prev);
            }
            let fac = (SAFETY * e.powf(-ALPHA)).clamp(FAC_MIN, 1.0);
            self.dx = dx * fac;
            self.steps += 1;
        }
    }
}
