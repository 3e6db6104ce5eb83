//! Equilibrium functions built from the critical solution: interest rate,
//! market price of risk, the consumption-share drift and volatility, and the
//! wealth weight `g` that fixes the initial share.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Pchip;
use crate::params::ModelParams;
use crate::shooting::{CriticalSolution, TailModel};

/// Default distance from the endpoints for tabulation.
pub const DEFAULT_TABLE_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EquilibriumFunctions {
    params: ModelParams,
    xi0: f64,
    g0: f64,
    h: Pchip,
    i_log: Pchip,
    i_end: f64,
    tail: TailModel,
    certified: bool,
}

impl EquilibriumFunctions {
    /// Interpolates the critical curve with endpoints pinned to `h(0) = gamma`,
    /// `h(1) = 1`, `I(0) = 0` and the extrapolated `I(1)`. Beyond the trusted
    /// cutoff the analytic tail model is used directly.
    pub fn new(params: &ModelParams, cs: &CriticalSolution, certified: bool) -> Self {
        let curve = &cs.curve;
        let mut ys = Vec::with_capacity(curve.len() + 2);
        let mut hs = Vec::with_capacity(curve.len() + 2);
        let mut is = Vec::with_capacity(curve.len() + 2);
        ys.push(0.0);
        hs.push(params.gamma());
        is.push(0.0);
        for k in 0..curve.len() {
            if curve.y[k] > *ys.last().unwrap() && curve.y[k] < 1.0 {
                ys.push(curve.y[k]);
                hs.push(curve.h[k].clamp(params.gamma(), 1.0));
                is.push(curve.i_log[k]);
            }
        }
        ys.push(1.0);
        hs.push(1.0);
        is.push(cs.i_end);
        let g0 = 2.0 / cs.xi0 * (1.0 - params.gamma()).powf(-params.gamma());
        Self {
            params: *params,
            xi0: cs.xi0,
            g0,
            h: Pchip::new(ys.clone(), hs),
            i_log: Pchip::new(ys, is),
            i_end: cs.i_end,
            tail: cs.tail,
            certified,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    /// `g(0) = (2/xi0)(1 - gamma)^{-gamma}`.
    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// Interpolated critical `h` on `[0, 1]`.
    pub fn h(&self, y: f64) -> f64 {
        let u = 1.0 - y;
        if u < self.tail.u_trusted && u > 0.0 {
            self.tail.h(u)
        } else {
            self.h.eval(y.clamp(0.0, 1.0))
        }
    }

    /// `I(y) = int_0^y (h - 1)/(1 - q) dq`.
    pub fn i_log(&self, y: f64) -> f64 {
        let u = 1.0 - y;
        if u < self.tail.u_trusted && u > 0.0 {
            self.tail.i_log(u)
        } else if y >= 1.0 {
            self.i_end
        } else {
            self.i_log.eval(y.max(0.0))
        }
    }
}

fn check_open(y: f64) -> Result<()> {
    if y > 0.0 && y < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { y })
    }
}

/// `y h (2 gamma^2 + delta y h) - gamma (gamma + 1)(2y - 1)`, the numerator
/// shared by the drift and the scale density.
pub fn drift_numerator(gamma: f64, delta: f64, y: f64, h: f64) -> f64 {
    y * h * (2.0 * gamma * gamma + delta * y * h) - gamma * (gamma + 1.0) * (2.0 * y - 1.0)
}

/// `mu_Y / sigma_Y^2 = N / (2 gamma y (1 - y))`; the `h^2` factors cancel.
pub fn drift_ratio(y: f64, eq: &EquilibriumFunctions) -> Result<f64> {
    check_open(y)?;
    let p = &eq.params;
    let n = drift_numerator(p.gamma(), p.delta(), y, eq.h(y));
    Ok(n / (2.0 * p.gamma() * y * (1.0 - y)))
}

/// Drift and volatility of the consumption share.
pub fn drift_vol(y: f64, eq: &EquilibriumFunctions) -> Result<(f64, f64)> {
    check_open(y)?;
    let p = &eq.params;
    let h = eq.h(y);
    let n = drift_numerator(p.gamma(), p.delta(), y, h);
    let mu = p.sigma2() * (1.0 - y) * n / (2.0 * p.gamma() * y * h * h);
    let sigma = p.sigma_d() * (1.0 - y) / h;
    Ok((mu, sigma))
}

/// Interest rate and market price of risk.
pub fn rate_and_mpr(y: f64, eq: &EquilibriumFunctions) -> Result<(f64, f64)> {
    check_open(y)?;
    let p = &eq.params;
    let (g, s2) = (p.gamma(), p.sigma2());
    let h = eq.h(y);
    let r = p.beta2() + y * (p.beta1() - p.beta2()) + g * p.mu_d() - 0.5 * g * (g + 1.0) * s2
        - g * (g + 1.0) * s2 * (1.0 - y) / (2.0 * y * h * h);
    let kappa = g * p.sigma_d() * ((1.0 - y) / (y * h) + 1.0);
    Ok((r, kappa))
}

/// Wealth weight `g(y) = (2/xi0) exp(-int_0^y h/(1-q) dq)(1-gamma)^{-gamma}`,
/// evaluated as `g(0) (1 - y) exp(-I(y))`. Returns the limit `0` at `y = 1`.
pub fn wealth_weight(y: f64, eq: &EquilibriumFunctions) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain { y });
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    Ok(eq.g0 * (1.0 - y) * (-eq.i_log(y)).exp())
}

/// Left-hand side of the initial-share equation, `g(y) D0 (1 - y)^gamma`.
pub fn clearing_map(y: f64, eq: &EquilibriumFunctions) -> Result<f64> {
    Ok(wealth_weight(y, eq)? * eq.params.d0() * (1.0 - y).powf(eq.params.gamma()))
}

/// Solves `g(Y0) D0 (1 - Y0)^gamma = theta2` by bisection to `1e-12`.
pub fn solve_initial_share(theta2: f64, eq: &EquilibriumFunctions) -> Result<f64> {
    let upper = eq.g0 * eq.params.d0();
    if !(theta2 > 0.0 && theta2 < upper) {
        return Err(Error::ThetaOutOfRange { theta2, upper });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if clearing_map(mid, eq)? > theta2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Consumption rates `(D y, D (1 - y))`; `c2` is formed as `d - c1` so the
/// clearing identity holds in floating point.
pub fn consumption_rates(d_t: f64, y_t: f64) -> Result<(f64, f64)> {
    if !(d_t > 0.0) || !d_t.is_finite() {
        return Err(Error::InvalidArgument(format!("dividend must be positive, got {d_t}")));
    }
    check_open(y_t)?;
    let c1 = d_t * y_t;
    Ok((c1, d_t - c1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub y: f64,
    pub h: f64,
    pub r: f64,
    pub kappa: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
    pub g: f64,
}

/// Uniform grid of `n` points on `[0, 1]` intersected with `[eps, 1 - eps]`;
/// the two clipped endpoints are replaced by `eps` and `1 - eps`.
pub fn tabulate(eq: &EquilibriumFunctions, n: usize, eps: f64) -> Result<Vec<TableRow>> {
    if n < 2 || !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("need n >= 2 and eps in (0, 0.5), got {n}, {eps}")));
    }
    let mut ys: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).filter(|&y| y >= eps && y <= 1.0 - eps).collect();
    if ys.first().is_none_or(|&y| y > eps) {
        ys.insert(0, eps);
    }
    if ys.last().is_none_or(|&y| y < 1.0 - eps) {
        ys.push(1.0 - eps);
    }
    ys.iter()
        .map(|&y| {
            let (mu_y, sigma_y) = drift_vol(y, eq)?;
            let (r, kappa) = rate_and_mpr(y, eq)?;
            Ok(TableRow { y, h: eq.h(y), r, kappa, mu_y, sigma_y, g: wealth_weight(y, eq)? })
        })
        .collect()
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], mut w: W) -> io::Result<()> {
    writeln!(w, "y,h,r,kappa,mu_y,sigma_y,g")?;
    for t in rows {
        writeln!(w, "{},{},{},{},{},{},{}", t.y, t.h, t.r, t.kappa, t.mu_y, t.sigma_y, t.g)?;
    }
    Ok(())
}
