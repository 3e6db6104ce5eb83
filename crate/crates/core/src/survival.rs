//! Scale density, scale-function limits and speed measure of the
//! consumption-share diffusion, and the survival classification built on
//! them.
//!
//! All integrals run in the logit variable `t = ln(y/(1-y))`. There
//! `d ln(rho)/dt = -N(y)/gamma` with `N` the bounded drift numerator, and
//! the speed integrand is `y h^2 / (rho sigma_d^2 (1 - y))`. Both boundaries
//! sit at infinite `t`; behaviour beyond distance `TAIL_CUTOFF` is taken from
//! power laws fitted on `[TAIL_CUTOFF, FIT_HI]` and integrated analytically.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{drift_numerator, EquilibriumFunctions};
use crate::error::{Error, Result};
use crate::numerics::quad::{gk15, integrate};
use crate::numerics::{loglog_fit_corrected, logspace};
use crate::params::{derive_params, regime_of, ModelParams, RawParams, RegimeTag};
use crate::shooting::{certify, find_xi0, ShootingOptions};

pub const DEFAULT_ANCHOR: f64 = 0.5;
/// Half-width of the inconclusive band around exponent one.
pub const GUARD_BAND: f64 = 0.02;
/// Distance to a boundary below which tails are analytic.
pub const TAIL_CUTOFF: f64 = 1e-5;
pub const FIT_HI: f64 = 1e-3;
const FIT_POINTS: usize = 25;
/// Panel width of the logit table.
const PANEL: f64 = 0.02;

pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

pub fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `1 - expit(t)` without cancellation.
fn expit_complement(t: f64) -> f64 {
    1.0 / (1.0 + t.exp())
}

fn log_rho_rate(eq: &EquilibriumFunctions, t: f64) -> f64 {
    let p = eq.params();
    let y = expit(t);
    -drift_numerator(p.gamma(), p.delta(), y, eq.h(y)) / p.gamma()
}

/// `rho(y) = exp(-2 int_a^y mu_Y / sigma_Y^2 dx)` by adaptive quadrature;
/// `rho(anchor) = 1` exactly.
pub fn scale_density(y: f64, anchor: f64, eq: &EquilibriumFunctions) -> Result<f64> {
    for v in [y, anchor] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain { y: v });
        }
    }
    let f = |t: f64| log_rho_rate(eq, t);
    Ok(integrate(&f, logit(anchor), logit(y), 1e-14, 1e-13).exp())
}

/// `f(d) ~ coeff d^{-exponent} (1 + correction d)` for small distance `d`
/// to a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTail {
    pub exponent: f64,
    pub coeff: f64,
    pub correction: f64,
}

impl PowerTail {
    /// Least-squares fit of `ln f` against `ln d` and `d`; the linear term
    /// absorbs the first regular correction so it does not bias the exponent.
    pub fn fit(ds: &[f64], fs: &[f64]) -> Self {
        let (slope, c, b) = loglog_fit_corrected(ds, fs);
        Self { exponent: -slope, coeff: c.exp(), correction: b }
    }

    /// `Some(true)` if `int_0 f` diverges, `None` inside the guard band.
    pub fn diverges(&self) -> Option<bool> {
        if (self.exponent - 1.0).abs() < GUARD_BAND {
            None
        } else {
            Some(self.exponent > 1.0)
        }
    }

    /// `f(d)` for `d <= cut`, matched to the value `f_cut` at the cutoff.
    pub fn value(&self, d: f64, cut: f64, f_cut: f64) -> f64 {
        f_cut * (d / cut).powf(-self.exponent) * (1.0 + self.correction * (d - cut))
    }

    /// `int_0^d f` for `d <= cut`; infinite when divergent.
    pub fn mass_below(&self, d: f64, cut: f64, f_cut: f64) -> f64 {
        let k = self.exponent;
        if k >= 1.0 {
            return f64::INFINITY;
        }
        let b = self.correction;
        let r = d / cut;
        f_cut * cut * ((1.0 - b * cut) * r.powf(1.0 - k) / (1.0 - k) + b * cut * r.powf(2.0 - k) / (2.0 - k))
    }

    /// Inverse of `mass_below` in `d` on `(0, cut]`.
    fn distance_for_mass(&self, m: f64, cut: f64, f_cut: f64) -> f64 {
        let (mut lo, mut hi) = (-745.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mass_below(cut * mid.exp(), cut, f_cut) < m {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        cut * (0.5 * (lo + hi)).exp()
    }
}

/// Cumulative tables of `ln rho`, `rho` and the speed density on a uniform
/// logit grid over `[TAIL_CUTOFF, 1 - TAIL_CUTOFF]`, with fitted tails.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    eq: EquilibriumFunctions,
    anchor: f64,
    t: Vec<f64>,
    /// `ln rho` at the nodes.
    log_rho: Vec<f64>,
    /// `int_{t_0}^{t_k} rho dy`.
    scale_cum: Vec<f64>,
    /// `int_{t_0}^{t_k} m(dy)`, unnormalised.
    speed_cum: Vec<f64>,
    /// Speed density per unit `t` at the nodes.
    speed_t: Vec<f64>,
    pub rho_tail0: PowerTail,
    pub rho_tail1: PowerTail,
    pub speed_tail0: PowerTail,
    pub speed_tail1: PowerTail,
}

impl ScaleTable {
    pub fn new(eq: &EquilibriumFunctions, anchor: f64) -> Result<Self> {
        if !(anchor > 0.0 && anchor < 1.0) {
            return Err(Error::Domain { y: anchor });
        }
        let t_lo = logit(TAIL_CUTOFF);
        let t_hi = -t_lo;
        let n = ((t_hi - t_lo) / PANEL).ceil() as usize;
        let dt = (t_hi - t_lo) / n as f64;
        let t: Vec<f64> = (0..=n).map(|k| t_lo + k as f64 * dt).collect();
        let rate = |s: f64| log_rho_rate(eq, s);
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            cum[k + 1] = cum[k] + gk15(&rate, t[k], t[k + 1]).0;
        }
        let ta = logit(anchor);
        let ja = (((ta - t_lo) / dt).floor().max(0.0) as usize).min(n - 1);
        let at_anchor = cum[ja] + gk15(&rate, t[ja], ta).0;
        let log_rho: Vec<f64> = cum.iter().map(|c| c - at_anchor).collect();

        let mut table = Self {
            eq: eq.clone(),
            anchor,
            t,
            log_rho,
            scale_cum: vec![0.0; n + 1],
            speed_cum: vec![0.0; n + 1],
            speed_t: vec![0.0; n + 1],
            rho_tail0: PowerTail { exponent: f64::NAN, coeff: f64::NAN, correction: 0.0 },
            rho_tail1: PowerTail { exponent: f64::NAN, coeff: f64::NAN, correction: 0.0 },
            speed_tail0: PowerTail { exponent: f64::NAN, coeff: f64::NAN, correction: 0.0 },
            speed_tail1: PowerTail { exponent: f64::NAN, coeff: f64::NAN, correction: 0.0 },
        };
        let mut scale_cum = vec![0.0; n + 1];
        let mut speed_cum = vec![0.0; n + 1];
        {
            let rho_t = |s: f64| table.rho_per_t(s);
            let speed_t = |s: f64| table.speed_per_t(s);
            for k in 0..n {
                let (a, b) = (table.t[k], table.t[k + 1]);
                scale_cum[k + 1] = scale_cum[k] + gk15(&rho_t, a, b).0;
                speed_cum[k + 1] = speed_cum[k] + gk15(&speed_t, a, b).0;
            }
        }
        table.scale_cum = scale_cum;
        table.speed_cum = speed_cum;
        table.speed_t = table.t.iter().map(|&s| table.speed_per_t(s)).collect();

        let ds = logspace(TAIL_CUTOFF, FIT_HI, FIT_POINTS);
        let near0: Vec<f64> = ds.iter().map(|&d| logit(d)).collect();
        let near1: Vec<f64> = ds.iter().map(|&d| -logit(d)).collect();
        let rho_at = |ts: &[f64]| ts.iter().map(|&s| table.log_rho_t(s).exp()).collect::<Vec<_>>();
        let speed_at = |ts: &[f64]| ts.iter().map(|&s| table.speed_density_t(s)).collect::<Vec<_>>();
        let tails = [
            PowerTail::fit(&ds, &rho_at(&near0)),
            PowerTail::fit(&ds, &rho_at(&near1)),
            PowerTail::fit(&ds, &speed_at(&near0)),
            PowerTail::fit(&ds, &speed_at(&near1)),
        ];
        [table.rho_tail0, table.rho_tail1, table.speed_tail0, table.speed_tail1] = tails;
        Ok(table)
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn equilibrium(&self) -> &EquilibriumFunctions {
        &self.eq
    }

    fn panel(&self, t: f64) -> usize {
        let dt = self.t[1] - self.t[0];
        (((t - self.t[0]) / dt).floor().max(0.0) as usize).min(self.t.len() - 2)
    }

    /// `ln rho` at logit `t` inside the table.
    pub fn log_rho_t(&self, t: f64) -> f64 {
        let k = self.panel(t);
        let rate = |s: f64| log_rho_rate(&self.eq, s);
        self.log_rho[k] + gk15(&rate, self.t[k], t).0
    }

    fn rho_per_t(&self, t: f64) -> f64 {
        let y = expit(t);
        self.log_rho_t(t).exp() * y * expit_complement(t)
    }

    /// Speed density `1/(rho sigma_Y^2)` in `y`.
    fn speed_density_t(&self, t: f64) -> f64 {
        let y = expit(t);
        let u = expit_complement(t);
        let h = self.eq.h(y);
        let s2 = self.eq.params().sigma2();
        h * h / (s2 * u * u) * (-self.log_rho_t(t)).exp()
    }

    /// Speed density per unit logit: `y h^2 / (rho sigma_d^2 (1 - y))`.
    fn speed_per_t(&self, t: f64) -> f64 {
        let y = expit(t);
        let u = expit_complement(t);
        self.speed_density_t(t) * y * u
    }

    pub fn rho(&self, y: f64) -> Result<f64> {
        scale_density(y, self.anchor, &self.eq)
    }

    /// Unnormalised speed density at `y`, tails from the fits.
    pub fn speed_density(&self, y: f64) -> f64 {
        self.speed_density_split(y, 1.0 - y)
    }

    /// Unnormalised speed density at `y = 1 - u`, resolving small `u`.
    pub fn speed_density_complement(&self, u: f64) -> f64 {
        self.speed_density_split(1.0 - u, u)
    }

    fn speed_density_split(&self, y: f64, u: f64) -> f64 {
        if y <= 0.0 || u <= 0.0 {
            return 0.0;
        }
        if y < TAIL_CUTOFF {
            self.speed_tail0.value(y, TAIL_CUTOFF, self.edge_speed0())
        } else if u < TAIL_CUTOFF {
            self.speed_tail1.value(u, TAIL_CUTOFF, self.edge_speed1())
        } else {
            self.speed_density_t((y / u).ln())
        }
    }

    fn edge_speed0(&self) -> f64 {
        self.speed_density_t(self.t[0])
    }

    fn edge_speed1(&self) -> f64 {
        self.speed_density_t(*self.t.last().unwrap())
    }

    /// Speed mass below `TAIL_CUTOFF` and above `1 - TAIL_CUTOFF`.
    fn speed_tail_masses(&self) -> (f64, f64) {
        (
            self.speed_tail0.mass_below(TAIL_CUTOFF, TAIL_CUTOFF, self.edge_speed0()),
            self.speed_tail1.mass_below(TAIL_CUTOFF, TAIL_CUTOFF, self.edge_speed1()),
        )
    }

    /// Total speed mass; infinite when a tail diverges.
    pub fn speed_mass(&self) -> f64 {
        let (m0, m1) = self.speed_tail_masses();
        m0 + *self.speed_cum.last().unwrap() + m1
    }

    /// `int_0^y m(dx)`, unnormalised. Inside the table the CDF is a cubic
    /// Hermite interpolant of the cumulative values and node densities.
    pub fn speed_cdf(&self, y: f64) -> f64 {
        let (m0, m1) = self.speed_tail_masses();
        let total = m0 + *self.speed_cum.last().unwrap() + m1;
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return total;
        }
        if y < TAIL_CUTOFF {
            return self.speed_tail0.mass_below(y, TAIL_CUTOFF, self.edge_speed0());
        }
        let u = 1.0 - y;
        if u < TAIL_CUTOFF {
            return total - self.speed_tail1.mass_below(u, TAIL_CUTOFF, self.edge_speed1());
        }
        m0 + self.table_cum(logit(y))
    }

    fn table_cum(&self, t: f64) -> f64 {
        let k = self.panel(t);
        let dt = self.t[k + 1] - self.t[k];
        let s = ((t - self.t[k]) / dt).clamp(0.0, 1.0);
        hermite_integral(self.speed_cum[k], self.speed_cum[k + 1], self.speed_t[k], self.speed_t[k + 1], dt, s)
    }

    /// Inverse of the normalised speed CDF.
    pub fn speed_quantile(&self, q: f64) -> f64 {
        let (m0, m1) = self.speed_tail_masses();
        let inner = *self.speed_cum.last().unwrap();
        let total = m0 + inner + m1;
        let target = q.clamp(0.0, 1.0) * total;
        if target <= m0 {
            return self.speed_tail0.distance_for_mass(target, TAIL_CUTOFF, self.edge_speed0());
        }
        if target >= m0 + inner {
            let rest = (total - target).max(0.0);
            return 1.0 - self.speed_tail1.distance_for_mass(rest, TAIL_CUTOFF, self.edge_speed1());
        }
        let c = target - m0;
        let k = self.speed_cum.partition_point(|&v| v <= c).clamp(1, self.t.len() - 1) - 1;
        let dt = self.t[k + 1] - self.t[k];
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let v = hermite_integral(self.speed_cum[k], self.speed_cum[k + 1], self.speed_t[k], self.speed_t[k + 1], dt, mid);
            if v < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        expit(self.t[k] + 0.5 * (lo + hi) * dt)
    }

    /// Scale function limits toward each boundary, `None` when divergent.
    fn scale_limits(&self) -> (Option<f64>, Option<f64>) {
        let t_a = logit(self.anchor);
        let k = self.panel(t_a);
        let rho_t = |s: f64| self.rho_per_t(s);
        let at_anchor = self.scale_cum[k] + gk15(&rho_t, self.t[k], t_a).0;
        let inner_lo = at_anchor;
        let inner_hi = *self.scale_cum.last().unwrap() - at_anchor;
        let edge0 = self.log_rho_t(self.t[0]).exp();
        let edge1 = self.log_rho_t(*self.t.last().unwrap()).exp();
        let m0 = self.rho_tail0.mass_below(TAIL_CUTOFF, TAIL_CUTOFF, edge0);
        let m1 = self.rho_tail1.mass_below(TAIL_CUTOFF, TAIL_CUTOFF, edge1);
        let s0 = m0.is_finite().then_some(-(inner_lo + m0));
        let s1 = m1.is_finite().then_some(inner_hi + m1);
        (s0, s1)
    }
}

/// Integral over `[0, s]` (in units of the panel) of the cubic Hermite
/// interpolant whose antiderivative matches `c0`, `c1` at the panel ends and
/// whose derivative matches `f0`, `f1`.
fn hermite_integral(c0: f64, c1: f64, f0: f64, f1: f64, dt: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * c0 + h10 * dt * f0 + h01 * c1 + h11 * dt * f1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleLimits {
    pub s0_diverges: bool,
    pub s1_diverges: bool,
    /// Fitted `rho ~ y^{-exp0}` near 0 and `rho ~ (1 - y)^{-exp1}` near 1.
    pub exp0: f64,
    pub exp1: f64,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
}

/// Divergence of `s(0)` and `s(1)`; `InconclusiveTail` inside the guard band.
pub fn scale_limits(anchor: f64, eq: &EquilibriumFunctions) -> Result<ScaleLimits> {
    scale_limits_of(&ScaleTable::new(eq, anchor)?)
}

fn scale_limits_of(table: &ScaleTable) -> Result<ScaleLimits> {
    let (e0, e1) = (table.rho_tail0.exponent, table.rho_tail1.exponent);
    let s0_diverges = table.rho_tail0.diverges().ok_or(Error::InconclusiveTail { exponent: e0 })?;
    let s1_diverges = table.rho_tail1.diverges().ok_or(Error::InconclusiveTail { exponent: e1 })?;
    let (s0, s1) = table.scale_limits();
    Ok(ScaleLimits { s0_diverges, s1_diverges, exp0: e0, exp1: e1, s0, s1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedMass {
    /// `None` when the mass is infinite.
    pub mass: Option<f64>,
    /// Fitted blow-up exponents of `1/(rho sigma_Y^2)` at 0 and at 1.
    pub tail_exponent0: f64,
    pub tail_exponent1: f64,
}

/// Total speed mass `int_0^1 dx / (rho sigma_Y^2)`.
pub fn speed_mass(eq: &EquilibriumFunctions, anchor: f64) -> Result<SpeedMass> {
    speed_mass_of(&ScaleTable::new(eq, anchor)?)
}

fn speed_mass_of(table: &ScaleTable) -> Result<SpeedMass> {
    for tail in [table.speed_tail0, table.speed_tail1] {
        if tail.diverges().is_none() {
            return Err(Error::InconclusiveTail { exponent: tail.exponent });
        }
    }
    let m = table.speed_mass();
    Ok(SpeedMass {
        mass: m.is_finite().then_some(m),
        tail_exponent0: table.speed_tail0.exponent,
        tail_exponent1: table.speed_tail1.exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    BothSurvive,
    Trader2Extinct,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    PaperProved,
    NumericallyIndicated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalReport {
    pub anchor: f64,
    pub gamma: f64,
    pub delta: f64,
    pub exp0: f64,
    pub exp1: f64,
    /// `None` when the fitted exponent falls in the guard band.
    pub s0_diverges: Option<bool>,
    pub s1_diverges: Option<bool>,
    pub s0_limit: Option<f64>,
    pub s1_limit: Option<f64>,
    pub speed_mass: Option<f64>,
    pub speed_finite: Option<bool>,
    pub speed_tail_exponent0: f64,
    pub speed_tail_exponent1: f64,
    pub classification: Classification,
    pub provenance: Provenance,
}

/// Combines the scale and speed diagnostics into a survival verdict.
pub fn classify(p: &ModelParams, eq: &EquilibriumFunctions, anchor: f64) -> Result<SurvivalReport> {
    Ok(classify_table(p, &ScaleTable::new(eq, anchor)?))
}

pub fn classify_table(p: &ModelParams, table: &ScaleTable) -> SurvivalReport {
    let s0 = table.rho_tail0.diverges();
    let s1 = table.rho_tail1.diverges();
    let speed_finite = match (table.speed_tail0.diverges(), table.speed_tail1.diverges()) {
        (Some(a), Some(b)) => Some(!a && !b),
        _ => None,
    };
    let (lim0, lim1) = table.scale_limits();
    let mass = table.speed_mass();
    let classification = match (s0, s1, speed_finite) {
        (Some(true), Some(true), Some(true)) => Classification::BothSurvive,
        (Some(true), Some(false), _) => Classification::Trader2Extinct,
        _ => Classification::Indeterminate,
    };
    let provenance = if regime_of(p.gamma(), p.delta()) == RegimeTag::BothSurviveProved
        && classification == Classification::BothSurvive
    {
        Provenance::PaperProved
    } else {
        Provenance::NumericallyIndicated
    };
    SurvivalReport {
        anchor: table.anchor,
        gamma: p.gamma(),
        delta: p.delta(),
        exp0: table.rho_tail0.exponent,
        exp1: table.rho_tail1.exponent,
        s0_diverges: s0,
        s1_diverges: s1,
        s0_limit: lim0,
        s1_limit: lim1,
        speed_mass: mass.is_finite().then_some(mass),
        speed_finite,
        speed_tail_exponent0: table.speed_tail0.exponent,
        speed_tail_exponent1: table.speed_tail1.exponent,
        classification,
        provenance,
    }
}

// ---------------------------------------------------------------------------
// Log-utility restricted trader.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrietoClassification {
    BothSurvive,
    RecurrentIndeterminate,
    Trader2ExtinctIndicated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrietoReport {
    pub gamma: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
    pub eta: f64,
    /// Limit of `y mu_Y / sigma_Y^2` at 0.
    pub left_limit: f64,
    /// Limit of `(1 - y) mu_Y / sigma_Y^2` at 1.
    pub right_limit: f64,
    /// `rho ~ (1 - y)^{-eta}` near 1.
    pub scale_exponent1: f64,
    /// Speed density `~ (1 - y)^{-(2 - eta)}` near 1.
    pub speed_exponent1: f64,
    pub classification: PrietoClassification,
}

/// `|eta - 1|` below this is the boundary case.
pub const ETA_BOUNDARY_TOL: f64 = 1e-9;

pub fn prieto_eta(gamma: f64, mu_d: f64, sigma_d: f64) -> f64 {
    (1.0 - gamma) * (2.0 + gamma - 2.0 * mu_d / (sigma_d * sigma_d))
}

pub fn prieto_classify(gamma: f64, mu_d: f64, sigma_d: f64) -> Result<PrietoReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(crate::error::ValidationError::GammaOutOfRange { gamma }.into());
    }
    if !(sigma_d > 0.0) {
        return Err(crate::error::ValidationError::NonpositiveSigma { sigma_d }.into());
    }
    let eta = prieto_eta(gamma, mu_d, sigma_d);
    let s2 = sigma_d * sigma_d;
    let classification = if (eta - 1.0).abs() <= ETA_BOUNDARY_TOL {
        PrietoClassification::RecurrentIndeterminate
    } else if eta > 1.0 {
        PrietoClassification::BothSurvive
    } else {
        PrietoClassification::Trader2ExtinctIndicated
    };
    Ok(PrietoReport {
        gamma,
        mu_d,
        sigma_d,
        eta,
        left_limit: 0.5 * (1.0 + gamma),
        right_limit: (1.0 - gamma) * (2.0 * mu_d - (2.0 + gamma) * s2) / (2.0 * s2),
        scale_exponent1: eta,
        speed_exponent1: 2.0 - eta,
        classification,
    })
}

/// `mu_Y / sigma_Y^2` with `h = 1` and equal time preferences, the drift
/// ratio of the log-utility variant near `y = 0`.
pub fn prieto_left_ratio(gamma: f64, y: f64) -> f64 {
    drift_numerator(gamma, 0.0, y, 1.0) / (2.0 * gamma * y * (1.0 - y))
}

// ---------------------------------------------------------------------------
// Regime sweep.

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepBase {
    pub sigma_d: f64,
    pub mu_d: f64,
    pub beta2: f64,
}

impl Default for SweepBase {
    fn default() -> Self {
        Self { sigma_d: 0.2, mu_d: 0.01, beta2: 0.05 }
    }
}

/// `(gamma_i, delta_ij) = (i/(n+1), -gamma_i j/(n+1))` for `i, j = 1..=n`,
/// keeping points whose `A` is admissible.
pub fn default_sweep_grid(n: usize, base: &SweepBase) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 1..=n {
        let gamma = i as f64 / (n + 1) as f64;
        for j in 1..=n {
            let delta = -gamma * j as f64 / (n + 1) as f64;
            let raw = RawParams::with_gamma_delta(gamma, delta, base.sigma_d, base.mu_d, base.beta2);
            if derive_params(raw).is_ok() {
                out.push((gamma, delta));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub gamma: f64,
    pub exp0: f64,
    pub exp1: f64,
    pub s0_div: Option<bool>,
    pub s1_div: Option<bool>,
    pub speed_mass: Option<f64>,
    pub classification: Classification,
    pub provenance: Provenance,
    pub certified: bool,
}

/// Solves and classifies every grid point in parallel; results keep grid order.
pub fn sweep(grid: &[(f64, f64)], base: &SweepBase, opts: &ShootingOptions, anchor: f64) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|&(gamma, delta)| {
            let failed = SweepRow {
                delta,
                gamma,
                exp0: f64::NAN,
                exp1: f64::NAN,
                s0_div: None,
                s1_div: None,
                speed_mass: None,
                classification: Classification::Indeterminate,
                provenance: Provenance::NumericallyIndicated,
                certified: false,
            };
            let raw = RawParams::with_gamma_delta(gamma, delta, base.sigma_d, base.mu_d, base.beta2);
            let Ok(p) = derive_params(raw) else { return failed };
            let Ok(cs) = find_xi0(&p, opts) else { return failed };
            let certified = certify(&cs, &p).passed;
            let eq = EquilibriumFunctions::new(&p, &cs, certified);
            let Ok(r) = classify(&p, &eq, anchor) else { return failed };
            SweepRow {
                delta,
                gamma,
                exp0: r.exp0,
                exp1: r.exp1,
                s0_div: r.s0_diverges,
                s1_div: r.s1_diverges,
                speed_mass: r.speed_mass,
                classification: r.classification,
                provenance: r.provenance,
                certified,
            }
        })
        .collect()
}

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "true",
        Some(false) => "false",
        None => "inconclusive",
    }
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "delta,gamma,exp0,exp1,s0_div,s1_div,speed_mass,classification,provenance")?;
    for r in rows {
        let mass = r.speed_mass.map_or("inf".to_string(), |m| m.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:?},{:?}",
            r.delta,
            r.gamma,
            r.exp0,
            r.exp1,
            opt_bool(r.s0_div),
            opt_bool(r.s1_div),
            mass,
            r.classification,
            r.provenance
        )?;
    }
    Ok(())
}
