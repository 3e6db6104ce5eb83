//! Economic primitives and the two ODE constants derived from them.
//!
//! `delta` measures the gap in time preference, scaled by dividend variance:
//! `delta = 2 (beta2 - beta1) / sigma_d^2`. `a_cap` collects everything else
//! that enters the quadratic coefficient of the governing ODE:
//! `A = (2 beta2 + sigma_d^2 - (1 - gamma)(2 mu_d - gamma sigma_d^2)) / sigma_d^2`.
//!
//! Existence of the critical solution (and everything built on it) requires
//! `gamma in (0, 1)`, `delta in (-gamma, 0)` and `A > 1 + delta - 2 delta / gamma`.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    /// Relative risk aversion, shared by both traders.
    pub gamma: f64,
    /// Dividend volatility.
    pub sigma_d: f64,
    /// Dividend drift.
    pub mu_d: f64,
    /// Time preference of the unrestricted trader.
    pub beta1: f64,
    /// Time preference of the restricted trader.
    pub beta2: f64,
    /// Initial dividend level.
    pub d0: f64,
    /// Restricted trader's initial money-market holding.
    pub theta2: f64,
}

impl RawParams {
    /// The reference parameter set used throughout the tests and docs.
    pub fn reference() -> Self {
        Self {
            gamma: 0.5,
            sigma_d: 0.2,
            mu_d: 0.01,
            beta1: 0.056,
            beta2: 0.05,
            d0: 1.0,
            theta2: 1.0,
        }
    }

    /// Builds primitives hitting a target `(gamma, delta)` by moving `beta1`
    /// away from `beta2`.
    pub fn with_gamma_delta(gamma: f64, delta: f64, sigma_d: f64, mu_d: f64, beta2: f64) -> Self {
        Self {
            gamma,
            sigma_d,
            mu_d,
            beta1: beta2 - 0.5 * delta * sigma_d * sigma_d,
            beta2,
            d0: 1.0,
            theta2: 1.0,
        }
    }
}

/// Validated primitives together with `delta` and `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    #[serde(flatten)]
    raw: RawParams,
    delta: f64,
    a_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeTag {
    /// `delta in (-gamma, -gamma^2)`: survival of both traders is proved.
    BothSurviveProved,
    /// Outside the proved window; survival is decided numerically.
    UnprovedRegion,
}

pub fn delta_of(raw: &RawParams) -> f64 {
    2.0 * (raw.beta2 - raw.beta1) / (raw.sigma_d * raw.sigma_d)
}

pub fn a_cap_of(raw: &RawParams) -> f64 {
    let s2 = raw.sigma_d * raw.sigma_d;
    (2.0 * raw.beta2 + s2 - (1.0 - raw.gamma) * (2.0 * raw.mu_d - raw.gamma * s2)) / s2
}

/// Lower bound that `A` must strictly exceed.
pub fn a_cap_threshold(gamma: f64, delta: f64) -> f64 {
    1.0 + delta - 2.0 * delta / gamma
}

fn check_common(raw: &RawParams) -> Result<(), ValidationError> {
    for (name, v) in [
        ("gamma", raw.gamma),
        ("sigma_d", raw.sigma_d),
        ("mu_d", raw.mu_d),
        ("beta1", raw.beta1),
        ("beta2", raw.beta2),
        ("d0", raw.d0),
        ("theta2", raw.theta2),
    ] {
        if !v.is_finite() {
            return Err(ValidationError::NonFinite { name });
        }
    }
    if !(raw.gamma > 0.0 && raw.gamma < 1.0) {
        return Err(ValidationError::GammaOutOfRange { gamma: raw.gamma });
    }
    if raw.sigma_d <= 0.0 {
        return Err(ValidationError::NonpositiveSigma { sigma_d: raw.sigma_d });
    }
    if raw.d0 <= 0.0 {
        return Err(ValidationError::Nonpositive { name: "d0", value: raw.d0 });
    }
    if raw.theta2 <= 0.0 {
        return Err(ValidationError::Nonpositive { name: "theta2", value: raw.theta2 });
    }
    Ok(())
}

/// Validates `raw` and computes `delta` and `A`.
pub fn derive_params(raw: RawParams) -> Result<ModelParams, ValidationError> {
    check_common(&raw)?;
    let delta = delta_of(&raw);
    if !(delta > -raw.gamma && delta < 0.0) {
        return Err(ValidationError::DeltaOutOfRange { delta, lower: -raw.gamma });
    }
    let a_cap = a_cap_of(&raw);
    let threshold = a_cap_threshold(raw.gamma, delta);
    if !(a_cap > threshold) {
        return Err(ValidationError::ACapTooSmall { a_cap, threshold });
    }
    let p = ModelParams { raw, delta, a_cap };
    debug_assert!(p.slope_denominator() > 0.0);
    Ok(p)
}

impl ModelParams {
    /// The equal-time-preference model (`beta1 == beta2`, so `delta = 0`).
    ///
    /// Outside the hypotheses of the main existence result but kept as a
    /// regression case: the ODE loses its cubic term and the restricted trader
    /// is known to become extinct.
    pub fn equal_time_preference(raw: RawParams) -> Result<Self, ValidationError> {
        check_common(&raw)?;
        if raw.beta1 != raw.beta2 {
            return Err(ValidationError::UnequalPreferences { beta1: raw.beta1, beta2: raw.beta2 });
        }
        let a_cap = a_cap_of(&raw);
        let threshold = a_cap_threshold(raw.gamma, 0.0);
        if !(a_cap > threshold) {
            return Err(ValidationError::ACapTooSmall { a_cap, threshold });
        }
        Ok(ModelParams { raw, delta: 0.0, a_cap })
    }

    pub fn raw(&self) -> &RawParams {
        &self.raw
    }
    pub fn gamma(&self) -> f64 {
        self.raw.gamma
    }
    pub fn sigma_d(&self) -> f64 {
        self.raw.sigma_d
    }
    pub fn sigma2(&self) -> f64 {
        self.raw.sigma_d * self.raw.sigma_d
    }
    pub fn mu_d(&self) -> f64 {
        self.raw.mu_d
    }
    pub fn beta1(&self) -> f64 {
        self.raw.beta1
    }
    pub fn beta2(&self) -> f64 {
        self.raw.beta2
    }
    pub fn d0(&self) -> f64 {
        self.raw.d0
    }
    pub fn theta2(&self) -> f64 {
        self.raw.theta2
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn a_cap(&self) -> f64 {
        self.a_cap
    }

    /// `gamma (A - delta - 1) + 2 delta`, positive on the admissible region.
    pub fn slope_denominator(&self) -> f64 {
        let g = self.gamma();
        g * (self.a_cap - self.delta - 1.0) + 2.0 * self.delta
    }

    /// Closed-form terminal slope `h'(1)` of the critical solution.
    pub fn terminal_slope(&self) -> f64 {
        let g = self.gamma();
        (1.0 - g) * (g * g + g - self.delta) / self.slope_denominator()
    }

    /// `A - gamma + delta (1 - gamma) / gamma`: the limit of
    /// `(xi0 / sigma_d^2) exp(I(y))` as `y -> 1` on the critical solution.
    pub fn critical_f_limit(&self) -> f64 {
        let g = self.gamma();
        self.a_cap - g + self.delta * (1.0 - g) / g
    }

    /// Upper end of the shooting interval on which every solution stays
    /// below one: `(A + delta (1 - gamma)/gamma - gamma) sigma_d^2`.
    pub fn subcritical_seed_bound(&self) -> f64 {
        self.critical_f_limit() * self.sigma2()
    }
}

/// Classifies `(gamma, delta)` against the proved survival window.
pub fn survival_regime(p: &ModelParams) -> RegimeTag {
    regime_of(p.gamma(), p.delta())
}

pub fn regime_of(gamma: f64, delta: f64) -> RegimeTag {
    if delta > -gamma && delta < -gamma * gamma {
        RegimeTag::BothSurviveProved
    } else {
        RegimeTag::UnprovedRegion
    }
}
