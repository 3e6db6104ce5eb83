#![allow(dead_code)]

use std::sync::OnceLock;

use equishoot::equilibrium::EquilibriumFunctions;
use equishoot::shooting::{certify, find_xi0, CriticalSolution, ShootingOptions};
use equishoot::{derive_params, ModelParams, RawParams};

pub struct Solved {
    pub params: ModelParams,
    pub cs: CriticalSolution,
    pub eq: EquilibriumFunctions,
    pub certified: bool,
}

pub fn solve(params: ModelParams) -> Solved {
    let cs = find_xi0(&params, &ShootingOptions::default()).expect("shooting failed");
    let certified = certify(&cs, &params).passed;
    let eq = EquilibriumFunctions::new(&params, &cs, certified);
    Solved { params, cs, eq, certified }
}

pub fn reference() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve(derive_params(RawParams::reference()).unwrap()))
}

/// Equal time preferences, otherwise the reference primitives.
pub fn equal_preference() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut raw = RawParams::reference();
        raw.beta1 = raw.beta2;
        solve(ModelParams::equal_time_preference(raw).unwrap())
    })
}

pub fn gamma_delta(gamma: f64, delta: f64) -> Solved {
    solve(derive_params(RawParams::with_gamma_delta(gamma, delta, 0.2, 0.01, 0.05)).unwrap())
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
