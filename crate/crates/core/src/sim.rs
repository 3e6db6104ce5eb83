//! Monte Carlo simulation of the consumption share and comparison of its
//! occupation measure with the normalised speed density.
//!
//! Every path owns two ChaCha8 streams derived from `(seed, path)`: one for
//! the Brownian increments of the outer steps and one for the bridge
//! refinement used when a step is subdivided near a boundary. Results are
//! therefore independent of thread count and scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{drift_numerator, EquilibriumFunctions};
use crate::error::{Error, Result};
use crate::survival::{ScaleTable, DEFAULT_ANCHOR};

/// Environment variable capping the number of simulation threads.
pub const THREADS_ENV: &str = "EQUISHOOT_THREADS";
/// Number of time blocks kept for burn-in sensitivity.
pub const BLOCKS: usize = 10;
const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    EulerMaruyama,
    LogitTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub y0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub clamp_eps: f64,
    pub scheme: Scheme,
    /// Fraction of the horizon discarded before occupation is recorded.
    pub burn_in: f64,
    /// Number of uniform occupation bins on `(0, 1)`.
    pub bins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            y0: 0.5,
            dt: 1e-3,
            horizon: 500.0,
            n_paths: 1000,
            seed: 0,
            clamp_eps: 1e-12,
            scheme: Scheme::LogitTransform,
            burn_in: 0.2,
            bins: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.y0 > 0.0 && self.y0 < 1.0) {
            return bad(format!("y0 must lie in (0, 1), got {}", self.y0));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return bad(format!("horizon must be at least dt, got {}", self.horizon));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad(format!("clamp_eps must lie in (0, 0.5), got {}", self.clamp_eps));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if self.bins == 0 {
            return bad("bins must be positive".into());
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad(format!("burn_in must lie in [0, 1), got {}", self.burn_in));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationStats {
    pub bin_edges: Vec<f64>,
    /// Time-weighted occupation after burn-in, averaged over finite paths.
    pub occupation: Vec<f64>,
    /// Standard error of `occupation` across paths.
    pub std_error: Vec<f64>,
    /// Occupation within each of `BLOCKS` equal time blocks.
    pub block_occupation: Vec<Vec<f64>>,
    /// `NaN` for aborted paths.
    pub terminal: Vec<f64>,
    pub clamp_events: u64,
    /// Clamp events per path per unit time.
    pub clamp_rate: f64,
    pub nonfinite_paths: Vec<usize>,
    pub horizon: f64,
}

impl OccupationStats {
    /// Histogram of exact samples, for calibration against known densities.
    pub fn from_samples(samples: &[f64], bins: usize) -> Self {
        let edges = uniform_edges(bins);
        let mut counts = vec![0.0; bins];
        for &y in samples {
            counts[bin_of(y, bins)] += 1.0;
        }
        let n = samples.len() as f64;
        let occupation: Vec<f64> = counts.iter().map(|c| c / n).collect();
        let std_error = occupation.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        Self {
            bin_edges: edges,
            block_occupation: vec![occupation.clone(); BLOCKS],
            occupation,
            std_error,
            terminal: samples.to_vec(),
            clamp_events: 0,
            clamp_rate: 0.0,
            nonfinite_paths: Vec::new(),
            horizon: 0.0,
        }
    }

    /// Occupation discarding the first `fraction` of the horizon, rounded
    /// down to whole blocks.
    pub fn occupation_after(&self, fraction: f64) -> Vec<f64> {
        let first = ((fraction * BLOCKS as f64 + 1e-9).floor() as usize).min(BLOCKS - 1);
        let kept = &self.block_occupation[first..];
        (0..self.occupation.len())
            .map(|i| kept.iter().map(|b| b[i]).sum::<f64>() / kept.len() as f64)
            .collect()
    }

    /// Median of the finite terminal values.
    pub fn terminal_median(&self) -> f64 {
        let mut v: Vec<f64> = self.terminal.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

pub fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

fn bin_of(y: f64, bins: usize) -> usize {
    ((y * bins as f64) as usize).min(bins - 1)
}

/// Drift and volatility of `Y`, together with `1 - y` computed without
/// cancellation by the caller.
struct Coefficients<'a> {
    eq: &'a EquilibriumFunctions,
    gamma: f64,
    delta: f64,
    sigma_d: f64,
    sigma2: f64,
}

impl<'a> Coefficients<'a> {
    fn new(eq: &'a EquilibriumFunctions) -> Self {
        let p = eq.params();
        Self { eq, gamma: p.gamma(), delta: p.delta(), sigma_d: p.sigma_d(), sigma2: p.sigma2() }
    }

    /// `(mu_Y, sigma_Y)` at `(y, 1 - y)`.
    fn y_coeffs(&self, y: f64, u: f64) -> (f64, f64) {
        let h = self.eq.h(y);
        let n = drift_numerator(self.gamma, self.delta, y, h);
        (self.sigma2 * u * n / (2.0 * self.gamma * y * h * h), self.sigma_d * u / h)
    }

    /// Drift and volatility of `z = ln(y/(1-y))` by Ito's formula:
    /// `dz = (mu_Y/(y u) - sigma_Y^2 (1 - 2y)/(2 y^2 u^2)) dt + sigma_Y/(y u) dB`.
    fn z_coeffs(&self, y: f64, u: f64) -> (f64, f64) {
        let h = self.eq.h(y);
        let n = drift_numerator(self.gamma, self.delta, y, h);
        // sigma_Y / (y u) = sigma_d / (y h).
        let vol = self.sigma_d / (y * h);
        let drift = vol * vol * (n / (2.0 * self.gamma) - 0.5 * (u - y));
        (drift, vol)
    }
}

struct PathResult {
    occupation: Vec<f64>,
    blocks: Vec<Vec<f64>>,
    terminal: f64,
    clamps: u64,
    finite: bool,
}

fn path_rngs(seed: u64, path: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut main = ChaCha8Rng::seed_from_u64(seed);
    main.set_stream(2 * path as u64);
    let mut aux = ChaCha8Rng::seed_from_u64(seed);
    aux.set_stream(2 * path as u64 + 1);
    (main, aux)
}

/// Simulates one path with step `dt`, building each increment from
/// `draws` standard normals of the main stream.
fn run_path(c: &Coefficients, cfg: &SimConfig, dt: f64, draws: usize, path: usize) -> PathResult {
    let (mut main, mut aux) = path_rngs(cfg.seed, path);
    let steps = (cfg.horizon / dt).round().max(1.0) as usize;
    let burn = (cfg.burn_in * steps as f64).round() as usize;
    let per_block = steps.div_ceil(BLOCKS);
    let mut occupation = vec![0.0; cfg.bins];
    let mut blocks = vec![vec![0.0; cfg.bins]; BLOCKS];
    let mut state = State::new(cfg.y0, cfg.scheme);
    let mut clamps = 0u64;
    let lo = cfg.clamp_eps;
    let z_lo = (lo / (1.0 - lo)).ln();
    let sd = (dt / draws as f64).sqrt();
    for k in 0..steps {
        let b = bin_of(state.y, cfg.bins);
        if k >= burn {
            occupation[b] += 1.0;
        }
        blocks[(k / per_block).min(BLOCKS - 1)][b] += 1.0;
        let mut dw = 0.0;
        for _ in 0..draws {
            dw += sd * main.sample::<f64, _>(StandardNormal);
        }
        state.advance(c, cfg.scheme, dt, dw, &mut aux);
        if !state.y.is_finite() || !state.u.is_finite() {
            return PathResult { occupation, blocks, terminal: f64::NAN, clamps, finite: false };
        }
        if state.clamp(cfg.scheme, lo, z_lo) {
            clamps += 1;
        }
    }
    let kept = (steps - burn).max(1) as f64;
    occupation.iter_mut().for_each(|o| *o /= kept);
    for (i, blk) in blocks.iter_mut().enumerate() {
        let len = per_block.min(steps.saturating_sub(i * per_block)).max(1) as f64;
        blk.iter_mut().for_each(|o| *o /= len);
    }
    PathResult { occupation, blocks, terminal: state.y, clamps, finite: true }
}

/// Share `y`, its complement `u`, and the logit `z` when that scheme runs.
struct State {
    y: f64,
    u: f64,
    z: f64,
}

impl State {
    fn new(y0: f64, scheme: Scheme) -> Self {
        let z = match scheme {
            Scheme::LogitTransform => (y0 / (1.0 - y0)).ln(),
            Scheme::EulerMaruyama => f64::NAN,
        };
        Self { y: y0, u: 1.0 - y0, z }
    }

    fn set_z(&mut self, z: f64) {
        self.z = z;
        self.y = 1.0 / (1.0 + (-z).exp());
        self.u = 1.0 / (1.0 + z.exp());
    }

    /// Returns whether the state had to be moved back inside the clamp band.
    fn clamp(&mut self, scheme: Scheme, lo: f64, z_lo: f64) -> bool {
        match scheme {
            Scheme::EulerMaruyama => {
                if self.y < lo || self.u < lo {
                    self.y = self.y.clamp(lo, 1.0 - lo);
                    self.u = 1.0 - self.y;
                    true
                } else {
                    false
                }
            }
            Scheme::LogitTransform => {
                if self.z.abs() > -z_lo {
                    self.set_z(self.z.clamp(z_lo, -z_lo));
                    true
                } else {
                    false
                }
            }
        }
    }

    /// One outer step with increment `dw`. Near the boundaries the step is
    /// halved recursively, splitting `dw` by a Brownian bridge drawn from the
    /// auxiliary stream, until each piece moves the state only a little.
    fn advance(&mut self, c: &Coefficients, scheme: Scheme, dt: f64, dw: f64, aux: &mut ChaCha8Rng) {
        self.refine(c, scheme, dt, dw, aux, 0);
    }

    fn refine(&mut self, c: &Coefficients, scheme: Scheme, dt: f64, dw: f64, aux: &mut ChaCha8Rng, depth: u32) {
        if depth >= MAX_DEPTH || !self.needs_split(c, scheme, dt) {
            self.euler(c, scheme, dt, dw);
            return;
        }
        let half = 0.5 * dt;
        let w1 = 0.5 * dw + 0.5 * dt.sqrt() * aux.sample::<f64, _>(StandardNormal);
        self.refine(c, scheme, half, w1, aux, depth + 1);
        if !self.y.is_finite() || self.y <= 0.0 || self.u <= 0.0 {
            return;
        }
        self.refine(c, scheme, half, dw - w1, aux, depth + 1);
    }

    fn euler(&mut self, c: &Coefficients, scheme: Scheme, dt: f64, dw: f64) {
        match scheme {
            Scheme::EulerMaruyama => {
                let (mu, sig) = c.y_coeffs(self.y, self.u);
                let du = mu * dt + sig * dw;
                // Step whichever coordinate is small so it keeps full precision.
                if self.y < 0.5 {
                    self.y += du;
                    self.u = 1.0 - self.y;
                } else {
                    self.u -= du;
                    self.y = 1.0 - self.u;
                }
            }
            Scheme::LogitTransform => {
                let (mu, sig) = c.z_coeffs(self.y, self.u);
                self.set_z(self.z + mu * dt + sig * dw);
            }
        }
    }

    /// Whether a step of length `dt` could move the state by more than a
    /// tenth of the distance to the nearest boundary (or of one logit unit).
    fn needs_split(&self, c: &Coefficients, scheme: Scheme, dt: f64) -> bool {
        let (mu, sig, scale) = match scheme {
            Scheme::EulerMaruyama => {
                let (mu, sig) = c.y_coeffs(self.y, self.u);
                (mu, sig, self.y.min(self.u))
            }
            Scheme::LogitTransform => {
                let (mu, sig) = c.z_coeffs(self.y, self.u);
                (mu, sig, 1.0)
            }
        };
        let reach = 0.1 * scale;
        !(mu.abs() * dt <= reach && sig * sig * dt <= reach * reach)
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse::<usize>().ok().filter(|&n| n > 0)
}

fn run_parallel<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let work = || (0..n).into_par_iter().map(&f).collect();
    match thread_cap().and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

fn aggregate(results: Vec<PathResult>, cfg: &SimConfig) -> OccupationStats {
    let bins = cfg.bins;
    let finite: Vec<&PathResult> = results.iter().filter(|r| r.finite).collect();
    let m = finite.len().max(1) as f64;
    let mut occupation = vec![0.0; bins];
    let mut sq = vec![0.0; bins];
    let mut blocks = vec![vec![0.0; bins]; BLOCKS];
    for r in &finite {
        for i in 0..bins {
            occupation[i] += r.occupation[i];
            sq[i] += r.occupation[i] * r.occupation[i];
        }
        for (acc, b) in blocks.iter_mut().zip(&r.blocks) {
            acc.iter_mut().zip(b).for_each(|(a, v)| *a += v);
        }
    }
    occupation.iter_mut().for_each(|o| *o /= m);
    let std_error = (0..bins)
        .map(|i| {
            let var = (sq[i] / m - occupation[i] * occupation[i]).max(0.0) * m / (m - 1.0).max(1.0);
            (var / m).sqrt()
        })
        .collect();
    blocks.iter_mut().for_each(|b| b.iter_mut().for_each(|o| *o /= m));
    let clamp_events: u64 = results.iter().map(|r| r.clamps).sum();
    OccupationStats {
        bin_edges: uniform_edges(bins),
        occupation,
        std_error,
        block_occupation: blocks,
        terminal: results.iter().map(|r| r.terminal).collect(),
        clamp_events,
        clamp_rate: clamp_events as f64 / (results.len() as f64 * cfg.horizon),
        nonfinite_paths: results.iter().enumerate().filter(|(_, r)| !r.finite).map(|(i, _)| i).collect(),
        horizon: cfg.horizon,
    }
}

/// Simulates `cfg.n_paths` independent paths of the consumption share.
pub fn simulate(eq: &EquilibriumFunctions, cfg: &SimConfig) -> Result<OccupationStats> {
    cfg.validate()?;
    let c = Coefficients::new(eq);
    let results = run_parallel(cfg.n_paths, |p| run_path(&c, cfg, cfg.dt, 1, p));
    Ok(aggregate(results, cfg))
}

/// Runs `cfg` at step `dt` and at `dt/2` driven by the same Brownian path:
/// each coarse increment is the sum of two fine ones. The fine result equals
/// `simulate` with the halved step.
pub fn simulate_refined(eq: &EquilibriumFunctions, cfg: &SimConfig) -> Result<(OccupationStats, OccupationStats)> {
    cfg.validate()?;
    let c = Coefficients::new(eq);
    let fine_cfg = SimConfig { dt: 0.5 * cfg.dt, ..*cfg };
    let coarse = run_parallel(cfg.n_paths, |p| run_path(&c, cfg, cfg.dt, 2, p));
    let fine = run_parallel(cfg.n_paths, |p| run_path(&c, &fine_cfg, fine_cfg.dt, 1, p));
    Ok((aggregate(coarse, cfg), aggregate(fine, &fine_cfg)))
}

/// Normalised speed density of the share diffusion.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    table: ScaleTable,
    mass: f64,
}

impl StationaryDistribution {
    pub fn new(eq: &EquilibriumFunctions) -> Result<Self> {
        let table = ScaleTable::new(eq, DEFAULT_ANCHOR)?;
        let mass = table.speed_mass();
        if !mass.is_finite() {
            return Err(Error::NotNormalizable {
                reason: format!("speed density tail exponent at 1 is {}", table.speed_tail1.exponent),
            });
        }
        Ok(Self { table, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn table(&self) -> &ScaleTable {
        &self.table
    }

    pub fn density(&self, y: f64) -> f64 {
        self.table.speed_density(y) / self.mass
    }

    /// Density at `1 - u`, resolving `u` below the spacing of doubles near one.
    pub fn density_complement(&self, u: f64) -> f64 {
        self.table.speed_density_complement(u) / self.mass
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.table.speed_cdf(y) / self.mass
    }

    pub fn quantile(&self, q: f64) -> f64 {
        self.table.speed_quantile(q)
    }

    /// Mass of each interval between consecutive `edges`.
    pub fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| self.cdf(w[1]) - self.cdf(w[0])).collect()
    }

    /// Exact draws by inversion.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }
}

/// Normalised speed density `1/(rho sigma_Y^2)` on `grid`.
pub fn stationary_density(eq: &EquilibriumFunctions, grid: &[f64]) -> Result<Vec<f64>> {
    let d = StationaryDistribution::new(eq)?;
    Ok(grid.iter().map(|&y| d.density(y)).collect())
}

/// Total-variation distance `0.5 sum |p_i - q_i|` between an occupation
/// histogram and bin masses.
pub fn ergodic_distance(occupation: &[f64], masses: &[f64]) -> Result<f64> {
    if occupation.len() != masses.len() {
        return Err(Error::BinMismatch { left: occupation.len(), right: masses.len() });
    }
    Ok(0.5 * occupation.iter().zip(masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn write_occupation_csv<W: std::io::Write>(stats: &OccupationStats, masses: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "bin_left,bin_right,occupation,stationary_mass")?;
    for (i, e) in stats.bin_edges.windows(2).enumerate() {
        let m = masses.get(i).copied().unwrap_or(f64::NAN);
        writeln!(w, "{},{},{},{}", e[0], e[1], stats.occupation[i], m)?;
    }
    Ok(())
}

pub fn write_terminal_csv<W: std::io::Write>(stats: &OccupationStats, mut w: W) -> std::io::Result<()> {
    writeln!(w, "path,terminal_y")?;
    for (i, y) in stats.terminal.iter().enumerate() {
        writeln!(w, "{i},{y}")?;
    }
    Ok(())
}
