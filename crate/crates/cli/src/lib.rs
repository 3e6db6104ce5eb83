//! Command-line front end: configuration merging, pipeline dispatch and
//! file emission.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use equishoot::equilibrium::{solve_initial_share, tabulate, write_table_csv, EquilibriumFunctions, DEFAULT_TABLE_EPS};
use equishoot::shooting::{certify, find_xi0, CertificateReport, CriticalSolution, ShootingOptions};
use equishoot::sim::{ergodic_distance, simulate, write_occupation_csv, write_terminal_csv, Scheme, SimConfig, StationaryDistribution};
use equishoot::survival::{classify, default_sweep_grid, prieto_classify, sweep, write_sweep_csv, SweepBase, DEFAULT_ANCHOR};
use equishoot::{derive_params, Error as CoreError, ModelParams, RawParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Rows of the tabulated equilibrium functions.
pub const TABLE_POINTS: usize = 201;
pub const DEFAULT_SWEEP_N: usize = 20;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                CoreError::Validation(_)
                | CoreError::ThetaOutOfRange { .. }
                | CoreError::Config(_)
                | CoreError::InvalidArgument(_) => EXIT_VALIDATION,
                _ => EXIT_NUMERICAL,
            },
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Parse(_) => "ParseError".into(),
            CliError::Core(CoreError::Validation(v)) => variant_name(v),
            CliError::Core(e) => variant_name(e),
            CliError::Io { .. } => "IoError".into(),
        }
    }

    pub fn to_json(&self) -> String {
        let body = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        body.to_string()
    }
}

fn variant_name<T: std::fmt::Debug>(v: &T) -> String {
    let s = format!("{v:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Solve,
    Equilibrium,
    Classify,
    Simulate,
    Prieto,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    EulerMaruyama,
    LogitTransform,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::EulerMaruyama => Scheme::EulerMaruyama,
            SchemeArg::LogitTransform => Scheme::LogitTransform,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "equishoot", version, allow_negative_numbers = true, about = "Equilibrium shooting solver and survival diagnostics")]
pub struct Cli {
    pub command: Command,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma_d: Option<f64>,
    #[arg(long)]
    pub mu_d: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub d0: Option<f64>,
    #[arg(long)]
    pub theta2: Option<f64>,
    #[arg(long)]
    pub xi_tol: Option<f64>,
    #[arg(long)]
    pub ode_tol: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub anchor: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub y0: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long)]
    pub clamp_eps: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Grid size per axis for `sweep`.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub params: FileParams,
    #[serde(default)]
    pub solver: FileSolver,
    #[serde(default)]
    pub survival: FileSurvival,
    #[serde(default)]
    pub sim: FileSim,
    #[serde(default)]
    pub sweep: FileSweep,
    #[serde(default)]
    pub output: FileOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileParams {
    pub gamma: Option<f64>,
    pub sigma_d: Option<f64>,
    pub mu_d: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub d0: Option<f64>,
    pub theta2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSolver {
    pub xi_tol: Option<f64>,
    pub ode_tol: Option<f64>,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSurvival {
    pub anchor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSim {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub y0: Option<f64>,
    pub scheme: Option<SchemeArg>,
    pub clamp_eps: Option<f64>,
    pub burn_in: Option<f64>,
    pub bins: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSweep {
    pub grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOutput {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Effective parameters after merging file and flags. Missing primitives
/// stay `None` until a command needs them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamValues {
    pub gamma: Option<f64>,
    pub sigma_d: Option<f64>,
    pub mu_d: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub d0: f64,
    pub theta2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: ParamValues,
    pub shooting: ShootingOptions,
    pub anchor: f64,
    pub sim: SimConfig,
    pub grid: usize,
    pub format: Format,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Parses flags (first element is the program name) and the optional
/// config file they name. Flags override file values.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Parse(e.to_string().trim_end().to_string()))?;
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_file(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    merge(cli, file)
}

pub fn parse_file(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

fn merge(cli: Cli, file: FileConfig) -> Result<RunConfig, CliError> {
    let fp = file.params;
    let params = ParamValues {
        gamma: pick(cli.gamma, fp.gamma),
        sigma_d: pick(cli.sigma_d, fp.sigma_d),
        mu_d: pick(cli.mu_d, fp.mu_d),
        beta1: pick(cli.beta1, fp.beta1),
        beta2: pick(cli.beta2, fp.beta2),
        d0: pick(cli.d0, fp.d0).unwrap_or(1.0),
        theta2: pick(cli.theta2, fp.theta2),
    };
    let defaults = ShootingOptions::default();
    let fs = file.solver;
    let shooting = ShootingOptions {
        xi_tol: pick(cli.xi_tol, fs.xi_tol).unwrap_or(defaults.xi_tol),
        ode_tol: pick(cli.ode_tol, fs.ode_tol).unwrap_or(defaults.ode_tol),
        eps0: pick(cli.eps0, fs.eps0).unwrap_or(defaults.eps0),
        eps1: pick(cli.eps1, fs.eps1).unwrap_or(defaults.eps1),
        ..defaults
    };
    let sd = SimConfig::default();
    let ss = file.sim;
    let sim = SimConfig {
        y0: pick(cli.y0, ss.y0).unwrap_or(sd.y0),
        dt: pick(cli.dt, ss.dt).unwrap_or(sd.dt),
        horizon: pick(cli.horizon, ss.horizon).unwrap_or(sd.horizon),
        n_paths: pick(cli.paths, ss.paths).unwrap_or(sd.n_paths),
        seed: pick(cli.seed, ss.seed).unwrap_or(sd.seed),
        clamp_eps: pick(cli.clamp_eps, ss.clamp_eps).unwrap_or(sd.clamp_eps),
        scheme: pick(cli.scheme, ss.scheme).map_or(sd.scheme, Scheme::from),
        burn_in: pick(cli.burn_in, ss.burn_in).unwrap_or(sd.burn_in),
        bins: pick(cli.bins, ss.bins).unwrap_or(sd.bins),
    };
    let cfg = RunConfig {
        command: cli.command,
        params,
        shooting,
        anchor: pick(cli.anchor, file.survival.anchor).unwrap_or(DEFAULT_ANCHOR),
        sim,
        grid: pick(cli.grid, file.sweep.grid).unwrap_or(DEFAULT_SWEEP_N),
        format: pick(cli.format, file.output.format).unwrap_or(Format::Csv),
        output_dir: pick(cli.out, file.output.out).unwrap_or_else(|| PathBuf::from(".")),
    };
    check_required(&cfg)?;
    Ok(cfg)
}

fn check_required(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.params;
    let needed: &[(&str, Option<f64>)] = match cfg.command {
        Command::Prieto => &[("gamma", p.gamma), ("sigma_d", p.sigma_d), ("mu_d", p.mu_d)],
        Command::Sweep => &[],
        _ => &[
            ("gamma", p.gamma),
            ("sigma_d", p.sigma_d),
            ("mu_d", p.mu_d),
            ("beta1", p.beta1),
            ("beta2", p.beta2),
        ],
    };
    for (name, v) in needed {
        if v.is_none() {
            return Err(CliError::Parse(format!(
                "missing required parameter {name} (flag --{} or key {name} in [params])",
                name.replace('_', "-")
            )));
        }
    }
    if cfg.grid == 0 {
        return Err(CliError::Parse("grid must be positive".into()));
    }
    Ok(())
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn raw(&self) -> RawParams {
        let p = &self.params;
        RawParams {
            gamma: p.gamma.unwrap_or(f64::NAN),
            sigma_d: p.sigma_d.unwrap_or(f64::NAN),
            mu_d: p.mu_d.unwrap_or(f64::NAN),
            beta1: p.beta1.unwrap_or(f64::NAN),
            beta2: p.beta2.unwrap_or(f64::NAN),
            d0: p.d0,
            theta2: p.theta2.unwrap_or(1.0),
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: Command,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    /// JSON printed to stdout (`validate` only).
    #[serde(skip)]
    pub stdout: Option<String>,
}

struct Emitter<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

impl Emitter<'_> {
    /// Writes a CSV file whose first line records the config hash.
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        body(&mut buf).expect("writing to memory");
        self.write(name, &buf)
    }

    /// Writes a JSON object with a `config_hash` field added.
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = json_with_hash(value, &self.hash);
        self.write(name, text.as_bytes())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(self.dir).map_err(io_err(self.dir))?;
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(bytes).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

fn json_with_hash<T: Serialize>(value: &T, hash: &str) -> String {
    let mut v = serde_json::to_value(value).expect("serializable");
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config_hash".into(), hash.into());
        }
        None => {
            v = serde_json::json!({ "config_hash": hash, "data": v });
        }
    }
    let mut s = serde_json::to_string_pretty(&v).expect("serializable");
    s.push('\n');
    s
}

struct Solved {
    params: ModelParams,
    cs: CriticalSolution,
    report: CertificateReport,
    eq: EquilibriumFunctions,
}

fn solve(cfg: &RunConfig) -> Result<Solved, CliError> {
    let params = derive_params(cfg.raw()).map_err(CoreError::from)?;
    let cs = find_xi0(&params, &cfg.shooting)?;
    let report = certify(&cs, &params);
    let eq = EquilibriumFunctions::new(&params, &cs, report.passed);
    Ok(Solved { params, cs, report, eq })
}

#[derive(Serialize)]
struct CurveJson<'a> {
    xi: f64,
    y: &'a [f64],
    h: &'a [f64],
    i_log: &'a [f64],
}

#[derive(Serialize)]
struct EquilibriumMeta {
    xi0: f64,
    g0: f64,
    certified: bool,
    theta2: Option<f64>,
    y0: Option<f64>,
}

#[derive(Serialize)]
struct OccupationRow {
    bin_left: f64,
    bin_right: f64,
    occupation: f64,
    stationary_mass: f64,
}

#[derive(Serialize)]
struct SimMeta<'a> {
    sim: &'a SimConfig,
    certificate_hash: String,
    certified: bool,
    clamp_events: u64,
    clamp_rate: f64,
    nonfinite_paths: &'a [usize],
    total_variation: Option<f64>,
    terminal_median: f64,
}

/// Runs the pipeline for `cfg.command` and writes its files.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let hash = cfg.hash();
    let mut out = Emitter { dir: &cfg.output_dir, hash: hash.clone(), files: Vec::new() };
    let mut stdout = None;
    let csv = cfg.format == Format::Csv;
    match cfg.command {
        Command::Validate => {
            let p = derive_params(cfg.raw()).map_err(CoreError::from)?;
            stdout = Some(json_with_hash(&p, &hash));
        }
        Command::Solve => {
            let s = solve(cfg)?;
            if csv {
                out.csv("solution.csv", |w| s.cs.curve.write_csv(w))?;
            } else {
                let c = &s.cs.curve;
                out.json("solution.json", &CurveJson { xi: c.xi, y: &c.y, h: &c.h, i_log: &c.i_log })?;
            }
            out.json("certificate.json", &s.report)?;
        }
        Command::Equilibrium => {
            let s = solve(cfg)?;
            let y0 = match cfg.params.theta2 {
                Some(theta2) => Some(solve_initial_share(theta2, &s.eq)?),
                None => None,
            };
            let rows = tabulate(&s.eq, TABLE_POINTS, DEFAULT_TABLE_EPS)?;
            if csv {
                out.csv("equilibrium.csv", |w| write_table_csv(&rows, w))?;
            } else {
                out.json("equilibrium_table.json", &rows)?;
            }
            let meta = EquilibriumMeta {
                xi0: s.cs.xi0,
                g0: s.eq.g0(),
                certified: s.report.passed,
                theta2: cfg.params.theta2,
                y0,
            };
            out.json("equilibrium.json", &meta)?;
        }
        Command::Classify => {
            let s = solve(cfg)?;
            let report = classify(&s.params, &s.eq, cfg.anchor)?;
            out.json("survival.json", &report)?;
        }
        Command::Simulate => {
            let s = solve(cfg)?;
            let stats = simulate(&s.eq, &cfg.sim)?;
            let masses = match StationaryDistribution::new(&s.eq) {
                Ok(st) => Some(st.bin_masses(&stats.bin_edges)),
                Err(CoreError::NotNormalizable { .. } | CoreError::InconclusiveTail { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let total_variation = match &masses {
                Some(m) => Some(ergodic_distance(&stats.occupation, m)?),
                None => None,
            };
            let m = masses.clone().unwrap_or_default();
            if csv {
                out.csv("occupation.csv", |w| write_occupation_csv(&stats, &m, w))?;
                out.csv("terminal.csv", |w| write_terminal_csv(&stats, w))?;
            } else {
                let rows: Vec<OccupationRow> = stats
                    .bin_edges
                    .windows(2)
                    .enumerate()
                    .map(|(i, e)| OccupationRow {
                        bin_left: e[0],
                        bin_right: e[1],
                        occupation: stats.occupation[i],
                        stationary_mass: m.get(i).copied().unwrap_or(f64::NAN),
                    })
                    .collect();
                out.json("occupation.json", &rows)?;
                out.json("terminal.json", &stats.terminal)?;
            }
            let cert = serde_json::to_string(&s.report).expect("serializable");
            let meta = SimMeta {
                sim: &cfg.sim,
                certificate_hash: hex::encode(Sha256::digest(cert.as_bytes())),
                certified: s.report.passed,
                clamp_events: stats.clamp_events,
                clamp_rate: stats.clamp_rate,
                nonfinite_paths: &stats.nonfinite_paths,
                total_variation,
                terminal_median: stats.terminal_median(),
            };
            out.json("simulate.json", &meta)?;
        }
        Command::Prieto => {
            let p = &cfg.params;
            let report = prieto_classify(p.gamma.unwrap(), p.mu_d.unwrap(), p.sigma_d.unwrap())?;
            out.json("prieto.json", &report)?;
        }
        Command::Sweep => {
            let d = SweepBase::default();
            let base = SweepBase {
                sigma_d: cfg.params.sigma_d.unwrap_or(d.sigma_d),
                mu_d: cfg.params.mu_d.unwrap_or(d.mu_d),
                beta2: cfg.params.beta2.unwrap_or(d.beta2),
            };
            let grid = default_sweep_grid(cfg.grid, &base);
            let rows = sweep(&grid, &base, &cfg.shooting, cfg.anchor);
            if csv {
                out.csv("sweep.csv", |w| write_sweep_csv(&rows, w))?;
            } else {
                out.json("sweep.json", &rows)?;
            }
        }
    }
    Ok(RunSummary { command: cfg.command, config_hash: hash, files: out.files, stdout })
}

/// Parses, runs and reports; returns the process exit status. Errors go to
/// `stderr` as one JSON object.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    }
    let result = parse_config(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            let text = match &summary.stdout {
                Some(s) => s.clone(),
                None => format!("{}\n", serde_json::to_string(&summary).expect("serializable")),
            };
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code()
        }
    }
}
