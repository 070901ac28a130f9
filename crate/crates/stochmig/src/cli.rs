//! Command-line front end.

use crate::battery::{run_battery, BatteryConfig};
use crate::config::{ConfigFile, Section};
use crate::design::{Design, DesignSpec};
use crate::error::{Error, Result};
use crate::estimator::{fit, EstimationResult, FitMode, OptimizerConfig};
use crate::hac::{self, HacConfig};
use crate::io;
use crate::kernel::{expected_matrix, horizon2_matrix, horizon_h_matrix, stationary_distribution, Integration};
use crate::likelihood::{build_counts, TwoStepMode};
use crate::params::ModelParams;
use crate::risk::{risk_measures, RiskConfig, DEFAULT_HORIZONS, DEFAULT_PATHS, DEFAULT_SEED};
use crate::simulate::{simulate_panel, InitialRating};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "stochmig", version, about = "Stochastic migration models: simulation, matrices, composite likelihood estimation")]
pub struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a rating panel and its factor path.
    Simulate(SimulateArgs),
    /// Expected migration matrices and the stationary distribution.
    Matrices(MatricesArgs),
    /// Fit a panel by composite likelihood with HAC standard errors.
    Estimate(EstimateArgs),
    /// Monte-Carlo battery of simulate + estimate replications.
    Battery(BatteryArgs),
    /// Downgrade and default probabilities from rating A.
    Risk(RiskArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Simulation design 1, 2 or 3.
    #[arg(long)]
    pub design: Option<u8>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of firms.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of dates including the initial one.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start every firm in this 1-based rating instead of the stationary law.
    #[arg(long)]
    pub start: Option<usize>,
    /// Also write latent scores.
    #[arg(long)]
    pub scores: bool,
    /// Also write per-date migration counts.
    #[arg(long)]
    pub counts: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatricesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Extra Monte-Carlo horizon (3 or more).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Gauss-Hermite nodes for the two-step matrix.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Factor paths for horizons of 3 or more.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Switch the factor off (all loadings zero).
    #[arg(long)]
    pub zero_loadings: bool,
    /// Percent with two decimals instead of full precision.
    #[arg(long)]
    pub paper_format: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Panel CSV with columns firm,t,rating.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Number of rating states.
    #[arg(long)]
    pub states: Option<usize>,
    /// cl1, cl2, cl12 or two-step.
    #[arg(long)]
    pub mode: Option<String>,
    /// direct or smoothed two-step counts.
    #[arg(long)]
    pub two_step_counts: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// HAC bandwidth; defaults to 4 (T/100)^(2/9).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BatteryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub two_step_counts: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Also compute risk measures per replication.
    #[arg(long)]
    pub risk: bool,
    /// Paths for the risk Monte Carlo.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Comma-separated default horizons.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Write every replication to replications.json.
    #[arg(long)]
    pub save_replications: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// estimates.json from `estimate` (needs a full-parameter fit).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub paper_format: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn design_spec(model: &ModelArgs, sec: &Section, design: u8, rho: f64) -> Result<DesignSpec> {
    let id = model.design.or(sec.u64("design")?.map(|d| d as u8)).unwrap_or(design);
    let rho = model.rho.or(sec.f64("rho")?).unwrap_or(rho);
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParams(format!("rho must lie in (-1, 1), got {rho}")));
    }
    Ok(DesignSpec::new(Design::from_id(id)?, rho))
}

fn two_step_mode(s: &str) -> Result<TwoStepMode> {
    match s {
        "direct" => Ok(TwoStepMode::Direct),
        "smoothed" => Ok(TwoStepMode::Smoothed),
        _ => Err(Error::InvalidMethod(format!("two-step counts '{s}' (expected direct or smoothed)"))),
    }
}

fn out_dir(p: &Path) -> Result<&Path> {
    std::fs::create_dir_all(p)?;
    Ok(p)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let go = || match &cli.command {
        Command::Simulate(a) => simulate_cmd(a, &cfg),
        Command::Matrices(a) => matrices_cmd(a, &cfg),
        Command::Estimate(a) => estimate_cmd(a, &cfg),
        Command::Battery(a) => battery_cmd(a, &cfg),
        Command::Risk(a) => risk_cmd(a, &cfg),
    };
    match cli.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    params: &'a ModelParams,
    n_firms: usize,
    t_len: usize,
    seed: u64,
    panel_sha256: String,
}

fn simulate_cmd(a: &SimulateArgs, cfg: &ConfigFile) -> Result<()> {
    let sec = cfg.section("simulate", &["design", "rho", "n", "t", "seed", "start", "scores", "counts"])?;
    let theta = design_spec(&a.model, &sec, 1, 0.0)?.params()?;
    let n = a.n.or(sec.usize("n")?).unwrap_or(500);
    let t = a.t.or(sec.usize("t")?).unwrap_or(120);
    let seed = a.seed.or(sec.u64("seed")?).unwrap_or(1);
    let init = match a.start.or(sec.usize("start")?) {
        Some(r) if r >= 1 && r < theta.k_states => InitialRating::Fixed(r - 1),
        Some(r) => return Err(Error::RatingOutOfRange { rating: r as i64, k: theta.k_states }),
        None => InitialRating::StationaryNoDefault,
    };
    let scores = a.scores || sec.bool("scores")?.unwrap_or(false);
    let panel = simulate_panel(&theta, n, t, &init, seed, scores)?;
    let dir = out_dir(&a.out)?;
    io::write_panel_csv(&dir.join("panel.csv"), &panel, scores)?;
    if let Some(f) = &panel.factor {
        io::write_factor_csv(&dir.join("factor.csv"), f)?;
    }
    if a.counts || sec.bool("counts")?.unwrap_or(false) {
        io::write_counts_csv(&dir.join("counts.csv"), &build_counts(&panel, TwoStepMode::Direct)?)?;
    }
    let report = SimulateReport { params: &theta, n_firms: n, t_len: t, seed, panel_sha256: io::panel_fingerprint(&panel) };
    io::write_json(&dir.join("simulate.json"), &report)
}

fn matrices_cmd(a: &MatricesArgs, cfg: &ConfigFile) -> Result<()> {
    let sec = cfg.section(
        "matrices",
        &["design", "rho", "horizon", "nodes", "paths", "seed", "zero_loadings", "paper_format"],
    )?;
    let mut theta = design_spec(&a.model, &sec, 3, 0.4)?.params()?;
    if a.zero_loadings || sec.bool("zero_loadings")?.unwrap_or(false) {
        theta.beta.iter_mut().for_each(|b| *b = 0.0);
    }
    let nodes = a.nodes.or(sec.usize("nodes")?).unwrap_or(64);
    let paper = a.paper_format || sec.bool("paper_format")?.unwrap_or(false);
    let dir = out_dir(&a.out)?;
    let p = expected_matrix(&theta, true);
    io::write_matrix_csv(&dir.join("matrices_expected.csv"), &p, paper)?;
    io::write_matrix_csv(&dir.join("matrices_expected_sq.csv"), &(&p * &p), paper)?;
    io::write_matrix_csv(&dir.join("matrices_h2.csv"), &horizon2_matrix(&theta, Integration::GaussHermite(nodes), true)?, paper)?;
    io::write_vector_csv(&dir.join("matrices_stationary.csv"), "pi", &stationary_distribution(&p)?, paper)?;
    if let Some(h) = a.horizon.or(sec.usize("horizon")?) {
        if h < 3 {
            return Err(Error::InvalidMethod(format!("horizon {h}: horizons 1 and 2 are always written; use 3 or more")));
        }
        let paths = a.paths.or(sec.usize("paths")?).unwrap_or(DEFAULT_PATHS);
        if paths < 2 {
            return Err(Error::InvalidMethod("need at least 2 factor paths".into()));
        }
        let seed = a.seed.or(sec.u64("seed")?).unwrap_or(DEFAULT_SEED);
        let m = horizon_h_matrix(&theta, h, paths, seed, true);
        io::write_matrix_csv(&dir.join(format!("matrices_h{h}.csv")), &m, paper)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    #[serde(flatten)]
    fit: &'a EstimationResult,
    se: Vec<f64>,
    /// t statistics against zero.
    t_stats: Vec<Option<f64>>,
    bandwidth: f64,
    lags_used: usize,
    truncated: bool,
    pseudo_inverse: bool,
    n_firms: usize,
    t_len: usize,
    two_step_counts: &'static str,
    panel_sha256: String,
}

fn estimate_cmd(a: &EstimateArgs, cfg: &ConfigFile) -> Result<()> {
    let sec = cfg.section(
        "estimate",
        &["panel", "states", "mode", "two_step_counts", "restarts", "seed", "nodes", "bandwidth", "max_lag"],
    )?;
    let path = match (&a.panel, sec.string("panel")?) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return Err(Error::Config("estimate needs --panel".into())),
    };
    let states = a.states.or(sec.usize("states")?).unwrap_or(8);
    let mode = FitMode::parse(&a.mode.clone().or(sec.string("mode")?).unwrap_or_else(|| "cl1".into()))?;
    let tsm = two_step_mode(&a.two_step_counts.clone().or(sec.string("two_step_counts")?).unwrap_or_else(|| "direct".into()))?;
    let nodes = a.nodes.or(sec.usize("nodes")?).unwrap_or(40);
    let opt = OptimizerConfig {
        restarts: a.restarts.or(sec.usize("restarts")?).unwrap_or(0),
        seed: a.seed.or(sec.u64("seed")?).unwrap_or(0),
        quad_nodes: nodes,
        ..OptimizerConfig::default()
    };
    let hc = HacConfig {
        bandwidth: a.bandwidth.or(sec.f64("bandwidth")?),
        max_lag: a.max_lag.or(sec.usize("max_lag")?),
        quad_nodes: nodes,
    };
    let panel = io::read_panel_csv(&path, Some(states))?;
    let counts = build_counts(&panel, tsm)?;
    let est = fit(&counts, mode, &opt)?;
    let cov = hac::estimate(&counts, &est, &hc)?;
    let zeros = vec![0.0; est.estimates.len()];
    let report = EstimateReport {
        fit: &est,
        t_stats: hac::t_statistics(&est.estimates, &cov.se, &zeros)?,
        se: cov.se.clone(),
        bandwidth: cov.bandwidth,
        lags_used: cov.lags_used,
        truncated: cov.truncated,
        pseudo_inverse: cov.pseudo_inverse,
        n_firms: panel.n_firms,
        t_len: panel.t_len,
        two_step_counts: match tsm {
            TwoStepMode::Direct => "direct",
            TwoStepMode::Smoothed => "smoothed",
        },
        panel_sha256: io::panel_fingerprint(&panel),
    };
    let dir = out_dir(&a.out)?;
    io::write_json(&dir.join("estimates.json"), &report)?;
    let mut w = csv::Writer::from_path(dir.join("covariance.csv"))?;
    let mut header = vec!["parameter".to_string()];
    header.extend(cov.names.iter().cloned());
    w.write_record(&header)?;
    for (i, name) in cov.names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..cov.names.len()).map(|j| io::fmt_num(cov.sigma[(i, j)] / cov.n_dates as f64)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BatteryReport<'a> {
    design: u8,
    rho: f64,
    n_firms: usize,
    t_len: usize,
    reps: usize,
    seed: u64,
    mode: FitMode,
    failures: usize,
    not_converged: usize,
    dp1_truth: f64,
    dp1_mean: Option<f64>,
    errors: Vec<(usize, &'a str)>,
}

fn battery_cmd(a: &BatteryArgs, cfg: &ConfigFile) -> Result<()> {
    let sec = cfg.section(
        "battery",
        &[
            "design", "rho", "n", "t", "reps", "seed", "mode", "two_step_counts", "restarts", "risk", "paths", "horizons",
            "save_replications",
        ],
    )?;
    let design = design_spec(&a.model, &sec, 1, 0.0)?;
    let mode = FitMode::parse(&a.mode.clone().or(sec.string("mode")?).unwrap_or_else(|| "cl1".into()))?;
    let mut bc = BatteryConfig::desk(design.clone(), mode);
    bc.n_firms = a.n.or(sec.usize("n")?).unwrap_or(bc.n_firms);
    bc.t_len = a.t.or(sec.usize("t")?).unwrap_or(bc.t_len);
    bc.reps = a.reps.or(sec.usize("reps")?).unwrap_or(bc.reps);
    bc.seed = a.seed.or(sec.u64("seed")?).unwrap_or(bc.seed);
    bc.optimizer.restarts = a.restarts.or(sec.usize("restarts")?).unwrap_or(0);
    if let Some(s) = a.two_step_counts.clone().or(sec.string("two_step_counts")?) {
        bc.two_step_counts = two_step_mode(&s)?;
    }
    if a.risk || sec.bool("risk")?.unwrap_or(false) {
        let paths = a.paths.or(sec.usize("paths")?).unwrap_or(DEFAULT_PATHS);
        bc.risk = Some(RiskConfig { paths, ..RiskConfig::default() });
    }
    bc.horizons = a.horizons.clone().or(sec.usize_list("horizons")?).unwrap_or_else(|| DEFAULT_HORIZONS.to_vec());
    let s = run_battery(&bc)?;
    let dir = out_dir(&a.out)?;
    io::write_summary_csv(&dir.join("summary.csv"), &s)?;
    io::write_tstats_csv(&dir.join("tstats.csv"), &s)?;
    if let (Some(t), Some(m)) = (&s.risk_truth, &s.risk_mean) {
        io::write_risk_csv(&dir.join("risk.csv"), &[("true", t), ("mean_estimate", m)], false)?;
    }
    if a.save_replications || sec.bool("save_replications")?.unwrap_or(false) {
        io::write_json(&dir.join("replications.json"), &s.replications)?;
    }
    let report = BatteryReport {
        design: design.design.id(),
        rho: design.rho,
        n_firms: bc.n_firms,
        t_len: bc.t_len,
        reps: bc.reps,
        seed: bc.seed,
        mode,
        failures: s.failures,
        not_converged: s.not_converged,
        dp1_truth: s.dp1_truth,
        dp1_mean: s.dp1_mean,
        errors: s.replications.iter().filter_map(|r| r.error.as_deref().map(|e| (r.index, e))).collect(),
    };
    io::write_json(&dir.join("battery.json"), &report)
}

fn risk_cmd(a: &RiskArgs, cfg: &ConfigFile) -> Result<()> {
    let sec = cfg.section("risk", &["design", "rho", "params", "paths", "seed", "nodes", "horizons", "paper_format"])?;
    let params_path = a.params.clone().or(sec.string("params")?.map(PathBuf::from));
    let theta = match params_path {
        Some(p) => {
            let v: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&p)?))?;
            match v.get("params") {
                Some(x) if !x.is_null() => serde_json::from_value::<ModelParams>(x.clone())?,
                _ => {
                    return Err(Error::Config(format!(
                        "{} has no full parameters; CL(1) fits do not identify the factor loadings",
                        p.display()
                    )))
                }
            }
        }
        None => design_spec(&a.model, &sec, 2, 0.0)?.params()?,
    };
    let rc = RiskConfig {
        paths: a.paths.or(sec.usize("paths")?).unwrap_or(DEFAULT_PATHS),
        seed: a.seed.or(sec.u64("seed")?).unwrap_or(DEFAULT_SEED),
        quad_nodes: a.nodes.or(sec.usize("nodes")?).unwrap_or(64),
    };
    let horizons = a.horizons.clone().or(sec.usize_list("horizons")?).unwrap_or_else(|| DEFAULT_HORIZONS.to_vec());
    let m = risk_measures(&theta, &horizons, &rc)?;
    let paper = a.paper_format || sec.bool("paper_format")?.unwrap_or(false);
    io::write_risk_csv(&out_dir(&a.out)?.join("risk.csv"), &[("value", &m)], paper)
}
