//! Command-line front end.
//!
//! Every command resolves its configuration from flags, then an optional
//! TOML file, then built-in defaults, and writes one or more output files.
//! Each file opens with a header block naming the tool version, the command,
//! the seed and the resolved configuration as JSON, so a file on its own is
//! enough to rerun it. Output bytes depend only on that configuration and the
//! input data; the thread count and output location are not echoed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{confidence_interval, target_ci, CiConvention, CiOptions, CiResult};
use crate::error::{Error, Result};
use crate::events::{event_curves, exceedances, project, EventCurve, EventKind, EventSpec, PanelSeries};
use crate::mde::{fit, FitOptions, FitResult, Method};
use crate::residual::{fit_phi, residual_ci, residuals};
use crate::sim::{clt_study, coverage_study, mc_compare, mise_survival, Exclusion, SimOptions};
use crate::threshold::{
    average_over_region, estimate_target, scan, suggest_stable_region, ScanOptions, TargetEstimate, ThresholdScan,
};
use crate::GpdParams;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(
    name = "potmde",
    version,
    about = "Exceedance probabilities from peaks over threshold with minimum-distance GPD fits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Event curves and per-run exceedance counts of a panel.
    Project {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        event: EventArgs,
    },
    /// Fit a GPD to the exceedances above one threshold.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        event: EventArgs,
        #[command(flatten)]
        est: EstimateArgs,
        /// Threshold u.
        #[arg(long)]
        u: Option<f64>,
        /// Right end of the fitted-curve table (default: largest excess).
        #[arg(long)]
        x_max: Option<f64>,
        /// Number of rows in the fitted-curve table.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Target estimates over a grid of thresholds.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        event: EventArgs,
        #[command(flatten)]
        est: EstimateArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Lower end of the averaging region.
        #[arg(long, requires = "u2")]
        u1: Option<f64>,
        /// Upper end of the averaging region.
        #[arg(long, requires = "u1")]
        u2: Option<f64>,
        /// Also print the longest window whose relative spread stays below this value.
        #[arg(long)]
        suggest_spread: Option<f64>,
    },
    /// Monte Carlo studies.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Study to run (default appendix-d).
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Replications per cell.
        #[arg(long)]
        reps: Option<usize>,
        /// True shape values, comma separated.
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
        /// Sample sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Which non-converged fits to drop from the error summaries.
        #[arg(long, value_enum)]
        exclusion: Option<ExclusionArg>,
    },
    /// Confidence interval for the survival function or a target count.
    Ci {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        event: EventArgs,
        #[command(flatten)]
        est: EstimateArgs,
        /// Threshold u.
        #[arg(long)]
        u: Option<f64>,
        /// Excess level at which to bound `S(x)`; defaults to `q − u` when `--q` is given.
        #[arg(long)]
        x: Option<f64>,
        /// Interval construction (default plug-in).
        #[arg(long, value_enum)]
        variant: Option<CiVariantArg>,
    },
    /// Table of target estimates for every job in a configuration file.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (must be absent or empty). Without it, files go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed for every random draw (default 2024).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EventArgs {
    /// Panel file (long `run,t,loc,value` or wide `run,t,v1,…` layout).
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Event aggregator (default: sum).
    #[arg(long, value_enum)]
    pub event: Option<EventKindArg>,
    /// 1-based location indices, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<usize>>,
    /// 1-based rank from the smallest value; required for order-stat and run-pattern.
    #[arg(long)]
    pub order_index: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateArgs {
    /// Estimator: mde2, mde3 or mle (default mde2).
    #[arg(long)]
    pub method: Option<Method>,
    /// Target level q.
    #[arg(long, alias = "target-q")]
    pub q: Option<f64>,
    /// Confidence level in (0, 1) (default 0.95).
    #[arg(long)]
    pub ci_level: Option<f64>,
    /// Half-width convention: corrected or strict-paper (default corrected).
    #[arg(long)]
    pub convention: Option<CiConvention>,
    /// Minimum number of exceedances for a fit.
    #[arg(long)]
    pub min_k: Option<usize>,
    /// Time points per run used for expected counts (default: mean usable length).
    #[arg(long)]
    pub n_per_run: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Single threshold.
    #[arg(long, conflicts_with_all = ["u_grid", "u_from"])]
    pub u: Option<f64>,
    /// Explicit threshold grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
    /// Start of a stepped grid; needs --u-to and --u-step.
    #[arg(long, requires_all = ["u_to", "u_step"])]
    pub u_from: Option<f64>,
    /// End of the stepped grid (inclusive).
    #[arg(long)]
    pub u_to: Option<f64>,
    /// Step of the stepped grid.
    #[arg(long)]
    pub u_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Shape/scale error decomposition and survival MISE for n = 10, 50, 100.
    AppendixD,
    /// Coverage of the survival confidence intervals.
    Coverage,
    /// Monte Carlo check of the asymptotic covariances.
    Clt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EventKindArg {
    Sum,
    OrderStat,
    RunPattern,
}

impl From<EventKindArg> for EventKind {
    fn from(k: EventKindArg) -> Self {
        match k {
            EventKindArg::Sum => EventKind::Sum,
            EventKindArg::OrderStat => EventKind::OrderStat,
            EventKindArg::RunPattern => EventKind::RunPattern,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExclusionArg {
    NonConvergedInterior,
    AllNonConverged,
}

impl From<ExclusionArg> for Exclusion {
    fn from(e: ExclusionArg) -> Self {
        match e {
            ExclusionArg::NonConvergedInterior => Exclusion::NonConvergedInterior,
            ExclusionArg::AllNonConverged => Exclusion::AllNonConverged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiVariantArg {
    PlugIn,
    Residual,
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// True parameters for the MISE, coverage and CLT studies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    /// Sample size for the coverage and CLT studies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_levels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<Exclusion>,
}

/// One row of a `report` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetJob {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSpec>,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<f64>,
    /// Grid spacing inside `[u1, u2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
}

/// Resolved configuration of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// Filled in from the subcommand; a value in a file is ignored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_to: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggest_spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_per_run: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<CiVariantArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<TargetJob>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl JobConfig {
    /// Reads a TOML file; relative panel paths are taken relative to it.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: JobConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.panel.as_mut() {
            rebase(p);
        }
        for t in cfg.targets.iter_mut().flatten() {
            if let Some(p) = t.panel.as_mut() {
                rebase(p);
            }
        }
        Ok(cfg)
    }
}

/// One output file: name and full contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let mut warnings = Vec::new();
    let result = execute(cli.command, &mut warnings).and_then(|(cfg, files)| emit(&cfg, &files, stdout));
    for w in &warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn merge_common(common: &CommonArgs) -> Result<JobConfig> {
    let mut cfg = match &common.config {
        Some(p) => JobConfig::from_path(p)?,
        None => JobConfig::default(),
    };
    override_opt(&mut cfg.out, common.out.clone());
    override_opt(&mut cfg.threads, common.threads);
    override_opt(&mut cfg.seed, common.seed);
    cfg.seed.get_or_insert(DEFAULT_SEED);
    Ok(cfg)
}

fn override_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn merge_event(cfg: &mut JobConfig, ev: &EventArgs) {
    override_opt(&mut cfg.panel, ev.panel.clone());
    if ev.event.is_some() || ev.subset.is_some() || ev.order_index.is_some() {
        let base = cfg.event.clone();
        let kind = ev
            .event
            .map(EventKind::from)
            .or(base.as_ref().map(|e| e.kind))
            .unwrap_or(EventKind::Sum);
        let subset = ev.subset.clone().or(base.as_ref().and_then(|e| e.subset.clone()));
        let order_index = ev.order_index.or(base.as_ref().and_then(|e| e.order_index));
        cfg.event = Some(EventSpec {
            kind,
            subset,
            order_index,
        });
    }
}

fn merge_estimate(cfg: &mut JobConfig, est: &EstimateArgs) {
    override_opt(&mut cfg.method, est.method);
    override_opt(&mut cfg.q, est.q);
    override_opt(&mut cfg.ci_level, est.ci_level);
    override_opt(&mut cfg.min_k, est.min_k);
    override_opt(&mut cfg.n_per_run, est.n_per_run);
    if let Some(c) = est.convention {
        cfg.ci.get_or_insert_with(CiOptions::default).convention = c;
    }
}

fn run_in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => job(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
    }
}

/// Resolves the configuration of `command` and produces its output files.
pub fn execute(command: Command, warnings: &mut Vec<String>) -> Result<(JobConfig, Vec<OutputFile>)> {
    let (cfg, kind) = resolve(command)?;
    let threads = cfg.threads;
    let files = run_in_pool(threads, || {
        let mut w = Vec::new();
        let files = match kind {
            CommandKind::Project => cmd_project(&cfg),
            CommandKind::Fit => cmd_fit(&cfg, &mut w),
            CommandKind::Scan => cmd_scan(&cfg, &mut w),
            CommandKind::Simulate => cmd_simulate(&cfg),
            CommandKind::Ci => cmd_ci(&cfg, &mut w),
            CommandKind::Report => cmd_report(&cfg, &mut w),
        };
        files.map(|f| (f, w))
    });
    let (files, w) = files?;
    warnings.extend(w);
    Ok((cfg, files))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommandKind {
    Project,
    Fit,
    Scan,
    Simulate,
    Ci,
    Report,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Project => "project",
            CommandKind::Fit => "fit",
            CommandKind::Scan => "scan",
            CommandKind::Simulate => "simulate",
            CommandKind::Ci => "ci",
            CommandKind::Report => "report",
        }
    }
}

fn resolve(command: Command) -> Result<(JobConfig, CommandKind)> {
    match command {
        Command::Project { common, event } => {
            let mut cfg = merge_common(&common)?;
            merge_event(&mut cfg, &event);
            Ok((cfg, CommandKind::Project))
        }
        Command::Fit {
            common,
            event,
            est,
            u,
            x_max,
            points,
        } => {
            let mut cfg = merge_common(&common)?;
            merge_event(&mut cfg, &event);
            merge_estimate(&mut cfg, &est);
            override_opt(&mut cfg.u, u);
            override_opt(&mut cfg.x_max, x_max);
            override_opt(&mut cfg.points, points);
            cfg.method.get_or_insert(Method::Mde2);
            cfg.ci_level.get_or_insert(0.95);
            cfg.points.get_or_insert(101);
            cfg.u.get_or_insert(0.0);
            let fit = cfg.fit.get_or_insert_with(FitOptions::default);
            if let Some(k) = cfg.min_k {
                fit.min_k = k;
            }
            cfg.ci.get_or_insert_with(CiOptions::default);
            Ok((cfg, CommandKind::Fit))
        }
        Command::Scan {
            common,
            event,
            est,
            grid,
            u1,
            u2,
            suggest_spread,
        } => {
            let mut cfg = merge_common(&common)?;
            merge_event(&mut cfg, &event);
            merge_estimate(&mut cfg, &est);
            if grid.u.is_some() || grid.u_grid.is_some() || grid.u_from.is_some() {
                cfg.u = grid.u;
                cfg.u_grid = grid.u_grid;
                cfg.u_from = grid.u_from;
                cfg.u_to = grid.u_to;
                cfg.u_step = grid.u_step;
            }
            override_opt(&mut cfg.u1, u1);
            override_opt(&mut cfg.u2, u2);
            override_opt(&mut cfg.suggest_spread, suggest_spread);
            cfg.method.get_or_insert(Method::Mde2);
            cfg.ci_level.get_or_insert(0.95);
            cfg.min_k.get_or_insert(ScanOptions::default().min_k);
            cfg.fit.get_or_insert_with(FitOptions::default);
            cfg.ci.get_or_insert_with(CiOptions::default);
            Ok((cfg, CommandKind::Scan))
        }
        Command::Simulate {
            common,
            preset,
            reps,
            gamma_grid,
            n_grid,
            exclusion,
        } => {
            let mut cfg = merge_common(&common)?;
            let sim = cfg.sim.get_or_insert_with(SimConfig::default);
            override_opt(&mut sim.preset, preset);
            override_opt(&mut sim.reps, reps);
            override_opt(&mut sim.gamma_grid, gamma_grid);
            override_opt(&mut sim.n_grid, n_grid);
            override_opt(&mut sim.exclusion, exclusion.map(Exclusion::from));
            let preset = *sim.preset.get_or_insert(Preset::AppendixD);
            sim.reps.get_or_insert(1000);
            sim.exclusion.get_or_insert(Exclusion::default());
            sim.gamma0.get_or_insert(0.2);
            sim.sigma0.get_or_insert(1.0);
            match preset {
                Preset::AppendixD => {
                    sim.gamma_grid
                        .get_or_insert_with(|| (1..=12).map(|i| (i as f64 * 0.05 * 100.0).round() / 100.0).collect());
                    sim.n_grid.get_or_insert_with(|| vec![10, 50, 100]);
                }
                Preset::Coverage => {
                    sim.k.get_or_insert(500);
                    sim.level.get_or_insert(0.95);
                    sim.x_levels.get_or_insert_with(|| vec![0.5, 2.0, 5.0]);
                }
                Preset::Clt => {
                    sim.k.get_or_insert(10_000);
                    sim.x_levels.get_or_insert_with(|| vec![0.5, 1.0, 2.0, 5.0, 10.0]);
                }
            }
            cfg.fit.get_or_insert_with(|| SimOptions::default().fit);
            Ok((cfg, CommandKind::Simulate))
        }
        Command::Ci {
            common,
            event,
            est,
            u,
            x,
            variant,
        } => {
            let mut cfg = merge_common(&common)?;
            merge_event(&mut cfg, &event);
            merge_estimate(&mut cfg, &est);
            override_opt(&mut cfg.u, u);
            override_opt(&mut cfg.x, x);
            override_opt(&mut cfg.variant, variant);
            cfg.u.get_or_insert(0.0);
            cfg.ci_level.get_or_insert(0.95);
            cfg.variant.get_or_insert(CiVariantArg::PlugIn);
            cfg.method = Some(Method::Mde2);
            let fit = cfg.fit.get_or_insert_with(FitOptions::default);
            if let Some(k) = cfg.min_k {
                fit.min_k = k;
            }
            cfg.ci.get_or_insert_with(CiOptions::default);
            Ok((cfg, CommandKind::Ci))
        }
        Command::Report { common } => {
            let mut cfg = merge_common(&common)?;
            cfg.method.get_or_insert(Method::Mde2);
            cfg.ci_level.get_or_insert(0.95);
            cfg.min_k.get_or_insert(ScanOptions::default().min_k);
            cfg.fit.get_or_insert_with(FitOptions::default);
            cfg.ci.get_or_insert_with(CiOptions::default);
            Ok((cfg, CommandKind::Report))
        }
    }
    .map(|(mut cfg, kind)| {
        cfg.seed.get_or_insert(DEFAULT_SEED);
        (cfg, kind)
    })
    .and_then(|(cfg, kind)| {
        check_paths(&cfg)?;
        Ok((
            JobConfig {
                command: Some(kind.name().to_string()),
                ..cfg
            },
            kind,
        ))
    })
}

fn check_paths(cfg: &JobConfig) -> Result<()> {
    let paths = cfg
        .panel
        .iter()
        .chain(cfg.targets.iter().flatten().filter_map(|t| t.panel.as_ref()));
    for p in paths {
        if !p.is_file() {
            return Err(Error::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            });
        }
    }
    Ok(())
}

fn required<T: Clone>(v: &Option<T>, what: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("missing required setting `{what}`")))
}

fn load_curves(
    panel: &Option<PathBuf>,
    event: &Option<EventSpec>,
) -> Result<(PanelSeries, EventSpec, Vec<EventCurve>)> {
    let panel = PanelSeries::from_path(required(panel, "panel")?)?;
    let spec = event.clone().unwrap_or(EventSpec {
        kind: EventKind::Sum,
        subset: None,
        order_index: None,
    });
    let curves = event_curves(&panel, &spec)?;
    Ok((panel, spec, curves))
}

fn mean_run_length(curves: &[EventCurve]) -> f64 {
    curves.iter().map(|c| c.n_effective() as f64).sum::<f64>() / curves.len() as f64
}

fn header(cfg: &JobConfig) -> Result<String> {
    let kind = cfg.command.as_deref().unwrap_or("unknown");
    let json = serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!(
        "# {} {}\n# command: {kind}\n# seed: {}\n# config: {json}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        cfg.seed.unwrap_or(DEFAULT_SEED),
    ))
}

fn csv_file(
    cfg: &JobConfig,
    name: &str,
    columns: &[&str],
    rows: &[Vec<String>],
    trailer: &[String],
) -> Result<OutputFile> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Numeric(format!("writing {name}: {e}"));
    w.write_record(columns).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::Numeric(format!("writing {name}: {e}")))?;
    let mut contents = header(cfg)?;
    contents.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    for line in trailer {
        contents.push_str("# ");
        contents.push_str(line);
        contents.push('\n');
    }
    Ok(OutputFile {
        name: name.to_string(),
        contents,
    })
}

fn json_file<T: Serialize>(cfg: &JobConfig, name: &str, result: &T) -> Result<OutputFile> {
    #[derive(Serialize)]
    struct Header<'a> {
        tool: &'a str,
        version: &'a str,
        command: &'a str,
        seed: u64,
        config: &'a JobConfig,
    }
    #[derive(Serialize)]
    struct Doc<'a, T> {
        header: Header<'a>,
        result: &'a T,
    }
    let doc = Doc {
        header: Header {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cfg.command.as_deref().unwrap_or("unknown"),
            seed: cfg.seed.unwrap_or(DEFAULT_SEED),
            config: cfg,
        },
        result,
    };
    let mut contents = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))?;
    contents.push('\n');
    Ok(OutputFile {
        name: name.to_string(),
        contents,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_project(cfg: &JobConfig) -> Result<Vec<OutputFile>> {
    let (panel, spec, curves) = load_curves(&cfg.panel, &cfg.event)?;
    let series = project(&panel, &spec)?;
    let mut rows = Vec::new();
    for (run, g) in panel.runs().iter().zip(&series) {
        for (t, v) in g.iter().enumerate() {
            rows.push(vec![run.id().to_string(), (t + 1).to_string(), num(*v)]);
        }
    }
    let mut files = vec![csv_file(cfg, "series.csv", &["run", "t", "g"], &rows, &[])?];
    for (i, (run, curve)) in panel.runs().iter().zip(&curves).enumerate() {
        let cf = curve.counts_function();
        let rows: Vec<Vec<String>> = cf
            .breakpoints
            .iter()
            .zip(&cf.counts)
            .map(|(b, c)| vec![num(*b), c.to_string()])
            .collect();
        let trailer = [format!("run {} n_effective = {}", run.id(), curve.n_effective())];
        let name = format!("counts_{:03}_{}.csv", i + 1, file_stem(run.id()));
        files.push(csv_file(cfg, &name, &["q_from", "count"], &rows, &trailer)?);
    }
    Ok(files)
}

/// Table-style summary of one target: `(q, u, γ̂, μ̂, σ̂, estimate, CI)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub name: String,
    pub q: f64,
    /// `u` or `[u1, u2]`.
    pub u: String,
    pub method: Method,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub expected_count: f64,
    pub probability: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl TargetRow {
    pub const COLUMNS: [&'static str; 11] = [
        "name",
        "q",
        "u",
        "method",
        "gamma",
        "mu",
        "sigma",
        "expected_count",
        "probability",
        "ci_lo",
        "ci_hi",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.name.clone(),
            num(self.q),
            self.u.clone(),
            self.method.to_string(),
            opt_num(self.gamma),
            opt_num(self.mu),
            opt_num(self.sigma),
            num(self.expected_count),
            num(self.probability),
            opt_num(self.ci_lo),
            opt_num(self.ci_hi),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FitSummary {
    threshold_u: f64,
    per_run_counts: Vec<usize>,
    total_k: usize,
    rate: f64,
    n_per_run: f64,
    fit: FitResult,
    target: Option<TargetEstimate>,
    target_ci: Option<CiResult>,
    row: Option<TargetRow>,
}

fn fit_warnings(f: &FitResult, w: &mut Vec<String>) {
    if f.at_boundary {
        w.push(format!(
            "{} fit stopped on the search-box boundary (gamma = {}, mu = {}, sigma = {})",
            f.method,
            f.params.gamma(),
            f.params.mu(),
            f.params.sigma()
        ));
    } else if !f.converged {
        w.push(format!(
            "{} fit is not stationary (score norm {:?})",
            f.method, f.score_norm
        ));
    }
}

fn ci_opts(cfg: &JobConfig) -> CiOptions {
    cfg.ci.unwrap_or_default()
}

fn cmd_fit(cfg: &JobConfig, warnings: &mut Vec<String>) -> Result<Vec<OutputFile>> {
    let (_, _, curves) = load_curves(&cfg.panel, &cfg.event)?;
    let u = required(&cfg.u, "u")?;
    let method = required(&cfg.method, "method")?;
    let level = required(&cfg.ci_level, "ci_level")?;
    let copts = ci_opts(cfg);
    let sample = exceedances(&curves, u)?;
    let fitted = fit(&sample, method, cfg.fit.as_ref().expect("resolved"))?;
    fit_warnings(&fitted, warnings);
    let n_per_run = cfg.n_per_run.unwrap_or_else(|| mean_run_length(&curves));
    let band = method == Method::Mde2 && fitted.k >= copts.min_k;

    let x_max = match cfg.x_max {
        Some(x) if x > 0.0 => x,
        Some(x) => return Err(Error::Config(format!("x_max must be positive, got {x}"))),
        None => sample.pooled_step.last_breakpoint(),
    };
    let points = required(&cfg.points, "points")?.max(2);
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let x = x_max * i as f64 / (points - 1) as f64;
        let ci = if band {
            Some(confidence_interval(&fitted, x, level, &copts)?)
        } else {
            None
        };
        rows.push(vec![
            num(x),
            num(sample.empirical_survival(x)),
            num(fitted.params.survival(x)),
            opt_num(ci.map(|c| c.lower)),
            opt_num(ci.map(|c| c.upper)),
        ]);
    }

    let (target, target_ci, row) = match cfg.q {
        None => (None, None, None),
        Some(q) => {
            let t = estimate_target(&sample, &fitted, q, n_per_run)?;
            let ci = if band {
                Some(target_ci(&fitted, q - u, level, n_per_run, sample.rate, &copts)?)
            } else {
                None
            };
            let row = TargetRow {
                name: String::new(),
                q,
                u: num(u),
                method,
                gamma: Some(fitted.params.gamma()),
                mu: Some(fitted.params.mu()),
                sigma: Some(fitted.params.sigma()),
                expected_count: t.expected_count,
                probability: t.probability,
                ci_lo: ci.map(|c| c.lower),
                ci_hi: ci.map(|c| c.upper),
            };
            (Some(t), ci, Some(row))
        }
    };
    let summary = FitSummary {
        threshold_u: u,
        per_run_counts: sample.per_run_counts.clone(),
        total_k: sample.total_k,
        rate: sample.rate,
        n_per_run,
        fit: fitted,
        target,
        target_ci,
        row,
    };
    Ok(vec![
        json_file(cfg, "fit.json", &summary)?,
        csv_file(
            cfg,
            "fit_curve.csv",
            &["x", "empirical", "fitted", "ci_lo", "ci_hi"],
            &rows,
            &[],
        )?,
    ])
}

/// Grid of `from + i·step` up to `to` (inclusive, with a small tolerance).
fn stepped_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && to >= from && from.is_finite() && to.is_finite()) {
        return Err(Error::Config(format!("invalid threshold grid {from}:{to}:{step}")));
    }
    let m = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=m).map(|i| from + i as f64 * step).collect())
}

fn threshold_grid(cfg: &JobConfig) -> Result<Vec<f64>> {
    if let Some(g) = &cfg.u_grid {
        return Ok(g.clone());
    }
    if let Some(from) = cfg.u_from {
        return stepped_grid(from, required(&cfg.u_to, "u_to")?, required(&cfg.u_step, "u_step")?);
    }
    if let Some(u) = cfg.u {
        return Ok(vec![u]);
    }
    Err(Error::Config(
        "a threshold grid is required (u, u_grid or u_from/u_to/u_step)".into(),
    ))
}

fn scan_options(cfg: &JobConfig, method: Method) -> ScanOptions {
    ScanOptions {
        method,
        fit: cfg.fit.clone().unwrap_or_default(),
        min_k: cfg.min_k.unwrap_or(ScanOptions::default().min_k),
        ci_level: cfg.ci_level,
        ci: ci_opts(cfg),
        n_per_run: cfg.n_per_run,
    }
}

fn scan_warnings(s: &ThresholdScan, w: &mut Vec<String>) {
    for r in &s.rows {
        if let Some(f) = &r.fit {
            if f.at_boundary || !f.converged {
                let mut inner = Vec::new();
                fit_warnings(f, &mut inner);
                w.extend(inner.into_iter().map(|m| format!("u = {}: {m}", r.u)));
            }
        }
    }
}

fn cmd_scan(cfg: &JobConfig, warnings: &mut Vec<String>) -> Result<Vec<OutputFile>> {
    let (_, _, curves) = load_curves(&cfg.panel, &cfg.event)?;
    let q = required(&cfg.q, "q")?;
    let grid = threshold_grid(cfg)?;
    let opts = scan_options(cfg, required(&cfg.method, "method")?);
    let result = scan(&curves, q, &grid, &opts)?;
    scan_warnings(&result, warnings);
    let mut trailer = Vec::new();
    if let (Some(u1), Some(u2)) = (cfg.u1, cfg.u2) {
        let avg = average_over_region(&result, u1, u2)?;
        trailer.push(format!(
            "region_average u1={} u2={} target_probability={} expected_count={} contributing={}",
            avg.u1,
            avg.u2,
            avg.probability,
            avg.expected_count,
            avg.contributing_us.len()
        ));
    }
    if let Some(spread) = cfg.suggest_spread {
        trailer.push(match suggest_stable_region(&result, spread) {
            Some((a, b)) => format!("advisory_stable_region u1={a} u2={b} rel_spread={spread}"),
            None => format!("advisory_stable_region none rel_spread={spread}"),
        });
    }
    Ok(vec![csv_file(
        cfg,
        "scan.csv",
        &ThresholdScan::COLUMNS,
        &result.table(),
        &trailer,
    )?])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CiSummary {
    threshold_u: f64,
    total_k: usize,
    rate: f64,
    fit: FitResult,
    variant: CiVariantArg,
    phi: Option<f64>,
    survival: CiResult,
    target: Option<CiResult>,
}

fn cmd_ci(cfg: &JobConfig, warnings: &mut Vec<String>) -> Result<Vec<OutputFile>> {
    let (_, _, curves) = load_curves(&cfg.panel, &cfg.event)?;
    let u = required(&cfg.u, "u")?;
    let level = required(&cfg.ci_level, "ci_level")?;
    let variant = required(&cfg.variant, "variant")?;
    let x = match (cfg.x, cfg.q) {
        (Some(x), _) => x,
        (None, Some(q)) => q - u,
        (None, None) => return Err(Error::Config("either x or q is required".into())),
    };
    let copts = ci_opts(cfg);
    let sample = exceedances(&curves, u)?;
    let fitted = fit(&sample, Method::Mde2, cfg.fit.as_ref().expect("resolved"))?;
    fit_warnings(&fitted, warnings);
    let (survival, phi) = match variant {
        CiVariantArg::PlugIn => (confidence_interval(&fitted, x, level, &copts)?, None),
        CiVariantArg::Residual => {
            let phi = fit_phi(&residuals(&sample, &fitted)?)?;
            if let Some(w) = &phi.warning {
                warnings.push(w.clone());
            }
            (residual_ci(&sample, &fitted, x, level, &copts)?, Some(phi.phi))
        }
    };
    let target = match (cfg.q, variant) {
        (Some(q), CiVariantArg::PlugIn) => {
            let n = cfg.n_per_run.unwrap_or_else(|| mean_run_length(&curves));
            Some(target_ci(&fitted, q - u, level, n, sample.rate, &copts)?)
        }
        _ => None,
    };
    let summary = CiSummary {
        threshold_u: u,
        total_k: sample.total_k,
        rate: sample.rate,
        fit: fitted,
        variant,
        phi,
        survival,
        target,
    };
    Ok(vec![json_file(cfg, "ci.json", &summary)?])
}

fn sim_options(cfg: &JobConfig) -> SimOptions {
    let sim = cfg.sim.clone().unwrap_or_default();
    SimOptions {
        fit: cfg.fit.clone().unwrap_or_else(|| SimOptions::default().fit),
        exclusion: sim.exclusion.unwrap_or_default(),
    }
}

fn cmd_simulate(cfg: &JobConfig) -> Result<Vec<OutputFile>> {
    let sim = cfg.sim.clone().expect("resolved");
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let reps = required(&sim.reps, "sim.reps")?;
    let opts = sim_options(cfg);
    let theta0 = GpdParams::new(
        required(&sim.gamma0, "sim.gamma0")?,
        required(&sim.sigma0, "sim.sigma0")?,
    )?;
    match required(&sim.preset, "sim.preset")? {
        Preset::AppendixD => {
            let gammas = required(&sim.gamma_grid, "sim.gamma_grid")?;
            let ns = required(&sim.n_grid, "sim.n_grid")?;
            let report = mc_compare(&gammas, &ns, reps, seed, &opts)?;
            let mise = mise_survival(&theta0, &ns, reps, None, seed, &opts)?;
            let columns = [
                "gamma0",
                "n",
                "used",
                "estimator",
                "gamma_mse",
                "gamma_variance",
                "gamma_bias2",
                "sigma_mse",
                "sigma_variance",
                "sigma_bias2",
                "boundary_fits",
            ];
            let mut files = Vec::new();
            for &n in &ns {
                let mut rows = Vec::new();
                for c in report.cells.iter().filter(|c| c.n == n) {
                    for (name, e) in [("mde", &c.mde), ("mle", &c.mle)] {
                        rows.push(vec![
                            num(c.gamma0),
                            n.to_string(),
                            c.used.to_string(),
                            name.to_string(),
                            num(e.gamma.mse),
                            num(e.gamma.variance),
                            num(e.gamma.bias2),
                            num(e.sigma.mse),
                            num(e.sigma.variance),
                            num(e.sigma.bias2),
                            e.boundary_fits.to_string(),
                        ]);
                    }
                }
                files.push(csv_file(cfg, &format!("appendix_d_n{n}.csv"), &columns, &rows, &[])?);
            }
            let rows: Vec<Vec<String>> = mise
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.mde),
                        num(r.mde_se),
                        num(r.mle),
                        num(r.mle_se),
                        r.used.to_string(),
                    ]
                })
                .collect();
            files.push(csv_file(
                cfg,
                "mise.csv",
                &["n", "mde", "mde_se", "mle", "mle_se", "used"],
                &rows,
                &[],
            )?);
            #[derive(Serialize)]
            struct Summary<'a> {
                report: &'a crate::sim::SimReport,
                mise: &'a crate::sim::MiseTable,
            }
            files.push(json_file(
                cfg,
                "summary.json",
                &Summary {
                    report: &report,
                    mise: &mise,
                },
            )?);
            Ok(files)
        }
        Preset::Coverage => {
            let k = required(&sim.k, "sim.k")?;
            let xs = required(&sim.x_levels, "sim.x_levels")?;
            let level = required(&sim.level, "sim.level")?;
            let table = coverage_study(&theta0, k, &xs, level, reps, seed, &opts)?;
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let variant = serde_json::to_value(r.variant)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default();
                    vec![num(r.x), variant, num(r.coverage), num(r.se), r.used.to_string()]
                })
                .collect();
            Ok(vec![
                csv_file(
                    cfg,
                    "coverage.csv",
                    &["x", "variant", "coverage", "se", "used"],
                    &rows,
                    &[],
                )?,
                json_file(cfg, "coverage.json", &table)?,
            ])
        }
        Preset::Clt => {
            let k = required(&sim.k, "sim.k")?;
            let xs = required(&sim.x_levels, "sim.x_levels")?;
            let report = clt_study(&theta0, k, reps, &xs, seed, &opts)?;
            let rows: Vec<Vec<String>> = report
                .survival
                .iter()
                .map(|(x, e, t)| vec![num(*x), num(*e), num(*t)])
                .collect();
            Ok(vec![
                csv_file(
                    cfg,
                    "clt_survival.csv",
                    &["x", "empirical_variance", "theory_variance"],
                    &rows,
                    &[],
                )?,
                json_file(cfg, "clt.json", &report)?,
            ])
        }
    }
}

fn job_grid(job: &TargetJob) -> Result<(Vec<f64>, String)> {
    match (job.u, job.u1, job.u2) {
        (Some(u), None, None) => Ok((vec![u], num(u))),
        (None, Some(u1), Some(u2)) => {
            let step = job.u_step.unwrap_or((u2 - u1) / 20.0);
            let grid = if u1 == u2 {
                vec![u1]
            } else {
                stepped_grid(u1, u2, step)?
            };
            Ok((grid, format!("[{u1}, {u2}]")))
        }
        _ => Err(Error::Config(format!(
            "target `{}` needs either u or both u1 and u2",
            job.name
        ))),
    }
}

fn report_row(cfg: &JobConfig, job: &TargetJob, warnings: &mut Vec<String>) -> Result<TargetRow> {
    let panel = job.panel.clone().or_else(|| cfg.panel.clone());
    let event = job.event.clone().or_else(|| cfg.event.clone());
    let (_, _, curves) = load_curves(&panel, &event)?;
    let method = job.method.or(cfg.method).unwrap_or(Method::Mde2);
    let (grid, u_label) = job_grid(job)?;
    let opts = scan_options(cfg, method);
    let result = scan(&curves, job.q, &grid, &opts)?;
    let mut inner = Vec::new();
    scan_warnings(&result, &mut inner);
    warnings.extend(inner.into_iter().map(|m| format!("{}: {m}", job.name)));
    let mut row = TargetRow {
        name: job.name.clone(),
        q: job.q,
        u: u_label,
        method,
        gamma: None,
        mu: None,
        sigma: None,
        expected_count: 0.0,
        probability: 0.0,
        ci_lo: None,
        ci_hi: None,
    };
    if grid.len() == 1 {
        let r = &result.rows[0];
        let (Some(f), Some(t)) = (&r.fit, r.target) else {
            return Err(Error::TooFewExceedances {
                k: r.k,
                min_k: opts.min_k,
            });
        };
        row.gamma = Some(f.params.gamma());
        row.mu = Some(f.params.mu());
        row.sigma = Some(f.params.sigma());
        row.expected_count = t.expected_count;
        row.probability = t.probability;
        row.ci_lo = r.ci.map(|c| c.lower);
        row.ci_hi = r.ci.map(|c| c.upper);
    } else {
        let (u1, u2) = (grid[0], *grid.last().expect("nonempty"));
        let avg = average_over_region(&result, u1, u2)?;
        row.expected_count = avg.expected_count;
        row.probability = avg.probability;
    }
    Ok(row)
}

fn cmd_report(cfg: &JobConfig, warnings: &mut Vec<String>) -> Result<Vec<OutputFile>> {
    let jobs = cfg.targets.clone().unwrap_or_default();
    if jobs.is_empty() {
        return Err(Error::Config(
            "report needs at least one [[targets]] entry in the configuration".into(),
        ));
    }
    let rows = jobs
        .iter()
        .map(|j| report_row(cfg, j, warnings))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<Vec<String>> = rows.iter().map(TargetRow::cells).collect();
    Ok(vec![
        csv_file(cfg, "report.csv", &TargetRow::COLUMNS, &cells, &[])?,
        json_file(cfg, "report.json", &rows)?,
    ])
}

/// Writes `files` into the configured output directory (created
/// atomically) or, without one, to `stdout`.
fn emit(cfg: &JobConfig, files: &[OutputFile], stdout: &mut dyn Write) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    match &cfg.out {
        None => {
            let path = Path::new("<stdout>");
            for f in files {
                write!(stdout, "# file: {}\n{}", f.name, f.contents).map_err(io_err(path))?;
            }
            Ok(())
        }
        Some(out) => {
            if out.exists() {
                let empty = out.is_dir() && std::fs::read_dir(out).map_err(io_err(out))?.next().is_none();
                if !empty {
                    return Err(Error::Config(format!(
                        "output directory {} exists and is not empty",
                        out.display()
                    )));
                }
            }
            let parent = match out.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&parent).map_err(io_err(&parent))?;
            let leaf = out
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "out".into());
            let staging = parent.join(format!(".{leaf}.partial-{}", std::process::id()));
            std::fs::create_dir(&staging).map_err(io_err(&staging))?;
            let written = files.iter().try_for_each(|f| {
                let p = staging.join(&f.name);
                std::fs::write(&p, &f.contents).map_err(io_err(&p))
            });
            let moved = written.and_then(|()| std::fs::rename(&staging, out).map_err(io_err(out)));
            if moved.is_err() {
                let _ = std::fs::remove_dir_all(&staging);
            }
            moved
        }
    }
}
