//! Command driver behind the `cvqkd` binary: loads the scenario, applies
//! command-line overrides, evaluates points and writes every artifact.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::output::{write_csv, write_plots, read_csv, IncrementalCsv, Manifest};
use crate::scenario::{
    evaluate_point, optimize_amplitude_postselection, status_counts, sweep, sweep_points, AppliedDefault,
    KeyRateReport, ScenarioConfig,
};
use crate::stats::GammaConvention;

/// Subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// One point from the base configuration.
    Point,
    /// Cartesian product of the sweep axes.
    Sweep,
    /// Grid search over amplitude and postselection at every sweep point.
    Optimize,
    /// Plots from an existing results table.
    Plot,
}

impl Command {
    /// Lower-case name.
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Point => "point",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Plot => "plot",
        }
    }
}

/// Options shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Scenario file; defaults everywhere when absent.
    pub config: Option<PathBuf>,
    /// Output directory.
    pub out: PathBuf,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
    /// Conic backend override.
    pub backend: Option<String>,
    /// Cutoff override.
    pub n_c: Option<usize>,
    /// Literal interval rows `[gamma + mu + t - w cap, gamma - mu - t]`.
    pub literal_primal: bool,
    /// Incomplete-gamma convention override.
    pub gamma_convention: Option<GammaConvention>,
    /// Input table for `plot`; `<out>/results.csv` when absent.
    pub csv: Option<PathBuf>,
    /// Plot axis; every varying sweep axis when absent.
    pub axis: Option<String>,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Reports written to `results.csv`.
    pub reports: Vec<KeyRateReport>,
    /// Every evaluated point, including optimizer cells.
    pub evaluated: Vec<KeyRateReport>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Process exit code: 0 when every evaluated point is certified or clean-negative.
    pub exit_code: i32,
}

/// Loads the scenario and applies overrides; returns the config, applied
/// defaults and the override list.
pub fn resolve_config(opts: &RunOptions) -> Result<(ScenarioConfig, Vec<AppliedDefault>, Vec<String>)> {
    let (mut cfg, defaults) = match &opts.config {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::from_toml_str("")?,
    };
    let mut overrides = Vec::new();
    if let Some(b) = &opts.backend {
        cfg.solver.backend = b.clone();
        overrides.push(format!("solver.backend={b}"));
    }
    if let Some(n) = opts.n_c {
        cfg.protocol.n_c = n;
        overrides.push(format!("protocol.n_c={n}"));
    }
    if opts.literal_primal {
        cfg.plan.literal_primal = true;
        overrides.push("plan.literal_primal=true".into());
    }
    if let Some(g) = opts.gamma_convention {
        cfg.plan.gamma_convention = g;
        overrides.push(format!("plan.gamma_convention={}", if g == GammaConvention::Squared { "squared" } else { "literal" }));
    }
    cfg.validate()?;
    // Fail early on an unusable backend.
    cfg.solver_settings()?;
    Ok((cfg, defaults, overrides))
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Runs `cmd`, writing results, plots and `manifest.json` under `opts.out`.
pub fn run(cmd: Command, opts: &RunOptions) -> Result<RunOutcome> {
    std::fs::create_dir_all(&opts.out)?;
    let (cfg, defaults, overrides) = resolve_config(opts)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let out = opts.out.as_path();
    let mut artifacts = Vec::new();

    let (reports, evaluated) = pool.install(|| -> Result<(Vec<KeyRateReport>, Vec<KeyRateReport>)> {
        match cmd {
            Command::Point => {
                let r = evaluate_point(&cfg);
                Ok((vec![r.clone()], vec![r]))
            }
            Command::Sweep => {
                let partial_path = out.join("results.partial.csv");
                let partial = IncrementalCsv::create(&partial_path)?;
                artifacts.push(rel(out, &partial_path));
                let reps = sweep(&cfg, |_, r| {
                    let _ = partial.append(r);
                });
                Ok((reps.clone(), reps))
            }
            Command::Optimize => {
                let grid_path = out.join("grid.partial.csv");
                let partial = IncrementalCsv::create(&grid_path)?;
                artifacts.push(rel(out, &grid_path));
                let mut best = Vec::new();
                let mut cells = Vec::new();
                for point in sweep_points(&cfg) {
                    let (b, all) = optimize_amplitude_postselection(
                        &point,
                        &cfg.sweep.alpha_grid,
                        &cfg.sweep.delta_r_grid,
                        |_, r| {
                            let _ = partial.append(r);
                        },
                    )?;
                    best.push(b);
                    cells.extend(all);
                }
                let grid = out.join("grid.csv");
                write_csv(&grid, &cells)?;
                artifacts.push(rel(out, &grid));
                Ok((best, cells))
            }
            Command::Plot => {
                let input = opts.csv.clone().unwrap_or_else(|| out.join("results.csv"));
                let reps = read_csv(&input)?;
                Ok((reps, Vec::new()))
            }
        }
    })?;

    if cmd != Command::Plot {
        let path = out.join("results.csv");
        write_csv(&path, &reports)?;
        artifacts.push(rel(out, &path));
    }
    if cmd != Command::Point {
        for p in write_plots(out, &reports, opts.axis.as_deref())? {
            artifacts.push(rel(out, &p));
        }
    }
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "cvqkd".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.as_str().into(),
        config_path: opts.config.as_ref().map(|p| p.display().to_string()),
        resolved_config: cfg,
        defaults_applied: defaults,
        overrides,
        threads,
        artifacts: artifacts.clone(),
        points: evaluated.len(),
        status_counts: status_counts(&evaluated),
    };
    manifest.write(&out.join("manifest.json"))?;
    let exit_code = if evaluated.iter().all(|r| r.status.is_success()) { 0 } else { 2 };
    Ok(RunOutcome { reports, evaluated, artifacts, exit_code })
}
