//! Command line front end: configuration, run orchestration and output files.

pub mod config;
pub mod output;
pub mod suite;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use worldline_core::grid::BasisKind;
use worldline_core::{Backend, Error};

use config::{echo, parse_config, ConfigError, RunConfig};
use output::{strided, write_currents, write_kg_fields, write_spinor_fields, write_trajectories, OutputError, RunManifest};
use suite::{Check, DiracRun, KgRun, WeakRun};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const OUT_DIR_ENV: &str = "WORLDLINE_OUT_DIR";
pub const WORKERS_ENV: &str = "WORLDLINE_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "worldline", version, about = "Particle world lines guided by relativistic wave currents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
enum Command {
    /// Evolve the configured packet and write fields and currents
    Evolve(ConfigArg),
    /// Integrate a trajectory ensemble and write it
    Guide(ConfigArg),
    /// Two-state run: initial and final fields, weak current, on-shell report
    Weak(ConfigArg),
    /// Two-particle final-channel study and Born-weighted recovery
    Retro(ConfigArg),
    /// Lorentz covariance checks
    BoostCheck(ConfigArg),
    /// Run every invariant check and write a manifest
    Verify(ConfigArg),
}

#[derive(Debug, Clone, PartialEq, Eq, clap::Args)]
struct ConfigArg {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Evolve(a)
            | Command::Guide(a)
            | Command::Weak(a)
            | Command::Retro(a)
            | Command::BoostCheck(a)
            | Command::Verify(a) => &a.config,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Evolve(_) => "evolve",
            Command::Guide(_) => "guide",
            Command::Weak(_) => "weak",
            Command::Retro(_) => "retro",
            Command::BoostCheck(_) => "boost-check",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Core(#[from] Error),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Usage(_) => EXIT_USAGE,
            RunError::Core(e) if is_configuration(e) => EXIT_USAGE,
            RunError::Output(_) | RunError::Core(_) => EXIT_CHECK_FAILED,
        }
    }
}

fn is_configuration(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. } | Error::PacketTooNarrow { .. } | Error::PacketTooWide { .. } | Error::RapidityOutOfRange(_)
    )
}

/// Environment overrides, read once per invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn from_env() -> Result<Self, String> {
        let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
                format!("{WORKERS_ENV}: `{v}` is not a positive integer")
            })?),
            Err(_) => None,
        };
        Ok(Self { out_dir, workers })
    }
}

/// Runs the tool with `argv` (program name first) and environment overrides.
/// Returns the process exit code.
pub fn run_command(argv: &[String]) -> i32 {
    match Overrides::from_env() {
        Ok(o) => run_with(argv, &o),
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

pub fn run_with(argv: &[String], overrides: &Overrides) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let run = || -> Result<RunManifest, RunError> {
        let path = cli.command.config();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = parse_config(&text)?;
        if let Some(dir) = &overrides.out_dir {
            cfg.sim.output_dir = dir.clone();
        }
        execute(&cli.command, &cfg)
    };
    let result = match overrides.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(RunError::Usage(format!("{WORKERS_ENV}: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(manifest) => {
            let failed: Vec<&Check> = manifest.checks.iter().filter(|c| !c.passed).collect();
            for c in &failed {
                eprintln!("check failed: {} = {} (required {})", c.name, output::real(c.value), c.requirement());
            }
            if failed.is_empty() {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<RunManifest, RunError> {
    let started = Instant::now();
    let dir = cfg.sim.output_dir.clone();
    let mut manifest = RunManifest { command: command.name().into(), config: echo(cfg), seed: cfg.sim.seed, ..Default::default() };
    match command {
        Command::Evolve(_) => evolve(cfg, &dir, &mut manifest)?,
        Command::Guide(_) => guide(cfg, &dir, &mut manifest)?,
        Command::Weak(_) => {
            require_dirac(cfg, "weak")?;
            let run = DiracRun::new(&cfg.sim)?;
            weak(cfg, &run, &dir, &mut manifest)?;
        }
        Command::Retro(_) => retro(cfg, &[cfg.sim.retro.basis], &dir, &mut manifest)?,
        Command::BoostCheck(_) => manifest.checks.extend(suite::covariance_checks(cfg.sim.seed)?),
        Command::Verify(_) => verify(cfg, &dir, &mut manifest)?,
    }
    manifest.write(&dir.join("manifest.txt"))?;
    let timing = format!("command = {}\nwall_clock_seconds = {:.3}\n", manifest.command, started.elapsed().as_secs_f64());
    std::fs::write(dir.join("timing.txt"), timing)
        .map_err(|source| OutputError { path: dir.join("timing.txt"), source })?;
    Ok(manifest)
}

fn require_dirac(cfg: &RunConfig, command: &str) -> Result<(), RunError> {
    if cfg.sim.backend != Backend::Dirac {
        return Err(ConfigError {
            key: "backend".into(),
            line: None,
            reason: format!("`{command}` needs the dirac backend"),
        }
        .into());
    }
    Ok(())
}

fn record(manifest: &mut RunManifest, dir: &Path, name: &str) -> PathBuf {
    manifest.artifacts.push(name.to_string());
    dir.join(name)
}

fn write_dirac(run: &DiracRun, stride: usize, dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    let fields = strided(run.history.slices(), stride);
    write_spinor_fields(&record(manifest, dir, "fields.csv"), &fields, &run.lattice)?;
    let currents = strided(&run.currents, stride);
    write_currents(&record(manifest, dir, "currents.csv"), &currents, &run.lattice)?;
    Ok(())
}

fn evolve(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    let stride = cfg.sim.output_stride;
    match cfg.sim.backend {
        Backend::Dirac => {
            let run = DiracRun::new(&cfg.sim)?;
            write_dirac(&run, stride, dir, manifest)?;
            let weak = WeakRun::new(&cfg.sim, &run)?;
            manifest.checks.extend(suite::dynamics_checks(&cfg.sim, &run, &weak)?);
        }
        Backend::KleinGordon => {
            let run = KgRun::new(&cfg.sim)?;
            let fields = strided(run.history.slices(), stride);
            write_kg_fields(&record(manifest, dir, "fields.csv"), &fields, &run.lattice)?;
            let currents = strided(&run.currents, stride);
            write_currents(&record(manifest, dir, "currents.csv"), &currents, &run.lattice)?;
            manifest.checks.extend(suite::kg_checks(&cfg.sim, &run));
        }
    }
    Ok(())
}

fn guide(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    let (lattice, currents) = match cfg.sim.backend {
        Backend::Dirac => {
            let run = DiracRun::new(&cfg.sim)?;
            (run.lattice, run.currents)
        }
        Backend::KleinGordon => {
            let run = KgRun::new(&cfg.sim)?;
            (run.lattice, run.currents)
        }
    };
    let (checks, ensemble) = suite::guidance_checks(&cfg.sim, &lattice, &currents)?;
    write_trajectories(&record(manifest, dir, "trajectories.csv"), &ensemble)?;
    manifest.checks.extend(checks);
    Ok(())
}

fn weak(cfg: &RunConfig, run: &DiracRun, dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    let sim = &cfg.sim;
    let weak = WeakRun::new(sim, run)?;
    let stride = sim.output_stride;
    let finals = strided(weak.final_history.slices(), stride);
    write_spinor_fields(&record(manifest, dir, "final_fields.csv"), &finals, &run.lattice)?;
    let currents = strided(&weak.currents, stride);
    write_currents(&record(manifest, dir, "weak_currents.csv"), &currents, &run.lattice)?;
    let (_, source) = suite::weak_start_positions(run, &weak, cfg.weak_lines, sim.seed)?;
    let lines = suite::weak_worldlines(run, &weak, cfg.weak_lines, sim.seed, sim.substeps)?;
    let ensemble = worldline_core::Ensemble { worldlines: lines, seed: sim.seed };
    write_trajectories(&record(manifest, dir, "weak_trajectories.csv"), &ensemble)?;
    manifest.config.push(("weak.start_density".into(), source.into()));
    manifest.checks.push(Check::report("weak.overlap_abs", weak.overlap.value.norm()));
    manifest.checks.extend(suite::onshell_checks(cfg, run, &weak)?);
    Ok(())
}

fn retro(cfg: &RunConfig, bases: &[BasisKind], dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    let (checks, currents) = suite::retro_checks(cfg, bases)?;
    let lat = worldline_core::SpacetimeLattice::centered(cfg.sim.retro.nx, cfg.sim.retro.dx, cfg.retro_steps, cfg.sim.dt)?;
    for (name, c) in &currents {
        write_currents(&record(manifest, dir, &format!("retro_{name}.csv")), &[c], &lat)?;
    }
    manifest.checks.extend(checks);
    Ok(())
}

fn verify(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    require_dirac(cfg, "verify")?;
    let sim = &cfg.sim;
    manifest.checks.extend(suite::grid_checks(sim)?);
    let run = DiracRun::new(sim)?;
    write_dirac(&run, sim.output_stride, dir, manifest)?;
    let weak_run = WeakRun::new(sim, &run)?;
    manifest.checks.extend(suite::dynamics_checks(sim, &run, &weak_run)?);
    manifest.checks.extend(suite::current_checks(sim, &run, &weak_run)?);
    drop(weak_run);

    let (checks, ensemble) = suite::guidance_checks(sim, &run.lattice, &run.currents)?;
    write_trajectories(&record(manifest, dir, "trajectories.csv"), &ensemble)?;
    manifest.checks.extend(checks);
    drop(ensemble);

    weak(cfg, &run, dir, manifest)?;
    manifest.checks.extend(suite::minimizer_checks(1000, sim.seed)?);
    drop(run);

    retro(cfg, &[BasisKind::Position, BasisKind::Momentum], dir, manifest)?;
    manifest.checks.extend(suite::covariance_checks(sim.seed)?);
    Ok(())
}
