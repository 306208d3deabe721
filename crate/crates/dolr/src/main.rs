use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dolr::acceptance::run_all;
use dolr::config::{parse_config, ConfigError, RunConfig, SchemeChoice};
use dolr::experiments::{self, Files, RunError};
use dolr::output::{dump_paths, manifest, write_all};
use dolr_core::integrators::IntegrateOptions;

/// Monte-Carlo DO/DLRA runs for SDE ensembles.
///
/// The thread count comes from `DOLR_THREADS` (default: all cores). Output
/// does not depend on it.
#[derive(Parser)]
#[command(name = "dolr", version)]
struct Cli {
    /// Run the acceptance suite; exits with 4 if any check fails.
    #[arg(long)]
    self_test: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the Brownian increments to `paths.bin`.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Two schemes on common noise at dt, dt/2 and dt/4.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(value_parser = scheme_arg)]
        a: SchemeChoice,
        #[arg(value_parser = scheme_arg)]
        b: SchemeChoice,
    },
    /// Picard iterations on the certified local window.
    PicardDemo {
        #[command(flatten)]
        common: Common,
    },
    /// Random checks of the projector Lipschitz bounds.
    LipschitzHarness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// DO run with explosion monitoring and rank restarts.
    ExplosionStudy {
        #[command(flatten)]
        common: Common,
    },
}

fn scheme_arg(s: &str) -> Result<SchemeChoice, String> {
    SchemeChoice::parse(s).ok_or_else(|| format!("unknown scheme {s:?}"))
}

fn init_threads() -> Result<(), RunError> {
    let Ok(raw) = std::env::var("DOLR_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError::Validation {
                field: "DOLR_THREADS".into(),
                message: format!("{raw:?} is not a positive integer"),
            })?;
    // Fails only if a pool already exists, which leaves the default in place.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), RunError> {
    let text = fs::read_to_string(&common.config).map_err(|e| ConfigError::Validation {
        field: "config".into(),
        message: format!("{}: {e}", common.config.display()),
    })?;
    let cfg = parse_config(&text)?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, dir))
}

fn finish(cfg: &RunConfig, dir: &Path, mut files: Files, started: Instant) -> Result<(), RunError> {
    let command: Vec<String> = std::env::args().collect();
    let wall = started.elapsed().as_secs_f64();
    files.push((
        "manifest.txt".into(),
        manifest(cfg, &command.join(" "), wall),
    ));
    write_all(dir, &files)?;
    Ok(())
}

fn self_test() -> Result<(), RunError> {
    let checks = run_all(|c| println!("{}", c.line()));
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        return Err(RunError::Acceptance(failed));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), RunError> {
    init_threads()?;
    if cli.self_test {
        return self_test();
    }
    let Some(command) = cli.command else {
        return Err(ConfigError::Validation {
            field: "command".into(),
            message: "no subcommand given; see --help".into(),
        }
        .into());
    };
    let started = Instant::now();
    match command {
        Command::Simulate {
            common,
            dump_paths: dump,
        } => {
            let (cfg, dir) = load(&common)?;
            let files = experiments::simulate(&cfg)?;
            if dump || cfg.dump_paths {
                let model = cfg.build_model()?;
                let source = experiments::noise_source(&cfg, model.as_ref())?;
                let steps = IntegrateOptions::new(cfg.t_end, cfg.dt)
                    .n_steps()
                    .map_err(RunError::Numerical)?;
                fs::create_dir_all(&dir)?;
                dump_paths(
                    &dir.join("paths.bin"),
                    &source,
                    steps,
                    cfg.n,
                    model.noise_dim(),
                )?;
            }
            finish(&cfg, &dir, files, started)
        }
        Command::Compare { common, a, b } => {
            let (cfg, dir) = load(&common)?;
            let cmp = experiments::compare(&cfg, a, b)?;
            println!("convergence_rate = {:.4}", cmp.rate);
            finish(&cfg, &dir, cmp.files, started)
        }
        Command::PicardDemo { common } => {
            let (cfg, dir) = load(&common)?;
            let files = experiments::picard_demo(&cfg)?;
            finish(&cfg, &dir, files, started)
        }
        Command::LipschitzHarness { common, trials } => {
            let (cfg, dir) = load(&common)?;
            let files = experiments::lipschitz(&cfg, trials)?;
            finish(&cfg, &dir, files, started)
        }
        Command::ExplosionStudy { common } => {
            let (cfg, dir) = load(&common)?;
            let study = experiments::explosion_study(&cfg)?;
            println!("rank events = {}", study.trajectory.events.len());
            finish(&cfg, &dir, study.files, started)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
