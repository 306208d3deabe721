//! Runs behind the subcommands. Each returns the files it produced as
//! `(name, contents)` pairs so callers can write or compare them.

use std::fmt::Write as _;
use std::io;

use dolr_core::diagnostics::{convergence_rate, error_report, projector_lipschitz_harness};
use dolr_core::integrators::{
    integrate, picard_local_solve, IntegrateOptions, NoHook, PicardOptions, Scheme, Trajectory,
};
use dolr_core::kernels::WellPosednessBounds;
use dolr_core::models::{InitialDatum, Sde};
use dolr_core::paths::BrownianSource;
use dolr_core::rank_control::{detect_explosion, RankControl, Which};
use dolr_core::DolrError;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SchemeChoice};
use crate::output::{diagnostics_csv, events_csv, fmt_f64, header, trajectory_csv};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical: {0}")]
    Numerical(#[from] DolrError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("self-test: {0} acceptance check(s) failed")]
    Acceptance(usize),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(DolrError::BadParams(_) | DolrError::UnknownModel(_)) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
            RunError::Acceptance(_) => 4,
        }
    }

    /// One machine-readable line for stderr.
    pub fn error_line(&self) -> String {
        let kind = match self {
            RunError::Config(ConfigError::Parse { .. }) => "parse",
            RunError::Config(ConfigError::Validation { .. }) => "validation",
            RunError::Numerical(_) if self.exit_code() == 2 => "validation",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
            RunError::Acceptance(_) => "acceptance",
        };
        let detail = match self {
            RunError::Config(e) => e.to_string(),
            RunError::Numerical(e) => e.to_string(),
            RunError::Io(e) => e.to_string(),
            RunError::Acceptance(n) => format!("{n} failed"),
        };
        format!(
            "error kind={kind} code={} message={detail:?}",
            self.exit_code()
        )
    }
}

pub type Files = Vec<(String, String)>;

pub struct Setup {
    pub model: Box<dyn Sde>,
    pub datum: InitialDatum,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, RunError> {
    let model = cfg.build_model()?;
    let datum = model.initial_datum(cfg.n, cfg.r, cfg.seed)?;
    Ok(Setup { model, datum })
}

fn options(cfg: &RunConfig, dt: f64, stride: usize) -> IntegrateOptions {
    let mut opts = IntegrateOptions::new(cfg.t_end, dt);
    opts.record_stride = stride;
    opts.rank = Some(cfg.r);
    opts
}

fn rank_control(cfg: &RunConfig, model: &dyn Sde) -> RankControl {
    let mut rc = RankControl::new(model);
    rc.n_max = cfg.monitor.n_max;
    rc.gamma_max = cfg.monitor.gamma_max;
    rc.sv_tolerance = cfg.monitor.sv_tolerance;
    rc
}

fn trajectory_files(cfg: &RunConfig, traj: &Trajectory) -> Files {
    vec![
        (
            "trajectory.csv".into(),
            trajectory_csv(cfg, &traj.snapshots),
        ),
        (
            "diagnostics.csv".into(),
            diagnostics_csv(cfg, &traj.diagnostics),
        ),
        ("events.csv".into(), events_csv(cfg, &traj.events)),
    ]
}

/// `simulate`: one run of the configured scheme. DO runs carry the rank
/// controller, so a degenerating Gram matrix triggers a restart.
pub fn simulate(cfg: &RunConfig) -> Result<Files, RunError> {
    if cfg.scheme == SchemeChoice::Picard {
        return picard_demo(cfg);
    }
    let s = setup(cfg)?;
    let m = s.model.noise_dim();
    let noise = BrownianSource::new(cfg.seed, cfg.dt, cfg.n, m, cfg.level)?;
    let opts = options(cfg, cfg.dt, cfg.record_stride);
    let traj = match cfg.scheme {
        SchemeChoice::Do => {
            let mut rc = rank_control(cfg, s.model.as_ref());
            integrate(
                s.model.as_ref(),
                &s.datum,
                Scheme::Do,
                &opts,
                &noise,
                &mut rc,
            )?
        }
        SchemeChoice::Ambient => integrate(
            s.model.as_ref(),
            &s.datum,
            Scheme::Ambient,
            &opts,
            &noise,
            &mut NoHook,
        )?,
        _ => integrate(
            s.model.as_ref(),
            &s.datum,
            Scheme::Reference,
            &opts,
            &noise,
            &mut NoHook,
        )?,
    };
    Ok(trajectory_files(cfg, &traj))
}

/// The raw increments a `simulate` run consumes.
pub fn noise_source(cfg: &RunConfig, model: &dyn Sde) -> Result<BrownianSource, RunError> {
    Ok(BrownianSource::new(
        cfg.seed,
        cfg.dt,
        cfg.n,
        model.noise_dim(),
        cfg.level,
    )?)
}

fn core_scheme(s: SchemeChoice) -> Result<Scheme, RunError> {
    match s {
        SchemeChoice::Do => Ok(Scheme::Do),
        SchemeChoice::Ambient => Ok(Scheme::Ambient),
        SchemeChoice::Reference => Ok(Scheme::Reference),
        SchemeChoice::Picard => Err(RunError::Config(ConfigError::Validation {
            field: "scheme".into(),
            message: "picard cannot be compared".into(),
        })),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub dts: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub rate: f64,
    pub files: Files,
}

/// `compare`: both schemes on common noise at `dt`, `dt/2`, `dt/4`. The
/// finest increments are shared; coarser steps sum them pairwise.
pub fn compare(cfg: &RunConfig, a: SchemeChoice, b: SchemeChoice) -> Result<Comparison, RunError> {
    let (sa, sb) = (core_scheme(a)?, core_scheme(b)?);
    let s = setup(cfg)?;
    let m = s.model.noise_dim();
    let mut dts = Vec::new();
    let mut sup_errors = Vec::new();
    let mut rows = String::new();
    for level in [0u32, 1, 2] {
        let dt = cfg.dt / f64::from(1u32 << level);
        let noise = BrownianSource::new(cfg.seed, dt, cfg.n, m, cfg.level + 2 - level)?;
        let opts = options(cfg, dt, cfg.record_stride << level);
        let ta = integrate(s.model.as_ref(), &s.datum, sa, &opts, &noise, &mut NoHook)?;
        let tb = integrate(s.model.as_ref(), &s.datum, sb, &opts, &noise, &mut NoHook)?;
        let rep = error_report(&ta, &tb)?;
        for (t, e) in rep.times.iter().zip(&rep.l2_errors) {
            let _ = writeln!(rows, "{},{},{}", fmt_f64(dt), fmt_f64(*t), fmt_f64(*e));
        }
        dts.push(dt);
        sup_errors.push(rep.sup_error);
    }
    let rate = convergence_rate(&dts, &sup_errors)?;
    let mut csv = header(cfg);
    let _ = writeln!(
        csv,
        "# schemes={},{} convergence_rate={}",
        a.as_str(),
        b.as_str(),
        fmt_f64(rate)
    );
    csv.push_str("dt,t,l2_error\n");
    csv.push_str(&rows);
    let mut summary = header(cfg);
    summary.push_str("dt,sup_error\n");
    for (dt, e) in dts.iter().zip(&sup_errors) {
        let _ = writeln!(summary, "{},{}", fmt_f64(*dt), fmt_f64(*e));
    }
    let files = vec![
        ("error_report.csv".into(), csv),
        ("error_summary.csv".into(), summary),
    ];
    Ok(Comparison {
        dts,
        sup_errors,
        rate,
        files,
    })
}

/// `picard-demo`: Picard iterations on the window `delta` certified by the
/// well-posedness bounds of the initial datum.
pub fn picard_demo(cfg: &RunConfig) -> Result<Files, RunError> {
    let s = setup(cfg)?;
    let (u0, y0) = match &s.datum {
        InitialDatum::Factored { u0, y0 } => (u0.clone(), y0.clone()),
        InitialDatum::Full(_) => unreachable!("builtins return factored data"),
    };
    let c = s.model.constants();
    let bounds = WellPosednessBounds::new(&y0, cfg.d, c.c_lgb, s.model.horizon())?;
    let opts = PicardOptions::default();
    let h = bounds.delta / opts.substeps as f64;
    let noise = BrownianSource::new(cfg.seed, h, cfg.n, s.model.noise_dim(), 0)?;
    let rep = picard_local_solve(s.model.as_ref(), &u0, &y0, &noise, bounds.delta, opts)?;
    let mut csv = header(cfg);
    let _ = writeln!(
        csv,
        "# delta={} eta={} bound_u_sq={} bound_y_sq={}",
        fmt_f64(rep.delta),
        fmt_f64(rep.eta),
        fmt_f64(rep.bound_u_sq),
        fmt_f64(rep.bound_y_sq)
    );
    csv.push_str("iterate,difference,ratio,sup_u_sq,e_sup_y_sq,u_ball,y_ball\n");
    let ratios = rep.ratios();
    for n in 0..rep.sup_u_sq.len() {
        let diff = if n == 0 {
            String::new()
        } else {
            fmt_f64(rep.differences[n - 1])
        };
        let ratio = if n >= 2 {
            fmt_f64(ratios[n - 2])
        } else {
            String::new()
        };
        let _ = writeln!(
            csv,
            "{n},{diff},{ratio},{},{},{},{}",
            fmt_f64(rep.sup_u_sq[n]),
            fmt_f64(rep.e_sup_y_sq[n]),
            fmt_f64(rep.u_ball[n]),
            fmt_f64(rep.y_ball[n])
        );
    }
    Ok(vec![("picard.csv".into(), csv)])
}

/// `lipschitz-harness`: random projector pairs on `N` atoms in `R^d`.
pub fn lipschitz(cfg: &RunConfig, trials: usize) -> Result<Files, RunError> {
    let rep = projector_lipschitz_harness(trials, cfg.n, cfg.d, cfg.r, cfg.seed)?;
    let mut csv = header(cfg);
    csv.push_str("trials,worst_u_ratio,worst_v_ratio,worst_combined_ratio\n");
    let _ = writeln!(
        csv,
        "{},{},{},{}",
        rep.trials,
        fmt_f64(rep.worst_u_ratio),
        fmt_f64(rep.worst_v_ratio),
        fmt_f64(rep.worst_combined_ratio)
    );
    Ok(vec![("lipschitz.csv".into(), csv)])
}

pub struct ExplosionStudy {
    pub trajectory: Trajectory,
    pub control: RankControl,
    pub files: Files,
}

/// `explosion-study`: a DO run with the monitor and restart hook, plus the
/// level crossings and the explosion estimate.
pub fn explosion_study(cfg: &RunConfig) -> Result<ExplosionStudy, RunError> {
    let s = setup(cfg)?;
    let noise = BrownianSource::new(cfg.seed, cfg.dt, cfg.n, s.model.noise_dim(), cfg.level)?;
    let opts = options(cfg, cfg.dt, cfg.record_stride);
    let mut rc = rank_control(cfg, s.model.as_ref());
    let traj = integrate(
        s.model.as_ref(),
        &s.datum,
        Scheme::Do,
        &opts,
        &noise,
        &mut rc,
    )?;
    let mut files = trajectory_files(cfg, &traj);

    let mut crossings = header(cfg);
    crossings.push_str("n,t,which,delta_n,epoch\n");
    for c in rc.crossings() {
        let which = match c.which {
            Which::InvNorm => "inv_norm",
            Which::YNorm => "y_norm",
        };
        let _ = writeln!(
            crossings,
            "{},{},{which},{},{}",
            c.n,
            fmt_f64(c.t),
            fmt_f64(c.delta_n),
            c.epoch
        );
    }
    files.push(("crossings.csv".into(), crossings));

    let ex = detect_explosion(&traj.diagnostics, &traj.events, cfg.monitor.gamma_max)?;
    let mut summary = header(cfg);
    summary.push_str("exploded,t_e,gamma_max\n");
    let t_e = ex.t_e.map(fmt_f64).unwrap_or_default();
    let _ = writeln!(
        summary,
        "{},{t_e},{}",
        u8::from(ex.exploded),
        fmt_f64(ex.gamma_max)
    );
    files.push(("explosion.csv".into(), summary));
    Ok(ExplosionStudy {
        trajectory: traj,
        control: rc,
        files,
    })
}
