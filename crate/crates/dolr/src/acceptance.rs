//! The acceptance suite. Each check runs a small experiment at fixed
//! tolerances and reports one line; `--self-test` and the `acceptance`
//! test target both run [`run_all`].

use std::time::Instant;

use dolr_core::diagnostics::{
    holder_estimator, l2_distance, log_log_slope, moment_estimator, projector_lipschitz_harness,
    random_rotation, rotation_equivariance_check,
};
use dolr_core::integrators::{
    integrate, picard_local_solve, IntegrateOptions, NoHook, PicardOptions, Scheme, Trajectory,
};
use dolr_core::kernels::linalg::ortho_defect;
use dolr_core::kernels::{
    eta_radius, moment_bound_2k, stability_bound_m, EnsembleMatrix, WellPosednessBounds,
};
use dolr_core::models::{builtin, InitialDatum, ParamValue, Params, Sde, BUILTINS};
use dolr_core::paths::BrownianSource;
use dolr_core::rank_control::{detect_explosion, noise_floor_bound, RankControl, Which};
use dolr_core::DolrError;

use crate::config::parse_config;
use crate::experiments;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} [{:02}] {}: {}", self.id, self.name, self.detail)
    }
}

const SEED: u64 = 20240611;

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

type Outcome = Result<(bool, String), DolrError>;

fn finish(
    id: u8,
    name: &'static str,
    start: Instant,
    budget_s: Option<f64>,
    out: Outcome,
) -> Check {
    let secs = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match out {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(b) = budget_s {
        if secs >= b {
            passed = false;
        }
        detail.push_str(&format!("; {secs:.2}s (budget {b}s)"));
    } else {
        detail.push_str(&format!("; {secs:.2}s"));
    }
    Check {
        id,
        name,
        passed,
        detail,
    }
}

fn model(name: &str, params: &[(&str, ParamValue)]) -> Result<Box<dyn Sde>, DolrError> {
    let p: Params = params
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    builtin(name, &p)
}

fn factored(datum: &InitialDatum) -> (nalgebra::DMatrix<f64>, EnsembleMatrix) {
    match datum {
        InitialDatum::Factored { u0, y0 } => (u0.clone(), y0.clone()),
        InitialDatum::Full(_) => unreachable!("builtins return factored data"),
    }
}

fn run(
    m: &dyn Sde,
    datum: &InitialDatum,
    scheme: Scheme,
    t_end: f64,
    dt: f64,
    stride: usize,
    noise: &BrownianSource,
) -> Result<Trajectory, DolrError> {
    let mut opts = IntegrateOptions::new(t_end, dt);
    opts.record_stride = stride;
    integrate(m, datum, scheme, &opts, noise, &mut NoHook)
}

/// Full-rank DO against Euler-Maruyama on common noise.
pub fn check_01() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("ou", &[("d", ParamValue::Int(4))])?;
        let (n, dt) = (256, 1e-3);
        let datum = m.initial_datum(n, 4, SEED)?;
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        let a = run(m.as_ref(), &datum, Scheme::Do, 0.1, dt, 1, &noise)?;
        let b = run(m.as_ref(), &datum, Scheme::Reference, 0.1, dt, 1, &noise)?;
        let mut worst = 0.0f64;
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            for (x, y) in sa.x.as_slice().iter().zip(sb.x.as_slice()) {
                worst = worst.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
            }
        }
        let steps = a.snapshots.len() - 1;
        Ok((
            worst <= 1e-10 && steps == 100,
            format!("{steps} steps, max relative deviation {worst:.3e} (tol 1e-10)"),
        ))
    })();
    finish(1, "R=d exactness", start, Some(5.0), out)
}

const GAUGE_FLOOR: f64 = 1e-12;

/// Orthonormal rows at every step; gauge defect `O(dt^2)`.
pub fn check_02() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let dts = [2e-3, 1e-3, 5e-4];
        let n = 256;
        let mut ok = true;
        let mut parts = Vec::new();
        for name in BUILTINS {
            let m = model(name, &[])?;
            let datum = m.initial_datum(n, 2, SEED)?;
            let mut ortho = 0.0f64;
            let mut gauges = Vec::new();
            for (i, &dt) in dts.iter().enumerate() {
                let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 2 - i as u32)?;
                let t = run(m.as_ref(), &datum, Scheme::Do, 1.0, dt, 1, &noise)?;
                for s in &t.snapshots {
                    ortho = ortho.max(ortho_defect(s.u.as_ref().expect("DO snapshot")));
                }
                gauges.push(
                    t.diagnostics
                        .iter()
                        .map(|r| r.gauge_defect)
                        .fold(0.0, f64::max),
                );
            }
            let top = gauges.iter().copied().fold(0.0, f64::max);
            let gauge_part = if top <= GAUGE_FLOOR {
                format!("gauge at roundoff floor (max {top:.1e})")
            } else {
                let slope = log_log_slope(&dts, &gauges)?;
                ok &= slope >= 1.8;
                format!("gauge slope {slope:.3}")
            };
            ok &= ortho <= 1e-10;
            parts.push(format!("{name}: ortho {ortho:.1e}, {gauge_part}"));
        }
        Ok((ok, parts.join("; ")))
    })();
    finish(2, "orthonormality and gauge", start, Some(30.0), out)
}

/// DO and the ambient projected scheme converge to each other.
pub fn check_03() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("linear_lowrank", &[("d", ParamValue::Int(16))])?;
        let n = 512;
        let datum = m.initial_datum(n, 2, SEED)?;
        let dts = [1e-2, 5e-3, 2.5e-3];
        let mut errs = Vec::new();
        for (i, &dt) in dts.iter().enumerate() {
            let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 2 - i as u32)?;
            let a = run(m.as_ref(), &datum, Scheme::Do, 1.0, dt, 1 << i, &noise)?;
            let b = run(m.as_ref(), &datum, Scheme::Ambient, 1.0, dt, 1 << i, &noise)?;
            let mut sup = 0.0f64;
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                sup = sup.max(l2_distance(&sa.x, &sb.x)?);
            }
            errs.push(sup);
        }
        let rate = log_log_slope(&dts, &errs)?;
        Ok((
            rate >= 0.9,
            format!("sup errors {}, rate {rate:.3} (min 0.9)", sci(&errs)),
        ))
    })();
    finish(3, "DO equals ambient DLRA", start, Some(60.0), out)
}

/// Rotating the datum by `Theta` rotates the solution.
pub fn check_04() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("additive_floor", &[("d", ParamValue::Int(6))])?;
        let (n, dt) = (256, 1e-2);
        let (u0, y0) = factored(&m.initial_datum(n, 3, SEED)?);
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        let opts = IntegrateOptions::new(1.0, dt);
        let mut worst = 0.0f64;
        let mut worst_u = 0.0f64;
        for trial in 0..10 {
            let theta = random_rotation(3, SEED + trial);
            let rep = rotation_equivariance_check(m.as_ref(), &u0, &y0, &theta, &noise, &opts)?;
            worst = worst.max(rep.product_defect);
            worst_u = worst_u.max(rep.u_defect.max(rep.y_defect));
        }
        Ok((worst <= 1e-8, format!("10 trials, worst product defect {worst:.3e}, worst factor defect {worst_u:.3e} (tol 1e-8)")))
    })();
    finish(4, "rotation equivariance", start, None, out)
}

/// Picard iterates stay admissible and contract.
pub fn check_05() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("ou", &[])?;
        let n = 256;
        let (u0, y0) = factored(&m.initial_datum(n, 2, SEED)?);
        let bounds = WellPosednessBounds::new(&y0, m.dim(), m.constants().c_lgb, m.horizon())?;
        let opts = PicardOptions::default();
        let noise = BrownianSource::new(
            SEED,
            bounds.delta / opts.substeps as f64,
            n,
            m.noise_dim(),
            0,
        )?;
        let rep = match picard_local_solve(m.as_ref(), &u0, &y0, &noise, bounds.delta, opts) {
            Err(DolrError::PicardLeftBall { iterate, reason }) => {
                return Ok((
                    false,
                    format!("iterate {iterate} left the admissible set: {reason}"),
                ))
            }
            other => other?,
        };
        let in_set = rep.sup_u_sq.iter().all(|v| *v <= rep.bound_u_sq)
            && rep.e_sup_y_sq.iter().all(|v| *v <= rep.bound_y_sq);
        let ratios = rep.ratios();
        let tail = &ratios[1..6];
        let contract = tail.iter().all(|r| *r <= 0.5);
        Ok((
            in_set && contract,
            format!(
                "delta {:.3e}, differences {}, ratios n=2..6 {}, admissible {in_set}",
                rep.delta,
                sci(&rep.differences),
                sci(tail)
            ),
        ))
    })();
    finish(5, "Picard contraction", start, Some(10.0), out)
}

fn datum_for(m: &dyn Sde, n: usize, r: usize) -> Result<InitialDatum, DolrError> {
    m.initial_datum(n, r, SEED)
}

/// Second moments of `Y` and `X` stay below `M(t)`.
pub fn check_06() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let n = 256;
        let mut ok = true;
        let mut parts = Vec::new();
        for name in BUILTINS {
            let m = model(name, &[])?;
            let datum = datum_for(m.as_ref(), n, 2)?;
            let (_, y0) = factored(&datum);
            let horizon = m.horizon();
            let dt = if horizon > 2.0 { 1e-2 } else { 1e-3 };
            let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
            let t = run(m.as_ref(), &datum, Scheme::Do, horizon, dt, 1, &noise)?;
            let e0 = y0.mean_sq_norm();
            let c = m.constants().c_lgb;
            let mut violations = 0;
            let mut worst = 0.0f64;
            for s in &t.snapshots {
                let bound = stability_bound_m(s.t, e0, c)?;
                let ey = s.y.as_ref().expect("DO snapshot").mean_sq_norm();
                let ex = s.x.mean_sq_norm();
                if ey > bound || ex > bound {
                    violations += 1;
                }
                worst = worst.max(ey.max(ex) / bound);
            }
            ok &= violations == 0;
            parts.push(format!(
                "{name}: {violations} violations, worst ratio {worst:.2e}"
            ));
        }
        Ok((ok, parts.join("; ")))
    })();
    finish(6, "stability bounds", start, None, out)
}

/// `E|Y_t|^{2k}` below the moment bound for `k = 1, 2`.
pub fn check_07() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("additive_floor", &[])?;
        let (n, dt) = (1024, 1e-2);
        let datum = datum_for(m.as_ref(), n, 2)?;
        let (_, y0) = factored(&datum);
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        let t = run(m.as_ref(), &datum, Scheme::Do, m.horizon(), dt, 1, &noise)?;
        let c = m.constants().c_lgb;
        let mut ok = true;
        let mut parts = Vec::new();
        for k in [1u32, 2] {
            let series = moment_estimator(&t.snapshots, k)?;
            let e0 = y0.moment(k);
            let mut violations = 0;
            let mut worst = 0.0f64;
            for (time, v) in series.times.iter().zip(&series.y_moments) {
                let b = moment_bound_2k(k, *time, e0, c)?;
                if *v > b {
                    violations += 1;
                }
                worst = worst.max(v / b);
            }
            ok &= violations == 0 && series.max_gap <= 1e-10;
            parts.push(format!(
                "k={k}: {violations} violations, worst ratio {worst:.2e}, |X|/|Y| moment gap {:.1e}",
                series.max_gap
            ));
        }
        Ok((ok, parts.join("; ")))
    })();
    finish(7, "moment bounds", start, None, out)
}

/// Brownian scaling of increments.
pub fn check_08() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("additive_floor", &[])?;
        let (n, dt) = (4096, 1e-3);
        let datum = datum_for(m.as_ref(), n, 2)?;
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        // Snapshots every 4 steps: the smallest gap is 4 dt.
        let t = run(m.as_ref(), &datum, Scheme::Do, 1.0, dt, 4, &noise)?;
        let gaps = [1, 2, 4, 8, 16];
        let k1 = holder_estimator(&t.snapshots, 1, &gaps)?;
        let k2 = holder_estimator(&t.snapshots, 2, &gaps)?;
        let ok = (0.9..=1.3).contains(&k1.slope) && k2.slope >= 1.8;
        Ok((
            ok,
            format!(
                "slope k=1 {:.3} (band [0.9, 1.3]), k=2 {:.3} (min 1.8)",
                k1.slope, k2.slope
            ),
        ))
    })();
    finish(8, "Hölder scaling", start, Some(60.0), out)
}

/// Planted Gram degeneration: detection, level crossings, restart.
pub fn check_09() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("mode_crossing", &[])?;
        let (n, dt) = (256, 1e-3);
        let t_star = m.horizon();
        let datum = datum_for(m.as_ref(), n, 2)?;
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        let opts = IntegrateOptions::new(1.5 * t_star, dt);
        let mut rc = RankControl::new(m.as_ref());
        let t = integrate(m.as_ref(), &datum, Scheme::Do, &opts, &noise, &mut rc)?;
        let ex = detect_explosion(&t.diagnostics, &t.events, None)?;
        let Some(t_e) = ex.t_e else {
            return Ok((false, "no explosion detected".into()));
        };
        let near = (t_e - t_star).abs() <= 0.05;
        let one_event = t.events.len() == 1;

        let levels: Vec<_> = rc
            .crossings()
            .iter()
            .filter(|c| c.which == Which::InvNorm && c.epoch == 0 && c.t < t_e)
            .collect();
        let consecutive = levels.iter().enumerate().all(|(i, c)| c.n == i as u32 + 1)
            && levels.windows(2).all(|w| w[0].t <= w[1].t);
        let rising = match levels.first() {
            Some(first) => t
                .diagnostics
                .iter()
                .filter(|r| r.t >= first.t && r.t < t_e)
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[0].gram_inv_frobenius <= w[1].gram_inv_frobenius),
            None => false,
        };
        let crossings_ok = levels.len() >= 5 && consecutive && rising;

        let (jump_ok, jump_detail) = match t.events.first() {
            Some(e) => {
                let tol = e.discarded_mass.sqrt() + 10.0 * dt;
                let step = (e.t_event / dt).round() as usize;
                let before = t.snapshots.iter().find(|s| s.step == step);
                let after = t.snapshots.iter().find(|s| s.step == step + 1);
                match (before, after) {
                    (Some(b), Some(a)) => {
                        let across = l2_distance(&b.x, &a.x)?;
                        (
                            e.jump <= tol && across <= tol,
                            format!(
                                "rank {}->{}, restart jump {:.2e}, step across event {across:.2e} (tol {tol:.2e})",
                                e.old_rank, e.new_rank, e.jump
                            ),
                        )
                    }
                    _ => (false, "snapshots around the event are missing".into()),
                }
            }
            None => (false, "no rank event".into()),
        };
        Ok((
            near && one_event && crossings_ok && jump_ok,
            format!(
                "T_e {t_e:.4} (t* {t_star}), {} event(s), {} monotone level crossings before T_e, {jump_detail}",
                t.events.len(),
                levels.len()
            ),
        ))
    })();
    finish(9, "explosion and restart", start, None, out)
}

/// Additive noise keeps the Gram matrix away from singularity.
pub fn check_10() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let m = model("additive_floor", &[])?;
        let (n, dt) = (512, 1e-2);
        let datum = datum_for(m.as_ref(), n, 2)?;
        let (_, y0) = factored(&datum);
        let noise = BrownianSource::new(SEED, dt, n, m.noise_dim(), 0)?;
        let t_end = 10.0;
        let t = run(m.as_ref(), &datum, Scheme::Do, t_end, dt, 10, &noise)?;
        let ex = detect_explosion(&t.diagnostics, &t.events, None)?;
        let mut min_lambda = f64::INFINITY;
        let mut worst_margin = f64::INFINITY;
        for r in &t.diagnostics {
            min_lambda = min_lambda.min(r.lambda_min);
            let b = noise_floor_bound(m.as_ref(), &y0, r.t)?;
            if b > 0.0 {
                worst_margin = worst_margin.min(r.lambda_min / (0.5 * b));
            }
        }
        let floor_t = noise_floor_bound(m.as_ref(), &y0, t_end)?;
        let ok = !ex.exploded && worst_margin >= 1.0 && min_lambda >= 0.5 * floor_t;
        Ok((
            ok,
            format!(
                "exploded {}, min lambda_min {min_lambda:.3e}, floor at T {floor_t:.3e}, worst lambda_min/(0.5 floor(t)) {worst_margin:.3e}",
                ex.exploded
            ),
        ))
    })();
    finish(10, "noise floor", start, Some(60.0), out)
}

/// Monotone `eta` and exact projector Lipschitz bounds.
pub fn check_11() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let grid: Vec<f64> = (0..41)
            .map(|i| 10f64.powf(-3.0 + 0.15 * i as f64))
            .collect();
        let mut monotone = true;
        for (i, &rho) in grid.iter().enumerate() {
            for (j, &gamma) in grid.iter().enumerate() {
                let e = eta_radius(rho, gamma)?;
                if i > 0 && e > eta_radius(grid[i - 1], gamma)? {
                    monotone = false;
                }
                if j > 0 && e > eta_radius(rho, grid[j - 1])? {
                    monotone = false;
                }
            }
        }
        let rep = projector_lipschitz_harness(1000, 32, 8, 3, SEED)?;
        let tol = 1.0 + 1e-12;
        let ok = monotone && rep.trials == 1000 && rep.worst() <= tol;
        Ok((
            ok,
            format!(
                "eta monotone on 41x41 grid: {monotone}; {} trials, worst ratios U {:.4} V {:.4} combined {:.4}",
                rep.trials, rep.worst_u_ratio, rep.worst_v_ratio, rep.worst_combined_ratio
            ),
        ))
    })();
    finish(11, "appendix certification", start, None, out)
}

const DETERMINISM_CONFIGS: [&str; 3] = [
    "model.name = linear_lowrank\nrun.N = 1024\nrun.R = 2\nrun.dt = 1e-2\nrun.t_end = 0.5\nrun.seed = 7\n",
    "model.name = additive_floor\nrun.N = 1024\nrun.R = 2\nrun.dt = 1e-2\nrun.t_end = 0.5\nrun.scheme = ambient\n",
    "model.name = mode_crossing\nrun.N = 1024\nrun.dt = 1e-2\nrun.t_end = 1.2\nrun.record_stride = 10\n",
];

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool");
    pool.install(f)
}

/// Same configuration, same bytes, whatever the thread count.
pub fn check_12() -> Check {
    let start = Instant::now();
    let out = (|| -> Outcome {
        let max = std::thread::available_parallelism()
            .map_or(4, |n| n.get())
            .max(2);
        let mut ok = true;
        let mut total_bytes = 0;
        for text in DETERMINISM_CONFIGS {
            let cfg = parse_config(text).map_err(|e| DolrError::BadParams(e.to_string()))?;
            let go =
                || experiments::simulate(&cfg).map_err(|e| DolrError::BadParams(e.to_string()));
            let runs = [
                with_threads(1, go),
                with_threads(1, go),
                with_threads(max, go),
                with_threads(max, go),
            ];
            let mut outputs = Vec::new();
            for r in runs {
                outputs.push(r?);
            }
            total_bytes += outputs[0].iter().map(|(_, b)| b.len()).sum::<usize>();
            ok &= outputs.windows(2).all(|w| w[0] == w[1]);
        }
        Ok((
            ok,
            format!(
                "{} configs x 4 runs at 1 and {max} threads, {total_bytes} bytes each set",
                DETERMINISM_CONFIGS.len()
            ),
        ))
    })();
    finish(12, "determinism", start, None, out)
}

pub const CHECKS: [fn() -> Check; 12] = [
    check_01, check_02, check_03, check_04, check_05, check_06, check_07, check_08, check_09,
    check_10, check_11, check_12,
];

/// Runs every check in order, handing each result to `report` as soon as
/// it is available.
pub fn run_all(mut report: impl FnMut(&Check)) -> Vec<Check> {
    CHECKS
        .iter()
        .map(|c| {
            let check = c();
            report(&check);
            check
        })
        .collect()
}
