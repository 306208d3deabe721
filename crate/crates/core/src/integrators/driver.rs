use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::integrators::do_step::step_do_with_gram;
use crate::integrators::{step_ambient_dlra, step_reference, DoState, FullState, Retraction};
use crate::kernels::{gram, second_moment_svd, EnsembleMatrix, GramReport};
use crate::models::{InitialDatum, Sde};
use crate::paths::NoiseSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Reference,
    Do,
    Ambient,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Reference => "reference",
            Scheme::Do => "do",
            Scheme::Ambient => "ambient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub dt: f64,
    /// A snapshot is kept every `record_stride` steps, plus the first and last.
    pub record_stride: usize,
    pub retraction: Retraction,
    /// Projection rank of the ambient scheme; defaults to the rank of the
    /// initial datum.
    pub rank: Option<usize>,
}

impl IntegrateOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            record_stride: 1,
            retraction: Retraction::Polar,
            rank: None,
        }
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(DolrError::InvalidBoundInput(format!(
                "t_end = {}, dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(libm::round(self.t_end / self.dt) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub x: EnsembleMatrix,
    pub u: Option<DMatrix<f64>>,
    pub y: Option<EnsembleMatrix>,
}

/// Per-step diagnostics, evaluated at the left endpoint `t` of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub gauge_defect: f64,
    /// Defect of the basis before retraction.
    pub ortho_defect: f64,
    pub gram_inv_frobenius: f64,
    pub lambda_min: f64,
}

/// Rank reduction performed when the stochastic Gram matrix degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEvent {
    pub t_event: f64,
    /// Eigenvalues of `E[X X^T]` at the event, non-increasing.
    pub singular_values: Vec<f64>,
    pub old_rank: usize,
    pub new_rank: usize,
    pub discarded_mass: f64,
    pub inv_norm_at_event: f64,
    pub x_snapshot: EnsembleMatrix,
    /// `sqrt(E|X - X'|^2)` between the state before and after the restart.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub events: Vec<RankEvent>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("a trajectory always holds its initial snapshot")
    }
}

/// Callbacks of the DO driver. The default implementation observes nothing
/// and lets a singular Gram matrix abort the run.
pub trait IntegrationHook {
    fn observe(&mut self, _t: f64, _gram: &GramReport, _y_norm: f64) {}

    fn is_explosion(&self, gram: &GramReport) -> bool {
        gram.inverse.is_none()
    }

    /// Returns the state to continue from, or `None` to give up.
    fn on_explosion(
        &mut self,
        _t: f64,
        _state: &DoState,
        _gram: &GramReport,
    ) -> Result<Option<(DoState, RankEvent)>> {
        Ok(None)
    }
}

pub struct NoHook;

impl IntegrationHook for NoHook {}

fn snapshot_do(step: usize, s: &DoState) -> Result<Snapshot> {
    Ok(Snapshot {
        step,
        t: s.t,
        x: s.product()?,
        u: Some(s.u.clone()),
        y: Some(s.y.clone()),
    })
}

fn snapshot_full(step: usize, s: &FullState) -> Snapshot {
    Snapshot {
        step,
        t: s.t,
        x: s.x.clone(),
        u: None,
        y: None,
    }
}

/// Integrates from `initial` on `[0, t_end]` with the chosen scheme. The
/// time of step `n` is exactly `n dt`. Factored data are composed into
/// `R^d` for the reference and ambient schemes; full data are factored by
/// their second-moment expansion for the DO scheme.
pub fn integrate(
    model: &dyn Sde,
    initial: &InitialDatum,
    scheme: Scheme,
    opts: &IntegrateOptions,
    noise: &dyn NoiseSource,
    hook: &mut dyn IntegrationHook,
) -> Result<Trajectory> {
    let n_steps = opts.n_steps()?;
    let dt = opts.dt;
    let stride = opts.record_stride.max(1);
    if n_steps > 0 && (noise.dt() - dt).abs() > 1e-12 * dt {
        return Err(DolrError::ShapeMismatch(format!(
            "noise step {} differs from dt {dt}",
            noise.dt()
        )));
    }
    initial.validate()?;
    let keep = |n: usize| n.is_multiple_of(stride) || n == n_steps;
    let mut traj = Trajectory {
        scheme,
        dt,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        events: Vec::new(),
    };
    let n_atoms = match initial {
        InitialDatum::Full(x) => x.n_atoms(),
        InitialDatum::Factored { y0, .. } => y0.n_atoms(),
    };
    let mut dw = EnsembleMatrix::zeros(n_atoms, model.noise_dim());

    match scheme {
        Scheme::Do => {
            let mut state = match initial {
                InitialDatum::Factored { u0, y0 } => DoState {
                    t: 0.0,
                    u: u0.clone(),
                    y: y0.clone(),
                },
                InitialDatum::Full(x) => factor_full(x)?,
            };
            traj.snapshots.push(snapshot_do(0, &state)?);
            for n in 0..n_steps {
                let mut g = gram(&state.y)?;
                hook.observe(state.t, &g, libm::sqrt(state.y.mean_sq_norm()));
                if hook.is_explosion(&g) {
                    match hook.on_explosion(state.t, &state, &g)? {
                        Some((restarted, event)) => {
                            traj.events.push(event);
                            state = restarted;
                            g = gram(&state.y)?;
                        }
                        None => return Err(DolrError::SingularGram(Box::new(g))),
                    }
                }
                noise.increments(n, &mut dw)?;
                let (mut next, report) =
                    step_do_with_gram(model, &state, &g, &dw, dt, opts.retraction)?;
                traj.diagnostics.push(DiagnosticsRow {
                    t: state.t,
                    gauge_defect: report.gauge_defect,
                    ortho_defect: report.ortho_defect_pre_retraction,
                    gram_inv_frobenius: report.gram_inv_frobenius,
                    lambda_min: report.lambda_min,
                });
                next.t = (n + 1) as f64 * dt;
                state = next;
                if keep(n + 1) {
                    traj.snapshots.push(snapshot_do(n + 1, &state)?);
                }
            }
        }
        Scheme::Reference | Scheme::Ambient => {
            let x0 = initial.to_full()?;
            let rank = match (opts.rank, initial) {
                (Some(r), _) => r,
                (None, InitialDatum::Factored { u0, .. }) => u0.nrows(),
                (None, InitialDatum::Full(x)) => second_moment_svd(x)?.rank(),
            };
            let mut state = FullState { t: 0.0, x: x0 };
            traj.snapshots.push(snapshot_full(0, &state));
            for n in 0..n_steps {
                noise.increments(n, &mut dw)?;
                let (mut next, row) = if scheme == Scheme::Ambient {
                    let (next, report) = step_ambient_dlra(model, &state, rank, &dw, dt)?;
                    let row = DiagnosticsRow {
                        t: state.t,
                        gauge_defect: 0.0,
                        ortho_defect: 0.0,
                        gram_inv_frobenius: report.gram_inv_frobenius,
                        lambda_min: report.lambda_min,
                    };
                    (next, row)
                } else {
                    let g = gram(&state.x)?;
                    let row = DiagnosticsRow {
                        t: state.t,
                        gauge_defect: 0.0,
                        ortho_defect: 0.0,
                        gram_inv_frobenius: g.inv_frobenius,
                        lambda_min: g.lambda_min,
                    };
                    (step_reference(model, &state, &dw, dt)?, row)
                };
                traj.diagnostics.push(row);
                next.t = (n + 1) as f64 * dt;
                state = next;
                if keep(n + 1) {
                    traj.snapshots.push(snapshot_full(n + 1, &state));
                }
            }
        }
    }
    Ok(traj)
}

/// Factors a full ensemble through its second-moment expansion:
/// `U` = retained eigenvectors as rows, `Y = U X`.
pub(crate) fn factor_full(x: &EnsembleMatrix) -> Result<DoState> {
    let svd = second_moment_svd(x)?;
    if svd.rank() == 0 {
        return Err(DolrError::ZeroState);
    }
    let u = svd.q.transpose();
    let y = x.map_rows(&u)?;
    Ok(DoState { t: 0.0, u, y })
}
