//! Time steppers: full-space Euler-Maruyama, the DO coupled stepper, the
//! ambient projected DLRA stepper, the Picard local solver, and a driver.

mod ambient;
pub(crate) mod do_step;
mod driver;
mod picard;
mod reference;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernels::{compose, EnsembleMatrix};

pub use ambient::step_ambient_dlra;
pub use do_step::{retract, step_do, Retraction};
pub use driver::{
    integrate, DiagnosticsRow, IntegrateOptions, IntegrationHook, NoHook, RankEvent, Scheme,
    Snapshot, Trajectory,
};
pub use picard::{picard_local_solve, PicardIterate, PicardOptions, PicardReport};
pub use reference::step_reference;

/// `X = U^T Y` with `U` (`R x d`) having orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DoState {
    pub t: f64,
    pub u: DMatrix<f64>,
    pub y: EnsembleMatrix,
}

impl DoState {
    pub fn rank(&self) -> usize {
        self.u.nrows()
    }

    pub fn product(&self) -> Result<EnsembleMatrix> {
        compose(&self.u, &self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub t: f64,
    pub x: EnsembleMatrix,
}

/// Per-step defects. `gauge_defect` is `|U_n (U_{n+1} - U_n)^T|_F` and
/// `ortho_defect_pre_retraction` is `|U_raw U_raw^T - I|_F` before the
/// basis is pulled back to orthonormal rows. The Gram quantities refer to
/// the left endpoint of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub gauge_defect: f64,
    pub ortho_defect_pre_retraction: f64,
    pub gram_inv_frobenius: f64,
    pub lambda_min: f64,
    pub dt_used: f64,
}

pub(crate) fn check_step_inputs(
    n_atoms: usize,
    dw: &EnsembleMatrix,
    m: usize,
    dt: f64,
) -> Result<()> {
    use crate::error::DolrError;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DolrError::InvalidBoundInput(alloc::format!("dt = {dt}")));
    }
    if dw.n_atoms() != n_atoms || dw.width() != m {
        return Err(DolrError::ShapeMismatch(alloc::format!(
            "increments are {}x{}, expected {}x{}",
            dw.n_atoms(),
            dw.width(),
            n_atoms,
            m
        )));
    }
    Ok(())
}
