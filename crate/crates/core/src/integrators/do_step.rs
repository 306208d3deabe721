use alloc::boxed::Box;
use alloc::vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::integrators::{check_step_inputs, DoState, StepReport};
use crate::kernels::linalg::{
    frobenius, ortho_defect, qr_positive, spd_inv_sqrt, spd_sqrt, symmetrize,
};
use crate::kernels::reduce::for_each_row_pair_mut;
use crate::kernels::{gram, EnsembleMatrix, GramReport};
use crate::models::Sde;

/// How the updated basis is pulled back to orthonormal rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retraction {
    /// `U+ = (U_raw U_raw^T)^{-1/2} U_raw`, the closest matrix with
    /// orthonormal rows. Commutes with rotations `U -> Theta U`.
    #[default]
    Polar,
    /// `U+ = Q^T` from the thin QR `U_raw^T = Q T` with `diag(T) > 0`.
    Qr,
}

/// Retracts `u_raw` and returns `(U+, L)` with `U_raw = L U+`, so that
/// `U_raw^T Y = U+^T (L^T Y)`. `L` is `None` when it is exactly the identity.
pub fn retract(
    u_raw: &DMatrix<f64>,
    kind: Retraction,
) -> Option<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    match kind {
        Retraction::Polar => {
            let m = symmetrize(&(u_raw * u_raw.transpose()));
            if m == DMatrix::identity(m.nrows(), m.ncols()) {
                return Some((u_raw.clone(), None));
            }
            let p = spd_sqrt(&m);
            let p_inv = spd_inv_sqrt(&m);
            Some((&p_inv * u_raw, Some(p)))
        }
        Retraction::Qr => {
            let (q, t) = qr_positive(&u_raw.transpose())?;
            Some((q.transpose(), Some(t.transpose())))
        }
    }
}

/// One explicit step of the DO system: Euler-Maruyama for `Y`, explicit
/// Euler for `U`, both with coefficients frozen at the left endpoint,
/// followed by a retraction of `U`. The factor of the retraction is moved
/// into `Y`, so `U^T Y` is unaffected by it.
///
/// Fails with [`DolrError::SingularGram`] when `C_Y` has no inverse; the
/// input state is left untouched in that case.
pub fn step_do(
    model: &dyn Sde,
    state: &DoState,
    dw: &EnsembleMatrix,
    dt: f64,
    retraction: Retraction,
) -> Result<(DoState, StepReport)> {
    let g = gram(&state.y)?;
    step_do_with_gram(model, state, &g, dw, dt, retraction)
}

pub(crate) fn step_do_with_gram(
    model: &dyn Sde,
    state: &DoState,
    g: &GramReport,
    dw: &EnsembleMatrix,
    dt: f64,
    retraction: Retraction,
) -> Result<(DoState, StepReport)> {
    let (n, r, d, m) = (
        state.y.n_atoms(),
        state.rank(),
        model.dim(),
        model.noise_dim(),
    );
    if state.u.ncols() != d || state.y.width() != r {
        return Err(DolrError::ShapeMismatch(alloc::format!(
            "U is {}x{}, Y has width {}, model dimension {d}",
            state.u.nrows(),
            state.u.ncols(),
            state.y.width()
        )));
    }
    check_step_inputs(n, dw, m, dt)?;
    let c_inv = match &g.inverse {
        Some(inv) => inv,
        None => return Err(DolrError::SingularGram(Box::new(g.clone()))),
    };

    let u = &state.u;
    let t = state.t;
    let mut y_new = EnsembleMatrix::zeros(n, r);
    let mut a_all = EnsembleMatrix::zeros(n, d);
    for_each_row_pair_mut(
        y_new.as_mut_slice(),
        r,
        a_all.as_mut_slice(),
        d,
        |i, yrow, arow| {
            let yi = state.y.row(i);
            let dwi = dw.row(i);
            let mut x = vec![0.0; d];
            for (j, xj) in x.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..r {
                    s += u[(k, j)] * yi[k];
                }
                *xj = s;
            }
            let mut b = vec![0.0; d * m];
            model.drift(t, &x, arow);
            model.diffusion(t, &x, &mut b);
            for k in 0..r {
                let mut drift = 0.0;
                for j in 0..d {
                    drift += u[(k, j)] * arow[j];
                }
                let mut noise = 0.0;
                for l in 0..m {
                    let mut ub = 0.0;
                    for j in 0..d {
                        ub += u[(k, j)] * b[j * m + l];
                    }
                    noise += ub * dwi[l];
                }
                yrow[k] = yi[k] + drift * dt + noise;
            }
        },
    );

    // dU/dt = C^{-1} E[Y a^T] (I - U^T U)
    let gm = state.y.cross_moment(&a_all)?;
    let u_dot = c_inv * (&gm - (&gm * u.transpose()) * u);
    let u_raw = u + &u_dot * dt;
    let ortho_pre = ortho_defect(&u_raw);
    let (u_new, factor) =
        retract(&u_raw, retraction).ok_or(DolrError::NonFiniteState { t: t + dt })?;
    let y_new = match factor {
        Some(l) => y_new.map_rows(&l.transpose())?,
        None => y_new,
    };
    if !y_new.is_finite() || u_new.iter().any(|v| !v.is_finite()) {
        return Err(DolrError::NonFiniteState { t: t + dt });
    }
    let report = StepReport {
        gauge_defect: frobenius(&(u * (&u_new - u).transpose())),
        ortho_defect_pre_retraction: ortho_pre,
        gram_inv_frobenius: g.inv_frobenius,
        lambda_min: g.lambda_min,
        dt_used: dt,
    };
    Ok((
        DoState {
            t: t + dt,
            u: u_new,
            y: y_new,
        },
        report,
    ))
}
