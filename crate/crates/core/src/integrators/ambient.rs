use alloc::vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::integrators::{check_step_inputs, step_reference, FullState, StepReport};
use crate::kernels::reduce::{for_each_row_mut, for_each_row_pair_mut};
use crate::kernels::{apply_stochastic, gram, second_moment_svd, EnsembleMatrix};
use crate::models::Sde;

/// One explicit step of the projected dynamics in `R^d`:
/// `X+ = X + [(I - P_U)(P_Y a) + P_U a] dt + P_U b dW`,
/// where `P_U` projects onto the leading `r` eigenvectors of `E[X X^T]` and
/// `P_Y` onto the span of the matching normalised coefficients. Both are
/// rebuilt from the state at the left endpoint.
pub fn step_ambient_dlra(
    model: &dyn Sde,
    state: &FullState,
    r: usize,
    dw: &EnsembleMatrix,
    dt: f64,
) -> Result<(FullState, StepReport)> {
    let (n, d, m) = (state.x.n_atoms(), model.dim(), model.noise_dim());
    if state.x.width() != d || r == 0 || r > d {
        return Err(DolrError::ShapeMismatch(alloc::format!(
            "rank {r} projection of a width-{} state, model dimension {d}",
            state.x.width()
        )));
    }
    check_step_inputs(n, dw, m, dt)?;
    let svd = second_moment_svd(&state.x)?;
    if svd.spectrum.iter().any(|v| !v.is_finite()) {
        return Err(DolrError::NonFiniteState { t: state.t });
    }
    if svd.rank() < r {
        return Err(DolrError::RankDeficient {
            required: r,
            found: svd.rank(),
        });
    }
    let gammas = &svd.gammas[..r];
    let report = StepReport {
        gauge_defect: 0.0,
        ortho_defect_pre_retraction: 0.0,
        gram_inv_frobenius: libm::sqrt(gammas.iter().map(|g| 1.0 / (g * g)).sum::<f64>()),
        lambda_min: gammas[r - 1],
        dt_used: dt,
    };
    if r == d {
        return Ok((step_reference(model, state, dw, dt)?, report));
    }

    let q = svd.q.columns(0, r).into_owned();
    let p_u: DMatrix<f64> = &q * q.transpose();
    let phis = EnsembleMatrix::from_fn(n, r, |i, k| svd.phis.get(i, k));
    let g_phi = gram(&phis)?;

    let t = state.t;
    let mut a_all = EnsembleMatrix::zeros(n, d);
    let mut bdw = EnsembleMatrix::zeros(n, d);
    for_each_row_pair_mut(
        a_all.as_mut_slice(),
        d,
        bdw.as_mut_slice(),
        d,
        |i, arow, nrow| {
            let x = state.x.row(i);
            let dwi = dw.row(i);
            let mut b = vec![0.0; d * m];
            model.drift(t, x, arow);
            model.diffusion(t, x, &mut b);
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..m {
                    s += b[j * m + l] * dwi[l];
                }
                nrow[j] = s;
            }
        },
    );
    let py_a = apply_stochastic(&phis, &g_phi, &a_all)?;

    let mut out = EnsembleMatrix::zeros(n, d);
    for_each_row_mut(out.as_mut_slice(), d, |i, row| {
        let x = state.x.row(i);
        let a = a_all.row(i);
        let pya = py_a.row(i);
        let nz = bdw.row(i);
        for j in 0..d {
            let (mut pu_pya, mut pu_a, mut pu_n) = (0.0, 0.0, 0.0);
            for k in 0..d {
                let p = p_u[(j, k)];
                pu_pya += p * pya[k];
                pu_a += p * a[k];
                pu_n += p * nz[k];
            }
            row[j] = x[j] + ((pya[j] - pu_pya) + pu_a) * dt + pu_n;
        }
    });
    if !out.is_finite() {
        return Err(DolrError::NonFiniteState { t: t + dt });
    }
    Ok((FullState { t: t + dt, x: out }, report))
}
