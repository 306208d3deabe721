use alloc::vec;

use crate::error::{DolrError, Result};
use crate::integrators::{check_step_inputs, FullState};
use crate::kernels::reduce::for_each_row_mut;
use crate::kernels::EnsembleMatrix;
use crate::models::Sde;

/// One Euler-Maruyama step of the full-space SDE, atom by atom:
/// `X+ = X + a(t, X) dt + b(t, X) dW`.
pub fn step_reference(
    model: &dyn Sde,
    state: &FullState,
    dw: &EnsembleMatrix,
    dt: f64,
) -> Result<FullState> {
    let (n, d, m) = (state.x.n_atoms(), model.dim(), model.noise_dim());
    if state.x.width() != d {
        return Err(DolrError::ShapeMismatch(alloc::format!(
            "state width {} for a model of dimension {d}",
            state.x.width()
        )));
    }
    check_step_inputs(n, dw, m, dt)?;
    let t = state.t;
    let mut out = EnsembleMatrix::zeros(n, d);
    for_each_row_mut(out.as_mut_slice(), d, |i, row| {
        let x = state.x.row(i);
        let dwi = dw.row(i);
        let mut b = vec![0.0; d * m];
        model.drift(t, x, row);
        model.diffusion(t, x, &mut b);
        for j in 0..d {
            let mut noise = 0.0;
            for l in 0..m {
                noise += b[j * m + l] * dwi[l];
            }
            row[j] = x[j] + row[j] * dt + noise;
        }
    });
    if !out.is_finite() {
        return Err(DolrError::NonFiniteState { t: t + dt });
    }
    Ok(FullState { t: t + dt, x: out })
}
