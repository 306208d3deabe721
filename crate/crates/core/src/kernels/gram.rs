use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernels::ensemble::EnsembleMatrix;
use crate::kernels::linalg::sym_eigen;

/// Relative invertibility threshold: an eigenvalue counts if it exceeds
/// `EPS_RANK * trace`.
pub const EPS_RANK: f64 = 1e-10;

/// Second-moment matrix `C_Y = E[Y Y^T]` of the stochastic coefficients and
/// the spectral quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub gram: DMatrix<f64>,
    /// Present iff `lambda_min > EPS_RANK * trace`.
    pub inverse: Option<DMatrix<f64>>,
    pub lambda_min: f64,
    /// Smallest singular value of `gram` (equal to `lambda_min` for a PSD matrix).
    pub sigma_r: f64,
    /// `|C_Y^{-1}|_F`, or `+inf` without an inverse.
    pub inv_frobenius: f64,
    pub rank: usize,
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
}

impl GramReport {
    pub fn from_matrix(gram: DMatrix<f64>) -> GramReport {
        let (vals, vecs) = sym_eigen(&gram);
        let trace: f64 = vals.iter().sum();
        let thresh = EPS_RANK * trace;
        let rank = if trace > 0.0 {
            vals.iter().filter(|&&l| l > thresh).count()
        } else {
            0
        };
        let lambda_min = vals.last().copied().unwrap_or(0.0).max(0.0);
        let r = vals.len();
        let invertible = r > 0 && trace > 0.0 && lambda_min > thresh;
        let (inverse, inv_frobenius) = if invertible {
            let mut scaled = vecs.clone();
            for (c, lam) in vals.iter().enumerate() {
                scaled.column_mut(c).iter_mut().for_each(|v| *v /= lam);
            }
            let inv = crate::kernels::linalg::symmetrize(&(scaled * vecs.transpose()));
            let f = libm::sqrt(vals.iter().map(|l| 1.0 / (l * l)).sum::<f64>());
            (Some(inv), f)
        } else {
            (None, f64::INFINITY)
        };
        GramReport {
            gram,
            inverse,
            lambda_min,
            sigma_r: lambda_min,
            inv_frobenius,
            rank,
            eigenvalues: vals,
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse.is_some()
    }
}

/// `C_Y` of an `N x R` ensemble.
pub fn gram(y: &EnsembleMatrix) -> Result<GramReport> {
    y.check_valid()?;
    let c = y.cross_moment(y)?;
    Ok(GramReport::from_matrix(crate::kernels::linalg::symmetrize(
        &c,
    )))
}
