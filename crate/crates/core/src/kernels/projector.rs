use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::kernels::ensemble::EnsembleMatrix;
use crate::kernels::gram::{gram, GramReport, EPS_RANK};
use crate::kernels::linalg::{sym_eigen, symmetrize};

/// Orthogonal projector of `R^d` onto the row space of `U` (`R x d`):
/// `U^T (U U^T)^{-1} U`.
pub fn projector_row(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = GramReport::from_matrix(symmetrize(&(u * u.transpose())));
    let inv = g.inverse.ok_or(DolrError::SingularRowGram)?;
    Ok(symmetrize(&(u.transpose() * inv * u)))
}

/// Stochastic projector onto `span{Y_1..Y_R}` in `L^2`, applied
/// column-wise to `f` (`N x k`): atom `i` maps to `(C_Y^{-1} E[Y f^T])^T Y_i`.
pub fn projector_stochastic(y: &EnsembleMatrix, f: &EnsembleMatrix) -> Result<EnsembleMatrix> {
    let g = gram(y)?;
    apply_stochastic(y, &g, f)
}

/// Same as [`projector_stochastic`] with a precomputed Gram report.
pub fn apply_stochastic(
    y: &EnsembleMatrix,
    g: &GramReport,
    f: &EnsembleMatrix,
) -> Result<EnsembleMatrix> {
    let inv = match &g.inverse {
        Some(inv) => inv,
        None => return Err(DolrError::SingularGram(Box::new(g.clone()))),
    };
    let coef = inv * y.cross_moment(f)?;
    y.map_rows(&coef.transpose())
}

/// Canonical expansion of the second moment `E[X X^T]` of an `N x d`
/// ensemble, truncated to eigenvalues above `rel_tol * trace`.
#[derive(Debug, Clone)]
pub struct SecondMomentSvd {
    /// `d x r`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// Retained eigenvalues, non-increasing.
    pub gammas: Vec<f64>,
    /// `N x r`, `phi_k = gamma_k^{-1/2} X q_k`.
    pub phis: EnsembleMatrix,
    /// All eigenvalues of `E[X X^T]`, non-increasing.
    pub spectrum: Vec<f64>,
}

impl SecondMomentSvd {
    pub fn rank(&self) -> usize {
        self.gammas.len()
    }

    /// Sum of the eigenvalues that were not retained (clamped at zero).
    pub fn discarded_mass(&self) -> f64 {
        self.spectrum[self.rank()..]
            .iter()
            .map(|v| v.max(0.0))
            .sum()
    }
}

pub fn second_moment_svd(x: &EnsembleMatrix) -> Result<SecondMomentSvd> {
    second_moment_svd_with(x, EPS_RANK)
}

pub fn second_moment_svd_with(x: &EnsembleMatrix, rel_tol: f64) -> Result<SecondMomentSvd> {
    x.check_valid()?;
    if !(rel_tol >= 0.0) {
        return Err(DolrError::InvalidBoundInput(format!("tolerance {rel_tol}")));
    }
    let m = symmetrize(&x.cross_moment(x)?);
    let (vals, vecs) = sym_eigen(&m);
    let trace: f64 = vals.iter().sum();
    let r = if trace > 0.0 {
        vals.iter().take_while(|&&l| l > rel_tol * trace).count()
    } else {
        0
    };
    let q = vecs.columns(0, r).into_owned();
    let gammas: Vec<f64> = vals[..r].to_vec();
    let mut map = q.transpose();
    for (k, gk) in gammas.iter().enumerate() {
        let s = 1.0 / libm::sqrt(*gk);
        map.row_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    let phis = x.map_rows(&map)?;
    Ok(SecondMomentSvd {
        q,
        gammas,
        phis,
        spectrum: vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::linalg::frobenius;

    #[test]
    fn axis_projector() {
        let u = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let p = projector_row(&u).unwrap();
        let mut e = DMatrix::zeros(3, 3);
        e[(0, 0)] = 1.0;
        assert!(frobenius(&(p - e)) < 1e-15);
    }

    #[test]
    fn diagonal_direction() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let u = DMatrix::from_row_slice(1, 3, &[s, s, 0.0]);
        let p = projector_row(&u).unwrap();
        let e = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert!(frobenius(&(p - e)) < 1e-15);
    }

    #[test]
    fn dependent_rows_are_rejected() {
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(matches!(projector_row(&u), Err(DolrError::SingularRowGram)));
    }

    #[test]
    fn rank_one_deterministic_ensemble() {
        let v = [3.0, 0.0, 4.0];
        let x = EnsembleMatrix::from_rows(&[&v, &v, &v]).unwrap();
        let s = second_moment_svd(&x).unwrap();
        assert_eq!(s.rank(), 1);
        assert!((s.gammas[0] - 25.0).abs() < 1e-12);
        assert!((s.q[(0, 0)] - 0.6).abs() < 1e-14 && (s.q[(2, 0)] - 0.8).abs() < 1e-14);
        for i in 0..3 {
            assert!((s.phis.get(i, 0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_ensemble_has_empty_expansion() {
        let s = second_moment_svd(&EnsembleMatrix::zeros(4, 3)).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.phis.width(), 0);
    }
}
