use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::kernels::reduce::{for_each_row_mut, pairwise_accumulate, pairwise_sum};

/// Samples of an `R^k`-valued random variable on the uniform N-atom sample
/// space: one row per atom, row-major. The inner product of two columns is
/// `(1/N) sum_i f_i g_i`, i.e. the expectation is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl EnsembleMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            data: vec![0.0; n * k],
        }
    }

    /// Row-major data, `data.len() == n * k`.
    pub fn from_vec(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k {
            return Err(DolrError::ShapeMismatch(format!(
                "{} values for a {}x{} ensemble",
                data.len(),
                n,
                k
            )));
        }
        Ok(Self { n, k, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in rows {
            if r.len() != k {
                return Err(DolrError::ShapeMismatch(format!(
                    "ragged row of length {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            k,
            data,
        })
    }

    pub fn from_fn(n: usize, k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                data.push(f(i, j));
            }
        }
        Self { n, k, data }
    }

    /// Column-stacks an `n x k` nalgebra matrix into ensemble layout.
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.k, &self.data)
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.k + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_valid(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DolrError::InvalidEnsemble("no atoms".into()));
        }
        if !self.is_finite() {
            return Err(DolrError::InvalidEnsemble("non-finite entry".into()));
        }
        Ok(())
    }

    /// `E[|row|^2]`, the squared `[L^2]^k` norm.
    pub fn mean_sq_norm(&self) -> f64 {
        let s = pairwise_sum(self.n, |i| self.row(i).iter().map(|v| v * v).sum::<f64>());
        s / self.n as f64
    }

    /// `E[|row|^{2k}]`.
    pub fn moment(&self, k: u32) -> f64 {
        let s = pairwise_sum(self.n, |i| {
            let sq: f64 = self.row(i).iter().map(|v| v * v).sum();
            libm::pow(sq, k as f64)
        });
        s / self.n as f64
    }

    /// `E[f g^T]` for two ensembles over the same atoms.
    pub fn cross_moment(&self, other: &EnsembleMatrix) -> Result<DMatrix<f64>> {
        if self.n != other.n {
            return Err(DolrError::ShapeMismatch(format!(
                "{} vs {} atoms",
                self.n, other.n
            )));
        }
        let (p, q) = (self.k, other.k);
        let acc = pairwise_accumulate(self.n, p * q, |i, acc| {
            let a = self.row(i);
            let b = other.row(i);
            for (r, ar) in a.iter().enumerate() {
                for (c, bc) in b.iter().enumerate() {
                    acc[r * q + c] += ar * bc;
                }
            }
        });
        let n = self.n as f64;
        Ok(DMatrix::from_row_iterator(
            p,
            q,
            acc.into_iter().map(|v| v / n),
        ))
    }

    /// Per-atom left multiplication: row_i <- M row_i, where M is `k' x k`.
    pub fn map_rows(&self, m: &DMatrix<f64>) -> Result<EnsembleMatrix> {
        if m.ncols() != self.k {
            return Err(DolrError::ShapeMismatch(format!(
                "{}x{} map on width {}",
                m.nrows(),
                m.ncols(),
                self.k
            )));
        }
        let out_k = m.nrows();
        let mut out = EnsembleMatrix::zeros(self.n, out_k);
        for_each_row_mut(&mut out.data, out_k, |i, row| {
            let src = self.row(i);
            for (r, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for (c, v) in src.iter().enumerate() {
                    s += m[(r, c)] * v;
                }
                *o = s;
            }
        });
        Ok(out)
    }

    pub fn sub(&self, other: &EnsembleMatrix) -> Result<EnsembleMatrix> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(EnsembleMatrix {
            n: self.n,
            k: self.k,
            data,
        })
    }

    pub fn add(&self, other: &EnsembleMatrix) -> Result<EnsembleMatrix> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(EnsembleMatrix {
            n: self.n,
            k: self.k,
            data,
        })
    }

    pub fn scaled(&self, s: f64) -> EnsembleMatrix {
        EnsembleMatrix {
            n: self.n,
            k: self.k,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub(crate) fn same_shape(&self, other: &EnsembleMatrix) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(DolrError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n, self.k, other.n, other.k
            )));
        }
        Ok(())
    }
}

/// Builds `X = U^T Y` atom by atom, `U` being `R x d`.
pub fn compose(u: &DMatrix<f64>, y: &EnsembleMatrix) -> Result<EnsembleMatrix> {
    y.map_rows(&u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_moment_is_exact_average() {
        let y = EnsembleMatrix::from_rows(&[&[1.0, 2.0], &[3.0, -1.0]]).unwrap();
        let c = y.cross_moment(&y).unwrap();
        assert_eq!(c[(0, 0)], 5.0);
        assert_eq!(c[(0, 1)], -0.5);
        assert_eq!(c[(1, 1)], 2.5);
    }

    #[test]
    fn rejects_non_finite() {
        let y = EnsembleMatrix::from_rows(&[&[f64::NAN]]).unwrap();
        assert!(matches!(
            y.check_valid(),
            Err(DolrError::InvalidEnsemble(_))
        ));
        assert!(EnsembleMatrix::zeros(0, 2).check_valid().is_err());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(EnsembleMatrix::from_rows(&[&[1.0, 2.0], &[3.0]]).is_err());
    }
}
