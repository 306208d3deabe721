//! Small dense helpers on top of nalgebra. Everything here operates on
//! `R x R` or `d x d` matrices; nothing scales with the number of atoms.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition with a fixed output convention: eigenvalues
/// in non-increasing order (stable, so ties keep index order) and each
/// eigenvector signed so that its first entry of largest magnitude is
/// positive. Columns of the returned matrix are the eigenvectors.
///
/// Uses cyclic Jacobi rotations, which are accurate to a few ulps relative to
/// `|A|` and leave diagonal input untouched.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let (raw, basis) = jacobi(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        raw[j]
            .partial_cmp(&raw[i])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut vals = Vec::with_capacity(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        vals.push(raw[src]);
        let mut v: DVector<f64> = basis.column(src).into_owned();
        fix_sign(v.as_mut_slice());
        vecs.set_column(c, &v);
    }
    (vals, vecs)
}

const JACOBI_MAX_SWEEPS: usize = 64;

fn jacobi(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let small = 100.0 * apq.abs();
                if app.abs() + small == app.abs() && aqq.abs() + small == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let kp = c * akp - s * akq;
                    let kq = s * akp + c * akq;
                    a[(k, p)] = kp;
                    a[(p, k)] = kp;
                    a[(k, q)] = kq;
                    a[(q, k)] = kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    libm::sqrt(a.iter().map(|v| v * v).sum::<f64>())
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let (r, c) = a.shape();
    if r == c && *a == a.transpose() {
        let (vals, _) = sym_eigen(a);
        return vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let gram = if r <= c {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let (vals, _) = sym_eigen(&gram);
    libm::sqrt(vals[0].max(0.0))
}

/// `|A A^T - I|_F` for a matrix meant to have orthonormal rows.
pub fn ortho_defect(u: &DMatrix<f64>) -> f64 {
    let g = u * u.transpose();
    frobenius(&(g - DMatrix::identity(u.nrows(), u.nrows())))
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0))
}

/// `f(A)` for a symmetric positive definite `A` through its eigenbasis.
/// Diagonal inputs take a direct path so that `f(I)` is exactly `f(1) I`.
pub fn spd_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = a.nrows();
    if is_diagonal(a) {
        return DMatrix::from_fn(n, n, |i, j| if i == j { f(a[(i, i)]) } else { 0.0 });
    }
    let (vals, vecs) = sym_eigen(a);
    let mut scaled = vecs.clone();
    for (c, lam) in vals.iter().enumerate() {
        let s = f(*lam);
        scaled.column_mut(c).iter_mut().for_each(|v| *v *= s);
    }
    scaled * vecs.transpose()
}

pub fn spd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spd_function(a, |x| libm::sqrt(x.max(0.0)))
}

pub fn spd_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spd_function(a, |x| 1.0 / libm::sqrt(x))
}

/// Thin QR of the columns of `a` (`n x k`, `k <= n`) by modified Gram-Schmidt
/// with one reorthogonalisation pass. The triangular factor has a positive
/// diagonal, which makes the factorisation unique. Returns `(Q, R)`, or
/// `None` if a column is numerically dependent on the previous ones.
pub fn qr_positive(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, k) = a.shape();
    let mut q = a.clone();
    let mut r = DMatrix::zeros(k, k);
    for j in 0..k {
        let norm0 = q.column(j).norm();
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                r[(i, j)] += proj;
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if !(norm > 1e-14 * norm0.max(f64::MIN_POSITIVE)) || norm == 0.0 {
            return None;
        }
        r[(j, j)] = norm;
        q.column_mut(j).iter_mut().for_each(|v| *v /= norm);
    }
    debug_assert_eq!(q.nrows(), n);
    Some((q, r))
}

/// Uniformly distributed orthogonal matrix from a stream of standard normal
/// draws (QR of a Gaussian matrix with the positive-diagonal convention).
pub fn random_orthogonal(n: usize, mut normal: impl FnMut() -> f64) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| normal());
        if let Some((q, _)) = qr_positive(&g) {
            return q;
        }
    }
}
