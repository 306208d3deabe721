use dolr_core::kernels::linalg::{
    frobenius, ortho_defect, qr_positive, random_orthogonal, spd_inv_sqrt, spd_sqrt, spectral_norm,
    sym_eigen,
};
use dolr_core::paths::NormalStream;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn planted(n: usize, seed: u64, spread: f64) -> (Vec<f64>, DMatrix<f64>) {
    let mut z = NormalStream::new(seed, 0);
    let q = random_orthogonal(n, || z.next_normal());
    let lams: Vec<f64> = (0..n)
        .map(|_| spread * (2.0 * z.next_uniform() - 1.0))
        .collect();
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lams.clone())) * q.transpose();
    (lams, (&a + a.transpose()) * 0.5)
}

/// Largest singular value by power iteration on `A^T A`.
fn power_norm(a: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * a;
    let mut v = DMatrix::from_element(m.nrows(), 1, 1.0);
    let mut lam = 0.0;
    for _ in 0..5000 {
        let w = &m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = w / norm;
    }
    lam.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_recovers_planted_spectrum(n in 1usize..24, seed in any::<u64>(), spread in 1e-3f64..1e3) {
        let (mut lams, a) = planted(n, seed, spread);
        let (vals, vecs) = sym_eigen(&a);
        lams.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let scale = spread.max(frobenius(&a));
        for (v, l) in vals.iter().zip(&lams) {
            prop_assert!((v - l).abs() <= 1e-13 * scale * n as f64);
        }
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let recon = &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals.clone())) * vecs.transpose();
        prop_assert!(frobenius(&(recon - &a)) <= 1e-13 * scale * n as f64);
        prop_assert!(ortho_defect(&vecs.transpose()) <= 1e-13 * n as f64);
    }

    #[test]
    fn eigenvector_sign_convention(n in 1usize..10, seed in any::<u64>()) {
        let (_, a) = planted(n, seed, 5.0);
        let (_, vecs) = sym_eigen(&a);
        for c in 0..n {
            let col = vecs.column(c);
            let big = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let first = col.iter().find(|v| v.abs() == big).unwrap();
            prop_assert!(*first > 0.0);
        }
    }

    #[test]
    fn spectral_norm_matches_power_iteration(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let mut z = NormalStream::new(seed, 2);
        let a = DMatrix::from_fn(rows, cols, |_, _| z.next_normal());
        let s = spectral_norm(&a);
        let oracle = power_norm(&a);
        prop_assert!((s - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", s, oracle);
        prop_assert!(s <= frobenius(&a) * (1.0 + 1e-14));
    }

    #[test]
    fn qr_is_a_positive_factorisation(rows in 1usize..9, extra in 0usize..4, seed in any::<u64>()) {
        let cols = rows.saturating_sub(extra).max(1);
        let mut z = NormalStream::new(seed, 3);
        let a = DMatrix::from_fn(rows, cols, |_, _| z.next_normal());
        let (q, r) = qr_positive(&a).expect("Gaussian columns are independent");
        prop_assert!(frobenius(&(&q * &r - &a)) <= 1e-13 * frobenius(&a));
        prop_assert!(ortho_defect(&q.transpose()) <= 1e-13);
        for i in 0..cols {
            prop_assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn spd_roots_are_consistent(n in 1usize..8, seed in any::<u64>()) {
        let mut z = NormalStream::new(seed, 4);
        let g = DMatrix::from_fn(n, n + 2, |_, _| z.next_normal());
        let a = &g * g.transpose();
        let s = spd_sqrt(&a);
        let si = spd_inv_sqrt(&a);
        prop_assert!(frobenius(&(&s * &s - &a)) <= 1e-12 * frobenius(&a));
        prop_assert!(frobenius(&(&s * &si - DMatrix::identity(n, n))) <= 1e-10);
    }
}

#[test]
fn diagonal_input_is_returned_exactly() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, 7.25, -1.5, 7.25]));
    let (vals, vecs) = sym_eigen(&a);
    assert_eq!(vals, vec![7.25, 7.25, 0.3, -1.5]);
    let perm = [1usize, 3, 0, 2];
    for (c, &src) in perm.iter().enumerate() {
        for i in 0..4 {
            assert_eq!(vecs[(i, c)], if i == src { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn rank_deficient_spectrum_has_exact_zeros_to_roundoff() {
    let mut z = NormalStream::new(17, 0);
    let g = DMatrix::from_fn(12, 3, |_, _| z.next_normal());
    let a = &g * g.transpose();
    let (vals, vecs) = sym_eigen(&a);
    for v in &vals[3..] {
        assert!(v.abs() <= 1e-13 * vals[0]);
    }
    let recon = &vecs
        * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals.clone()))
        * vecs.transpose();
    assert!(frobenius(&(recon - &a)) <= 1e-13 * frobenius(&a));
}

#[test]
fn empty_inputs() {
    let (vals, vecs) = sym_eigen(&DMatrix::zeros(0, 0));
    assert!(vals.is_empty() && vecs.is_empty());
    assert_eq!(spectral_norm(&DMatrix::zeros(0, 3)), 0.0);
}
