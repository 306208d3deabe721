use dolr_core::kernels::EnsembleMatrix;
use dolr_core::paths::{generate, normal_quantile, BrownianSource, NoiseSource};
use proptest::prelude::*;

fn step(src: &BrownianSource, step: usize) -> EnsembleMatrix {
    let mut out = EnsembleMatrix::zeros(src.n_atoms(), src.channels());
    src.increments(step, &mut out).unwrap();
    out
}

/// Lower tail of the standard normal through the complementary error function.
fn lower_tail(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

proptest! {
    #[test]
    fn quantile_inverts_the_cdf(p in 1e-12f64..0.5) {
        let q = normal_quantile(p);
        prop_assert!((lower_tail(q) - p).abs() <= 1e-13 * p);
        prop_assert!((normal_quantile(1.0 - p) + q).abs() <= 1e-9 * q.abs().max(1.0));
    }

    #[test]
    fn coarse_increments_are_sums_of_fine_ones(seed in any::<u64>(), level in 0u32..5, k in 0usize..20) {
        let dt = 0.01;
        let coarse = BrownianSource::new(seed, dt, 5, 2, level + 1).unwrap();
        let fine = BrownianSource::new(seed, dt / 2.0, 5, 2, level).unwrap();
        let c = step(&coarse, k);
        let f0 = step(&fine, 2 * k);
        let f1 = step(&fine, 2 * k + 1);
        for i in 0..c.as_slice().len() {
            prop_assert_eq!(c.as_slice()[i], f0.as_slice()[i] + f1.as_slice()[i]);
        }
    }

    #[test]
    fn materialised_path_matches_the_lazy_source(seed in any::<u64>(), level in 0u32..3) {
        let src = BrownianSource::new(seed, 0.1, 4, 3, level).unwrap();
        let path = generate(seed, 6, 0.1, 4, 3, level).unwrap();
        for k in 0..6 {
            let lazy = step(&src, k);
            prop_assert_eq!(lazy.as_slice(), path.step_slice(k));
        }
    }
}

#[test]
fn increments_are_reproducible_and_seed_dependent() {
    let a = BrownianSource::new(9, 0.01, 16, 2, 1).unwrap();
    let b = BrownianSource::new(9, 0.01, 16, 2, 1).unwrap();
    let c = BrownianSource::new(10, 0.01, 16, 2, 1).unwrap();
    assert_eq!(step(&a, 3), step(&b, 3));
    assert_ne!(step(&a, 3), step(&c, 3));
    assert_ne!(step(&a, 3), step(&a, 4));
}

#[test]
fn increments_have_brownian_moments() {
    let dt = 0.04;
    let src = BrownianSource::new(2024, dt, 2000, 3, 2).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_4 = 0.0;
    let mut count = 0.0;
    for k in 0..20 {
        for v in step(&src, k).as_slice() {
            sum += v;
            sum_sq += v * v;
            sum_4 += v.powi(4);
            count += 1.0;
        }
    }
    let mean = sum / count;
    let var = sum_sq / count;
    // Five standard errors for mean, variance and fourth moment.
    assert!(mean.abs() < 5.0 * (dt / count).sqrt());
    assert!((var - dt).abs() < 5.0 * dt * (2.0 / count).sqrt());
    assert!((sum_4 / count - 3.0 * dt * dt).abs() < 5.0 * dt * dt * (96.0 / count).sqrt());
}

#[test]
fn shape_mismatch_is_rejected() {
    let src = BrownianSource::new(1, 0.1, 4, 2, 0).unwrap();
    let mut out = EnsembleMatrix::zeros(3, 2);
    assert!(src.increments(0, &mut out).is_err());
    assert!(BrownianSource::new(1, 0.0, 4, 2, 0).is_err());
    assert!(BrownianSource::new(1, 0.1, 4, 2, 31).is_err());
}
