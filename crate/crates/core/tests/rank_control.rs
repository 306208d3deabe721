use dolr_core::integrators::{integrate, DiagnosticsRow, IntegrateOptions, Scheme};
use dolr_core::kernels::{gram, EnsembleMatrix, GramReport};
use dolr_core::models::{builtin, Params};
use dolr_core::paths::{BrownianSource, NormalStream};
use dolr_core::rank_control::{
    detect_explosion, truncate_and_restart, ExplosionMonitor, RankControl, Which,
};
use dolr_core::DolrError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn row(t: f64, inv: f64) -> DiagnosticsRow {
    DiagnosticsRow {
        t,
        gauge_defect: 0.0,
        ortho_defect: 0.0,
        gram_inv_frobenius: inv,
        lambda_min: 1.0 / inv,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restart_jump_equals_discarded_mass(n in 8usize..64, keep in 1usize..4, seed in any::<u64>()) {
        let mut z = NormalStream::new(seed, 0);
        let x = EnsembleMatrix::from_fn(n, 4, |_, j| z.next_normal() / (j + 1) as f64);
        let restart = truncate_and_restart(&x, 0.5, 1e-12, Some(keep)).unwrap();
        let kept = restart.state.rank();
        prop_assert!(kept <= keep);
        // E|X - P X|^2 is the sum of the discarded eigenvalues of E[X X^T].
        let oracle: f64 = restart.spectrum[kept..].iter().sum();
        prop_assert!((restart.jump * restart.jump - oracle).abs() <= 1e-12 * x.mean_sq_norm());
        prop_assert!((restart.discarded_mass - oracle.max(0.0)).abs() <= 1e-12 * x.mean_sq_norm());
        prop_assert_eq!(restart.state.t, 0.5);
    }

    #[test]
    fn levels_are_crossed_in_order(steps in prop::collection::vec(0.0f64..3.0, 1..30)) {
        let base = GramReport::from_matrix(DMatrix::identity(2, 2));
        let mut mon = ExplosionMonitor::new(&base, 1.0, 3, 1.0, 16).unwrap();
        let mut level = 1.0;
        for (k, s) in steps.iter().enumerate() {
            level += s;
            let g = GramReport::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0 / level])));
            mon.update(k as f64, &g, 1.0);
        }
        let inv: Vec<_> = mon.crossed.iter().filter(|c| c.which == Which::InvNorm).collect();
        for (i, c) in inv.iter().enumerate() {
            prop_assert_eq!(c.n, i as u32 + 1);
        }
        prop_assert!(inv.windows(2).all(|w| w[0].t <= w[1].t && w[0].delta_n >= w[1].delta_n));
        for n in 1..=inv.len() as u32 {
            prop_assert!(mon.tau(n).is_some());
        }
    }
}

#[test]
fn exact_low_rank_data_restart_without_jump() {
    let mut z = NormalStream::new(3, 0);
    let y = EnsembleMatrix::from_fn(50, 2, |_, _| z.next_normal());
    let u = DMatrix::from_fn(2, 5, |_, _| z.next_normal());
    let x = y.map_rows(&u.transpose()).unwrap();
    let restart = truncate_and_restart(&x, 0.0, 1e-8, None).unwrap();
    assert_eq!(restart.state.rank(), 2);
    assert!(restart.jump <= 1e-12 * x.mean_sq_norm().sqrt());
    assert!(gram(&restart.state.y).unwrap().is_invertible());
}

#[test]
fn zero_ensemble_cannot_restart() {
    let x = EnsembleMatrix::zeros(10, 3);
    assert!(matches!(
        truncate_and_restart(&x, 0.0, 1e-8, None),
        Err(DolrError::ZeroState)
    ));
}

#[test]
fn explosion_time_comes_from_the_first_blow_up() {
    let rows: Vec<_> = [1.0, 2.0, 1e9, f64::INFINITY]
        .iter()
        .enumerate()
        .map(|(k, v)| row(k as f64 * 0.1, *v))
        .collect();
    let rep = detect_explosion(&rows, &[], None).unwrap();
    assert!(rep.exploded);
    assert_eq!(rep.gamma_max, 1e8);
    assert_eq!(rep.t_e, Some(0.2));
    let calm = detect_explosion(&rows[..2], &[], None).unwrap();
    assert!(!calm.exploded && calm.t_e.is_none());
    assert!(detect_explosion(&[], &[], None).is_err());
}

#[test]
fn mode_crossing_restarts_once_at_the_planted_time() {
    let m = builtin("mode_crossing", &Params::new()).unwrap();
    let t_star = m.horizon();
    let n = 128;
    let dt = 1e-3;
    let datum = m.initial_datum(n, 2, 6).unwrap();
    let noise = BrownianSource::new(6, dt, n, m.noise_dim(), 0).unwrap();
    let opts = IntegrateOptions::new(1.3 * t_star, dt);
    let mut rc = RankControl::new(m.as_ref());
    let t = integrate(m.as_ref(), &datum, Scheme::Do, &opts, &noise, &mut rc).unwrap();
    assert_eq!(t.events.len(), 1);
    let e = &t.events[0];
    assert!((e.t_event - t_star).abs() <= 0.05, "{}", e.t_event);
    assert_eq!((e.old_rank, e.new_rank), (2, 1));
    assert!(t.last().y.as_ref().unwrap().width() == 1);
    assert!(!rc.crossings().is_empty());
}
