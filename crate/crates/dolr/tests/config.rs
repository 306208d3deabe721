use dolr::config::{parse_config, serialize_config, ConfigError, SchemeChoice};
use dolr::output::{config_hash, fmt_f64};
use proptest::prelude::*;

fn model_block() -> impl Strategy<Value = (String, usize)> {
    prop_oneof![
        (0.1f64..5.0, 0.01f64..3.0, 2usize..9).prop_map(|(k, s, d)| {
            (
                format!("model.name = ou\nmodel.kappa = {k:?}\nmodel.sigma = {s:?}\n"),
                d,
            )
        }),
        (
            prop::collection::vec(-4.0f64..-0.1, 2),
            -2.0f64..2.0,
            4usize..12
        )
            .prop_map(|(l, w, d)| {
                let items: Vec<String> = l.iter().map(|v| format!("{v:e}")).collect();
                (
                    format!(
                    "model.name = \"linear_lowrank\"\nmodel.lambdas = [{}]\nmodel.omega = {w}\n",
                    items.join(",")
                ),
                    d,
                )
            }),
        (1.0f64..50.0, 2usize..6)
            .prop_map(|(c, d)| { (format!("model.name = gbm_clipped\nmodel.clip = {c}\n"), d) }),
        (0.5f64..3.0).prop_map(|t| (
            format!("model.name = mode_crossing\nmodel.t_star = {t}\n"),
            4
        )),
        (0.1f64..2.0, 2usize..6).prop_map(|(b, d)| {
            (
                format!("model.name = additive_floor\nmodel.beta = {b}\n"),
                d,
            )
        }),
    ]
}

prop_compose! {
    fn config_text()(
        (model, d) in model_block(),
        n in 2usize..5000,
        r_frac in 0.0f64..1.0,
        dt in 1e-5f64..0.1,
        steps in 1usize..1000,
        seed in any::<u32>(),
        scheme in prop::sample::select(vec!["do", "ambient", "reference", "picard"]),
        stride in 1usize..50,
        level in 0u32..8,
        gamma in prop::option::of(1.0f64..1e12),
        sv in 1e-14f64..1e-2,
        dir in "[a-z0-9_/ .-]{1,20}",
        dump in any::<bool>(),
        comment in any::<bool>(),
    ) -> String {
        let r = 1 + ((d.min(n) - 1) as f64 * r_frac) as usize;
        let r = if model.contains("mode_crossing") { 2 } else { r };
        let mut s = String::new();
        if comment {
            s.push_str("# generated\n\n");
        }
        s.push_str(&model);
        s.push_str(&format!("run.d = {d}\nrun.N = {n}\nrun.R = {r}\nrun.dt = {dt:e}\n"));
        s.push_str(&format!("run.t_end = {:?}   # horizon\n", dt * steps as f64));
        s.push_str(&format!("run.seed = {seed}\nrun.scheme = {scheme}\nrun.record_stride = {stride}\nrun.level = {level}\n"));
        if let Some(g) = gamma {
            s.push_str(&format!("monitor.gamma_max = {g}\n"));
        }
        s.push_str(&format!("monitor.sv_tolerance = {sv:e}\noutput.dir = \"{dir}\"\noutput.dump_paths = {}\n", u8::from(dump)));
        s
    }
}

proptest! {
    #[test]
    fn serialization_round_trips(text in config_text()) {
        let cfg = parse_config(&text).unwrap();
        let canon = serialize_config(&cfg);
        let again = parse_config(&canon).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(serialize_config(&again), canon);
        prop_assert_eq!(config_hash(&again), config_hash(&cfg));
    }

    #[test]
    fn floats_print_losslessly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config("model.name = ou\n").unwrap();
    assert_eq!((cfg.n, cfg.r, cfg.d), (256, 2, 4));
    assert_eq!((cfg.dt, cfg.t_end, cfg.seed), (1e-3, 1.0, 0));
    assert_eq!(cfg.scheme, SchemeChoice::Do);
    assert_eq!(cfg.record_stride, 1);
    assert_eq!(cfg.monitor.n_max, 64);
    assert_eq!(cfg.monitor.gamma_max, None);
    assert_eq!(cfg.output_dir.to_str(), Some("out"));
    assert!(!cfg.dump_paths);
}

#[test]
fn validation_errors_name_the_field() {
    let cases = [
        ("run.dt = -0.1", "dt"),
        ("run.t_end = 0.0001\nrun.dt = 0.01", "t_end"),
        ("run.scheme = rk4", "scheme"),
        ("run.R = 9", "R"),
        ("run.N = 1", "R"),
        ("run.seed = -3", "seed"),
        ("monitor.sv_tolerance = 2.0", "sv_tolerance"),
        ("model.d = 3", "d"),
        ("model.kappa = [1, 2]", "model"),
    ];
    for (line, field) in cases {
        let err = parse_config(&format!("model.name = ou\n{line}\n")).unwrap_err();
        assert_eq!(err.field(), Some(field), "{line}: {err}");
    }
}

#[test]
fn parse_errors_report_the_line() {
    let err = parse_config("model.name = ou\n# fine\nrun.unknown = 3\n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    let err = parse_config("model.name = ou\nrun.N = 1\nrun.N = 2\n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    let err = parse_config("model.name = ou\nrun.dt = [1, \n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
    let err = parse_config("name = ou\n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
}

#[test]
fn missing_model_is_a_validation_error() {
    let err = parse_config("run.N = 10\n").unwrap_err();
    assert!(matches!(err, ConfigError::Validation { .. }));
}
