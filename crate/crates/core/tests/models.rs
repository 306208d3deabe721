use dolr_core::models::{
    builtin, validate_assumptions, ClosureModel, Constants, InitialDatum, ParamValue, Params,
    BUILTINS,
};
use dolr_core::DolrError;

#[test]
fn builtins_satisfy_their_declared_constants() {
    for name in BUILTINS {
        let m = builtin(name, &Params::new()).unwrap();
        let rep = validate_assumptions(m.as_ref(), m.probe_box(), 400, 1)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        let c = m.constants();
        assert!(rep.growth <= c.c_lgb * (1.0 + 1e-9), "{name}");
        if c.sigma_b > 0.0 {
            assert!(
                rep.min_bbt_eigenvalue >= c.sigma_b * c.sigma_b * (1.0 - 1e-9),
                "{name}"
            );
        }
    }
}

#[test]
fn a_cubic_drift_is_refused() {
    let m = ClosureModel {
        name: "cubic".into(),
        d: 1,
        m: 1,
        drift: |_t: f64, x: &[f64], out: &mut [f64]| out[0] = -x[0] * x[0] * x[0],
        diffusion: |_t: f64, _x: &[f64], out: &mut [f64]| out[0] = 1.0,
        constants: Constants {
            c_lip: 1.0,
            c_lgb: 2.0,
            sigma_b: 0.0,
        },
        horizon: 1.0,
    };
    let region = dolr_core::models::ProbeBox {
        t_max: 1.0,
        radius: 10.0,
    };
    assert!(validate_assumptions(&m, region, 200, 0).is_err());
}

#[test]
fn parameters_are_checked() {
    let mut p = Params::new();
    p.insert("bogus".into(), ParamValue::Real(1.0));
    assert!(matches!(builtin("ou", &p), Err(DolrError::BadParams(_))));
    assert!(matches!(
        builtin("nope", &Params::new()),
        Err(DolrError::UnknownModel(_))
    ));
    let mut p = Params::new();
    p.insert("d".into(), ParamValue::Real(2.5));
    assert!(builtin("ou", &p).is_err());
    let mut p = Params::new();
    p.insert("d".into(), ParamValue::Int(1));
    assert!(builtin("mode_crossing", &p).is_err());
}

#[test]
fn default_initial_data_are_valid() {
    for name in BUILTINS {
        let m = builtin(name, &Params::new()).unwrap();
        // The crossing model plants exactly two modes.
        let ranks = if name == "mode_crossing" {
            2..=2
        } else {
            1..=m.dim().min(3)
        };
        for r in ranks {
            let datum = m.initial_datum(50, r, 9).unwrap();
            datum
                .validate()
                .unwrap_or_else(|e| panic!("{name} R={r}: {e}"));
            assert_eq!(datum, m.initial_datum(50, r, 9).unwrap());
            if let InitialDatum::Factored { u0, y0 } = datum {
                assert_eq!((u0.nrows(), u0.ncols(), y0.width()), (r, m.dim(), r));
            }
        }
        assert!(m.initial_datum(50, m.dim() + 1, 9).is_err());
    }
}
