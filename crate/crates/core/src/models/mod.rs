//! SDE models `dX = a(t, X) dt + b(t, X) dW` with their structural
//! constants, a small zoo of builtins, and a sampled assumption checker.

mod builtins;
mod validate;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::kernels::linalg::ortho_defect;
use crate::kernels::{gram, EnsembleMatrix};
use crate::paths::NormalStream;

pub use builtins::{
    builtin, AdditiveFloor, GbmClipped, LinearLowRank, ModeCrossing, OrnsteinUhlenbeck, BUILTINS,
};
pub use validate::{validate_assumptions, AssumptionReport};

/// Lipschitz constant, linear-growth constant and noise floor of a model.
/// `sigma_b == 0` means no floor is claimed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub c_lip: f64,
    pub c_lgb: f64,
    pub sigma_b: f64,
}

/// Region on which the declared constants are checked: `t in [0, t_max]`
/// and `x` in the cube `[-radius, radius]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBox {
    pub t_max: f64,
    pub radius: f64,
}

/// Tag of the auxiliary stream used to draw default initial data.
pub const INITIAL_DATUM_TAG: u64 = 1;

pub trait Sde: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// Writes `a(t, x)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Writes `b(t, x)` into `out`, a `d x m` row-major matrix.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn constants(&self) -> Constants;

    /// Time horizon the model is documented on.
    fn horizon(&self) -> f64 {
        1.0
    }

    fn probe_box(&self) -> ProbeBox {
        ProbeBox {
            t_max: self.horizon(),
            radius: 10.0,
        }
    }

    /// Default factored initial datum: `U_0` spans the first `r` axes and
    /// `Y_0` has independent centred Gaussian components with variances
    /// `1, 1/2, ..., 1/r`.
    fn initial_datum(&self, n: usize, r: usize, seed: u64) -> Result<InitialDatum> {
        default_initial_datum(self.dim(), n, r, seed)
    }
}

pub(crate) fn default_initial_datum(
    d: usize,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<InitialDatum> {
    if r == 0 || r > d || n == 0 {
        return Err(DolrError::BadParams(format!(
            "need 1 <= R <= d and N >= 1 (R={r}, d={d}, N={n})"
        )));
    }
    let u0 = DMatrix::from_fn(r, d, |i, j| if i == j { 1.0 } else { 0.0 });
    let mut z = NormalStream::new(seed, INITIAL_DATUM_TAG);
    let y0 = EnsembleMatrix::from_fn(n, r, |_, k| z.next_normal() / libm::sqrt((k + 1) as f64));
    Ok(InitialDatum::Factored { u0, y0 })
}

/// Starting point of a run: either an ensemble in `R^d` or a DO pair.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    Full(EnsembleMatrix),
    Factored {
        u0: DMatrix<f64>,
        y0: EnsembleMatrix,
    },
}

impl InitialDatum {
    /// Checks orthonormal rows of `U_0` and invertibility of `C_{Y_0}` for
    /// factored data, finiteness for full data.
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialDatum::Full(x) => x.check_valid(),
            InitialDatum::Factored { u0, y0 } => {
                y0.check_valid()?;
                if u0.nrows() != y0.width() {
                    return Err(DolrError::ShapeMismatch(format!(
                        "U0 has {} rows, Y0 has {} columns",
                        u0.nrows(),
                        y0.width()
                    )));
                }
                let defect = ortho_defect(u0);
                if !(defect <= 1e-12) {
                    return Err(DolrError::InvalidEnsemble(format!(
                        "U0 rows are not orthonormal (defect {defect:e})"
                    )));
                }
                let g = gram(y0)?;
                if !g.is_invertible() {
                    return Err(DolrError::SingularGram(Box::new(g)));
                }
                Ok(())
            }
        }
    }

    /// The ensemble in `R^d` this datum represents.
    pub fn to_full(&self) -> Result<EnsembleMatrix> {
        match self {
            InitialDatum::Full(x) => Ok(x.clone()),
            InitialDatum::Factored { u0, y0 } => crate::kernels::compose(u0, y0),
        }
    }
}

/// A parameter value as it appears in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    List(Vec<f64>),
    Str(String),
}

pub type Params = BTreeMap<String, ParamValue>;

/// Pulls typed values out of a parameter map and rejects leftovers.
pub(crate) struct ParamReader<'a> {
    params: &'a Params,
    used: Vec<&'a str>,
    model: &'a str,
}

impl<'a> ParamReader<'a> {
    pub(crate) fn new(model: &'a str, params: &'a Params) -> Self {
        Self {
            params,
            used: Vec::new(),
            model,
        }
    }

    fn take(&mut self, key: &'a str) -> Option<&'a ParamValue> {
        self.used.push(key);
        self.params.get(key)
    }

    pub(crate) fn real(&mut self, key: &'a str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(ParamValue::Real(v)) if v.is_finite() => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            Some(other) => Err(DolrError::BadParams(format!(
                "{}: '{key}' must be a real number, got {other:?}",
                self.model
            ))),
        }
    }

    pub(crate) fn usize(&mut self, key: &'a str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(ParamValue::Int(v)) if *v >= 1 => Ok(*v as usize),
            Some(other) => Err(DolrError::BadParams(format!(
                "{}: '{key}' must be a positive integer, got {other:?}",
                self.model
            ))),
        }
    }

    pub(crate) fn list(&mut self, key: &'a str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::List(v)) if v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(ParamValue::Real(v)) => Ok(alloc::vec![*v]),
            Some(other) => Err(DolrError::BadParams(format!(
                "{}: '{key}' must be a list of reals, got {other:?}",
                self.model
            ))),
        }
    }

    pub(crate) fn finish(self) -> Result<()> {
        for key in self.params.keys() {
            if !self.used.contains(&key.as_str()) {
                return Err(DolrError::BadParams(format!(
                    "{}: unknown parameter '{key}'",
                    self.model
                )));
            }
        }
        Ok(())
    }
}

/// A model assembled from closures, mainly for tests and experiments.
pub struct ClosureModel<A, B> {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub drift: A,
    pub diffusion: B,
    pub constants: Constants,
    pub horizon: f64,
}

impl<A, B> Sde for ClosureModel<A, B>
where
    A: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
    B: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    fn constants(&self) -> Constants {
        self.constants
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}
