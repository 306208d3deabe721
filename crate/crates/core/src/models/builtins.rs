use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{DolrError, Result};
use crate::kernels::EnsembleMatrix;
use crate::models::{
    default_initial_datum, Constants, InitialDatum, ParamReader, Params, Sde, INITIAL_DATUM_TAG,
};
use crate::paths::NormalStream;

pub const BUILTINS: [&str; 5] = [
    "ou",
    "linear_lowrank",
    "gbm_clipped",
    "mode_crossing",
    "additive_floor",
];

/// Instantiates a builtin model. Every builtin accepts an integer `d`.
pub fn builtin(name: &str, params: &Params) -> Result<Box<dyn Sde>> {
    let mut p = ParamReader::new(name, params);
    let model: Box<dyn Sde> = match name {
        "ou" => Box::new(OrnsteinUhlenbeck {
            d: p.usize("d", 4)?,
            kappa: p.real("kappa", 1.0)?,
            sigma: p.real("sigma", 1.0)?,
        }),
        "linear_lowrank" => {
            let d = p.usize("d", 8)?;
            let rank = p.usize("rank", 2)?;
            let lambdas = p.list("lambdas", &[-1.0, -2.0])?;
            let omega = p.real("omega", 1.0)?;
            let sigma = p.real("sigma", 0.5)?;
            Box::new(LinearLowRank::new(d, rank, lambdas, omega, sigma)?)
        }
        "gbm_clipped" => {
            let m = GbmClipped {
                d: p.usize("d", 4)?,
                mu: p.real("mu", 0.05)?,
                sigma: p.real("sigma", 0.2)?,
                clip: p.real("clip", 10.0)?,
            };
            if !(m.clip > 0.0) {
                return Err(DolrError::BadParams(
                    "gbm_clipped: 'clip' must be positive".into(),
                ));
            }
            Box::new(m)
        }
        "mode_crossing" => {
            let m = ModeCrossing {
                d: p.usize("d", 4)?,
                t_star: p.real("t_star", 1.0)?,
                offset: p.real("offset", 1.0)?,
            };
            if m.d < 2 || !(m.t_star > 0.0) || m.offset == 0.0 {
                return Err(DolrError::BadParams(
                    "mode_crossing: need d >= 2, t_star > 0 and a non-zero offset".into(),
                ));
            }
            Box::new(m)
        }
        "additive_floor" => Box::new(AdditiveFloor {
            d: p.usize("d", 4)?,
            kappa: p.real("kappa", 1.0)?,
            beta: p.real("beta", 0.5)?,
            sigma: p.real("sigma", 0.5)?,
        }),
        other => return Err(DolrError::UnknownModel(other.into())),
    };
    p.finish()?;
    if model.constants().c_lgb <= 0.0 {
        return Err(DolrError::BadParams(format!(
            "{name}: parameters give a zero growth constant"
        )));
    }
    Ok(model)
}

/// `dX = -kappa X dt + sigma dW`, `m = d`.
#[derive(Debug, Clone)]
pub struct OrnsteinUhlenbeck {
    pub d: usize,
    pub kappa: f64,
    pub sigma: f64,
}

impl Sde for OrnsteinUhlenbeck {
    fn name(&self) -> &str {
        "ou"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.d
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.kappa * xi;
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.d {
            out[i * self.d + i] = self.sigma;
        }
    }

    fn constants(&self) -> Constants {
        let s2 = self.sigma * self.sigma;
        Constants {
            c_lip: self.kappa.abs(),
            c_lgb: (self.kappa * self.kappa).max(s2 * self.d as f64),
            sigma_b: s2,
        }
    }
}

/// Linear model whose solution started from a rank-`R` datum in the span of
/// the first `R` axes stays exactly rank `R`, inside a subspace that rotates
/// at angular speed `omega`.
///
/// With `Q_t` the rotation by `omega t` in each plane `(k, R + k)`, `k < R`,
/// and `E` the `d x R` matrix of the first `R` axes, the solution is
/// `X_t = Q_t E z_t` where `dz = Lambda z dt + sigma dW`. In ambient form
/// `a(t, x) = (S + Q_t E Lambda E^T Q_t^T) x` and `b(t, x) = sigma Q_t E`,
/// `S` being the generator of `Q_t`. `omega = 0` gives a static subspace.
#[derive(Debug, Clone)]
pub struct LinearLowRank {
    pub d: usize,
    pub lambdas: Vec<f64>,
    pub omega: f64,
    pub sigma: f64,
}

impl LinearLowRank {
    pub fn new(d: usize, rank: usize, lambdas: Vec<f64>, omega: f64, sigma: f64) -> Result<Self> {
        if lambdas.len() != rank {
            return Err(DolrError::BadParams(format!(
                "linear_lowrank: {} eigenvalues for rank {rank}",
                lambdas.len()
            )));
        }
        if 2 * rank > d {
            return Err(DolrError::BadParams(format!(
                "linear_lowrank: d = {d} must be at least 2 * rank = {}",
                2 * rank
            )));
        }
        Ok(Self {
            d,
            lambdas,
            omega,
            sigma,
        })
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    /// Applies `Q_t` (or its transpose when `inverse`) in place.
    pub fn rotate(&self, t: f64, v: &mut [f64], inverse: bool) {
        let r = self.rank();
        let (s, c) = libm::sincos(self.omega * t);
        let s = if inverse { -s } else { s };
        for k in 0..r {
            let (a, b) = (v[k], v[r + k]);
            v[k] = c * a - s * b;
            v[r + k] = s * a + c * b;
        }
    }
}

impl Sde for LinearLowRank {
    fn name(&self) -> &str {
        "linear_lowrank"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.rank()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let r = self.rank();
        let mut w: Vec<f64> = x.to_vec();
        self.rotate(t, &mut w, true);
        for (k, l) in self.lambdas.iter().enumerate() {
            w[k] *= l;
        }
        w[r..].fill(0.0);
        self.rotate(t, &mut w, false);
        out.copy_from_slice(&w);
        for k in 0..r {
            out[k] -= self.omega * x[r + k];
            out[r + k] += self.omega * x[k];
        }
    }

    fn diffusion(&self, t: f64, _x: &[f64], out: &mut [f64]) {
        let r = self.rank();
        let (s, c) = libm::sincos(self.omega * t);
        out.fill(0.0);
        for k in 0..r {
            out[k * r + k] = self.sigma * c;
            out[(r + k) * r + k] = self.sigma * s;
        }
    }

    fn constants(&self) -> Constants {
        let lmax = self.lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let c_lip = self.omega.abs() + lmax;
        Constants {
            c_lip,
            c_lgb: (c_lip * c_lip).max(self.sigma * self.sigma * self.rank() as f64),
            sigma_b: 0.0,
        }
    }
}

/// Componentwise `dX_i = mu X_i dt + sigma clip(X_i) dW_i`, `clip` saturating
/// at `+-clip`.
#[derive(Debug, Clone)]
pub struct GbmClipped {
    pub d: usize,
    pub mu: f64,
    pub sigma: f64,
    pub clip: f64,
}

impl Sde for GbmClipped {
    fn name(&self) -> &str {
        "gbm_clipped"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.d
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.mu * xi;
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.d {
            out[i * self.d + i] = self.sigma * x[i].clamp(-self.clip, self.clip);
        }
    }

    fn constants(&self) -> Constants {
        Constants {
            c_lip: self.mu.abs().max(self.sigma.abs()),
            c_lgb: self.mu * self.mu + self.sigma * self.sigma,
            sigma_b: 0.0,
        }
    }

    fn initial_datum(&self, n: usize, r: usize, seed: u64) -> Result<InitialDatum> {
        // Shifted so that the clipped diffusion is active from the start.
        match default_initial_datum(self.d, n, r, seed)? {
            InitialDatum::Factored { u0, y0 } => {
                let y0 = EnsembleMatrix::from_fn(n, r, |i, k| y0.get(i, k) + 1.0 / (k + 1) as f64);
                Ok(InitialDatum::Factored { u0, y0 })
            }
            full => Ok(full),
        }
    }
}

/// Two stochastic modes driven to collinearity at `t_star`.
///
/// Deterministic constant drift `a = -(offset / t_star) e_2`, no noise. From
/// the datum `U_0 = [e_1; e_2]`, `Y^1 = xi`, `Y^2 = xi + offset`, the DO
/// solution keeps `U` fixed and `Y^2 - Y^1 = offset (1 - t / t_star)`, so
/// `det C_Y = offset^2 (1 - t/t_star)^2 Var(xi)` vanishes at `t_star`.
#[derive(Debug, Clone)]
pub struct ModeCrossing {
    pub d: usize,
    pub t_star: f64,
    pub offset: f64,
}

impl Sde for ModeCrossing {
    fn name(&self) -> &str {
        "mode_crossing"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[1] = -self.offset / self.t_star;
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn constants(&self) -> Constants {
        let v = self.offset / self.t_star;
        Constants {
            c_lip: 0.0,
            c_lgb: v * v,
            sigma_b: 0.0,
        }
    }

    fn horizon(&self) -> f64 {
        self.t_star
    }

    fn initial_datum(&self, n: usize, r: usize, seed: u64) -> Result<InitialDatum> {
        if r != 2 {
            return Err(DolrError::BadParams(format!(
                "mode_crossing needs R = 2, got {r}"
            )));
        }
        if n < 2 {
            return Err(DolrError::BadParams("mode_crossing needs N >= 2".into()));
        }
        let u0 = nalgebra::DMatrix::from_fn(2, self.d, |i, j| if i == j { 1.0 } else { 0.0 });
        let mut z = NormalStream::new(seed, INITIAL_DATUM_TAG);
        let xi: Vec<f64> = (0..n).map(|_| z.next_normal()).collect();
        let y0 = EnsembleMatrix::from_fn(
            n,
            2,
            |i, k| if k == 0 { xi[i] } else { xi[i] + self.offset },
        );
        Ok(InitialDatum::Factored { u0, y0 })
    }
}

/// `dX_i = (-kappa X_i + beta sin X_{i+1}) dt + sigma dW_i` (indices mod d).
/// Additive non-degenerate noise gives the floor `b b^T = sigma^2 I`.
#[derive(Debug, Clone)]
pub struct AdditiveFloor {
    pub d: usize,
    pub kappa: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl Sde for AdditiveFloor {
    fn name(&self) -> &str {
        "additive_floor"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.d
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = -self.kappa * x[i] + self.beta * libm::sin(x[(i + 1) % d]);
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.d {
            out[i * self.d + i] = self.sigma;
        }
    }

    fn constants(&self) -> Constants {
        let l = self.kappa.abs() + self.beta.abs();
        let s2 = self.sigma * self.sigma;
        Constants {
            c_lip: l,
            c_lgb: (l * l).max(s2 * self.d as f64),
            sigma_b: s2,
        }
    }

    fn horizon(&self) -> f64 {
        10.0
    }
}
