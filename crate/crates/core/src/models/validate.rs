use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::kernels::linalg::sym_eigen;
use crate::models::{ProbeBox, Sde};
use crate::paths::NormalStream;

/// Largest ratios observed while probing a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `max |a(t,x) - a(t,y)| / |x - y|`.
    pub drift_lipschitz: f64,
    /// `max |b(t,x) - b(t,y)|_F / |x - y|`.
    pub diffusion_lipschitz: f64,
    /// `max (|a|^2 + |b|_F^2) / (1 + |x|^2)`.
    pub growth: f64,
    /// Smallest eigenvalue of `b b^T` seen at any probe.
    pub min_bbt_eigenvalue: f64,
    pub n_probe: usize,
}

const PROBE_TAG: u64 = 2;
const REL_SLACK: f64 = 1e-9;

struct Worst {
    ratio: f64,
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Worst {
    fn new() -> Self {
        Self {
            ratio: 0.0,
            t: 0.0,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    fn offer(&mut self, ratio: f64, t: f64, x: &[f64], y: &[f64]) {
        if ratio > self.ratio || ratio.is_nan() {
            self.ratio = ratio;
            self.t = t;
            self.x = x.to_vec();
            self.y = y.to_vec();
        }
    }

    fn check(self, what: &'static str, declared: f64) -> Result<f64> {
        if self.ratio <= declared * (1.0 + REL_SLACK) + 1e-12 {
            Ok(self.ratio)
        } else {
            Err(DolrError::AssumptionViolated {
                what,
                ratio: self.ratio,
                declared,
                t: self.t,
                x: self.x.into_boxed_slice(),
                y: self.y.into_boxed_slice(),
            })
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// Samples `n_probe` point pairs in `region` (half of them far apart, half
/// at random small separations) and checks the declared Lipschitz, growth
/// and noise-floor constants. Fails with the worst offending pair.
pub fn validate_assumptions(
    model: &dyn Sde,
    region: ProbeBox,
    n_probe: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_probe < 2 {
        return Err(DolrError::InvalidBoundInput(
            "n_probe must be at least 2".into(),
        ));
    }
    let d = model.dim();
    let m = model.noise_dim();
    let c = model.constants();
    let mut rng = NormalStream::new(seed, PROBE_TAG);
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let (mut ax, mut ay) = (vec![0.0; d], vec![0.0; d]);
    let (mut bx, mut by) = (vec![0.0; d * m], vec![0.0; d * m]);
    let mut lip_a = Worst::new();
    let mut lip_b = Worst::new();
    let mut growth = Worst::new();
    let mut min_eig = f64::INFINITY;
    let mut floor_at = (0.0, Vec::new());

    for probe in 0..n_probe {
        let t = region.t_max * rng.next_uniform();
        for v in x.iter_mut() {
            *v = region.radius * (2.0 * rng.next_uniform() - 1.0);
        }
        if probe % 2 == 0 {
            for v in y.iter_mut() {
                *v = region.radius * (2.0 * rng.next_uniform() - 1.0);
            }
        } else {
            let h = region.radius * libm::pow(10.0, -6.0 * rng.next_uniform());
            let dir: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
            let nd = norm(&dir).max(f64::MIN_POSITIVE);
            for i in 0..d {
                y[i] = x[i] + h * dir[i] / nd;
            }
        }
        model.drift(t, &x, &mut ax);
        model.drift(t, &y, &mut ay);
        model.diffusion(t, &x, &mut bx);
        model.diffusion(t, &y, &mut by);

        let sep = dist(&x, &y);
        if sep > 0.0 {
            lip_a.offer(dist(&ax, &ay) / sep, t, &x, &y);
            lip_b.offer(dist(&bx, &by) / sep, t, &x, &y);
        }
        for (p, ap, bp) in [(&x, &ax, &bx), (&y, &ay, &by)] {
            let np = norm(p);
            let g = (norm(ap) * norm(ap) + norm(bp) * norm(bp)) / (1.0 + np * np);
            growth.offer(g, t, p, p);
        }

        let b = DMatrix::from_row_slice(d, m, &bx);
        let (vals, _) = sym_eigen(&(&b * b.transpose()));
        let lo = vals.last().copied().unwrap_or(0.0);
        if lo < min_eig {
            min_eig = lo;
            floor_at = (t, x.clone());
        }
    }

    let report = AssumptionReport {
        drift_lipschitz: lip_a.check("drift Lipschitz", c.c_lip)?,
        diffusion_lipschitz: lip_b.check("diffusion Lipschitz", c.c_lip)?,
        growth: growth.check("linear growth", c.c_lgb)?,
        min_bbt_eigenvalue: min_eig,
        n_probe,
    };
    if c.sigma_b > 0.0 && min_eig < c.sigma_b * (1.0 - REL_SLACK) {
        let x = floor_at.1.into_boxed_slice();
        return Err(DolrError::AssumptionViolated {
            what: "noise floor",
            ratio: min_eig,
            declared: c.sigma_b,
            t: floor_at.0,
            y: x.clone(),
            x,
        });
    }
    Ok(report)
}
