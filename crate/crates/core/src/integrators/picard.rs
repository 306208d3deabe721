use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::kernels::linalg::frobenius;
use crate::kernels::reduce::{for_each_row_mut, pairwise_sum};
use crate::kernels::{compose, eta_radius, gram, projector_row, EnsembleMatrix};
use crate::models::Sde;
use crate::paths::NoiseSource;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub n_iters: usize,
    /// Left-point sub-steps per window.
    pub substeps: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            n_iters: 7,
            substeps: 64,
        }
    }
}

/// One Picard iterate on the sub-grid `t_j = j delta / K`, stored as
/// deviations from the datum: `U_j = phi + v[j]`, `Y_j = xi + z[j]`.
/// Keeping deviations keeps the tiny increments of late iterates above the
/// rounding level of the datum itself.
#[derive(Debug, Clone)]
pub struct PicardIterate {
    pub v: Vec<DMatrix<f64>>,
    pub z: Vec<EnsembleMatrix>,
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub delta: f64,
    pub substeps: usize,
    /// `differences[n - 1]` is
    /// `Delta^n = sup_t |U^n - U^{n-1}|_F^2 + E[sup_t |Y^n - Y^{n-1}|^2]`.
    pub differences: Vec<f64>,
    /// `sup_t |U^n|_F^2` for `n = 0..=n_iters`.
    pub sup_u_sq: Vec<f64>,
    /// `E[sup_t |Y^n|^2]` for `n = 0..=n_iters`.
    pub e_sup_y_sq: Vec<f64>,
    /// `sup_t |U^n - phi|_F`.
    pub u_ball: Vec<f64>,
    /// `sup_t |Y^n - xi|` in `[L^2]^R`.
    pub y_ball: Vec<f64>,
    /// `3 R`.
    pub bound_u_sq: f64,
    /// `3 rho^2 + 1`.
    pub bound_y_sq: f64,
    pub eta: f64,
    pub phi: DMatrix<f64>,
    pub xi: EnsembleMatrix,
    pub iterates: Vec<PicardIterate>,
}

impl PicardReport {
    /// `Delta^{n+1} / Delta^n` for `n = 1..`; `0/0` is reported as `0`.
    pub fn ratios(&self) -> Vec<f64> {
        self.differences
            .windows(2)
            .map(|w| if w[1] == 0.0 { 0.0 } else { w[1] / w[0] })
            .collect()
    }

    pub fn u(&self, n: usize, j: usize) -> DMatrix<f64> {
        &self.phi + &self.iterates[n].v[j]
    }

    pub fn y(&self, n: usize, j: usize) -> Result<EnsembleMatrix> {
        self.xi.add(&self.iterates[n].z[j])
    }
}

/// Runs `n_iters` Picard iterations of the integral form of the DO system
/// on `[0, delta]`, starting from the constant pair `(phi, xi)`. Time
/// integrals use the left-point rule on `substeps` cells; the stochastic
/// integral uses the increments of `noise`, whose step must equal
/// `delta / substeps`.
///
/// Each new iterate is checked against the admissible set: `sup |U|_F^2 <=
/// 3R`, `E[sup |Y|^2] <= 3 rho^2 + 1`, and distances to the datum at most
/// `eta`. Leaving it is reported as [`DolrError::PicardLeftBall`].
pub fn picard_local_solve(
    model: &dyn Sde,
    phi: &DMatrix<f64>,
    xi: &EnsembleMatrix,
    noise: &dyn NoiseSource,
    delta: f64,
    opts: PicardOptions,
) -> Result<PicardReport> {
    let (n, r, d, m) = (xi.n_atoms(), xi.width(), model.dim(), model.noise_dim());
    let k = opts.substeps;
    if k == 0 || !(delta > 0.0) {
        return Err(DolrError::InvalidBoundInput(format!(
            "delta = {delta}, substeps = {k}"
        )));
    }
    if phi.nrows() != r || phi.ncols() != d {
        return Err(DolrError::ShapeMismatch(format!(
            "phi is {}x{}, expected {r}x{d}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let h = delta / k as f64;
    if (noise.dt() - h).abs() > 1e-12 * h || noise.n_atoms() != n || noise.channels() != m {
        return Err(DolrError::ShapeMismatch(format!(
            "noise step {} for a sub-step {h}",
            noise.dt()
        )));
    }
    let g0 = gram(xi)?;
    if !g0.is_invertible() {
        return Err(DolrError::SingularGram(Box::new(g0)));
    }
    let rho_sq = xi.mean_sq_norm();
    let rf = libm::sqrt(r as f64);
    let eta = eta_radius(rf, rf)?.min(eta_radius(libm::sqrt(rho_sq), g0.inv_frobenius)?);

    let mut dws = Vec::with_capacity(k);
    for l in 0..k {
        let mut buf = EnsembleMatrix::zeros(n, m);
        noise.increments(l, &mut buf)?;
        dws.push(buf);
    }

    let mut report = PicardReport {
        delta,
        substeps: k,
        differences: Vec::new(),
        sup_u_sq: Vec::new(),
        e_sup_y_sq: Vec::new(),
        u_ball: Vec::new(),
        y_ball: Vec::new(),
        bound_u_sq: 3.0 * r as f64,
        bound_y_sq: 3.0 * rho_sq + 1.0,
        eta,
        phi: phi.clone(),
        xi: xi.clone(),
        iterates: Vec::new(),
    };
    let first = PicardIterate {
        v: vec![DMatrix::zeros(r, d); k + 1],
        z: vec![EnsembleMatrix::zeros(n, r); k + 1],
    };
    record_bounds(&mut report, &first)?;
    report.iterates.push(first);

    for it in 0..opts.n_iters {
        let prev = report.iterates.last().expect("at least the datum");
        let next = picard_map(model, phi, xi, prev, &dws, h)?;
        report.differences.push(difference(prev, &next));
        record_bounds(&mut report, &next)?;
        let iterate = it + 1;
        let (su, sy) = (report.sup_u_sq[iterate], report.e_sup_y_sq[iterate]);
        let (bu, by) = (report.u_ball[iterate], report.y_ball[iterate]);
        let tol = 1.0 + 1e-12;
        let reason = if su > report.bound_u_sq * tol {
            Some(format!("sup |U|_F^2 = {su:e} > {:e}", report.bound_u_sq))
        } else if sy > report.bound_y_sq * tol {
            Some(format!("E[sup |Y|^2] = {sy:e} > {:e}", report.bound_y_sq))
        } else if bu > eta * tol {
            Some(format!("sup |U - phi|_F = {bu:e} > eta = {eta:e}"))
        } else if by > eta * tol {
            Some(format!("sup |Y - xi| = {by:e} > eta = {eta:e}"))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(DolrError::PicardLeftBall { iterate, reason });
        }
        report.iterates.push(next);
    }
    Ok(report)
}

fn picard_map(
    model: &dyn Sde,
    phi: &DMatrix<f64>,
    xi: &EnsembleMatrix,
    prev: &PicardIterate,
    dws: &[EnsembleMatrix],
    h: f64,
) -> Result<PicardIterate> {
    let (n, r, d, m) = (xi.n_atoms(), xi.width(), model.dim(), model.noise_dim());
    let k = dws.len();
    let mut v = Vec::with_capacity(k + 1);
    let mut z = Vec::with_capacity(k + 1);
    v.push(DMatrix::zeros(r, d));
    z.push(EnsembleMatrix::zeros(n, r));
    for l in 0..k {
        let t = l as f64 * h;
        let u = phi + &prev.v[l];
        let y = xi.add(&prev.z[l])?;
        let x = compose(&u, &y)?;
        let mut a_all = EnsembleMatrix::zeros(n, d);
        let mut z_next = z[l].clone();
        {
            let dw = &dws[l];
            let a_buf = a_all.as_mut_slice();
            crate::kernels::reduce::for_each_row_pair_mut(
                z_next.as_mut_slice(),
                r,
                a_buf,
                d,
                |i, zrow, arow| {
                    let xi_row = x.row(i);
                    let mut b = vec![0.0; d * m];
                    model.drift(t, xi_row, arow);
                    model.diffusion(t, xi_row, &mut b);
                    let dwi = dw.row(i);
                    for kk in 0..r {
                        let mut drift = 0.0;
                        for j in 0..d {
                            drift += u[(kk, j)] * arow[j];
                        }
                        let mut noise = 0.0;
                        for c in 0..m {
                            let mut ub = 0.0;
                            for j in 0..d {
                                ub += u[(kk, j)] * b[j * m + c];
                            }
                            noise += ub * dwi[c];
                        }
                        zrow[kk] += drift * h + noise;
                    }
                },
            );
        }
        let g = gram(&y)?;
        let c_inv = match &g.inverse {
            Some(inv) => inv.clone(),
            None => return Err(DolrError::SingularGram(Box::new(g))),
        };
        let p = projector_row(&u)?;
        let gm = y.cross_moment(&a_all)?;
        let incr = c_inv * (&gm - &gm * p) * h;
        v.push(&v[l] + incr);
        z.push(z_next);
    }
    Ok(PicardIterate { v, z })
}

fn difference(prev: &PicardIterate, next: &PicardIterate) -> f64 {
    let sup_v = prev
        .v
        .iter()
        .zip(&next.v)
        .map(|(a, b)| {
            let f = frobenius(&(b - a));
            f * f
        })
        .fold(0.0, f64::max);
    let n = prev.z[0].n_atoms();
    let e_sup = pairwise_sum(n, |i| {
        let mut best = 0.0f64;
        for (a, b) in prev.z.iter().zip(&next.z) {
            let s: f64 = a
                .row(i)
                .iter()
                .zip(b.row(i))
                .map(|(p, q)| (q - p) * (q - p))
                .sum();
            best = best.max(s);
        }
        best
    }) / n as f64;
    sup_v + e_sup
}

fn record_bounds(report: &mut PicardReport, it: &PicardIterate) -> Result<()> {
    let phi = &report.phi;
    let xi = &report.xi;
    let n = xi.n_atoms();
    let mut sup_u = 0.0f64;
    let mut ball_u = 0.0f64;
    for v in &it.v {
        let f = frobenius(&(phi + v));
        sup_u = sup_u.max(f * f);
        ball_u = ball_u.max(frobenius(v));
    }
    let mut ball_y = 0.0f64;
    for z in &it.z {
        ball_y = ball_y.max(libm::sqrt(z.mean_sq_norm()));
    }
    let mut sup_rows = vec![0.0; n];
    for z in &it.z {
        let y = xi.add(z)?;
        for_each_row_mut(&mut sup_rows, 1, |i, s| {
            let v: f64 = y.row(i).iter().map(|q| q * q).sum();
            s[0] = s[0].max(v);
        });
    }
    let e_sup_y = pairwise_sum(n, |i| sup_rows[i]) / n as f64;
    report.sup_u_sq.push(sup_u);
    report.e_sup_y_sq.push(e_sup_y);
    report.u_ball.push(ball_u);
    report.y_ball.push(ball_y);
    Ok(())
}
