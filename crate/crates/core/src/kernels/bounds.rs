//! Closed-form scalar bounds: the Picard radius and window, the a-priori
//! second-moment bound, even-moment bounds and the noise-floor bound.

use alloc::format;

use crate::error::{DolrError, Result};
use crate::kernels::ensemble::EnsembleMatrix;
use crate::kernels::gram::gram;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DolrError::InvalidBoundInput(format!(
            "{name} = {v} must be positive and finite"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DolrError::InvalidBoundInput(format!(
            "{name} = {v} must be non-negative and finite"
        )))
    }
}

/// `eta(rho, gamma) = -rho + sqrt(rho^2 + 1/(2 gamma))`.
pub fn eta_radius(rho: f64, gamma: f64) -> Result<f64> {
    positive("rho", rho)?;
    positive("gamma", gamma)?;
    // Rationalised form: same value, no cancellation for large rho.
    let c = 1.0 / (2.0 * gamma);
    Ok(c / (rho + libm::sqrt(rho * rho + c)))
}

/// Length of the Picard existence window.
pub fn picard_delta(r: usize, rho: f64, gamma: f64, d: usize, c_lgb: f64) -> Result<f64> {
    if r == 0 || d == 0 {
        return Err(DolrError::InvalidBoundInput(format!("R = {r}, d = {d}")));
    }
    positive("C_lgb", c_lgb)?;
    let rf = r as f64;
    let eta = eta_radius(libm::sqrt(rf), libm::sqrt(rf))?.min(eta_radius(rho, gamma)?);
    let eta2 = eta * eta;
    let s = 3.0 * rho * rho + 1.0;
    let growth = 1.0 + 3.0 * rf * s;
    let t2 = eta2.min(1.0) / (36.0 * rf * c_lgb * growth);
    let w = libm::sqrt(d as f64) + libm::sqrt(rf);
    let t3 = eta2.min(rf) / (8.0 * gamma * gamma * s * c_lgb * growth * w * w);
    Ok(1f64.min(t2).min(t3))
}

/// Window length after the thresholds `rho_n^2 = E|Y_0|^2 + n` and
/// `gamma_n^2 = |C_{Y_0}^{-1}|_F^2 + n`.
pub fn delta_n(
    n: u32,
    r: usize,
    d: usize,
    e_y0_sq: f64,
    inv_frobenius0: f64,
    c_lgb: f64,
) -> Result<f64> {
    let rho_n = libm::sqrt(e_y0_sq + n as f64);
    let gamma_n = libm::sqrt(inv_frobenius0 * inv_frobenius0 + n as f64);
    picard_delta(r, rho_n, gamma_n, d, c_lgb)
}

/// `M(T) = 3(E|Y_0|^2 + (1+T) T C) exp(3(1+T) T C)`.
pub fn stability_bound_m(t: f64, e_y0_sq: f64, c_lgb: f64) -> Result<f64> {
    non_negative("T", t)?;
    non_negative("E|Y0|^2", e_y0_sq)?;
    non_negative("C_lgb", c_lgb)?;
    let a = (1.0 + t) * t * c_lgb;
    Ok(3.0 * (e_y0_sq + a) * libm::exp(3.0 * a))
}

/// `K_1(T) = 3 k^2 C T / (1 + 1/C)^{k-1}`.
pub fn moment_k1(k: u32, t: f64, c_lgb: f64) -> f64 {
    let kf = k as f64;
    3.0 * kf * kf * c_lgb * t / libm::pow(1.0 + 1.0 / c_lgb, kf - 1.0)
}

/// `K_2(T) = exp(6 k^2 C (1 + 1/C) T)`.
pub fn moment_k2(k: u32, t: f64, c_lgb: f64) -> f64 {
    let kf = k as f64;
    libm::exp(6.0 * kf * kf * c_lgb * (1.0 + 1.0 / c_lgb) * t)
}

/// `(E|Y_0|^{2k} + K_1(T)) K_2(T)`.
pub fn moment_bound_2k(k: u32, t: f64, e_y0_2k: f64, c_lgb: f64) -> Result<f64> {
    if k == 0 {
        return Err(DolrError::InvalidBoundInput(
            "moment order k must be >= 1".into(),
        ));
    }
    non_negative("T", t)?;
    non_negative("E|Y0|^2k", e_y0_2k)?;
    positive("C_lgb", c_lgb)?;
    Ok((e_y0_2k + moment_k1(k, t, c_lgb)) * moment_k2(k, t, c_lgb))
}

/// `min{sigma_Y0, sigma_B^2 / (4 C (1 + M))}`.
pub fn noise_floor_bound(sigma_b: f64, c_lgb: f64, m_t: f64, sigma_y0: f64) -> Result<f64> {
    if sigma_b <= 0.0 {
        return Err(DolrError::NoFloorDeclared);
    }
    positive("C_lgb", c_lgb)?;
    // An overflowed moment constant leaves only the trivial bound.
    if m_t == f64::INFINITY {
        non_negative("sigma_Y0", sigma_y0)?;
        return Ok(0.0);
    }
    non_negative("M", m_t)?;
    non_negative("sigma_Y0", sigma_y0)?;
    Ok(sigma_y0.min(sigma_b * sigma_b / (4.0 * c_lgb * (1.0 + m_t))))
}

/// All bounds attached to an initial datum `(U_0, Y_0)` and a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosednessBounds {
    /// `|Y_0|` in `[L^2]^R`.
    pub rho: f64,
    /// `|C_{Y_0}^{-1}|_F`.
    pub gamma: f64,
    pub eta: f64,
    pub delta: f64,
    pub m_t: f64,
    /// Moment constants for `k = 1`.
    pub k1: f64,
    pub k2: f64,
}

impl WellPosednessBounds {
    pub fn new(y0: &EnsembleMatrix, d: usize, c_lgb: f64, horizon: f64) -> Result<Self> {
        let r = y0.width();
        let g = gram(y0)?;
        if !g.is_invertible() {
            return Err(DolrError::InvalidBoundInput("C_Y0 is singular".into()));
        }
        let e_sq = y0.mean_sq_norm();
        let rho = libm::sqrt(e_sq);
        let gamma = g.inv_frobenius;
        let rf = libm::sqrt(r as f64);
        let eta = eta_radius(rf, rf)?.min(eta_radius(rho, gamma)?);
        Ok(Self {
            rho,
            gamma,
            eta,
            delta: picard_delta(r, rho, gamma, d, c_lgb)?,
            m_t: stability_bound_m(horizon, e_sq, c_lgb)?,
            k1: moment_k1(1, horizon, c_lgb),
            k2: moment_k2(1, horizon, c_lgb),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_hand_values() {
        assert!((eta_radius(1.0, 1.0).unwrap() - 0.2247448714).abs() < 1e-10);
        assert!((eta_radius(2.0, 0.5).unwrap() - 0.2360679775).abs() < 1e-10);
        assert!(eta_radius(0.0, 1.0).is_err());
        assert!(eta_radius(1.0, -1.0).is_err());
    }

    #[test]
    fn m_edge_cases() {
        assert_eq!(stability_bound_m(0.0, 1.0, 5.0).unwrap(), 3.0);
    }

    #[test]
    fn moment_bound_at_zero_time() {
        assert_eq!(moment_bound_2k(1, 0.0, 2.5, 1.0).unwrap(), 2.5);
        assert!(moment_bound_2k(0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn floor_needs_sigma_b() {
        assert!(matches!(
            noise_floor_bound(0.0, 1.0, 1.0, 1.0),
            Err(DolrError::NoFloorDeclared)
        ));
        assert_eq!(noise_floor_bound(1.0, 1.0, 3630.0, 1e-9).unwrap(), 1e-9);
    }
}
