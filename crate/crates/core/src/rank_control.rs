//! Explosion monitoring for the DO system and rank reduction by truncating
//! the second-moment expansion of the approximation.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::integrators::{DiagnosticsRow, DoState, IntegrationHook};
use crate::kernels::{delta_n, gram, second_moment_svd_with, EnsembleMatrix, GramReport};
use crate::models::Sde;

pub use crate::integrators::RankEvent;

/// Relative threshold below which eigenvalues of `E[X X^T]` are dropped.
pub const DEFAULT_SV_TOLERANCE: f64 = 1e-8;
/// `Gamma_max` as a multiple of the initial `|C_Y^{-1}|_F`.
pub const DEFAULT_GAMMA_FACTOR: f64 = 1e8;
pub const DEFAULT_N_MAX: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `|C_Y^{-1}|_F` reached its base value plus `n`.
    InvNorm,
    /// `|Y|` in `[L^2]^R` reached its base value plus `n`.
    YNorm,
}

/// First time a level `n` was reached, with the local-existence window
/// `delta(n)` valid after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub n: u32,
    pub t: f64,
    pub which: Which,
    pub delta_n: f64,
    pub epoch: u32,
}

/// Tracks the stopping times `tau_n` of the DO system: the first time
/// `|C_Y^{-1}|_F >= |C_{Y_0}^{-1}|_F + n` or `|Y| >= |Y_0| + n`. A singular
/// Gram matrix counts as every remaining inverse level being crossed.
#[derive(Debug, Clone)]
pub struct ExplosionMonitor {
    pub base_inv_norm: f64,
    pub base_y_norm: f64,
    pub n_max: u32,
    pub crossed: Vec<Crossing>,
    r: usize,
    d: usize,
    c_lgb: f64,
    epoch: u32,
    next_inv: u32,
    next_y: u32,
}

impl ExplosionMonitor {
    pub fn new(base: &GramReport, y_norm: f64, d: usize, c_lgb: f64, n_max: u32) -> Result<Self> {
        if base.inverse.is_none() {
            return Err(DolrError::InvalidBoundInput(
                "initial Gram matrix is singular".into(),
            ));
        }
        Ok(Self {
            base_inv_norm: base.inv_frobenius,
            base_y_norm: y_norm,
            n_max,
            crossed: Vec::new(),
            r: base.gram.nrows(),
            d,
            c_lgb,
            epoch: 0,
            next_inv: 1,
            next_y: 1,
        })
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    fn certificate(&self, n: u32) -> f64 {
        let e_sq = self.base_y_norm * self.base_y_norm;
        delta_n(n, self.r, self.d, e_sq, self.base_inv_norm, self.c_lgb).unwrap_or(0.0)
    }

    pub fn update(&mut self, t: f64, g: &GramReport, y_norm: f64) {
        let inv = if g.inverse.is_some() {
            g.inv_frobenius
        } else {
            f64::INFINITY
        };
        while self.next_inv <= self.n_max && inv >= self.base_inv_norm + self.next_inv as f64 {
            let n = self.next_inv;
            self.push(n, t, Which::InvNorm);
            self.next_inv += 1;
        }
        while self.next_y <= self.n_max && y_norm >= self.base_y_norm + self.next_y as f64 {
            let n = self.next_y;
            self.push(n, t, Which::YNorm);
            self.next_y += 1;
        }
    }

    fn push(&mut self, n: u32, t: f64, which: Which) {
        let delta_n = self.certificate(n);
        self.crossed.push(Crossing {
            n,
            t,
            which,
            delta_n,
            epoch: self.epoch,
        });
    }

    /// `tau_n` of the current epoch: the earlier of the two crossings.
    pub fn tau(&self, n: u32) -> Option<f64> {
        self.crossed
            .iter()
            .filter(|c| c.n == n && c.epoch == self.epoch)
            .map(|c| c.t)
            .reduce(f64::min)
    }

    /// Starts a new epoch from a restarted state.
    pub fn rebase(&mut self, base: &GramReport, y_norm: f64) -> Result<()> {
        if base.inverse.is_none() {
            return Err(DolrError::InvalidBoundInput(
                "restarted Gram matrix is singular".into(),
            ));
        }
        self.base_inv_norm = base.inv_frobenius;
        self.base_y_norm = y_norm;
        self.r = base.gram.nrows();
        self.epoch += 1;
        self.next_inv = 1;
        self.next_y = 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplosionReport {
    pub exploded: bool,
    /// Estimated explosion time: the first restart, or the first row whose
    /// `|C_Y^{-1}|_F` reached `gamma_max` or stopped being finite.
    pub t_e: Option<f64>,
    pub gamma_max: f64,
}

/// Scans per-step diagnostics (and any restart events) for a blow-up of
/// `|C_Y^{-1}|_F`. `gamma_max` defaults to `1e8` times the first row.
pub fn detect_explosion(
    rows: &[DiagnosticsRow],
    events: &[RankEvent],
    gamma_max: Option<f64>,
) -> Result<ExplosionReport> {
    let first = rows
        .first()
        .ok_or(DolrError::InsufficientData("no diagnostics rows".into()))?;
    let gamma_max = gamma_max.unwrap_or(DEFAULT_GAMMA_FACTOR * first.gram_inv_frobenius);
    let from_rows = rows
        .iter()
        .find(|r| !(r.gram_inv_frobenius < gamma_max))
        .map(|r| r.t);
    let from_events = events.first().map(|e| e.t_event);
    let t_e = match (from_rows, from_events) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(ExplosionReport {
        exploded: t_e.is_some(),
        t_e,
        gamma_max,
    })
}

#[derive(Debug, Clone)]
pub struct Restart {
    pub state: DoState,
    /// Eigenvalues of `E[X X^T]`, non-increasing.
    pub spectrum: Vec<f64>,
    pub discarded_mass: f64,
    /// `sqrt(E|X - U'^T Y'|^2)`.
    pub jump: f64,
}

/// Re-factors `X` on its leading eigenvectors: `U'` holds those above
/// `sv_tolerance * trace` as rows (at most `max_rank` of them) and
/// `Y' = U' X`.
pub fn truncate_and_restart(
    x: &EnsembleMatrix,
    t: f64,
    sv_tolerance: f64,
    max_rank: Option<usize>,
) -> Result<Restart> {
    let svd = second_moment_svd_with(x, sv_tolerance)?;
    let keep = max_rank.map_or(svd.rank(), |m| m.min(svd.rank()));
    if keep == 0 {
        return Err(DolrError::ZeroState);
    }
    let u: DMatrix<f64> = svd.q.columns(0, keep).transpose();
    let y = x.map_rows(&u)?;
    let state = DoState { t, u, y };
    let jump = libm::sqrt(x.sub(&state.product()?)?.mean_sq_norm());
    let discarded_mass = svd.spectrum[keep..].iter().map(|v| v.max(0.0)).sum();
    Ok(Restart {
        state,
        spectrum: svd.spectrum,
        discarded_mass,
        jump,
    })
}

/// Driver hook: monitors the stopping times, and when the Gram matrix
/// degenerates restarts from the truncated expansion of `X` with a rank at
/// least one lower.
#[derive(Debug, Clone)]
pub struct RankControl {
    pub n_max: u32,
    pub gamma_factor: f64,
    /// Absolute `Gamma_max`; overrides `gamma_factor` when set.
    pub gamma_max: Option<f64>,
    pub sv_tolerance: f64,
    pub monitor: Option<ExplosionMonitor>,
    d: usize,
    c_lgb: f64,
}

impl RankControl {
    pub fn new(model: &dyn Sde) -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            gamma_factor: DEFAULT_GAMMA_FACTOR,
            gamma_max: None,
            sv_tolerance: DEFAULT_SV_TOLERANCE,
            monitor: None,
            d: model.dim(),
            c_lgb: model.constants().c_lgb,
        }
    }

    pub fn threshold(&self) -> f64 {
        match (self.gamma_max, &self.monitor) {
            (Some(g), _) => g,
            (None, Some(m)) => self.gamma_factor * m.base_inv_norm,
            (None, None) => f64::INFINITY,
        }
    }

    pub fn crossings(&self) -> &[Crossing] {
        self.monitor.as_ref().map_or(&[], |m| &m.crossed)
    }
}

impl IntegrationHook for RankControl {
    fn observe(&mut self, t: f64, g: &GramReport, y_norm: f64) {
        match &mut self.monitor {
            Some(m) => m.update(t, g, y_norm),
            None => {
                self.monitor =
                    ExplosionMonitor::new(g, y_norm, self.d, self.c_lgb, self.n_max).ok();
            }
        }
    }

    fn is_explosion(&self, g: &GramReport) -> bool {
        g.inverse.is_none() || !(g.inv_frobenius < self.threshold())
    }

    fn on_explosion(
        &mut self,
        t: f64,
        state: &DoState,
        g: &GramReport,
    ) -> Result<Option<(DoState, RankEvent)>> {
        let old_rank = state.rank();
        if old_rank <= 1 {
            return Ok(None);
        }
        let x = state.product()?;
        let restart = truncate_and_restart(&x, t, self.sv_tolerance, Some(old_rank - 1))?;
        let new_gram = gram(&restart.state.y)?;
        let y_norm = libm::sqrt(restart.state.y.mean_sq_norm());
        match &mut self.monitor {
            Some(m) => m.rebase(&new_gram, y_norm)?,
            None => {
                self.monitor = Some(ExplosionMonitor::new(
                    &new_gram, y_norm, self.d, self.c_lgb, self.n_max,
                )?)
            }
        }
        let inv_norm_at_event = if g.inverse.is_some() {
            g.inv_frobenius
        } else {
            f64::INFINITY
        };
        let event = RankEvent {
            t_event: t,
            singular_values: restart.spectrum.clone(),
            old_rank,
            new_rank: restart.state.rank(),
            discarded_mass: restart.discarded_mass,
            inv_norm_at_event,
            x_snapshot: x,
            jump: restart.jump,
        };
        if !new_gram.is_invertible() {
            return Err(DolrError::InvalidEnsemble(format!(
                "restart at t = {t} produced a singular Gram matrix"
            )));
        }
        Ok(Some((restart.state, event)))
    }
}

/// Lower bound on `lambda_min(C_{Y_t})` for a model with a declared noise
/// floor, evaluated with the stability constant `M(t)` of the horizon `t`.
pub fn noise_floor_bound(model: &dyn Sde, y0: &EnsembleMatrix, t: f64) -> Result<f64> {
    let c = model.constants();
    let g = gram(y0)?;
    let m_t = crate::kernels::stability_bound_m(t, y0.mean_sq_norm(), c.c_lgb)?;
    crate::kernels::noise_floor_bound(c.sigma_b, c.c_lgb, m_t, g.lambda_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(diag: &[f64]) -> GramReport {
        GramReport::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            diag,
        )))
    }

    #[test]
    fn monitor_levels_and_singular_gram() {
        let base = report(&[1.0, 1.0]);
        let mut m = ExplosionMonitor::new(&base, 1.0, 4, 1.0, 5).unwrap();
        let b = m.base_inv_norm;
        assert!((b - libm::sqrt(2.0)).abs() < 1e-15);
        m.update(0.1, &report(&[1.0, 0.4]), 1.0);
        // |C^{-1}|_F = sqrt(1 + 6.25) ~ 2.69 crosses level 1 only.
        assert_eq!(m.crossed.len(), 1);
        assert_eq!(m.tau(1), Some(0.1));
        m.update(0.2, &report(&[1.0, 0.0]), 3.5);
        let inv: Vec<u32> = m
            .crossed
            .iter()
            .filter(|c| c.which == Which::InvNorm)
            .map(|c| c.n)
            .collect();
        assert_eq!(inv, [1, 2, 3, 4, 5]);
        let y: Vec<u32> = m
            .crossed
            .iter()
            .filter(|c| c.which == Which::YNorm)
            .map(|c| c.n)
            .collect();
        assert_eq!(y, [1, 2]);
        for w in m.crossed.windows(2) {
            if w[0].which == w[1].which {
                assert!(w[1].delta_n <= w[0].delta_n);
            }
        }
    }

    #[test]
    fn truncation_of_rank_one_ensemble() {
        let x = EnsembleMatrix::from_fn(4, 3, |i, j| {
            let s = [1.0, -1.0, 2.0, -2.0][i];
            s * [1.0, 2.0, 2.0][j] / 3.0
        });
        let r = truncate_and_restart(&x, 0.5, 1e-8, None).unwrap();
        assert_eq!(r.state.rank(), 1);
        assert!(r.jump < 1e-14);
        assert!(r.discarded_mass < 1e-14);
        let zero = EnsembleMatrix::zeros(4, 3);
        assert!(matches!(
            truncate_and_restart(&zero, 0.0, 1e-8, None),
            Err(DolrError::ZeroState)
        ));
    }

    #[test]
    fn explosion_from_rows() {
        let row = |t: f64, g: f64| DiagnosticsRow {
            t,
            gauge_defect: 0.0,
            ortho_defect: 0.0,
            gram_inv_frobenius: g,
            lambda_min: 0.0,
        };
        let rows = [
            row(0.0, 1.0),
            row(0.1, 10.0),
            row(0.2, 2e8),
            row(0.3, f64::INFINITY),
        ];
        let r = detect_explosion(&rows, &[], None).unwrap();
        assert!(r.exploded);
        assert_eq!(r.t_e, Some(0.2));
        let calm = detect_explosion(&rows[..2], &[], None).unwrap();
        assert!(!calm.exploded);
    }
}
