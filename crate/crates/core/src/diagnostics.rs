//! Validators that turn trajectories into numbers: ensemble distances,
//! convergence rates, gauge equivariance, moments, Hölder slopes, rank
//! tracking and an exact check of the projector Lipschitz bounds.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{DolrError, Result};
use crate::integrators::{
    integrate, retract, IntegrateOptions, NoHook, Retraction, Scheme, Snapshot, Trajectory,
};
use crate::kernels::linalg::{
    frobenius, ortho_defect, qr_positive, random_orthogonal, spectral_norm, sym_eigen,
};
use crate::kernels::reduce::pairwise_sum;
use crate::kernels::{second_moment_svd, EnsembleMatrix};
use crate::models::{InitialDatum, Sde};
use crate::paths::{NoiseSource, NormalStream};

/// `sqrt(E|A - B|^2)`.
pub fn l2_distance(a: &EnsembleMatrix, b: &EnsembleMatrix) -> Result<f64> {
    Ok(libm::sqrt(a.sub(b)?.mean_sq_norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub sup_error: f64,
    pub convergence_rate: Option<f64>,
}

/// Distances between two trajectories at the snapshot times they share.
pub fn error_report(a: &Trajectory, b: &Trajectory) -> Result<ErrorReport> {
    let mut times = Vec::new();
    let mut l2_errors = Vec::new();
    let tol = 1e-9 * a.dt.min(b.dt);
    let mut j = 0;
    for sa in &a.snapshots {
        while j < b.snapshots.len() && b.snapshots[j].t < sa.t - tol {
            j += 1;
        }
        if let Some(sb) = b.snapshots.get(j) {
            if (sb.t - sa.t).abs() <= tol {
                times.push(sa.t);
                l2_errors.push(l2_distance(&sa.x, &sb.x)?);
            }
        }
    }
    if times.is_empty() {
        return Err(DolrError::InsufficientData(
            "trajectories share no snapshot time".into(),
        ));
    }
    let sup_error = l2_errors.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport {
        times,
        l2_errors,
        sup_error,
        convergence_rate: None,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(DolrError::InsufficientData(format!(
            "{} points",
            x.len().min(y.len())
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(DolrError::InsufficientData(
            "non-positive value on a log scale".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(DolrError::InsufficientData("all abscissae coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Empirical order from errors at several step sizes; needs at least three.
pub fn convergence_rate(dts: &[f64], errors: &[f64]) -> Result<f64> {
    if dts.len() < 3 {
        return Err(DolrError::InsufficientData(format!(
            "a rate needs 3 step sizes, got {}",
            dts.len()
        )));
    }
    log_log_slope(dts, errors)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivarianceReport {
    /// `sup_t |U'_t - Theta U_t|_F`.
    pub u_defect: f64,
    /// `sup_t |Y'_t - Theta Y_t|` in `[L^2]^R`.
    pub y_defect: f64,
    /// `sup_t` of the distance between the two products.
    pub product_defect: f64,
}

fn rotate_y(y: &EnsembleMatrix, theta: &DMatrix<f64>) -> Result<EnsembleMatrix> {
    y.map_rows(theta)
}

/// Runs the DO scheme from `(U_0, Y_0)` and from `(Theta U_0, Theta Y_0)`
/// on the same noise and measures how far the second run is from the
/// rotated first one.
pub fn rotation_equivariance_check(
    model: &dyn Sde,
    u0: &DMatrix<f64>,
    y0: &EnsembleMatrix,
    theta: &DMatrix<f64>,
    noise: &dyn NoiseSource,
    opts: &IntegrateOptions,
) -> Result<EquivarianceReport> {
    let r = u0.nrows();
    if theta.nrows() != r || theta.ncols() != r {
        return Err(DolrError::ShapeMismatch(format!("Theta must be {r}x{r}")));
    }
    if !(ortho_defect(theta) <= 1e-12) {
        return Err(DolrError::InvalidBoundInput(
            "Theta is not orthogonal".into(),
        ));
    }
    let base = InitialDatum::Factored {
        u0: u0.clone(),
        y0: y0.clone(),
    };
    let rotated = InitialDatum::Factored {
        u0: theta * u0,
        y0: rotate_y(y0, theta)?,
    };
    let a = integrate(model, &base, Scheme::Do, opts, noise, &mut NoHook)?;
    let b = integrate(model, &rotated, Scheme::Do, opts, noise, &mut NoHook)?;
    let mut report = EquivarianceReport {
        u_defect: 0.0,
        y_defect: 0.0,
        product_defect: 0.0,
    };
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        let (ua, ya) = factors(sa)?;
        let (ub, yb) = factors(sb)?;
        report.u_defect = report.u_defect.max(frobenius(&(ub - theta * ua)));
        report.y_defect = report.y_defect.max(l2_distance(yb, &rotate_y(ya, theta)?)?);
        report.product_defect = report.product_defect.max(l2_distance(&sa.x, &sb.x)?);
    }
    Ok(report)
}

fn factors(s: &Snapshot) -> Result<(&DMatrix<f64>, &EnsembleMatrix)> {
    match (&s.u, &s.y) {
        (Some(u), Some(y)) => Ok((u, y)),
        _ => Err(DolrError::InvalidEnsemble(
            "snapshot carries no DO factors".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub k: u32,
    pub times: Vec<f64>,
    /// `E|Y_t|^{2k}`, or `E|X_t|^{2k}` for snapshots without factors.
    pub y_moments: Vec<f64>,
    pub x_moments: Vec<f64>,
    /// Largest relative gap between the two moment series.
    pub max_gap: f64,
}

/// `E|Y_t|^{2k}` at every snapshot, next to `E|X_t|^{2k}`. With orthonormal
/// rows of `U` the two agree.
pub fn moment_estimator(snapshots: &[Snapshot], k: u32) -> Result<MomentSeries> {
    if k == 0 {
        return Err(DolrError::InvalidBoundInput(
            "moment order k must be >= 1".into(),
        ));
    }
    let mut out = MomentSeries {
        k,
        times: Vec::with_capacity(snapshots.len()),
        y_moments: Vec::with_capacity(snapshots.len()),
        x_moments: Vec::with_capacity(snapshots.len()),
        max_gap: 0.0,
    };
    for s in snapshots {
        let mx = s.x.moment(k);
        let my = s.y.as_ref().map_or(mx, |y| y.moment(k));
        let scale = mx.abs().max(my.abs());
        if scale > 0.0 {
            out.max_gap = out.max_gap.max((mx - my).abs() / scale);
        }
        out.times.push(s.t);
        out.x_moments.push(mx);
        out.y_moments.push(my);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    pub k: u32,
    /// Time gaps `h`.
    pub gaps: Vec<f64>,
    /// `E|X_t - X_{t-h}|^{2k}` averaged over `t`.
    pub means: Vec<f64>,
    pub slope: f64,
}

/// Regresses `log E|X_t - X_{t-h}|^{2k}` on `log h`. Snapshots must be
/// equally spaced in time; `gaps` are counted in snapshot intervals and must
/// be dyadic (each twice the previous), at least four of them.
pub fn holder_estimator(snapshots: &[Snapshot], k: u32, gaps: &[usize]) -> Result<HolderFit> {
    if k == 0 {
        return Err(DolrError::InvalidBoundInput(
            "moment order k must be >= 1".into(),
        ));
    }
    if gaps.len() < 4 {
        return Err(DolrError::InsufficientData(format!(
            "{} gap levels, need 4",
            gaps.len()
        )));
    }
    if gaps[0] == 0 || gaps.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(DolrError::InvalidBoundInput(
            "gaps must be dyadic and positive".into(),
        ));
    }
    let last = *gaps.last().expect("checked length");
    if snapshots.len() <= last {
        return Err(DolrError::InsufficientData(format!(
            "{} snapshots for a gap of {last}",
            snapshots.len()
        )));
    }
    let h = snapshots[1].t - snapshots[0].t;
    if snapshots
        .windows(2)
        .any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h)
    {
        return Err(DolrError::InvalidBoundInput(
            "snapshots are not equally spaced".into(),
        ));
    }
    let mut hs = Vec::with_capacity(gaps.len());
    let mut means = Vec::with_capacity(gaps.len());
    for &g in gaps {
        let pairs = snapshots.len() - g;
        let total = pairs_sum(snapshots, g, k)?;
        hs.push(g as f64 * h);
        means.push(total / pairs as f64);
    }
    let slope = log_log_slope(&hs, &means)?;
    Ok(HolderFit {
        k,
        gaps: hs,
        means,
        slope,
    })
}

fn pairs_sum(snapshots: &[Snapshot], g: usize, k: u32) -> Result<f64> {
    let mut total = 0.0;
    for j in g..snapshots.len() {
        total += snapshots[j].x.sub(&snapshots[j - g].x)?.moment(k);
    }
    Ok(total)
}

/// Numerical rank of `E[X_t X_t^T]` at each snapshot.
pub fn second_moment_rank_track(snapshots: &[Snapshot]) -> Result<Vec<usize>> {
    snapshots
        .iter()
        .map(|s| Ok(second_moment_svd(&s.x)?.rank()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub trials: usize,
    /// Worst `|P_U - P_U^|` over `(R / sigma_R) |X - X^|`.
    pub worst_u_ratio: f64,
    /// Worst `|P_V - P_V^|` over `(R / sigma_R) |X - X^|`.
    pub worst_v_ratio: f64,
    /// Worst norm of the difference of `P_U + P_V - P_U P_V` over
    /// `(3R / sigma_R) |X - X^|`.
    pub worst_combined_ratio: f64,
}

impl LipschitzReport {
    pub fn worst(&self) -> f64 {
        self.worst_u_ratio
            .max(self.worst_v_ratio)
            .max(self.worst_combined_ratio)
    }
}

/// Exact norms of the projector differences of one pair of ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorGaps {
    pub sigma_r: f64,
    pub distance: f64,
    pub u_gap: f64,
    pub v_gap: f64,
    pub combined_gap: f64,
}

struct Factors {
    /// `d x R`, orthonormal.
    u: DMatrix<f64>,
    /// `N x R`, orthonormal in the Euclidean sense.
    v: DMatrix<f64>,
    sigma_r: f64,
}

fn leading_factors(a: &DMatrix<f64>, r: usize) -> Result<Factors> {
    let deficient = |found| DolrError::RankDeficient { required: r, found };
    if r > a.nrows().min(a.ncols()) {
        return Err(deficient(a.nrows().min(a.ncols())));
    }
    let (vals, vecs) = sym_eigen(&(a.transpose() * a));
    let sigma_r = libm::sqrt(vals[r - 1].max(0.0));
    if !(sigma_r > 0.0) {
        return Err(deficient(r - 1));
    }
    // One step of subspace iteration removes the squared conditioning of
    // the Gram route.
    let u0 = vecs.columns(0, r).into_owned();
    let orth = |m: DMatrix<f64>| qr_positive(&m).map(|(q, _)| q).ok_or(deficient(r - 1));
    let v = orth(a * u0)?;
    let u = orth(a.transpose() * &v)?;
    let v = orth(a * &u)?;
    Ok(Factors { u, v, sigma_r })
}

/// Orthonormal basis of `span(A) + span(B)` for matrices with orthonormal
/// columns, as `[A, W]` where `W` spans the part of `B` outside `A`.
fn joint_basis(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let rest = b - a * (a.transpose() * b);
    let (vals, vecs) = sym_eigen(&(rest.transpose() * &rest));
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-24).collect();
    let mut w = DMatrix::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = &rest * vecs.column(i) / libm::sqrt(vals[i]);
        w.set_column(c, &col);
    }
    w -= a * (a.transpose() * &w);
    if let Some((q, _)) = qr_positive(&w) {
        w = q;
    }
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + w.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), w.ncols()).copy_from(&w);
    out
}

/// Norms of `P_U - P_U^` on `R^d`, of `P_V - P_V^` on `L^2` and of the
/// difference of `P_U + P_V - P_U P_V` on `L^2(R^d)` for two rank-`r`
/// ensembles. The last operator is `I - Q_V (x) Q_U` with `Q = I - P`; it is
/// reduced to the invariant block `S_V (x) R^d`, where `S_V` is the joint
/// span of both coefficient bases, and the complement of `S_V`, where it
/// acts as `P_U - P_U^`.
pub fn projector_gaps(
    x: &EnsembleMatrix,
    x_hat: &EnsembleMatrix,
    r: usize,
) -> Result<ProjectorGaps> {
    let (n, d) = (x.n_atoms(), x.width());
    if x_hat.n_atoms() != n || x_hat.width() != d {
        return Err(DolrError::ShapeMismatch("ensembles differ in shape".into()));
    }
    if r == 0 || r > n.min(d) {
        return Err(DolrError::InvalidBoundInput(format!(
            "rank {r} for N = {n}, d = {d}"
        )));
    }
    let scale = 1.0 / libm::sqrt(n as f64);
    let a = x.to_dmatrix() * scale;
    let a_hat = x_hat.to_dmatrix() * scale;
    let f = leading_factors(&a, r)?;
    let fh = leading_factors(&a_hat, r)?;
    let pu = &f.u * f.u.transpose();
    let pu_hat = &fh.u * fh.u.transpose();
    let du = &pu - &pu_hat;
    let u_gap = spectral_norm(&du);

    // Both coefficient projectors vanish off the joint span.
    let basis = joint_basis(&f.v, &fh.v);
    let s = basis.ncols();
    let pv_b = basis.transpose() * &f.v;
    let pv_b = &pv_b * pv_b.transpose();
    let pvh_b = basis.transpose() * &fh.v;
    let pvh_b = &pvh_b * pvh_b.transpose();
    let v_gap = spectral_norm(&(&pv_b - &pvh_b));
    let qv = DMatrix::identity(s, s) - pv_b;
    let qvh = DMatrix::identity(s, s) - pvh_b;
    let qu = DMatrix::identity(d, d) - &pu;
    let quh = DMatrix::identity(d, d) - &pu_hat;
    // vec(Q_V Phi Q_U) = (Q_U (x) Q_V) vec(Phi); all factors are symmetric.
    let block = qu.kronecker(&qv) - quh.kronecker(&qvh);
    let mut combined_gap = spectral_norm(&block);
    if n > s {
        combined_gap = combined_gap.max(u_gap);
    }
    Ok(ProjectorGaps {
        sigma_r: f.sigma_r,
        distance: libm::sqrt(x.sub(x_hat)?.mean_sq_norm()),
        u_gap,
        v_gap,
        combined_gap,
    })
}

/// Random rank-`r` pairs `X, X^` with `|X - X^| < sigma_R / R`, checked
/// against the bounds `R / sigma_R` and `3R / sigma_R`. The size of each
/// perturbation is drawn log-uniformly below the admissible radius.
pub fn projector_lipschitz_harness(
    n_trials: usize,
    n: usize,
    d: usize,
    r: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if r == 0 || n < r || d < r {
        return Err(DolrError::InvalidBoundInput(format!(
            "need N >= R and d >= R (R={r})"
        )));
    }
    let mut z = NormalStream::new(seed, 0);
    let mut report = LipschitzReport {
        trials: 0,
        worst_u_ratio: 0.0,
        worst_v_ratio: 0.0,
        worst_combined_ratio: 0.0,
    };
    while report.trials < n_trials {
        let g = EnsembleMatrix::from_fn(n, r, |_, _| z.next_normal());
        let h = DMatrix::from_fn(r, d, |_, _| z.next_normal());
        let dg = EnsembleMatrix::from_fn(n, r, |_, _| z.next_normal());
        let dh = DMatrix::from_fn(r, d, |_, _| z.next_normal());
        let x = compose_factors(&g, &h)?;
        let f = leading_factors(&(x.to_dmatrix() / libm::sqrt(n as f64)), r)?;
        let radius = f.sigma_r / r as f64;
        let target = radius * libm::pow(10.0, -3.0 * z.next_uniform());
        let mut eps = 1.0;
        let mut accepted = None;
        for _ in 0..200 {
            let gh = g.add(&dg.scaled(eps))?;
            let hh = &h + &dh * eps;
            let x_hat = compose_factors(&gh, &hh)?;
            let dist = libm::sqrt(x.sub(&x_hat)?.mean_sq_norm());
            if dist < target {
                accepted = Some(x_hat);
                break;
            }
            eps *= 0.5 * target / dist.max(target);
        }
        let Some(x_hat) = accepted else { continue };
        let gaps = projector_gaps(&x, &x_hat, r)?;
        if gaps.distance == 0.0 || !(gaps.distance < gaps.sigma_r / r as f64) {
            continue;
        }
        let bound = r as f64 / gaps.sigma_r * gaps.distance;
        report.worst_u_ratio = report.worst_u_ratio.max(gaps.u_gap / bound);
        report.worst_v_ratio = report.worst_v_ratio.max(gaps.v_gap / bound);
        report.worst_combined_ratio = report
            .worst_combined_ratio
            .max(gaps.combined_gap / (3.0 * bound));
        report.trials += 1;
    }
    Ok(report)
}

/// `X = G H` for an `N x r` ensemble `G` and an `r x d` matrix `H`.
fn compose_factors(g: &EnsembleMatrix, h: &DMatrix<f64>) -> Result<EnsembleMatrix> {
    g.map_rows(&h.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub eps: f64,
    /// Final-time distance of the products for perturbation size `eps`.
    pub distance: f64,
    /// Same for `eps / 2`.
    pub distance_half: f64,
    /// `distance / eps`.
    pub constant: f64,
    pub constant_half: f64,
}

/// Perturbs the datum to `(retract(U_0 + eps dU), Y_0 + eps dY)`, integrates
/// with common noise, and reports the final distance for `eps` and `eps/2`.
#[allow(clippy::too_many_arguments)]
pub fn initial_data_sensitivity(
    model: &dyn Sde,
    u0: &DMatrix<f64>,
    y0: &EnsembleMatrix,
    du: &DMatrix<f64>,
    dy: &EnsembleMatrix,
    eps: f64,
    noise: &dyn NoiseSource,
    opts: &IntegrateOptions,
) -> Result<SensitivityReport> {
    let base = InitialDatum::Factored {
        u0: u0.clone(),
        y0: y0.clone(),
    };
    let reference = integrate(model, &base, Scheme::Do, opts, noise, &mut NoHook)?;
    let run = |e: f64| -> Result<f64> {
        let (u, _) =
            retract(&(u0 + du * e), Retraction::Polar).ok_or(DolrError::SingularRowGram)?;
        let datum = InitialDatum::Factored {
            u0: u,
            y0: y0.add(&dy.scaled(e))?,
        };
        let t = integrate(model, &datum, Scheme::Do, opts, noise, &mut NoHook)?;
        l2_distance(&t.last().x, &reference.last().x)
    };
    let distance = run(eps)?;
    let distance_half = run(0.5 * eps)?;
    Ok(SensitivityReport {
        eps,
        distance,
        distance_half,
        constant: distance / eps,
        constant_half: distance_half / (0.5 * eps),
    })
}

/// A uniformly distributed `r x r` orthogonal matrix from `seed`.
pub fn random_rotation(r: usize, seed: u64) -> DMatrix<f64> {
    let mut z = NormalStream::new(seed, 3);
    random_orthogonal(r, || z.next_normal())
}

/// `E[sup_t |Y_t|^2]` over a set of DO snapshots.
pub fn expected_sup_sq(snapshots: &[Snapshot]) -> Result<f64> {
    let first = snapshots
        .first()
        .ok_or(DolrError::InsufficientData("no snapshots".into()))?;
    let n = first.x.n_atoms();
    Ok(pairwise_sum(n, |i| {
        snapshots
            .iter()
            .map(|s| {
                let row = s.y.as_ref().map_or(s.x.row(i), |y| y.row(i));
                row.iter().map(|v| v * v).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_hand_computed() {
        let a = EnsembleMatrix::from_rows(&[&[1.0, 2.0], &[0.0, -1.0], &[3.0, 0.5]]).unwrap();
        let b = EnsembleMatrix::from_rows(&[&[0.0, 2.0], &[1.0, 1.0], &[3.0, 0.0]]).unwrap();
        // squared differences: 1 + 0, 1 + 4, 0 + 0.25
        let expect = libm::sqrt(6.25 / 3.0);
        assert!((l2_distance(&a, &b).unwrap() - expect).abs() < 1e-15);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            convergence_rate(&x[..2], &y[..2]),
            Err(DolrError::InsufficientData(_))
        ));
    }

    #[test]
    fn identical_ensembles_have_no_gaps() {
        let mut z = NormalStream::new(5, 0);
        let x = EnsembleMatrix::from_fn(10, 4, |_, _| z.next_normal());
        let g = projector_gaps(&x, &x, 2).unwrap();
        assert!(g.u_gap < 1e-12 && g.v_gap < 1e-12 && g.combined_gap < 1e-12);
    }
}
