//! Ensemble linear algebra on the uniform finite sample space and the
//! closed-form bounds used to certify runs.

pub mod bounds;
pub mod ensemble;
pub mod gram;
pub mod linalg;
pub mod projector;
pub mod reduce;

pub use bounds::{
    delta_n, eta_radius, moment_bound_2k, noise_floor_bound, picard_delta, stability_bound_m,
    WellPosednessBounds,
};
pub use ensemble::{compose, EnsembleMatrix};
pub use gram::{gram, GramReport, EPS_RANK};
pub use projector::{
    apply_stochastic, projector_row, projector_stochastic, second_moment_svd,
    second_moment_svd_with, SecondMomentSvd,
};
