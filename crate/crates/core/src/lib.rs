//! Randomized a posteriori error estimation for parametrized linear systems reduced by
//! Galerkin projection.
//!
//! The error `u(μ) − ũ(μ)` is measured in a norm `‖·‖_Σ` and estimated from `K` Gaussian vectors
//! `Z_i ~ N(0, Σ)` through the random dual problems `A(μ)ᵀY_i = Z_i`. The duals are themselves
//! reduced, which gives a fast online estimator `Δ̃(μ)`.
//!
//! All kernels are generic over [`Scalar`] (`f32` or `f64`); the `*F64` aliases below fix the
//! common double-precision case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod covariance;
pub mod dual_greedy;
pub mod error;
pub mod estimator;
pub mod helmholtz;
pub mod io;
pub mod linalg;
pub mod primal;
pub mod scalar;
pub mod sketch;
pub mod special;

pub use covariance::{
    sample_parameters, AffineSystem, CoefficientFn, CovarianceKind, CovarianceSpec, Parameter, ParameterDomain,
    SampleRole, SampleSet, SpdMatrix,
};
pub use dual_greedy::{
    greedy_dual_goal_oriented, greedy_dual_vector, leading_eigenvector, pod_dual_baseline, quantile,
    reference_estimates, CombinationWeight, ReferenceEstimate, DualGreedy, DualNorm, GreedyConfig,
};
pub use error::{Error, Result};
pub use estimator::{
    effectivity_alpha, effectivity_ratio, epsilon_dual_residual, exact_estimator_from_duals,
    exact_estimator_from_truth, solve_random_duals, DualProjector, DualSnapshotMatrix, EstimatorCertificate,
    OnlineEstimator,
};
pub use helmholtz::{
    assemble_helmholtz, assemble_helmholtz_cells, resonance_mu2, CovarianceChoice, HelmholtzDiscretization,
};
pub use linalg::{CsrMatrix, DMatrix};
pub use primal::{
    reduce, residual_dual_norm, residual_vector, solve_reduced, weak_greedy_primal, ColumnSource, GreedyStep,
    PrimalGreedy, ReducedModel, ReducedSolution, ReducedSpace, SpaceStatus,
};
pub use scalar::Scalar;
pub use sketch::{
    chi2_fail_bound, chi2_fail_exact, draw_sketch, select_sample_count, sketch_norm, Sketch, SketchCertificate,
};

pub type ParameterF64 = Parameter<f64>;
pub type SampleSetF64 = SampleSet<f64>;
pub type AffineSystemF64 = AffineSystem<f64>;
pub type SpdMatrixF64 = SpdMatrix<f64>;
pub type CovarianceSpecF64 = CovarianceSpec<f64>;
pub type SketchF64 = Sketch<f64>;
pub type ReducedSpaceF64 = ReducedSpace<f64>;
pub type ReducedModelF64 = ReducedModel<f64>;
pub type OnlineEstimatorF64 = OnlineEstimator<f64>;
pub type HelmholtzF64 = HelmholtzDiscretization<f64>;

pub type ParameterF32 = Parameter<f32>;
pub type AffineSystemF32 = AffineSystem<f32>;
pub type SketchF32 = Sketch<f32>;
pub type HelmholtzF32 = HelmholtzDiscretization<f32>;
