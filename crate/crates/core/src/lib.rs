//! Rare-event simulation for integrals of smooth Gaussian random fields.
//!
//! The crate estimates tail probabilities of the form
//! `v(b) = P( ∫_T exp{ sigma f(t) + mu(t) } dt > b )` for a centered,
//! unit-variance, smooth stationary Gaussian field `f` on a hyperrectangle
//! `T`, at thresholds where the event is far too rare for plain Monte Carlo.
//!
//! The pipeline:
//!
//! 1. [`model`] describes the field: domain, scale, covariance, mean, and
//!    the regularity conditions the method needs.
//! 2. [`moments`] derives the spectral-moment matrices of the jet
//!    `(f, grad f, Hess f)` at a point; [`lattice`] discretizes the domain;
//!    [`law`] assembles and factorizes the joint jet law on the lattice.
//! 3. [`measure`] builds the mixture change of measure around the tail
//!    level and prices each draw with an exact log-space likelihood ratio.
//! 4. [`estimator`] replicates, aggregates, and reports: tail estimates
//!    with standard errors, conditional expectations on the rare event,
//!    closed-form tail asymptotics, and consistency diagnostics.
//!
//! Replication is deterministic by construction: replicate `k` of seed `s`
//! reads RNG stream `k + 1`, and all reductions are sequential, so results
//! are bit-identical for any worker count.

pub mod error;
pub mod estimator;
pub mod lattice;
pub mod law;
pub mod math;
pub mod measure;
pub mod model;
pub mod moments;

pub use error::{GrfError, Result};
pub use estimator::{
    aggregate_is, asymptotic_tail, choose_resolution, conditional_expectation, crude_mc,
    estimate_is, plan_replicates, run_is_replicates, sup_diagnostic, threshold_for_target,
    AsymptoticRegime, BranchCounts, ConditionalEstimate, CrudeEstimate, Functional, Instance,
    IsEstimate, IsReplicate, SupDiagnostic, TailAsymptotic,
};
pub use lattice::{build_lattice, Lattice};
pub use law::{build_joint_law, AnchorMode, JointFieldSample, JointLaw};
pub use measure::{
    compute_b_t, compute_normalizers, localization_weights, log_weight, measure_params, solve_u,
    MeasureParams, MixtureBranch, MixtureDraw, Tuning, TuningSource, TUNING_CLAMP,
};
pub use model::{
    check_conditions, standardize_hessian, ConditionCheck, ConditionReport, CovarianceSpec,
    CustomCovariance, CustomMean, Domain, FieldModel, MeanSpec, StandardizedModel,
};
pub use moments::{spectral_moments, SpectralMoments};
