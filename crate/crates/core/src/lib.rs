//! Parameter estimation for ordinary differential equations from noisy
//! observations.
//!
//! The pipeline is: simulate a registered model ([`dynamics`],
//! [`integrator`]), corrupt its trajectory with white or pink noise
//! ([`noise`]), and recover the parameters by minimizing the weighted
//! least-squares misfit ([`objective`]) with a dogleg trust-region solver
//! ([`trustregion`]). [`harness`] repeats that over noise levels and seeds
//! and renders result tables.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`, which is what the harness uses.

pub mod dynamics;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod noise;
pub mod objective;
pub mod scalar;
pub mod trustregion;

pub use dynamics::{find_model, registry, DynamicsError, ModelSpec};
pub use integrator::{integrate, IntegrateError, Trajectory};
pub use linalg::Matrix;
pub use noise::{corrupt, pink_sequence, white_sequence, MeasurementSet, NoiseKind, NoiseSpec};
pub use objective::{rmse, ObjectiveContext, ObjectiveError, ObjectiveEval};
pub use scalar::Real;
pub use trustregion::{
    minimize, solve_subproblem, Evaluation, Objective, SolveError, SolveReport, Termination,
    TrustRegionConfig, TrustRegionState,
};

pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type MeasurementSet64 = MeasurementSet<f64>;
pub type MeasurementSet32 = MeasurementSet<f32>;
pub type ObjectiveContext64 = ObjectiveContext<f64>;
pub type ObjectiveContext32 = ObjectiveContext<f32>;
pub type TrustRegionConfig64 = TrustRegionConfig<f64>;
pub type TrustRegionConfig32 = TrustRegionConfig<f32>;
pub type SolveReport64 = SolveReport<f64>;
pub type SolveReport32 = SolveReport<f32>;
