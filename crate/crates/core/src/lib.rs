//! Extended-input PINN solver for parabolic and Oseen moving-interface
//! problems, with learned level sets and kernel diagnostics.
//!
//! The solution network takes `(x, t, z)` where `z` is derived from a level
//! set of the moving interface, so one smooth network can represent a
//! solution whose value or flux jumps across the interface. Training is a
//! Levenberg-Marquardt solve over the stacked residuals.

pub mod error;
pub mod extension;
pub mod geometry;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod model;
pub mod net;
pub mod ntk;
pub mod pipeline;
pub mod problem;
pub mod residuals;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use extension::{ExtensionKind, InputLayout, Quantity, ZInfo};
pub use geometry::{CompositeLevelSet, FlowMap, InitialLevelSet, LevelSet, LevelSetSample, RigidMotion, TrajectoryTable};
pub use lm::{Damping, LeastSquares, LmConfig, LmTrace, StopReason};
pub use metrics::ErrorReport;
pub use model::Solution;
pub use net::{Activation, JetSpec, Mlp};
pub use ntk::{NtkComparison, NtkReport};
pub use pipeline::{FlowMapConfig, LevelSetOutcome, SolverConfig, TrainOutcome};
pub use problem::{Benchmark, DomainShape, EquationKind, ProblemSpec, Region};
pub use residuals::{Block, FieldModel, ModelKind, ResidualOptions, ResidualSystem, Weighting};
pub use sampling::{SamplePlan, SpaceTimePoint, TrainingSets};
