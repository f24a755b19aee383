//! Optimal experimental designs: approximate designs by convex optimization
//! on a candidate set, exact designs by rounding and simulated annealing.

pub mod approx;
pub mod config;
pub mod criterion;
pub mod design;
pub mod error;
pub mod exact;
pub mod io;
pub mod linalg;
pub mod model;
pub mod runner;
pub mod space;

pub use approx::{
    derivative_profile, solve_maximin, solve_single, verify_equivalence, ApproxSolveOptions, MaximinProblem,
    SolveReport,
};
pub use criterion::{directional_derivative, efficiency, min_efficiency, modified_efficiency, Criterion};
pub use design::{info_matrix, ApproximateDesign, ExactDesign, InformationMatrix};
pub use error::{DesignError, Result};
pub use exact::{
    anneal_once, round_to_exact, search, theorem1_construction, AnnealConfig, AnnealTrace, Objective, SearchOutcome,
};
pub use model::{make_preset, ModelSpec, PresetId};
pub use space::{DesignSpace, SpaceSpec};
pub use config::{AppId, ConfigError, Overrides, RunConfig, Task};
pub use runner::{load_config, run, run_preset, RunError, RunSummary};
