//! Learning the controllable latent dynamics and a state encoder of an
//! exogenous block MDP from one reset-free trajectory.

pub mod cyclefind;
pub mod dataset;
pub mod env;
pub mod envs;
pub mod error;
pub mod hypothesis;
pub mod mixing;
pub mod model;
pub mod obs;
pub mod planner;
pub mod steel;

pub use cyclefind::{compute_budgets, BudgetSet, CycleBudget, CycleRecord};
pub use dataset::{Dataset, DatasetTable};
pub use env::{Environment, TruthHooks};
pub use error::{Result, SteelError};
pub use hypothesis::{
    perfectly_separates, Classify, CoordinateClass, CoordinateClassifier, TrainingOracle,
};
pub use model::{Action, AlgoParams, PartialDynamics, StateId};
pub use obs::{ObsArena, ObsRef, Observation};
pub use steel::{
    required_count_d, steel_learn, steel_resume, Encoder, LearnResult, LearnerState, PhaseSteps,
    TraceEvent,
};
