//! Concrete environments. Each implements [`Environment`](crate::env::Environment)
//! for the learner and [`TruthHooks`](crate::env::TruthHooks) for scoring.

pub mod lock;
pub mod maze;
pub mod noise;
pub mod tabular;

pub use lock::{CombinationLock, CombinationLockConfig};
pub use maze::{MazeLayout, MultiMaze, MultiMazeConfig};
pub use noise::{FlipRates, NoiseBank};
pub use tabular::{TabularConfig, TabularEnv};
