//! The single-trajectory environment interface and the evaluation-only truth hooks.

use rand::RngCore;

use crate::error::Result;
use crate::model::Action;
use crate::obs::{ObsRef, Observation};

/// One continuous trajectory of an exogenous block MDP.
///
/// There is deliberately no reset: the clock only moves forward, by exactly one
/// per [`Environment::step`].
pub trait Environment {
    fn action_count(&self) -> usize;

    fn obs_width(&self) -> usize;

    /// Number of steps taken so far.
    fn clock(&self) -> u64;

    /// The most recent observation (the initial one before any step).
    fn observation(&self) -> ObsRef<'_>;

    fn step(&mut self, action: Action) -> Result<ObsRef<'_>>;
}

/// Ground truth about an environment, used only to score what was learned.
pub trait TruthHooks {
    fn latent_count(&self) -> usize;

    /// The true latent state the environment is currently in.
    fn latent_state(&self) -> usize;

    /// The block decoder: maps an observation to the latent state that emitted it.
    fn decode(&self, x: ObsRef<'_>) -> Option<usize>;

    fn true_transition(&self, state: usize, action: Action) -> usize;

    /// Emits an observation of `state` with the exogenous noise drawn from its
    /// stationary distribution.
    fn sample_stationary(&self, state: usize, rng: &mut dyn RngCore) -> Observation;

    /// The coordinate that indicates `state`, when the environment has one.
    fn indicator_coordinate(&self, _state: usize) -> Option<usize> {
        None
    }
}
