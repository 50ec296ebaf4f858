//! Actions, learned states, algorithm parameters and the partial transition table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteelError};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub usize);

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// A learned latent state. Undefined transitions are `None` wherever an
/// `Option<StateId>` appears.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Known bounds and confidence targets handed to the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Upper bound N on the number of controllable latent states.
    pub max_states: usize,
    /// Upper bound on the latent diameter.
    pub diameter_bound: usize,
    /// Upper bound on the mixing time of the exogenous noise, in steps.
    pub mixing_time_bound: u64,
    pub delta: f64,
    pub epsilon: f64,
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_states == 0 {
            return Err(SteelError::InvalidParameter("N must be at least 1".into()));
        }
        if self.diameter_bound == 0 {
            return Err(SteelError::InvalidParameter(
                "diameter bound must be at least 1".into(),
            ));
        }
        if self.mixing_time_bound == 0 {
            return Err(SteelError::InvalidParameter(
                "mixing time bound must be at least 1".into(),
            ));
        }
        check_unit_open("delta", self.delta)?;
        check_unit_open("epsilon", self.epsilon)
    }
}

pub(crate) fn check_unit_open(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(SteelError::InvalidParameter(format!(
            "{name} must lie in (0, 1), got {value}"
        )))
    }
}

/// Learned deterministic transitions over the states discovered so far.
///
/// Entries only ever move from undefined to defined; a write that would change
/// an existing entry is rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDynamics {
    action_count: usize,
    table: Vec<Option<StateId>>,
}

impl PartialDynamics {
    pub fn new(action_count: usize) -> Self {
        assert!(action_count > 0, "an environment needs at least one action");
        Self {
            action_count,
            table: Vec::new(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_count(&self) -> usize {
        self.table.len() / self.action_count
    }

    pub fn states(&self) -> impl DoubleEndedIterator<Item = StateId> + ExactSizeIterator {
        (0..self.state_count()).map(StateId)
    }

    pub fn actions(&self) -> impl DoubleEndedIterator<Item = Action> + ExactSizeIterator {
        (0..self.action_count).map(Action)
    }

    /// Adds a state with every outgoing transition undefined.
    pub fn add_state(&mut self) -> StateId {
        let id = StateId(self.state_count());
        self.table
            .extend(std::iter::repeat_n(None, self.action_count));
        id
    }

    /// Looks up a transition. The undefined state maps to itself under every action.
    #[inline]
    pub fn get(&self, state: Option<StateId>, action: Action) -> Option<StateId> {
        let s = state?;
        self.table[s.0 * self.action_count + action.0]
    }

    pub fn set(&mut self, state: StateId, action: Action, target: StateId) -> Result<()> {
        if state.0 >= self.state_count() || target.0 >= self.state_count() {
            return Err(SteelError::Contract(format!(
                "transition ({state:?}, {action:?}) -> {target:?} references an unknown state"
            )));
        }
        if action.0 >= self.action_count {
            return Err(SteelError::ActionOutOfRange {
                action: action.0,
                count: self.action_count,
            });
        }
        let slot = &mut self.table[state.0 * self.action_count + action.0];
        match *slot {
            Some(existing) if existing != target => Err(SteelError::DynamicsConflict {
                state,
                action,
                existing,
                new: target,
            }),
            _ => {
                *slot = Some(target);
                Ok(())
            }
        }
    }

    /// Applies `actions` in order from `start`, staying undefined once undefined.
    pub fn run(&self, start: Option<StateId>, actions: &[Action]) -> Option<StateId> {
        actions.iter().fold(start, |s, &a| self.get(s, a))
    }

    pub fn defined_count(&self) -> usize {
        self.table.iter().filter(|t| t.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.table.iter().all(Option::is_some)
    }

    pub fn first_undefined(&self) -> Option<(StateId, Action)> {
        self.table.iter().position(Option::is_none).map(|i| {
            (
                StateId(i / self.action_count),
                Action(i % self.action_count),
            )
        })
    }

    /// Dense `[state][action]` view with undefined entries as `None`.
    pub fn to_table(&self) -> Vec<Vec<Option<usize>>> {
        self.table
            .chunks(self.action_count)
            .map(|row| row.iter().map(|t| t.map(|s| s.0)).collect())
            .collect()
    }
}
