//! Per-state multisets of observations, each tagged with the global step it was observed at.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteelError};
use crate::model::StateId;
use crate::obs::{ObsArena, ObsRef};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: ObsArena,
    times: Vec<u64>,
}

impl Dataset {
    pub fn new(width: usize) -> Self {
        Self {
            observations: ObsArena::new(width),
            times: Vec::new(),
        }
    }

    pub fn with_capacity(width: usize, capacity: usize) -> Self {
        Self {
            observations: ObsArena::with_capacity(width, capacity),
            times: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, obs: ObsRef<'_>, collected_at: u64) -> Result<()> {
        self.observations.push(obs)?;
        self.times.push(collected_at);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.observations.width()
    }

    pub fn observation(&self, i: usize) -> ObsRef<'_> {
        self.observations.get(i)
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (ObsRef<'_>, u64)> + '_ {
        self.observations.iter().zip(self.times.iter().copied())
    }

    pub fn observations(&self) -> impl ExactSizeIterator<Item = ObsRef<'_>> + Clone + '_ {
        self.observations.iter()
    }

    /// Smallest gap between any two collection times, `None` with fewer than two samples.
    pub fn min_spacing(&self) -> Option<u64> {
        min_spacing(&self.times)
    }

    pub fn is_spaced(&self, min_gap: u64) -> bool {
        self.min_spacing().is_none_or(|gap| gap >= min_gap)
    }
}

/// Smallest pairwise difference between timestamps.
pub fn min_spacing(times: &[u64]) -> Option<u64> {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).map(|w| w[1] - w[0]).min()
}

/// The table of datasets, indexed by learned state in creation order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable {
    sets: Vec<Dataset>,
}

impl DatasetTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Registers the dataset of a freshly created state; ids must be assigned in order.
    pub fn insert(&mut self, state: StateId, data: Dataset) -> Result<()> {
        if state.0 != self.sets.len() {
            return Err(SteelError::Contract(format!(
                "dataset for {state:?} inserted out of order (table holds {})",
                self.sets.len()
            )));
        }
        self.sets.push(data);
        Ok(())
    }

    pub fn get(&self, state: StateId) -> &Dataset {
        &self.sets[state.0]
    }

    pub fn get_mut(&mut self, state: StateId) -> &mut Dataset {
        &mut self.sets[state.0]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (StateId, &Dataset)> + Clone + '_ {
        self.sets.iter().enumerate().map(|(i, d)| (StateId(i), d))
    }

    /// States whose samples are closer together than `min_gap` steps.
    pub fn spacing_violations(&self, min_gap: u64) -> Vec<StateId> {
        self.iter()
            .filter(|(_, d)| !d.is_spaced(min_gap))
            .map(|(s, _)| s)
            .collect()
    }
}
