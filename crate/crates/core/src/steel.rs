//! The three-phase learner: discover the dynamics cycle by cycle, collect
//! `d` spaced samples of every state along planned tours, then train one
//! classifier per state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cyclefind::{cyclefind_run, CycleRecord};
use crate::dataset::DatasetTable;
use crate::env::Environment;
use crate::error::{Result, SteelError};
use crate::hypothesis::{Classify, TrainingOracle};
use crate::model::{check_unit_open, Action, AlgoParams, PartialDynamics, StateId};
use crate::obs::ObsRef;
use crate::planner::{build_collection_cycle, build_escape_sequence};

/// `ceil(3 |S| ln(16 |S|^2 |F| / delta) / epsilon)`.
pub fn required_count_d(params: &AlgoParams, states: usize, class_size: usize) -> Result<u64> {
    check_unit_open("delta", params.delta)?;
    check_unit_open("epsilon", params.epsilon)?;
    if states == 0 || class_size == 0 {
        return Err(SteelError::InvalidParameter(
            "state count and class size must be positive".into(),
        ));
    }
    let s = states as f64;
    let log = (16.0f64).ln() + 2.0 * s.ln() + (class_size as f64).ln() - params.delta.ln();
    Ok((3.0 * s * log / params.epsilon).ceil() as u64)
}

/// One entry of the decision trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    CycleFind {
        invocation: usize,
        #[serde(flatten)]
        record: CycleRecord,
    },
    /// A new collection tour; `laps` counts the collecting passes made with it.
    Phase2Plan {
        start: StateId,
        targets: Vec<StateId>,
        tour: Vec<Action>,
        laps: u64,
        collected: u64,
    },
    Classifier {
        state: StateId,
        classifier: String,
    },
}

/// Everything the learner carries between CycleFind invocations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub params: AlgoParams,
    pub dynamics: PartialDynamics,
    pub datasets: DatasetTable,
    /// The learned state the environment is in, once known.
    pub current: Option<StateId>,
    pub invocations: usize,
    pub phase1_steps: u64,
    pub trace: Vec<TraceEvent>,
}

impl LearnerState {
    pub fn new(params: AlgoParams, action_count: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            dynamics: PartialDynamics::new(action_count),
            datasets: DatasetTable::new(),
            current: None,
            invocations: 0,
            phase1_steps: 0,
            trace: Vec::new(),
        })
    }

    pub fn phase1_done(&self) -> bool {
        self.dynamics.state_count() > 0 && self.dynamics.is_complete()
    }

    /// Runs a single CycleFind invocation. Returns whether the dynamics are
    /// complete afterwards.
    pub fn phase1_iteration<E, O>(&mut self, env: &mut E, oracle: &O) -> Result<bool>
    where
        E: Environment + ?Sized,
        O: TrainingOracle,
    {
        if self.phase1_done() {
            return Ok(true);
        }
        let limit = self.params.max_states * self.dynamics.action_count();
        if self.invocations >= limit.max(1) {
            return Err(SteelError::Contract(format!(
                "dynamics still incomplete after {} CycleFind invocations",
                self.invocations
            )));
        }
        let loop_actions = build_escape_sequence(&self.dynamics)?;
        for s in self.dynamics.states() {
            if self.dynamics.run(Some(s), &loop_actions).is_some() {
                return Err(SteelError::Contract(format!(
                    "escape sequence does not leave the known dynamics from {s:?}"
                )));
            }
        }
        let before = self.dynamics.defined_count();
        let record = cyclefind_run(
            env,
            &loop_actions,
            &mut self.dynamics,
            &mut self.datasets,
            &self.params,
            oracle,
        )?;
        if self.dynamics.defined_count() <= before {
            return Err(SteelError::Contract(
                "CycleFind learned no new transition".into(),
            ));
        }
        log::info!(
            "CycleFind #{}: |a| = {}, n_cyc = {}, {} new states, {} steps",
            self.invocations,
            loop_actions.len(),
            record.n_cyc,
            record.created.len(),
            record.steps
        );
        self.current = Some(record.current);
        self.phase1_steps += record.steps;
        self.trace.push(TraceEvent::CycleFind {
            invocation: self.invocations,
            record,
        });
        self.invocations += 1;
        Ok(self.phase1_done())
    }

    /// Runs CycleFind until every transition of every learned state is known.
    pub fn phase1_learn_dynamics<E, O>(&mut self, env: &mut E, oracle: &O) -> Result<()>
    where
        E: Environment + ?Sized,
        O: TrainingOracle,
    {
        while !self.phase1_iteration(env, oracle)? {}
        Ok(())
    }

    /// Tops every dataset up to `d` samples. Returns the steps taken.
    pub fn phase2_collect<E>(&mut self, env: &mut E, d: u64) -> Result<u64>
    where
        E: Environment + ?Sized,
    {
        let mut cur = self
            .current
            .ok_or_else(|| SteelError::Contract("collection needs a known current state".into()))?;
        let t = &self.dynamics;
        let start_clock = env.clock();
        let n = t.state_count();
        let mut visited = vec![false; n];
        loop {
            let under: Vec<StateId> = t
                .states()
                .filter(|&s| (self.datasets.get(s).len() as u64) < d)
                .collect();
            if under.is_empty() {
                break;
            }
            let targets: BTreeSet<StateId> = under.iter().copied().filter(|&s| s != cur).collect();
            let tour = build_collection_cycle(t, cur, &targets, self.params.mixing_time_bound)?;

            for &a in &tour {
                env.step(a)?;
            }
            let (mut laps, mut collected) = (0u64, 0u64);
            while under
                .iter()
                .all(|&s| (self.datasets.get(s).len() as u64) < d)
            {
                visited.iter_mut().for_each(|v| *v = false);
                for &a in &tour {
                    let at = env.clock() + 1;
                    let x = env.step(a)?;
                    cur = t.get(Some(cur), a).expect("dynamics are complete");
                    if !visited[cur.0] {
                        visited[cur.0] = true;
                        self.datasets.get_mut(cur).push(x, at)?;
                        collected += 1;
                    }
                }
                laps += 1;
            }
            log::debug!("tour of {} actions from {cur:?}: {laps} laps", tour.len());
            self.trace.push(TraceEvent::Phase2Plan {
                start: cur,
                targets: targets.into_iter().collect(),
                tour,
                laps,
                collected,
            });
        }
        self.current = Some(cur);
        Ok(env.clock() - start_clock)
    }
}

/// One classifier per learned state; a sample is assigned to the lowest-index
/// state whose classifier fires, or to state 0 when none fires.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder<C> {
    pub classifiers: Vec<C>,
}

impl<C: Classify> Encoder<C> {
    pub fn encode(&self, x: ObsRef<'_>) -> StateId {
        StateId(
            self.classifiers
                .iter()
                .position(|f| f.classify(x))
                .unwrap_or(0),
        )
    }
}

/// Trains each state's classifier against the pooled samples of all others.
pub fn phase3_train_encoder<O: TrainingOracle>(
    datasets: &DatasetTable,
    oracle: &O,
) -> Result<Encoder<O::Classifier>> {
    let classifiers = datasets
        .iter()
        .map(|(s, ones)| {
            let zeros = datasets
                .iter()
                .filter(move |(other, _)| *other != s)
                .flat_map(|(_, d)| d.observations());
            oracle.train(zeros, ones.observations())
        })
        .collect::<Result<_>>()?;
    Ok(Encoder { classifiers })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSteps {
    pub phase1: u64,
    pub phase2: u64,
    pub phase3: u64,
}

impl PhaseSteps {
    pub fn total(&self) -> u64 {
        self.phase1 + self.phase2 + self.phase3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnResult<C> {
    pub dynamics: PartialDynamics,
    pub datasets: DatasetTable,
    pub encoder: Encoder<C>,
    pub current: StateId,
    /// Samples required per state in the collection phase.
    pub d: u64,
    /// Environment clock when learning finished.
    pub total_steps: u64,
    pub phase_steps: PhaseSteps,
    pub trace: Vec<TraceEvent>,
}

impl<C> LearnResult<C> {
    pub fn state_count(&self) -> usize {
        self.dynamics.state_count()
    }
}

/// Finishes learning from `state`, which may be fresh or restored from a
/// checkpoint taken between CycleFind invocations on the same trajectory.
pub fn steel_resume<E, O>(
    mut state: LearnerState,
    env: &mut E,
    oracle: &O,
) -> Result<LearnResult<O::Classifier>>
where
    E: Environment + ?Sized,
    O: TrainingOracle,
{
    let clock_at_start = env.clock() - state.phase1_steps;
    state.phase1_learn_dynamics(env, oracle)?;
    let d = required_count_d(
        &state.params,
        state.dynamics.state_count(),
        oracle.class_size(),
    )?;
    let phase2 = state.phase2_collect(env, d)?;
    let encoder = phase3_train_encoder(&state.datasets, oracle)?;
    for (i, f) in encoder.classifiers.iter().enumerate() {
        state.trace.push(TraceEvent::Classifier {
            state: StateId(i),
            classifier: format!("{f:?}"),
        });
    }
    let phase_steps = PhaseSteps {
        phase1: state.phase1_steps,
        phase2,
        phase3: 0,
    };
    debug_assert_eq!(clock_at_start + phase_steps.total(), env.clock());
    Ok(LearnResult {
        current: state.current.expect("phase 1 sets the current state"),
        dynamics: state.dynamics,
        datasets: state.datasets,
        encoder,
        d,
        total_steps: env.clock(),
        phase_steps,
        trace: state.trace,
    })
}

pub fn steel_learn<E, O>(
    env: &mut E,
    params: &AlgoParams,
    oracle: &O,
) -> Result<LearnResult<O::Classifier>>
where
    E: Environment + ?Sized,
    O: TrainingOracle,
{
    let state = LearnerState::new(params.clone(), env.action_count())?;
    steel_resume(state, env, oracle)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::env::TruthHooks;
    use crate::envs::tabular::{grid, TabularConfig, TabularEnv};
    use crate::hypothesis::{CoordinateClass, CoordinateClassifier};
    use crate::obs::Observation;

    fn params(n: usize, t: u64, delta: f64, epsilon: f64) -> AlgoParams {
        AlgoParams {
            max_states: n,
            diameter_bound: n,
            mixing_time_bound: t,
            delta,
            epsilon,
        }
    }

    #[test]
    fn d_values() {
        let lock = params(30, 40, 0.05, 0.05);
        // 60 ln(65 536 000) / 0.05
        assert_eq!(required_count_d(&lock, 20, 512).unwrap(), 21598);
        // 6 ln(32) = 20.79
        assert_eq!(required_count_d(&params(1, 1, 0.5, 0.5), 1, 1).unwrap(), 21);
        let loose = params(30, 40, 0.1, 0.1);
        assert!(required_count_d(&loose, 20, 512).unwrap() <= 21598);
        assert!(required_count_d(&params(1, 1, 0.5, 1.0), 1, 1).is_err());
    }

    #[test]
    fn encode_tie_breaks() {
        let enc = Encoder {
            classifiers: vec![
                CoordinateClassifier(0),
                CoordinateClassifier(1),
                CoordinateClassifier(2),
            ],
        };
        let x = |ones: &[usize]| Observation::from_ones(3, ones.iter().copied()).unwrap();
        assert_eq!(enc.encode(x(&[1]).as_ref()), StateId(1));
        assert_eq!(enc.encode(x(&[]).as_ref()), StateId(0));
        assert_eq!(enc.encode(x(&[2, 1]).as_ref()), StateId(1));
    }

    #[test]
    fn trivial_environment() {
        let cfg = TabularConfig {
            transitions: vec![vec![0]],
            noise_factors: vec![],
            initial_state: 0,
            noise_seed: 0,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let out = steel_learn(&mut env, &params(1, 1, 0.5, 0.5), &oracle).unwrap();
        assert_eq!(out.state_count(), 1);
        assert_eq!(out.total_steps, env.clock());
        assert_eq!(out.phase_steps.total(), env.clock());
    }

    #[test]
    fn learns_grid_world() {
        let noise = vec![vec![0.6, 0.4], vec![0.3, 0.7]];
        let cfg = TabularConfig {
            transitions: grid(2, 3),
            noise_factors: vec![noise; 3],
            initial_state: 4,
            noise_seed: 17,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let out = steel_learn(&mut env, &params(6, 6, 0.05, 0.05), &oracle).unwrap();
        assert_eq!(out.state_count(), 6);
        assert!(out.dynamics.is_complete());
        let invocations = out
            .trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::CycleFind { .. }))
            .count();
        assert!(invocations <= 24);
        // the learned current state matches the truth through the encoder
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = env.sample_stationary(env.latent_state(), &mut rng);
        assert_eq!(out.encoder.encode(x.as_ref()), out.current);
        for (s, d) in out.datasets.iter() {
            assert!(d.len() as u64 >= out.d);
            assert!(d.is_spaced(6));
            assert!(d.observations().all(|x| out.encoder.encode(x) == s));
        }
    }
}
