//! Scoring a learned model against the simulator's ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use steel_core::{
    Classify, CoordinateClassifier, DatasetTable, Encoder, PartialDynamics, StateId, TraceEvent,
    TruthHooks,
};

/// Learned-to-true state map, one entry per learned state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub isomorphic: bool,
    /// `sigma[s]` is the majority true label of `D(s)`, if `D(s)` had any decodable sample.
    pub sigma: Vec<Option<usize>>,
    /// Learned (state, action) pairs whose image disagrees with the truth.
    pub wrong_edges: Vec<(usize, usize)>,
}

impl DynamicsReport {
    /// Inverse of a valid sigma: true state to learned state.
    pub fn inverse(&self) -> Option<Vec<StateId>> {
        if !self.isomorphic {
            return None;
        }
        let mut inv = vec![StateId(0); self.sigma.len()];
        for (s, z) in self.sigma.iter().enumerate() {
            inv[z.expect("isomorphic implies total")] = StateId(s);
        }
        Some(inv)
    }
}

fn majority_label<T: TruthHooks + ?Sized>(truth: &T, data: &steel_core::Dataset) -> Option<usize> {
    let mut votes = vec![0usize; truth.latent_count()];
    for x in data.observations() {
        if let Some(z) = truth.decode(x) {
            votes[z] += 1;
        }
    }
    let (best, &count) = votes
        .iter()
        .enumerate()
        .max_by_key(|&(z, &c)| (c, std::cmp::Reverse(z)))?;
    (count > 0).then_some(best)
}

pub fn evaluate_dynamics<T: TruthHooks + ?Sized>(
    dynamics: &PartialDynamics,
    truth: &T,
    datasets: &DatasetTable,
) -> DynamicsReport {
    let n = dynamics.state_count();
    let sigma: Vec<Option<usize>> = dynamics
        .states()
        .map(|s| {
            if s.0 < datasets.len() {
                majority_label(truth, datasets.get(s))
            } else {
                None
            }
        })
        .collect();

    let mut hit = vec![false; truth.latent_count()];
    let mut bijective = n == truth.latent_count();
    for z in &sigma {
        match z {
            Some(z) if !hit[*z] => hit[*z] = true,
            _ => bijective = false,
        }
    }

    let mut wrong_edges = Vec::new();
    for s in dynamics.states() {
        for a in dynamics.actions() {
            let learned = dynamics.get(Some(s), a).and_then(|t| sigma[t.0]);
            let expected = sigma[s.0].map(|z| truth.true_transition(z, a));
            if learned.is_none() || learned != expected {
                wrong_edges.push((s.0, a.0));
            }
        }
    }
    DynamicsReport {
        isomorphic: bijective && wrong_edges.is_empty(),
        sigma,
        wrong_edges,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderReport {
    /// Fraction of stationary samples of each true state encoded to its image.
    pub accuracies: Vec<f64>,
    pub min_accuracy: f64,
    /// Set when no samples were drawn; the accuracies are then all 1.
    pub vacuous: bool,
}

/// `inverse[z]` is the learned state that true state `z` should encode to.
pub fn evaluate_encoder<C, T>(
    encoder: &Encoder<C>,
    inverse: &[StateId],
    truth: &T,
    samples_per_state: usize,
    seed: u64,
) -> EncoderReport
where
    C: Classify,
    T: TruthHooks + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accuracies: Vec<f64> = (0..truth.latent_count())
        .map(|z| {
            if samples_per_state == 0 {
                return 1.0;
            }
            let hits = (0..samples_per_state)
                .filter(|_| {
                    let x = truth.sample_stationary(z, &mut rng);
                    encoder.encode(x.as_ref()) == inverse[z]
                })
                .count();
            hits as f64 / samples_per_state as f64
        })
        .collect();
    EncoderReport {
        min_accuracy: accuracies.iter().copied().fold(1.0, f64::min),
        accuracies,
        vacuous: samples_per_state == 0,
    }
}

/// Whether every learned coordinate classifier reads the indicator of its state.
pub fn classifiers_match_indicators<T: TruthHooks + ?Sized>(
    encoder: &Encoder<CoordinateClassifier>,
    sigma: &[Option<usize>],
    truth: &T,
) -> bool {
    encoder.classifiers.len() == sigma.len()
        && encoder.classifiers.iter().zip(sigma).all(|(f, z)| {
            z.and_then(|z| truth.indicator_coordinate(z))
                .is_some_and(|c| c == f.0)
        })
}

/// Problems found while replaying the CycleFind records of a trace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAudit {
    pub invocations: usize,
    /// Invocations whose loop stayed inside the known dynamics from some state.
    pub escape_failures: Vec<usize>,
    /// Invocations that tried to overwrite an existing transition.
    pub overwrites: Vec<usize>,
    /// Invocations that learned nothing new.
    pub stalls: Vec<usize>,
}

impl TraceAudit {
    pub fn clean(&self) -> bool {
        self.escape_failures.is_empty() && self.overwrites.is_empty() && self.stalls.is_empty()
    }
}

/// Rebuilds the dynamics from the trace alone and checks each invocation
/// against the dynamics known before it.
pub fn audit_trace(trace: &[TraceEvent], action_count: usize) -> TraceAudit {
    let mut t = PartialDynamics::new(action_count);
    let mut audit = TraceAudit::default();
    for event in trace {
        let TraceEvent::CycleFind { invocation, record } = event else {
            continue;
        };
        audit.invocations += 1;
        let loop_actions = &record.loop_actions;
        if t.states().any(|s| t.run(Some(s), loop_actions).is_some()) {
            audit.escape_failures.push(*invocation);
        }
        let before = t.defined_count();
        for &s in &record.created {
            while t.state_count() <= s.0 {
                t.add_state();
            }
        }
        let period = record.cycle_states.len();
        let mut overwrote = false;
        for (i, &s) in record.cycle_states.iter().enumerate() {
            let a = loop_actions[i % loop_actions.len()];
            let next = record.cycle_states[(i + 1) % period];
            if s.0 >= t.state_count() || next.0 >= t.state_count() || t.set(s, a, next).is_err() {
                overwrote = true;
            }
        }
        if overwrote {
            audit.overwrites.push(*invocation);
        }
        if t.defined_count() <= before {
            audit.stalls.push(*invocation);
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use steel_core::envs::tabular::{grid, TabularConfig, TabularEnv};
    use steel_core::envs::{CombinationLock, CombinationLockConfig, FlipRates};
    use steel_core::{Action, Dataset, Environment};

    use super::*;

    fn grid_env() -> TabularEnv {
        TabularEnv::new(TabularConfig {
            transitions: grid(2, 2),
            noise_factors: vec![],
            initial_state: 0,
            noise_seed: 0,
        })
        .unwrap()
    }

    /// Learned model equal to the 2x2 grid under `perm` (learned -> true).
    fn relabeled(env: &TabularEnv, perm: &[usize]) -> (PartialDynamics, DatasetTable) {
        let mut inv = vec![0; perm.len()];
        for (s, &z) in perm.iter().enumerate() {
            inv[z] = s;
        }
        let mut t = PartialDynamics::new(4);
        let mut table = DatasetTable::new();
        for _ in perm {
            t.add_state();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (s, &z) in perm.iter().enumerate() {
            for a in 0..4 {
                let next = inv[env.true_transition(z, Action(a))];
                t.set(StateId(s), Action(a), StateId(next)).unwrap();
            }
            let mut d = Dataset::new(env.obs_width());
            d.push(env.sample_stationary(z, &mut rng).as_ref(), 0)
                .unwrap();
            table.insert(StateId(s), d).unwrap();
        }
        (t, table)
    }

    #[test]
    fn identity_and_permutation_are_isomorphic() {
        let env = grid_env();
        for perm in [[0, 1, 2, 3], [2, 0, 3, 1]] {
            let (t, table) = relabeled(&env, &perm);
            let r = evaluate_dynamics(&t, &env, &table);
            assert!(r.isomorphic);
            assert_eq!(r.sigma, perm.map(Some).to_vec());
        }
    }

    #[test]
    fn one_wrong_edge_is_caught() {
        let env = grid_env();
        let (t, table) = relabeled(&env, &[0, 1, 2, 3]);
        let mut rows = t.to_table();
        rows[3][1] = Some(0);
        let mut broken = PartialDynamics::new(4);
        for _ in 0..4 {
            broken.add_state();
        }
        for (s, row) in rows.iter().enumerate() {
            for (a, next) in row.iter().enumerate() {
                broken
                    .set(StateId(s), Action(a), StateId(next.unwrap()))
                    .unwrap();
            }
        }
        let r = evaluate_dynamics(&broken, &env, &table);
        assert!(!r.isomorphic);
        assert_eq!(r.wrong_edges, vec![(3, 1)]);
    }

    fn lock() -> CombinationLock {
        CombinationLock::new(CombinationLockConfig::generate(4, 64, 3, 4).unwrap()).unwrap()
    }

    #[test]
    fn indicator_encoder_is_exact() {
        let env = lock();
        let cfg = env.config().clone();
        let encoder = Encoder {
            classifiers: cfg
                .indicator_coords
                .iter()
                .map(|&c| CoordinateClassifier(c))
                .collect(),
        };
        let inverse: Vec<StateId> = (0..4).map(StateId).collect();
        let r = evaluate_encoder(&encoder, &inverse, &env, 500, 1);
        assert_eq!(r.accuracies, vec![1.0; 4]);
        let sigma: Vec<_> = (0..4).map(Some).collect();
        assert!(classifiers_match_indicators(&encoder, &sigma, &env));
    }

    #[test]
    fn noise_classifier_accuracy_is_its_stationary_probability() {
        let mut cfg = CombinationLockConfig::generate(2, 64, 3, 4).unwrap();
        cfg.noise = vec![FlipRates { up: 0.3, down: 0.6 }; 62];
        let env = CombinationLock::new(cfg.clone()).unwrap();
        let noise = cfg.noise_coords()[0];
        // true state 0 is encoded to learned state 1 exactly when the noise bit is set
        let encoder = Encoder {
            classifiers: vec![
                CoordinateClassifier(cfg.indicator_coords[1]),
                CoordinateClassifier(noise),
            ],
        };
        let inverse = [StateId(1), StateId(0)];
        let n = 20_000;
        let r = evaluate_encoder(&encoder, &inverse, &env, n, 9);
        let p = 0.3 / 0.9;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (r.accuracies[0] - p).abs() < 4.0 * se,
            "{}",
            r.accuracies[0]
        );
        assert_eq!(r.accuracies[1], 1.0);
    }

    #[test]
    fn zero_samples_pass_vacuously() {
        let env = lock();
        let encoder = Encoder {
            classifiers: vec![CoordinateClassifier(0); 4],
        };
        let inverse: Vec<StateId> = (0..4).map(StateId).collect();
        let r = evaluate_encoder(&encoder, &inverse, &env, 0, 0);
        assert!(r.vacuous);
        assert_eq!(r.min_accuracy, 1.0);
    }
}
