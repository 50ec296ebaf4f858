//! Small tabular Ex-BMDPs built from an explicit latent table and independent
//! finite noise factors.
//!
//! The observation is the one-hot of the latent state followed by the one-hot
//! of every noise factor.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, TruthHooks};
use crate::error::{Result, SteelError};
use crate::mixing::FiniteChain;
use crate::model::Action;
use crate::obs::{ObsRef, Observation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularConfig {
    /// `transitions[s][a]` is the next latent state.
    pub transitions: Vec<Vec<usize>>,
    /// Row-stochastic transition matrix of each noise factor.
    pub noise_factors: Vec<Vec<Vec<f64>>>,
    pub initial_state: usize,
    pub noise_seed: u64,
}

impl TabularConfig {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn action_count(&self) -> usize {
        self.transitions.first().map_or(0, Vec::len)
    }

    pub fn width(&self) -> usize {
        self.state_count() + self.noise_factors.iter().map(Vec::len).sum::<usize>()
    }

    pub fn validate(&self) -> Result<Vec<FiniteChain>> {
        let bad = |m: String| Err(SteelError::InvalidEnvironment(m));
        let n = self.state_count();
        let k = self.action_count();
        if n == 0 || k == 0 {
            return bad("need at least one state and one action".into());
        }
        for (s, row) in self.transitions.iter().enumerate() {
            if row.len() != k || row.iter().any(|&t| t >= n) {
                return bad(format!("transition row {s} is malformed"));
            }
        }
        if self.initial_state >= n {
            return bad(format!("initial state {} out of range", self.initial_state));
        }
        if let Some(s) = unreachable_state(&self.transitions) {
            return bad(format!(
                "latent state {s} is not reachable from every state"
            ));
        }
        self.noise_factors
            .iter()
            .enumerate()
            .map(|(i, m)| {
                FiniteChain::new(m.clone())
                    .map_err(|e| SteelError::InvalidEnvironment(format!("noise factor {i}: {e}")))
            })
            .collect()
    }
}

/// Some state that cannot reach, or cannot be reached from, state 0.
fn unreachable_state(t: &[Vec<usize>]) -> Option<usize> {
    let n = t.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let edge = if forward {
                    t[u].contains(&v)
                } else {
                    t[v].contains(&u)
                };
                if edge && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    };
    let (fwd, bwd) = (reach(true), reach(false));
    (0..n).find(|&s| !(fwd[s] && bwd[s]))
}

struct Factor {
    chain: FiniteChain,
    stationary: Vec<f64>,
    offset: usize,
}

pub struct TabularEnv {
    config: TabularConfig,
    factors: Vec<Factor>,
    noise: Vec<usize>,
    rng: ChaCha8Rng,
    latent: usize,
    clock: u64,
    obs: Observation,
}

fn draw(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl TabularEnv {
    pub fn new(config: TabularConfig) -> Result<Self> {
        let chains = config.validate()?;
        let mut offset = config.state_count();
        let factors: Vec<Factor> = chains
            .into_iter()
            .map(|chain| {
                let f = Factor {
                    stationary: chain.stationary(),
                    offset,
                    chain,
                };
                offset += f.chain.len();
                f
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
        let noise = factors
            .iter()
            .map(|f| draw(&f.stationary, &mut rng))
            .collect();
        let mut env = Self {
            latent: config.initial_state,
            obs: Observation::zeros(config.width()),
            config,
            factors,
            noise,
            rng,
            clock: 0,
        };
        env.render();
        Ok(env)
    }

    pub fn config(&self) -> &TabularConfig {
        &self.config
    }

    fn render(&mut self) {
        self.obs.clear();
        self.obs.set(self.latent, true);
        for (f, &e) in self.factors.iter().zip(&self.noise) {
            self.obs.set(f.offset + e, true);
        }
    }
}

impl Environment for TabularEnv {
    fn action_count(&self) -> usize {
        self.config.action_count()
    }

    fn obs_width(&self) -> usize {
        self.obs.width()
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn observation(&self) -> ObsRef<'_> {
        self.obs.as_ref()
    }

    fn step(&mut self, action: Action) -> Result<ObsRef<'_>> {
        let count = self.config.action_count();
        if action.0 >= count {
            return Err(SteelError::ActionOutOfRange {
                action: action.0,
                count,
            });
        }
        self.latent = self.config.transitions[self.latent][action.0];
        for (f, e) in self.factors.iter().zip(self.noise.iter_mut()) {
            *e = draw(f.chain.row(*e), &mut self.rng);
        }
        self.clock += 1;
        self.render();
        Ok(self.obs.as_ref())
    }
}

impl TruthHooks for TabularEnv {
    fn latent_count(&self) -> usize {
        self.config.state_count()
    }

    fn latent_state(&self) -> usize {
        self.latent
    }

    fn decode(&self, x: ObsRef<'_>) -> Option<usize> {
        let mut lit = (0..self.config.state_count()).filter(|&s| x.get(s));
        let s = lit.next()?;
        lit.next().is_none().then_some(s)
    }

    fn true_transition(&self, state: usize, action: Action) -> usize {
        self.config.transitions[state][action.0]
    }

    fn sample_stationary(&self, state: usize, rng: &mut dyn RngCore) -> Observation {
        let mut obs = Observation::zeros(self.obs.width());
        obs.set(state, true);
        for f in &self.factors {
            obs.set(f.offset + draw(&f.stationary, rng), true);
        }
        obs
    }

    fn indicator_coordinate(&self, state: usize) -> Option<usize> {
        Some(state)
    }
}

/// Random strongly connected deterministic tables with binary noise factors
/// whose flip rates lie in [0.1, 0.9].
pub fn random_tabular(
    states: usize,
    actions: usize,
    noise_factors: usize,
    param_seed: u64,
    noise_seed: u64,
) -> TabularConfig {
    assert!(
        states >= 1 && actions >= 1,
        "need at least one state and one action"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(param_seed);
    let transitions = if actions == 1 {
        // the only strongly connected functional graph is one big cycle
        let mut order: Vec<usize> = (0..states).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut t = vec![vec![0]; states];
        for i in 0..states {
            t[order[i]][0] = order[(i + 1) % states];
        }
        t
    } else {
        loop {
            let t: Vec<Vec<usize>> = (0..states)
                .map(|_| (0..actions).map(|_| rng.random_range(0..states)).collect())
                .collect();
            if unreachable_state(&t).is_none() {
                break t;
            }
        }
    };
    let noise_factors = (0..noise_factors)
        .map(|_| {
            let up = rng.random_range(0.1..=0.9);
            let down = rng.random_range(0.1..=0.9);
            vec![vec![1.0 - up, up], vec![down, 1.0 - down]]
        })
        .collect();
    TabularConfig {
        transitions,
        noise_factors,
        initial_state: rng.random_range(0..states),
        noise_seed,
    }
}

/// Up, Down, Left and Right on a `rows x cols` grid whose borders block moves.
/// States are numbered row-major from the top-left.
pub fn grid(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut t = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let at = |r: usize, c: usize| r * cols + c;
            t.push(vec![
                at(r.saturating_sub(1), c),
                at((r + 1).min(rows - 1), c),
                at(r, c.saturating_sub(1)),
                at(r, (c + 1).min(cols - 1)),
            ]);
        }
    }
    t
}

/// Two states where action 0 self-loops and action 1 swaps.
pub fn toggle() -> Vec<Vec<usize>> {
    vec![vec![0, 1], vec![1, 0]]
}
