//! The combination lock: K latent states in a row, one correct action per
//! state advances, anything else falls back to state 0.
//!
//! Each state lights one indicator coordinate of an `L`-bit observation. The
//! other `L - K` coordinates are independent two-state noise chains.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::{FlipRates, NoiseBank};
use crate::env::{Environment, TruthHooks};
use crate::error::{Result, SteelError};
use crate::model::Action;
use crate::obs::{ObsRef, Observation};

pub const DEFAULT_WIDTH: usize = 512;
pub const MIN_FLIP: f64 = 0.1;
pub const MAX_FLIP: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationLockConfig {
    /// Number of latent states K.
    pub states: usize,
    /// Observation width L.
    pub width: usize,
    /// `correct_actions[i]` in {0, 1} advances state i.
    pub correct_actions: Vec<usize>,
    /// `indicator_coords[i]` is the coordinate lit in state i.
    pub indicator_coords: Vec<usize>,
    /// Flip rates of the non-indicator coordinates, in increasing coordinate order.
    pub noise: Vec<FlipRates>,
    pub initial_state: usize,
    /// Seeds the initial noise and its evolution.
    pub noise_seed: u64,
}

impl CombinationLockConfig {
    /// Draws the correct actions, indicator coordinates, flip rates and start
    /// state from `param_seed`.
    pub fn generate(states: usize, width: usize, param_seed: u64, noise_seed: u64) -> Result<Self> {
        check_shape(states, width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(param_seed);
        let correct_actions = (0..states).map(|_| rng.random_range(0..2)).collect();
        let indicator_coords = sample(&mut rng, width, states).into_vec();
        let noise = (0..width - states)
            .map(|_| FlipRates {
                up: rng.random_range(MIN_FLIP..=MAX_FLIP),
                down: rng.random_range(MIN_FLIP..=MAX_FLIP),
            })
            .collect();
        let initial_state = rng.random_range(0..states);
        Ok(Self {
            states,
            width,
            correct_actions,
            indicator_coords,
            noise,
            initial_state,
            noise_seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.states, self.width)?;
        let bad = |m: String| Err(SteelError::InvalidEnvironment(m));
        if self.correct_actions.len() != self.states || self.correct_actions.iter().any(|&a| a > 1)
        {
            return bad("correct_actions must hold K entries in {0, 1}".into());
        }
        if self.indicator_coords.len() != self.states {
            return bad("indicator_coords must hold K entries".into());
        }
        let mut seen = vec![false; self.width];
        for &c in &self.indicator_coords {
            if c >= self.width || seen[c] {
                return bad(format!(
                    "indicator coordinate {c} is out of range or repeated"
                ));
            }
            seen[c] = true;
        }
        if self.noise.len() != self.width - self.states {
            return bad(format!(
                "expected {} noise rates, found {}",
                self.width - self.states,
                self.noise.len()
            ));
        }
        if self.initial_state >= self.states {
            return bad(format!("initial state {} out of range", self.initial_state));
        }
        Ok(())
    }

    pub fn next_state(&self, state: usize, action: Action) -> usize {
        if self.correct_actions[state] == action.0 {
            (state + 1) % self.states
        } else {
            0
        }
    }

    /// Coordinates that carry noise, in increasing order.
    pub fn noise_coords(&self) -> Vec<usize> {
        let mut is_indicator = vec![false; self.width];
        for &c in &self.indicator_coords {
            is_indicator[c] = true;
        }
        (0..self.width).filter(|&c| !is_indicator[c]).collect()
    }
}

fn check_shape(states: usize, width: usize) -> Result<()> {
    if states == 0 || states >= width {
        return Err(SteelError::InvalidEnvironment(format!(
            "combination lock needs 1 <= K < L, got K = {states}, L = {width}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CombinationLock {
    config: CombinationLockConfig,
    decode_table: Vec<Option<usize>>,
    bank: NoiseBank,
    rng: ChaCha8Rng,
    latent: usize,
    clock: u64,
    obs: Observation,
}

impl CombinationLock {
    pub fn new(config: CombinationLockConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
        let mut bank = NoiseBank::new(config.noise.clone(), config.noise_coords(), config.width)?;
        bank.reset_stationary(&mut rng);
        let mut decode_table = vec![None; config.width];
        for (s, &c) in config.indicator_coords.iter().enumerate() {
            decode_table[c] = Some(s);
        }
        let mut env = Self {
            decode_table,
            bank,
            rng,
            latent: config.initial_state,
            clock: 0,
            obs: Observation::zeros(config.width),
            config,
        };
        env.render();
        Ok(env)
    }

    pub fn config(&self) -> &CombinationLockConfig {
        &self.config
    }

    fn render(&mut self) {
        self.obs.words_mut().copy_from_slice(self.bank.words());
        self.obs
            .set(self.config.indicator_coords[self.latent], true);
    }
}

impl Environment for CombinationLock {
    fn action_count(&self) -> usize {
        2
    }

    fn obs_width(&self) -> usize {
        self.config.width
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn observation(&self) -> ObsRef<'_> {
        self.obs.as_ref()
    }

    fn step(&mut self, action: Action) -> Result<ObsRef<'_>> {
        if action.0 >= 2 {
            return Err(SteelError::ActionOutOfRange {
                action: action.0,
                count: 2,
            });
        }
        self.latent = self.config.next_state(self.latent, action);
        self.bank.step(&mut self.rng);
        self.clock += 1;
        self.render();
        Ok(self.obs.as_ref())
    }
}

impl TruthHooks for CombinationLock {
    fn latent_count(&self) -> usize {
        self.config.states
    }

    fn latent_state(&self) -> usize {
        self.latent
    }

    fn decode(&self, x: ObsRef<'_>) -> Option<usize> {
        let mut found = None;
        for &c in &self.config.indicator_coords {
            if x.get(c) {
                if found.is_some() {
                    return None;
                }
                found = self.decode_table[c];
            }
        }
        found
    }

    fn true_transition(&self, state: usize, action: Action) -> usize {
        self.config.next_state(state, action)
    }

    fn sample_stationary(&self, state: usize, rng: &mut dyn RngCore) -> Observation {
        let mut obs = Observation::zeros(self.config.width);
        obs.set(self.config.indicator_coords[state], true);
        self.bank.sample_stationary_into(obs.words_mut(), rng);
        obs
    }

    fn indicator_coordinate(&self, state: usize) -> Option<usize> {
        self.config.indicator_coords.get(state).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lock(k: usize, param_seed: u64, noise_seed: u64) -> CombinationLock {
        CombinationLock::new(
            CombinationLockConfig::generate(k, DEFAULT_WIDTH, param_seed, noise_seed).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn correct_action_advances_and_wrong_resets() {
        let mut cfg = CombinationLockConfig::generate(20, 512, 1, 2).unwrap();
        cfg.initial_state = 0;
        let mut env = CombinationLock::new(cfg.clone()).unwrap();
        let good = Action(cfg.correct_actions[0]);
        let x = env.step(good).unwrap().to_owned();
        assert!(x.get(cfg.indicator_coords[1]));
        assert_eq!(env.decode(x.as_ref()), Some(1));

        let bad = Action(1 - cfg.correct_actions[1]);
        let x = env.step(bad).unwrap().to_owned();
        assert_eq!(env.decode(x.as_ref()), Some(0));
        assert_eq!(env.clock(), 2);
    }

    #[test]
    fn exactly_one_indicator_per_observation() {
        let mut env = lock(20, 5, 6);
        let cfg = env.config().clone();
        for t in 0..200 {
            let x = env.step(Action(t % 2)).unwrap();
            assert_eq!(x.width(), 512);
            let lit = cfg.indicator_coords.iter().filter(|&&c| x.get(c)).count();
            assert_eq!(lit, 1);
        }
    }

    #[test]
    fn single_state_lock_self_loops() {
        let mut env = lock(1, 0, 0);
        for a in [0, 1, 1, 0] {
            env.step(Action(a)).unwrap();
            assert_eq!(env.latent_state(), 0);
        }
    }

    #[test]
    fn parameters_do_not_depend_on_noise_seed() {
        let a = CombinationLockConfig::generate(20, 512, 9, 1).unwrap();
        let b = CombinationLockConfig::generate(20, 512, 9, 2).unwrap();
        assert_eq!(a.correct_actions, b.correct_actions);
        assert_eq!(a.indicator_coords, b.indicator_coords);
        assert_eq!(a.noise, b.noise);
        assert_eq!(a.initial_state, b.initial_state);
        assert_ne!(a.noise_seed, b.noise_seed);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(CombinationLockConfig::generate(512, 512, 0, 0).is_err());
        assert!(CombinationLockConfig::generate(0, 512, 0, 0).is_err());
        let mut env = lock(3, 0, 0);
        assert!(matches!(
            env.step(Action(2)),
            Err(SteelError::ActionOutOfRange {
                action: 2,
                count: 2
            })
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = CombinationLockConfig::generate(4, 16, 3, 4).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: CombinationLockConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
