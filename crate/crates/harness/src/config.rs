//! Experiment configuration, read from a JSON document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use steel_core::envs::lock::DEFAULT_WIDTH;
use steel_core::envs::tabular::random_tabular;
use steel_core::envs::{
    CombinationLock, CombinationLockConfig, MultiMaze, MultiMazeConfig, TabularConfig, TabularEnv,
};
use steel_core::{AlgoParams, Environment, Result as SteelResult, TruthHooks};

/// An environment the harness can learn on and score against.
pub trait SimEnv: Environment + TruthHooks + Send {}

impl<T: Environment + TruthHooks + Send> SimEnv for T {}

/// Which environment to build. The generated kinds draw their parameters from
/// the replicate's parameter seed; the explicit kinds are used verbatim apart
/// from the noise seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Lock {
        states: usize,
        #[serde(default = "default_width")]
        width: usize,
    },
    Maze,
    Tabular {
        states: usize,
        actions: usize,
        noise_factors: usize,
    },
    ExplicitLock {
        config: CombinationLockConfig,
    },
    ExplicitMaze {
        config: MultiMazeConfig,
    },
    ExplicitTabular {
        config: TabularConfig,
    },
}

fn default_width() -> usize {
    DEFAULT_WIDTH
}

/// A built environment together with the JSON form of its full configuration.
pub struct BuiltEnv {
    pub env: Box<dyn SimEnv>,
    pub config_json: serde_json::Value,
}

fn built<E: SimEnv + 'static, C: Serialize>(env: E, config: &C) -> BuiltEnv {
    BuiltEnv {
        env: Box::new(env),
        config_json: serde_json::to_value(config).expect("configs serialize"),
    }
}

impl EnvSpec {
    pub fn build(&self, param_seed: u64, noise_seed: u64) -> SteelResult<BuiltEnv> {
        Ok(match self {
            EnvSpec::Lock { states, width } => {
                let cfg = CombinationLockConfig::generate(*states, *width, param_seed, noise_seed)?;
                built(CombinationLock::new(cfg.clone())?, &cfg)
            }
            EnvSpec::Maze => {
                let cfg = MultiMazeConfig::generate(param_seed, noise_seed);
                built(MultiMaze::new(cfg.clone())?, &cfg)
            }
            EnvSpec::Tabular {
                states,
                actions,
                noise_factors,
            } => {
                let cfg = random_tabular(*states, *actions, *noise_factors, param_seed, noise_seed);
                built(TabularEnv::new(cfg.clone())?, &cfg)
            }
            EnvSpec::ExplicitLock { config } => {
                let cfg = CombinationLockConfig {
                    noise_seed,
                    ..config.clone()
                };
                built(CombinationLock::new(cfg.clone())?, &cfg)
            }
            EnvSpec::ExplicitMaze { config } => {
                let cfg = MultiMazeConfig {
                    noise_seed,
                    ..config.clone()
                };
                built(MultiMaze::new(cfg.clone())?, &cfg)
            }
            EnvSpec::ExplicitTabular { config } => {
                let cfg = TabularConfig {
                    noise_seed,
                    ..config.clone()
                };
                built(TabularEnv::new(cfg.clone())?, &cfg)
            }
        })
    }
}

/// Fixed mode keeps the environment parameters and start state across
/// replicates and only redraws the noise; variable mode redraws both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    Fixed,
    Variable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    /// One JSON record per replicate.
    pub records: Option<PathBuf>,
    /// One CSV row per replicate.
    pub summary: Option<PathBuf>,
    /// Directory receiving one JSON-lines decision trace per replicate.
    pub traces: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub env: EnvSpec,
    pub params: AlgoParams,
    pub replicates: usize,
    pub mode: EnvMode,
    #[serde(default)]
    pub param_seed: u64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Stationary samples per true state when scoring the encoder.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default)]
    pub eval_seed: u64,
    /// Fraction of replicates that must succeed for the run to pass.
    #[serde(default = "default_success_target")]
    pub success_target: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_eval_samples() -> usize {
    2000
}

fn default_success_target() -> f64 {
    0.95
}

/// SplitMix64 finaliser, used to derive decorrelated per-replicate seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate()?;
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.success_target) {
            bail!("success_target must lie in [0, 1]");
        }
        Ok(())
    }

    /// (parameter seed, noise seed) of replicate `index`.
    pub fn replicate_seeds(&self, index: usize) -> (u64, u64) {
        let noise = mix_seed(self.noise_seed, index as u64);
        let param = match self.mode {
            EnvMode::Fixed => self.param_seed,
            EnvMode::Variable => mix_seed(self.param_seed, index as u64),
        };
        (param, noise)
    }
}
