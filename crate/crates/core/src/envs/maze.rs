//! Nine copies of a four-room maze, each with its own agent. One agent follows
//! the learner's actions; the other eight move uniformly at random.
//!
//! The observation concatenates one one-hot block per copy, so it has
//! `9 * 68 = 612` bits of which exactly nine are set.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, TruthHooks};
use crate::error::{Result, SteelError};
use crate::model::Action;
use crate::obs::{ObsRef, Observation};

pub const MAZE_CELLS: usize = 68;
pub const MAZE_COPIES: usize = 9;
pub const MAZE_ACTIONS: usize = 4;

/// Four 4x4 rooms split by a wall cross, one doorway in each wall arm.
pub const FOUR_ROOMS: [&str; 11] = [
    "###########",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "#....#....#",
    "##.#####.##",
    "#....#....#",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "###########",
];

/// Up, Down, Left, Right as row/column offsets.
const MOVES: [(isize, isize); MAZE_ACTIONS] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// A grid of walls (`#`) and free cells (`.`). Cells are numbered in row-major
/// order; moving into a wall or off the grid leaves the agent in place.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    rows: Vec<String>,
    cells: Vec<(usize, usize)>,
    /// `moves[cell * 4 + action]`.
    moves: Vec<usize>,
}

impl MazeLayout {
    pub fn parse<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let rows: Vec<String> = rows.iter().map(|r| r.as_ref().to_string()).collect();
        let bad = |m: String| SteelError::InvalidEnvironment(m);
        let mut index = std::collections::HashMap::new();
        let mut cells = Vec::new();
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '.' => {
                        index.insert((r, c), cells.len());
                        cells.push((r, c));
                    }
                    '#' => {}
                    other => return Err(bad(format!("unexpected maze character {other:?}"))),
                }
            }
        }
        if cells.is_empty() {
            return Err(bad("maze has no free cells".into()));
        }
        let mut moves = Vec::with_capacity(cells.len() * MAZE_ACTIONS);
        for &(r, c) in &cells {
            for (dr, dc) in MOVES {
                let target = r
                    .checked_add_signed(dr)
                    .zip(c.checked_add_signed(dc))
                    .and_then(|p| index.get(&p).copied());
                moves.push(target.unwrap_or(index[&(r, c)]));
            }
        }
        let layout = Self { rows, cells, moves };
        if !layout.is_connected() {
            return Err(bad("maze free cells are not all connected".into()));
        }
        Ok(layout)
    }

    pub fn four_rooms() -> Self {
        Self::parse(&FOUR_ROOMS).expect("built-in layout is valid")
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, cell: usize) -> (usize, usize) {
        self.cells[cell]
    }

    pub fn step(&self, cell: usize, action: Action) -> usize {
        self.moves[cell * MAZE_ACTIONS + action.0]
    }

    /// Every move is reversible, so reaching all cells from cell 0 is enough
    /// for strong connectivity.
    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for a in 0..MAZE_ACTIONS {
                let v = self.step(u, Action(a));
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Transition matrix of an agent taking uniformly random actions.
    pub fn random_walk(&self) -> Vec<Vec<f64>> {
        let n = self.cells.len();
        let mut p = vec![vec![0.0; n]; n];
        for (u, row) in p.iter_mut().enumerate() {
            for a in 0..MAZE_ACTIONS {
                row[self.step(u, Action(a))] += 1.0 / MAZE_ACTIONS as f64;
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiMazeConfig {
    /// ASCII rows of the shared layout.
    pub layout: Vec<String>,
    /// Which copy the learner controls.
    pub true_index: usize,
    /// Starting cell of the controlled agent.
    pub initial_cell: usize,
    /// Seeds the distractors' starting cells and their actions.
    pub noise_seed: u64,
}

impl MultiMazeConfig {
    pub fn generate(param_seed: u64, noise_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(param_seed);
        Self {
            layout: FOUR_ROOMS.iter().map(|r| r.to_string()).collect(),
            true_index: rng.random_range(0..MAZE_COPIES),
            initial_cell: rng.random_range(0..MAZE_CELLS),
            noise_seed,
        }
    }

    pub fn parse_layout(&self) -> Result<MazeLayout> {
        let layout = MazeLayout::parse(&self.layout)?;
        if layout.cell_count() != MAZE_CELLS {
            return Err(SteelError::InvalidEnvironment(format!(
                "maze must have {MAZE_CELLS} free cells, found {}",
                layout.cell_count()
            )));
        }
        if self.true_index >= MAZE_COPIES || self.initial_cell >= MAZE_CELLS {
            return Err(SteelError::InvalidEnvironment(
                "true_index or initial_cell out of range".into(),
            ));
        }
        Ok(layout)
    }
}

#[derive(Clone, Debug)]
pub struct MultiMaze {
    config: MultiMazeConfig,
    layout: MazeLayout,
    /// Agent cell in every copy; `agents[true_index]` is the controlled one.
    agents: [usize; MAZE_COPIES],
    rng: ChaCha8Rng,
    clock: u64,
    obs: Observation,
}

impl MultiMaze {
    pub fn new(config: MultiMazeConfig) -> Result<Self> {
        let layout = config.parse_layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
        let mut agents = [0; MAZE_COPIES];
        for (m, cell) in agents.iter_mut().enumerate() {
            *cell = if m == config.true_index {
                config.initial_cell
            } else {
                rng.random_range(0..MAZE_CELLS)
            };
        }
        let mut env = Self {
            config,
            layout,
            agents,
            rng,
            clock: 0,
            obs: Observation::zeros(MAZE_CELLS * MAZE_COPIES),
        };
        env.render();
        Ok(env)
    }

    pub fn config(&self) -> &MultiMazeConfig {
        &self.config
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    fn render(&mut self) {
        self.obs.clear();
        for (m, &cell) in self.agents.iter().enumerate() {
            self.obs.set(m * MAZE_CELLS + cell, true);
        }
    }
}

impl Environment for MultiMaze {
    fn action_count(&self) -> usize {
        MAZE_ACTIONS
    }

    fn obs_width(&self) -> usize {
        MAZE_CELLS * MAZE_COPIES
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn observation(&self) -> ObsRef<'_> {
        self.obs.as_ref()
    }

    fn step(&mut self, action: Action) -> Result<ObsRef<'_>> {
        if action.0 >= MAZE_ACTIONS {
            return Err(SteelError::ActionOutOfRange {
                action: action.0,
                count: MAZE_ACTIONS,
            });
        }
        // two random bits per distractor
        let mut bits = self.rng.next_u64();
        for (m, cell) in self.agents.iter_mut().enumerate() {
            let a = if m == self.config.true_index {
                action
            } else {
                let a = Action((bits & 3) as usize);
                bits >>= 2;
                a
            };
            *cell = self.layout.step(*cell, a);
        }
        self.clock += 1;
        self.render();
        Ok(self.obs.as_ref())
    }
}

impl TruthHooks for MultiMaze {
    fn latent_count(&self) -> usize {
        MAZE_CELLS
    }

    fn latent_state(&self) -> usize {
        self.agents[self.config.true_index]
    }

    fn decode(&self, x: ObsRef<'_>) -> Option<usize> {
        let base = self.config.true_index * MAZE_CELLS;
        let mut lit = (0..MAZE_CELLS).filter(|&c| x.get(base + c));
        let cell = lit.next()?;
        lit.next().is_none().then_some(cell)
    }

    fn true_transition(&self, state: usize, action: Action) -> usize {
        self.layout.step(state, action)
    }

    /// The random walk is symmetric, so its stationary law is uniform over cells.
    fn sample_stationary(&self, state: usize, rng: &mut dyn RngCore) -> Observation {
        let mut obs = Observation::zeros(MAZE_CELLS * MAZE_COPIES);
        for m in 0..MAZE_COPIES {
            let cell = if m == self.config.true_index {
                state
            } else {
                rng.random_range(0..MAZE_CELLS)
            };
            obs.set(m * MAZE_CELLS + cell, true);
        }
        obs
    }

    fn indicator_coordinate(&self, state: usize) -> Option<usize> {
        Some(self.config.true_index * MAZE_CELLS + state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rooms_shape() {
        let layout = MazeLayout::four_rooms();
        assert_eq!(layout.cell_count(), 68);
        // doorways in each arm of the wall cross
        for door in [(2, 5), (8, 5), (5, 2), (5, 8)] {
            assert!(layout.cells.contains(&door), "{door:?}");
        }
        let p = layout.random_walk();
        for (u, row) in p.iter().enumerate() {
            for (v, &puv) in row.iter().enumerate() {
                assert_eq!(puv, p[v][u]);
            }
        }
    }

    #[test]
    fn walls_block_moves() {
        let layout = MazeLayout::four_rooms();
        // top-left corner: up and left are walls
        assert_eq!(layout.position(0), (1, 1));
        assert_eq!(layout.step(0, Action(0)), 0);
        assert_eq!(layout.step(0, Action(2)), 0);
        assert_ne!(layout.step(0, Action(1)), 0);
    }

    #[test]
    fn nine_bits_per_observation() {
        let mut env = MultiMaze::new(MultiMazeConfig::generate(1, 2)).unwrap();
        assert_eq!(env.obs_width(), 612);
        for t in 0..500 {
            let x = env.step(Action(t % 4)).unwrap().to_owned();
            assert_eq!(x.as_ref().count_ones(), 9);
            assert_eq!(env.decode(x.as_ref()), Some(env.latent_state()));
        }
    }

    #[test]
    fn controlled_agent_ignores_noise() {
        let cfg = MultiMazeConfig::generate(4, 0);
        let mut a = MultiMaze::new(cfg.clone()).unwrap();
        let mut b = MultiMaze::new(MultiMazeConfig {
            noise_seed: 99,
            ..cfg
        })
        .unwrap();
        for t in 0..300 {
            let act = Action((t * 7 + t / 3) % 4);
            a.step(act).unwrap();
            b.step(act).unwrap();
            assert_eq!(a.latent_state(), b.latent_state());
        }
    }

    #[test]
    fn rejects_wrong_layouts() {
        let split = ["#.#.#"];
        assert!(MazeLayout::parse(&split).is_err());
        let small = MultiMazeConfig {
            layout: vec!["...".into()],
            ..MultiMazeConfig::generate(0, 0)
        };
        assert!(MultiMaze::new(small).is_err());
    }
}
