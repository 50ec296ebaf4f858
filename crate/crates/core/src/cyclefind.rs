//! CycleFind: loop a fixed action sequence until the latent states settle
//! into a cycle, measure the cycle's period, harvest spaced samples of every
//! position on it and match those positions against known states.
//!
//! Indexing follows the recorded sequence `x_1, x_2, ...`: `x_j` is the
//! observation after the `j`-th action of the invocation, and the action taken
//! after observing `x_j` is `a[j % |a|]`. In storage `x_j` lives at `j - 1`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetTable};
use crate::env::Environment;
use crate::error::{Result, SteelError};
use crate::hypothesis::{perfectly_separates, TrainingOracle};
use crate::model::{check_unit_open, Action, AlgoParams, PartialDynamics, StateId};
use crate::obs::ObsRef;

/// `ceil(ln(delta / denominator) / ln(9/16))`, with the denominator given by
/// its natural logarithm so that large products cannot overflow.
fn samples_for(delta: f64, ln_denominator: f64) -> u64 {
    let value = (delta.ln() - ln_denominator) / (9.0f64 / 16.0).ln();
    value.ceil().max(1.0) as u64
}

/// Sample count per candidate period test.
///
/// With `N = 1` there is no candidate to test and the count is 1.
pub fn n_samp_cyc(params: &AlgoParams, action_count: usize, class_size: usize) -> Result<u64> {
    check_unit_open("delta", params.delta)?;
    let n = params.max_states as f64;
    if params.max_states < 2 {
        return Ok(1);
    }
    let ln_den =
        (4.0 * action_count as f64).ln() + n.ln() + (n - 1.0).ln() + (class_size as f64).ln();
    Ok(samples_for(params.delta, ln_den))
}

/// Sample count per cycle position and per half.
pub fn n_samp(params: &AlgoParams, action_count: usize, class_size: usize) -> Result<u64> {
    check_unit_open("delta", params.delta)?;
    let ln_den = (4.0 * action_count as f64).ln()
        + 4.0 * (params.max_states as f64).ln()
        + (params.diameter_bound as f64 + 1.0).ln()
        + (class_size as f64).ln();
    Ok(samples_for(params.delta, ln_den))
}

/// Steps skipped before the first observation used for period detection.
pub fn period_skip(params: &AlgoParams, loop_len: u64) -> u64 {
    ((params.max_states as u64 - 1) * loop_len).max(params.mixing_time_bound)
}

pub fn c_init(params: &AlgoParams, n_samp_cyc: u64, loop_len: u64) -> u64 {
    let n = params.max_states as u64;
    let t = params.mixing_time_bound;
    (2 * t + 3 * n * loop_len - 2) * n_samp_cyc - t - n * loop_len
        + 1
        + period_skip(params, loop_len)
}

/// Budgets that depend on the detected period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBudget {
    pub n_cyc: u64,
    /// Length of the recorded sequence needed for dataset assembly.
    pub c: u64,
    pub n0: u64,
    pub n0_prime: u64,
}

impl CycleBudget {
    pub fn new(params: &AlgoParams, n_samp: u64, loop_len: u64, n_cyc: u64) -> Self {
        let n = params.max_states as u64;
        let t = params.mixing_time_bound;
        let period = n_cyc * loop_len;
        let stride = period * t.div_ceil(period);
        let n0 = ((n - n_cyc) * loop_len).max(t);
        let c = 2 * period * ((n_samp - 1) * t.div_ceil(period) + 1) + t + n0;
        let n0_prime = n0 + (n_samp - 1) * stride + period + t;
        Self {
            n_cyc,
            c,
            n0,
            n0_prime,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSet {
    pub n_samp_cyc: u64,
    pub n_samp: u64,
    pub c_init: u64,
    pub cycle: Option<CycleBudget>,
}

pub fn compute_budgets(
    params: &AlgoParams,
    action_count: usize,
    class_size: usize,
    loop_len: usize,
    n_cyc: Option<usize>,
) -> Result<BudgetSet> {
    params.validate()?;
    if loop_len == 0 || action_count == 0 || class_size == 0 {
        return Err(SteelError::InvalidParameter(
            "loop length, action count and class size must be positive".into(),
        ));
    }
    if let Some(k) = n_cyc {
        if k == 0 || k > params.max_states {
            return Err(SteelError::InvalidParameter(format!(
                "period multiple {k} outside [1, N]"
            )));
        }
    }
    let n_samp_cyc = n_samp_cyc(params, action_count, class_size)?;
    let n_samp = n_samp(params, action_count, class_size)?;
    let len = loop_len as u64;
    Ok(BudgetSet {
        n_samp_cyc,
        n_samp,
        c_init: c_init(params, n_samp_cyc, len),
        cycle: n_cyc.map(|k| CycleBudget::new(params, n_samp, len, k as u64)),
    })
}

/// Outcome of testing one candidate period multiple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodTest {
    pub candidate: usize,
    pub separated: bool,
}

fn x_at(seq: &Dataset, j: u64) -> Result<ObsRef<'_>> {
    if j == 0 || j as usize > seq.len() {
        return Err(SteelError::Contract(format!(
            "observation x_{j} requested from a sequence of length {}",
            seq.len()
        )));
    }
    Ok(seq.observation(j as usize - 1))
}

/// Finds the period of the latent sequence in units of whole loops.
///
/// Candidates run from N down to 2 and the first whose two datasets are
/// perfectly separable wins; 1 when none is.
pub fn detect_period<O: TrainingOracle>(
    seq: &Dataset,
    loop_len: usize,
    params: &AlgoParams,
    c_init: u64,
    oracle: &O,
) -> Result<(usize, Vec<PeriodTest>)> {
    if (seq.len() as u64) < c_init {
        return Err(SteelError::Contract(format!(
            "period detection needs {c_init} observations, got {}",
            seq.len()
        )));
    }
    let len = loop_len as u64;
    let t = params.mixing_time_bound;
    let skip = period_skip(params, len);
    let bar = |i: u64| x_at(seq, i * len + skip);
    let mut tests = Vec::new();
    for cand in (2..=params.max_states).rev() {
        let nc = cand as u64;
        let q = t.div_ceil(nc * len);
        let r = q * nc;
        let block = 2 * r + nc;
        let k = (c_init + r * len - skip) / (block * len);
        if k == 0 {
            return Err(SteelError::Contract(format!(
                "no complete block for candidate {cand} within {c_init} observations"
            )));
        }
        let mut zeros = Vec::with_capacity((k * (nc - 1)) as usize);
        let mut ones = Vec::with_capacity(k as usize);
        for i in 0..k {
            ones.push(bar(block * i)?);
            for j in 1..nc {
                zeros.push(bar(r + block * i + j)?);
            }
        }
        let f = oracle.train(zeros.iter().copied(), ones.iter().copied())?;
        let separated = perfectly_separates(&f, zeros.iter().copied(), ones.iter().copied());
        tests.push(PeriodTest {
            candidate: cand,
            separated,
        });
        if separated {
            return Ok((cand, tests));
        }
    }
    Ok((1, tests))
}

/// Samples of one cycle position: the first `half` entries come from the
/// window starting at `n0`, the rest from the window starting at `n0'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionSamples {
    pub data: Dataset,
    pub half: usize,
}

impl PositionSamples {
    pub fn first_half(&self) -> impl Iterator<Item = ObsRef<'_>> + Clone + '_ {
        self.data.observations().take(self.half)
    }

    pub fn second_half(&self) -> impl Iterator<Item = ObsRef<'_>> + Clone + '_ {
        self.data.observations().skip(self.half)
    }

    pub fn first_half_times(&self) -> &[u64] {
        &self.data.times()[..self.half]
    }

    pub fn second_half_times(&self) -> &[u64] {
        &self.data.times()[self.half..]
    }
}

/// Indices `j` of the recorded sequence that feed position `i`.
pub fn position_indices(
    budget: &CycleBudget,
    n_samp: u64,
    loop_len: u64,
    t_mix: u64,
    i: u64,
) -> Vec<u64> {
    let period = budget.n_cyc * loop_len;
    let stride = period * t_mix.div_ceil(period);
    let mut out = Vec::with_capacity(2 * n_samp as usize);
    for offset in [budget.n0, budget.n0_prime] {
        let phase = (i as i64 - offset as i64).rem_euclid(period as i64) as u64;
        out.extend((0..n_samp).map(|k| k * stride + offset + phase));
    }
    out
}

pub fn assemble_cycle_datasets(
    seq: &Dataset,
    loop_len: usize,
    params: &AlgoParams,
    n_samp: u64,
    budget: &CycleBudget,
) -> Result<Vec<PositionSamples>> {
    if (seq.len() as u64) < budget.c {
        return Err(SteelError::Contract(format!(
            "dataset assembly needs {} observations, got {}",
            budget.c,
            seq.len()
        )));
    }
    let len = loop_len as u64;
    let period = budget.n_cyc * len;
    (0..period)
        .map(|i| {
            let mut data = Dataset::with_capacity(seq.width(), 2 * n_samp as usize);
            for j in position_indices(budget, n_samp, len, params.mixing_time_bound, i) {
                data.push(x_at(seq, j)?, seq.times()[j as usize - 1])?;
            }
            Ok(PositionSamples {
                data,
                half: n_samp as usize,
            })
        })
        .collect()
}

/// Matches each position to the first known state (in creation order) that
/// cannot be separated from it, creating a new state when every known state
/// can. Returns the state of each position and the states created.
pub fn identify_states<O: TrainingOracle>(
    positions: Vec<PositionSamples>,
    dynamics: &mut PartialDynamics,
    table: &mut DatasetTable,
    max_states: usize,
    oracle: &O,
) -> Result<(Vec<StateId>, Vec<StateId>)> {
    let mut cycle = Vec::with_capacity(positions.len());
    let mut created = Vec::new();
    for pos in positions {
        let mut matched = None;
        for (s, known) in table.iter() {
            let zeros = known.observations();
            let ones = pos.data.observations();
            let f = oracle.train(zeros.clone(), ones.clone())?;
            if !perfectly_separates(&f, zeros, ones) {
                matched = Some(s);
                break;
            }
        }
        let s = match matched {
            Some(s) => s,
            None => {
                if dynamics.state_count() >= max_states {
                    return Err(SteelError::StateBoundExceeded(max_states));
                }
                let s = dynamics.add_state();
                table.insert(s, pos.data)?;
                created.push(s);
                s
            }
        };
        cycle.push(s);
    }
    Ok((cycle, created))
}

/// One CycleFind invocation, as recorded in the learner's trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub loop_actions: Vec<Action>,
    pub budgets: BudgetSet,
    pub period_tests: Vec<PeriodTest>,
    pub n_cyc: usize,
    pub cycle_states: Vec<StateId>,
    pub created: Vec<StateId>,
    pub current: StateId,
    pub steps: u64,
}

/// Runs CycleFind with loop `actions` on `env`, extending `dynamics` and `table`.
pub fn cyclefind_run<E, O>(
    env: &mut E,
    actions: &[Action],
    dynamics: &mut PartialDynamics,
    table: &mut DatasetTable,
    params: &AlgoParams,
    oracle: &O,
) -> Result<CycleRecord>
where
    E: Environment + ?Sized,
    O: TrainingOracle,
{
    if actions.is_empty() {
        return Err(SteelError::Contract(
            "CycleFind needs a non-empty action loop".into(),
        ));
    }
    let len = actions.len();
    let mut budgets = compute_budgets(params, env.action_count(), oracle.class_size(), len, None)?;

    let mut seq = Dataset::with_capacity(env.obs_width(), budgets.c_init as usize);
    let record_until = |seq: &mut Dataset, env: &mut E, until: u64| -> Result<()> {
        for j in seq.len() as u64..until {
            let at = env.clock() + 1;
            seq.push(env.step(actions[j as usize % len])?, at)?;
        }
        Ok(())
    };
    record_until(&mut seq, env, budgets.c_init)?;

    let (n_cyc, period_tests) = detect_period(&seq, len, params, budgets.c_init, oracle)?;
    let budget = CycleBudget::new(params, budgets.n_samp, len as u64, n_cyc as u64);
    budgets.cycle = Some(budget);
    let total = budget.c.max(budgets.c_init);
    record_until(&mut seq, env, total)?;
    log::debug!("loop of {len} actions: n_cyc = {n_cyc}, {total} steps");

    let positions = assemble_cycle_datasets(&seq, len, params, budgets.n_samp, &budget)?;
    drop(seq);
    for (i, p) in positions.iter().enumerate() {
        if !p.data.is_spaced(params.mixing_time_bound) {
            return Err(SteelError::Contract(format!(
                "samples of cycle position {i} are closer than the mixing bound"
            )));
        }
    }
    let (cycle_states, created) =
        identify_states(positions, dynamics, table, params.max_states, oracle)?;

    let period = cycle_states.len();
    for (i, &s) in cycle_states.iter().enumerate() {
        dynamics.set(s, actions[i % len], cycle_states[(i + 1) % period])?;
    }
    let current = cycle_states[(total % period as u64) as usize];
    Ok(CycleRecord {
        loop_actions: actions.to_vec(),
        budgets,
        period_tests,
        n_cyc,
        cycle_states,
        created,
        current,
        steps: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TruthHooks;
    use crate::envs::tabular::{grid, toggle, TabularConfig, TabularEnv};
    use crate::hypothesis::CoordinateClass;

    fn lock_params() -> AlgoParams {
        AlgoParams {
            max_states: 30,
            diameter_bound: 30,
            mixing_time_bound: 40,
            delta: 0.05,
            epsilon: 0.05,
        }
    }

    #[test]
    fn lock_budgets() {
        let b = compute_budgets(&lock_params(), 2, 512, 1, None).unwrap();
        assert_eq!(b.n_samp_cyc, 32);
        assert_eq!(b.n_samp, 50);
        // (80 + 90 - 2) * 32 - 40 - 30 + 1 + 40
        assert_eq!(b.c_init, 5347);
    }

    #[test]
    fn cycle_budget_last_index_is_c() {
        let p = lock_params();
        for len in [1u64, 2, 7, 45] {
            for n_cyc in [1u64, 2, 3, 30] {
                let b = CycleBudget::new(&p, 50, len, n_cyc);
                let last = (0..n_cyc * len)
                    .flat_map(|i| position_indices(&b, 50, len, 40, i))
                    .max()
                    .unwrap();
                assert_eq!(last, b.c - 1, "len {len}, n_cyc {n_cyc}");
            }
        }
    }

    #[test]
    fn single_position_spacing() {
        let p = lock_params();
        let b = CycleBudget::new(&p, 50, 1, 1);
        let idx = position_indices(&b, 50, 1, 40, 0);
        assert_eq!(idx.len(), 100);
        assert!(idx[..50].windows(2).all(|w| w[1] - w[0] == 40));
        assert!(idx[50..].windows(2).all(|w| w[1] - w[0] == 40));
        assert!(idx[50] - idx[49] >= 40);
    }

    #[test]
    fn invalid_budget_inputs() {
        let mut p = lock_params();
        assert!(compute_budgets(&p, 2, 512, 1, Some(31)).is_err());
        assert!(compute_budgets(&p, 2, 512, 0, None).is_err());
        p.delta = 1.0;
        assert!(compute_budgets(&p, 2, 512, 1, None).is_err());
    }

    fn small_params(n: usize, t: u64) -> AlgoParams {
        AlgoParams {
            max_states: n,
            diameter_bound: n,
            mixing_time_bound: t,
            delta: 0.05,
            epsilon: 0.05,
        }
    }

    fn binary(up: f64, down: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - up, up], vec![down, 1.0 - down]]
    }

    #[test]
    fn first_invocation_on_self_loop_creates_one_state() {
        let cfg = TabularConfig {
            transitions: toggle(),
            noise_factors: vec![binary(0.3, 0.4); 3],
            initial_state: 1,
            noise_seed: 5,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let mut t = PartialDynamics::new(2);
        let mut table = DatasetTable::new();
        let rec = cyclefind_run(
            &mut env,
            &[Action(0)],
            &mut t,
            &mut table,
            &small_params(4, 4),
            &oracle,
        )
        .unwrap();
        assert_eq!(rec.n_cyc, 1);
        assert_eq!(rec.created, vec![StateId(0)]);
        assert_eq!(t.get(Some(StateId(0)), Action(0)), Some(StateId(0)));
        assert_eq!(t.defined_count(), 1);
        assert_eq!(env.clock(), rec.steps);
    }

    #[test]
    fn grid_up_loop_reaches_top_row() {
        // from the bottom-right corner, U settles on the top-right corner
        let cfg = TabularConfig {
            transitions: grid(2, 3),
            noise_factors: vec![binary(0.5, 0.2); 2],
            initial_state: 5,
            noise_seed: 1,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let mut t = PartialDynamics::new(4);
        let mut table = DatasetTable::new();
        let rec = cyclefind_run(
            &mut env,
            &[Action(0)],
            &mut t,
            &mut table,
            &small_params(6, 4),
            &oracle,
        )
        .unwrap();
        assert_eq!(rec.cycle_states.len(), 1);
        assert_eq!(env.latent_state(), 2);
        for (_, d) in table.iter() {
            assert!(d.observations().all(|x| x.get(2)));
        }
    }

    #[test]
    fn period_three_is_detected() {
        // single action cycles through three states
        let cfg = TabularConfig {
            transitions: vec![vec![1], vec![2], vec![0]],
            noise_factors: vec![binary(0.4, 0.4); 2],
            initial_state: 0,
            noise_seed: 8,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let mut t = PartialDynamics::new(1);
        let mut table = DatasetTable::new();
        let rec = cyclefind_run(
            &mut env,
            &[Action(0)],
            &mut t,
            &mut table,
            &small_params(5, 3),
            &oracle,
        )
        .unwrap();
        assert_eq!(rec.n_cyc, 3);
        assert_eq!(rec.created.len(), 3);
        assert!(t.is_complete());
        assert_eq!(rec.period_tests.first().unwrap().candidate, 5);
    }

    #[test]
    fn repeated_state_in_cycle_is_matched() {
        // loop [1, 0] from state 0: 0 -1-> 1 -0-> 1 -1-> 0 -0-> 0, period 4 steps
        // so positions 1 and 2 share state 1 and positions 3 and 0 share state 0
        let cfg = TabularConfig {
            transitions: toggle(),
            noise_factors: vec![binary(0.3, 0.3); 2],
            initial_state: 0,
            noise_seed: 2,
        };
        let mut env = TabularEnv::new(cfg).unwrap();
        let oracle = CoordinateClass::new(env.obs_width());
        let mut t = PartialDynamics::new(2);
        let mut table = DatasetTable::new();
        let rec = cyclefind_run(
            &mut env,
            &[Action(1), Action(0)],
            &mut t,
            &mut table,
            &small_params(3, 2),
            &oracle,
        )
        .unwrap();
        assert_eq!(rec.n_cyc, 2);
        assert_eq!(rec.cycle_states.len(), 4);
        assert_eq!(rec.created.len(), 2);
        let c = &rec.cycle_states;
        assert_eq!(c[1], c[2]);
        assert_eq!(c[3], c[0]);
        assert_ne!(c[0], c[1]);
        assert!(t.is_complete());
    }
}
