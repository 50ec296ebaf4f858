//! Mixing-time bounds for the exogenous noise chains.
//!
//! Total-variation distances are half the L1 distance. Threshold comparisons
//! allow a `1e-12` guard band so that values equal to the threshold up to
//! rounding count as mixed.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteelError};

const GUARD: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-13;
const MAX_STEPS: u64 = 10_000_000;

/// The chain `[1 - eps0, eps1; eps0, 1 - eps1]`: `eps0` is the 0 -> 1
/// probability and `eps1` the 1 -> 0 probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStateChain {
    pub eps0: f64,
    pub eps1: f64,
}

impl TwoStateChain {
    pub fn new(eps0: f64, eps1: f64) -> Result<Self> {
        let ok = |e: f64| e > 0.0 && e <= 1.0;
        if !(ok(eps0) && ok(eps1)) {
            return Err(SteelError::InvalidChain(format!(
                "two-state probabilities must lie in (0, 1], got ({eps0}, {eps1})"
            )));
        }
        Ok(Self { eps0, eps1 })
    }

    /// Second eigenvalue, `1 - eps0 - eps1`.
    pub fn rate(&self) -> f64 {
        1.0 - self.eps0 - self.eps1
    }

    /// Stationary probability of state 1.
    pub fn stationary_one(&self) -> f64 {
        self.eps0 / (self.eps0 + self.eps1)
    }

    /// Exact worst-start TV distance after `n` steps:
    /// `max(eps0, eps1) * |1 - eps0 - eps1|^n / (eps0 + eps1)`.
    pub fn exact_tv(&self, n: u64) -> f64 {
        self.eps0.max(self.eps1) * self.rate().abs().powf(n as f64) / (self.eps0 + self.eps1)
    }

    pub fn to_chain(&self) -> FiniteChain {
        FiniteChain::new(vec![
            vec![1.0 - self.eps0, self.eps0],
            vec![self.eps1, 1.0 - self.eps1],
        ])
        .expect("two-state chain with positive rates is valid")
    }
}

/// `|1 - eps0 - eps1|^n`, an upper bound on the TV distance after `n` steps.
pub fn two_state_tv_bound(chain: &TwoStateChain, n: u64) -> f64 {
    chain.rate().abs().powf(n as f64)
}

/// Smallest `n` with `factors * rate^n <= threshold`: the mixing-time bound of
/// a product of `factors` independent chains whose per-factor TV distance is
/// at most `rate^n`.
pub fn product_chain_tmix_bound(factors: usize, rate: f64, threshold: f64) -> Result<u64> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(SteelError::InvalidParameter(format!(
            "per-factor rate must lie in (0, 1), got {rate}"
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SteelError::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let within = |n: u64| factors as f64 * rate.powf(n as f64) <= threshold + GUARD;
    let estimate = ((threshold / factors as f64).ln() / rate.ln())
        .ceil()
        .max(0.0) as u64;
    let mut n = estimate.saturating_sub(2);
    while !within(n) {
        n += 1;
    }
    Ok(n)
}

/// A validated row-stochastic chain that is irreducible and aperiodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    n: usize,
    /// Row-major transition matrix, `p[i * n + j] = P(i -> j)`.
    p: Vec<f64>,
}

impl FiniteChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(SteelError::InvalidChain("chain has no states".into()));
        }
        let mut p = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SteelError::InvalidChain(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(SteelError::InvalidChain(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(SteelError::InvalidChain(format!("row {i} sums to {sum}")));
            }
            p.extend_from_slice(row);
        }
        let chain = Self { n, p };
        if !chain.is_irreducible() {
            return Err(SteelError::InvalidChain("chain is reducible".into()));
        }
        let period = chain.period();
        if period != 1 {
            return Err(SteelError::InvalidChain(format!(
                "chain has period {period}"
            )));
        }
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.p[from * self.n..(from + 1) * self.n]
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.prob(i, j) > 0.0)
    }

    fn reach_all(&self, forward: bool) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for (v, seen_v) in seen.iter_mut().enumerate() {
                let edge = if forward {
                    self.prob(u, v)
                } else {
                    self.prob(v, u)
                };
                if edge > 0.0 && !*seen_v {
                    *seen_v = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn is_irreducible(&self) -> bool {
        self.reach_all(true) && self.reach_all(false)
    }

    /// gcd of `level(u) + 1 - level(v)` over all edges, with BFS levels from state 0.
    fn period(&self) -> u64 {
        let mut level = vec![u64::MAX; self.n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in self.successors(u) {
                if level[v] == u64::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0u64;
        for u in 0..self.n {
            for v in self.successors(u) {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, diff);
            }
        }
        g
    }

    /// Stationary distribution, read off a row of `P^(2^k)` once repeated
    /// squaring stops changing by more than `1e-13` in max norm.
    pub fn stationary(&self) -> Vec<f64> {
        let mut m = self.p.clone();
        for _ in 0..64 {
            let next = mat_mul(&m, &m, self.n);
            let diff = next
                .iter()
                .zip(&m)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            m = next;
            if diff < STATIONARY_TOL {
                break;
            }
        }
        let mut pi = vec![0.0; self.n];
        for row in m.chunks(self.n) {
            for (acc, x) in pi.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        pi
    }

    /// Worst-start TV distance to stationarity for `n = 0..=max_steps`.
    pub fn tv_curve(&self, max_steps: u64) -> Vec<f64> {
        let pi = self.stationary();
        let mut dist = identity(self.n);
        let mut out = Vec::with_capacity(max_steps as usize + 1);
        out.push(worst_tv(&dist, &pi, self.n));
        for _ in 0..max_steps {
            dist = mat_mul(&dist, &self.p, self.n);
            out.push(worst_tv(&dist, &pi, self.n));
        }
        out
    }
}

/// Smallest `n` such that every deterministic start is within `threshold` TV
/// of stationarity after `n` steps.
pub fn exact_tmix(chain: &FiniteChain, threshold: f64) -> Result<u64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SteelError::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let n = chain.n;
    let pi = chain.stationary();
    let mut dist = identity(n);
    for step in 0..=MAX_STEPS {
        if worst_tv(&dist, &pi, n) <= threshold + GUARD {
            return Ok(step);
        }
        dist = mat_mul(&dist, &chain.p, n);
    }
    Err(SteelError::InvalidChain(format!(
        "chain did not mix to {threshold} within {MAX_STEPS} steps"
    )))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in row.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *o += aik * bkj;
            }
        }
    }
    out
}

fn worst_tv(dist: &[f64], pi: &[f64], n: usize) -> f64 {
    dist.chunks(n)
        .map(|row| 0.5 * row.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
