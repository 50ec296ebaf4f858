//! Open-loop planning on learned dynamics.
//!
//! Every search is breadth-first with actions expanded in index order, so the
//! path returned is the lexicographically smallest among the shortest ones.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Result, SteelError};
use crate::model::{Action, PartialDynamics, StateId};

struct Bfs {
    parent: Vec<Option<(StateId, Action)>>,
    order: Vec<StateId>,
    dist: Vec<Option<usize>>,
}

impl Bfs {
    /// Full breadth-first tree over defined edges.
    fn from(t: &PartialDynamics, root: StateId) -> Self {
        let n = t.state_count();
        let mut parent = vec![None; n];
        let mut dist = vec![None; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        dist[root.0] = Some(0);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for a in t.actions() {
                if let Some(v) = t.get(Some(u), a) {
                    if dist[v.0].is_none() {
                        dist[v.0] = Some(dist[u.0].unwrap() + 1);
                        parent[v.0] = Some((u, a));
                        queue.push_back(v);
                    }
                }
            }
        }
        Self {
            parent,
            order,
            dist,
        }
    }

    fn path_to(&self, target: StateId) -> Option<Vec<Action>> {
        self.dist[target.0]?;
        let mut path = Vec::new();
        let mut cur = target;
        while let Some((p, a)) = self.parent[cur.0] {
            path.push(a);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Shortest action sequence from `from` whose last step takes an undefined
/// transition. `None` when every state reachable from `from` is fully defined.
pub fn path_to_undefined(t: &PartialDynamics, from: StateId) -> Option<Vec<Action>> {
    let bfs = Bfs::from(t, from);
    for &u in &bfs.order {
        if let Some(a) = t.actions().find(|&a| t.get(Some(u), a).is_none()) {
            let mut path = bfs.path_to(u).expect("visited state has a path");
            path.push(a);
            return Some(path);
        }
    }
    None
}

pub fn shortest_path(t: &PartialDynamics, from: StateId, to: StateId) -> Option<Vec<Action>> {
    Bfs::from(t, from).path_to(to)
}

/// Shortest non-empty action sequence leading from `state` back to itself.
pub fn shortest_cycle(t: &PartialDynamics, state: StateId) -> Option<Vec<Action>> {
    let bfs = Bfs::from(t, state);
    for &u in &bfs.order {
        if let Some(a) = t.actions().find(|&a| t.get(Some(u), a) == Some(state)) {
            let mut path = bfs.path_to(u).expect("visited state has a path");
            path.push(a);
            return Some(path);
        }
    }
    None
}

/// Maximum over ordered pairs of the shortest-path distance, or `None` when
/// some state cannot reach another over defined transitions.
pub fn diameter(t: &PartialDynamics) -> Option<usize> {
    let mut worst = 0;
    for s in t.states() {
        let bfs = Bfs::from(t, s);
        for d in bfs.dist {
            worst = worst.max(d?);
        }
    }
    Some(worst)
}

/// Builds an action sequence that, started from any learned state, takes an
/// undefined transition before it ends.
///
/// With no learned states yet the sequence is the single action 0.
pub fn build_escape_sequence(t: &PartialDynamics) -> Result<Vec<Action>> {
    if t.state_count() == 0 {
        return Ok(vec![Action(0)]);
    }
    if t.is_complete() {
        return Err(SteelError::Contract(
            "escape sequence requested for complete dynamics".into(),
        ));
    }
    // current positions of the starting states that have not escaped yet
    let mut frontier: BTreeSet<StateId> = t.states().collect();
    let mut sequence = Vec::new();
    while let Some(s) = frontier.pop_first() {
        let leg = path_to_undefined(t, s).ok_or_else(|| {
            SteelError::Contract(format!(
                "no undefined transition is reachable from {s:?}; learned dynamics are inconsistent"
            ))
        })?;
        frontier = frontier
            .into_iter()
            .filter_map(|b| t.run(Some(b), &leg))
            .collect();
        sequence.extend(leg);
    }
    Ok(sequence)
}

/// Plans a closed walk from `start` that visits every state in `targets` and
/// has at least `min_len` actions.
///
/// The route greedily heads to the nearest unvisited target (ties to the lower
/// state index) and then back to `start`. When it is too short, the shortest
/// self-loop of any visited state is repeated at that state's first visit.
pub fn build_collection_cycle(
    t: &PartialDynamics,
    start: StateId,
    targets: &BTreeSet<StateId>,
    min_len: u64,
) -> Result<Vec<Action>> {
    if !t.is_complete() {
        return Err(SteelError::Contract(
            "collection cycle requires complete dynamics".into(),
        ));
    }
    let unreachable =
        |s: StateId| SteelError::Contract(format!("{s:?} is unreachable in the learned dynamics"));

    let mut route: Vec<Action> = Vec::new();
    let mut first_visit: BTreeMap<StateId, usize> = BTreeMap::from([(start, 0)]);
    let mut remaining: BTreeSet<StateId> = targets.clone();
    remaining.remove(&start);
    let mut cur = start;

    let walk = |path: Vec<Action>,
                cur: &mut StateId,
                route: &mut Vec<Action>,
                remaining: &mut BTreeSet<StateId>,
                first_visit: &mut BTreeMap<StateId, usize>| {
        for a in path {
            *cur = t.get(Some(*cur), a).expect("dynamics are complete");
            route.push(a);
            first_visit.entry(*cur).or_insert(route.len());
            remaining.remove(cur);
        }
    };

    while !remaining.is_empty() {
        let bfs = Bfs::from(t, cur);
        let next = remaining
            .iter()
            .copied()
            .min_by_key(|s| (bfs.dist[s.0].unwrap_or(usize::MAX), s.0))
            .expect("non-empty");
        let path = bfs.path_to(next).ok_or_else(|| unreachable(next))?;
        walk(path, &mut cur, &mut route, &mut remaining, &mut first_visit);
    }
    if cur != start {
        let home = shortest_path(t, cur, start).ok_or_else(|| unreachable(start))?;
        walk(home, &mut cur, &mut route, &mut remaining, &mut first_visit);
    }

    if (route.len() as u64) < min_len {
        let (owner, self_loop) = first_visit
            .keys()
            .filter_map(|&s| shortest_cycle(t, s).map(|c| (s, c)))
            .min_by_key(|(s, c)| (c.len(), s.0))
            .ok_or_else(|| unreachable(start))?;
        let missing = min_len - route.len() as u64;
        let repeats = missing.div_ceil(self_loop.len() as u64) as usize;
        let at = first_visit[&owner];
        let padding = self_loop
            .iter()
            .copied()
            .cycle()
            .take(repeats * self_loop.len());
        route.splice(at..at, padding);
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: Action = Action(0);
    const R: Action = Action(1);

    fn dynamics(
        action_count: usize,
        edges: &[(usize, usize, usize)],
        states: usize,
    ) -> PartialDynamics {
        let mut t = PartialDynamics::new(action_count);
        for _ in 0..states {
            t.add_state();
        }
        for &(s, a, to) in edges {
            t.set(StateId(s), Action(a), StateId(to)).unwrap();
        }
        t
    }

    /// Four known states where only R out of the fourth one is unknown
    /// (states renumbered 1..4 -> 0..3).
    fn four_state_example() -> PartialDynamics {
        dynamics(
            2,
            &[
                (0, 1, 1), // 1 -R-> 2
                (1, 1, 0), // 2 -R-> 1
                (2, 1, 3), // 3 -R-> 4
                (2, 0, 2), // 3 -L-> 3
                (0, 0, 0), // 1 -L-> 1
                (1, 0, 2), // 2 -L-> 3
                (3, 0, 0), // 4 -L-> 1
            ],
            4,
        )
    }

    #[test]
    fn singleton_with_nothing_known() {
        let t = dynamics(3, &[], 1);
        assert_eq!(path_to_undefined(&t, StateId(0)), Some(vec![Action(0)]));
    }

    #[test]
    fn four_state_example_paths() {
        let t = four_state_example();
        // hand BFS: 1 -R-> 2 -L-> 3 -R-> 4 -R-> undefined
        assert_eq!(path_to_undefined(&t, StateId(0)), Some(vec![R, L, R, R]));
        assert_eq!(path_to_undefined(&t, StateId(2)), Some(vec![R, R]));
        assert_eq!(path_to_undefined(&t, StateId(3)), Some(vec![R]));
    }

    #[test]
    fn complete_dynamics_have_no_undefined_path() {
        let t = dynamics(1, &[(0, 0, 1), (1, 0, 0)], 2);
        assert_eq!(path_to_undefined(&t, StateId(0)), None);
        assert!(build_escape_sequence(&t).is_err());
    }

    #[test]
    fn escape_sequence_special_cases() {
        assert_eq!(
            build_escape_sequence(&PartialDynamics::new(2)).unwrap(),
            vec![L]
        );
        let t = dynamics(2, &[(0, 0, 0)], 1);
        assert_eq!(build_escape_sequence(&t).unwrap(), vec![R]);
    }

    #[test]
    fn escape_sequence_on_four_state_example() {
        let t = four_state_example();
        let seq = build_escape_sequence(&t).unwrap();
        for s in t.states() {
            assert_eq!(t.run(Some(s), &seq), None, "{s:?} does not escape");
        }
        assert!(seq.len() <= 4 * t.state_count());
    }

    #[test]
    fn pure_padding_cycle() {
        let t = dynamics(2, &[(0, 0, 0), (0, 1, 1), (1, 0, 0), (1, 1, 1)], 2);
        let cycle = build_collection_cycle(&t, StateId(0), &BTreeSet::new(), 4).unwrap();
        assert_eq!(cycle, vec![L; 4]);
    }

    #[test]
    fn two_cycle_visits_other_state() {
        // p <-> q under the single action
        let t = dynamics(1, &[(0, 0, 1), (1, 0, 0)], 2);
        let cycle =
            build_collection_cycle(&t, StateId(0), &BTreeSet::from([StateId(1)]), 2).unwrap();
        assert_eq!(cycle, vec![Action(0), Action(0)]);
    }

    #[test]
    fn padding_goes_to_first_visit_of_loop_owner() {
        // 0 -a0-> 1 -a0-> 2 -a0-> 0, state 1 has a self-loop under a1
        let t = dynamics(
            2,
            &[
                (0, 0, 1),
                (1, 0, 2),
                (2, 0, 0),
                (0, 1, 2),
                (1, 1, 1),
                (2, 1, 0),
            ],
            3,
        );
        let cycle =
            build_collection_cycle(&t, StateId(0), &BTreeSet::from([StateId(1)]), 6).unwrap();
        // route 0->1->2->0 is a0 a0 a0; state 1 owns the only 1-step self-loop
        assert_eq!(
            cycle,
            vec![
                Action(0),
                Action(1),
                Action(1),
                Action(1),
                Action(0),
                Action(0)
            ]
        );
        assert_eq!(t.run(Some(StateId(0)), &cycle), Some(StateId(0)));
    }

    #[test]
    fn collection_requires_complete_dynamics() {
        let t = dynamics(2, &[(0, 0, 0)], 1);
        assert!(build_collection_cycle(&t, StateId(0), &BTreeSet::new(), 1).is_err());
    }

    #[test]
    fn diameter_of_ring() {
        let t = dynamics(1, &[(0, 0, 1), (1, 0, 2), (2, 0, 0)], 3);
        assert_eq!(diameter(&t), Some(2));
        let broken = dynamics(1, &[(0, 0, 0), (1, 0, 0)], 2);
        assert_eq!(diameter(&broken), None);
    }
}
