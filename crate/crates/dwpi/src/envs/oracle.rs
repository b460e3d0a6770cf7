//! Brute-force optimal-return oracles for small environment instances.
//!
//! The oracle materializes every Pareto-candidate deterministic behavior as
//! an undiscounted return vector, which makes trained agents checkable
//! exactly: the best scalarized return for a preference is an argmax over a
//! short list.

use std::cmp::Ordering;

use crate::envs::EnvSpec;
use crate::error::{DwpiError, Result};
use crate::morl::{scalarize_slice, PreferenceVector, RewardVector};

/// Node budget for exhaustive search, generous for the shipped layouts.
pub const DEFAULT_ORACLE_BUDGET: usize = 5_000_000;

/// One Pareto-candidate behavior and its undiscounted per-objective return.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    /// Human-readable description of the behavior (treasure column or item
    /// subset).
    pub label: String,
    pub ret: RewardVector,
}

/// Enumerates Pareto-candidate returns.
///
/// CDST: one entry per treasure, `(value, -shortest_path_steps)`, restricted
/// to treasures reachable within the episode cap. Item Gathering: the
/// non-dominated set of color-count vectors over all item subsets collectable
/// within the cap (exact traveling-path search over pickup orders).
pub fn oracle_returns(spec: &EnvSpec, budget: usize) -> Result<Vec<OracleEntry>> {
    match spec {
        EnvSpec::Cdst(layout) => {
            let nodes = layout.rows * layout.cols;
            if nodes > budget {
                return Err(DwpiError::OracleBudget {
                    explored: nodes,
                    budget,
                });
            }
            let dists = layout.shortest_paths();
            let mut entries = Vec::new();
            for c in 0..layout.cols {
                let cell = layout.depths[c] * layout.cols + c;
                if let Some(d) = dists[cell] {
                    if d <= layout.episode_cap {
                        entries.push(OracleEntry {
                            label: format!("treasure-{c}"),
                            ret: RewardVector(vec![layout.treasure_values[c], -(d as f64)]),
                        });
                    }
                }
            }
            if entries.is_empty() {
                return Err(DwpiError::Empty(
                    "oracle: no treasure reachable within the episode cap".into(),
                ));
            }
            Ok(entries)
        }
        EnvSpec::ItemGathering(layout) => {
            if layout.randomize_items {
                return Err(DwpiError::InvalidConfig(
                    "oracle requires a fixed item layout".into(),
                ));
            }
            let n = layout.items.len();
            let subsets = 1usize << n;
            if subsets * n > budget {
                return Err(DwpiError::OracleBudget {
                    explored: subsets * n,
                    budget,
                });
            }
            // Moves clamp at borders and there are no walls, so the shortest
            // path between two cells is the Manhattan distance. Held-Karp
            // over pickup orders: cost[s][j] = fewest steps to collect
            // subset s ending on item j.
            let manhattan = |a: (usize, usize), b: (usize, usize)| {
                a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
            };
            let cells: Vec<(usize, usize)> =
                layout.items.iter().map(|i| (i.row, i.col)).collect();
            let inf = usize::MAX / 2;
            let mut cost = vec![vec![inf; n]; subsets];
            for j in 0..n {
                cost[1 << j][j] = manhattan(layout.start, cells[j]);
            }
            for s in 1..subsets {
                for j in 0..n {
                    if s & (1 << j) == 0 || cost[s][j] >= inf {
                        continue;
                    }
                    for k in 0..n {
                        if s & (1 << k) != 0 {
                            continue;
                        }
                        let ns = s | (1 << k);
                        let c = cost[s][j] + manhattan(cells[j], cells[k]);
                        if c < cost[ns][k] {
                            cost[ns][k] = c;
                        }
                    }
                }
            }
            let mut candidates: Vec<(Vec<f64>, usize)> = Vec::new(); // (counts, subset)
            candidates.push((vec![0.0; 3], 0));
            for s in 1..subsets {
                let best = (0..n)
                    .filter(|j| s & (1 << *j) != 0)
                    .map(|j| cost[s][j])
                    .min()
                    .unwrap_or(inf);
                if best <= layout.episode_cap {
                    let mut counts = vec![0.0; 3];
                    for (j, item) in layout.items.iter().enumerate() {
                        if s & (1 << j) != 0 {
                            counts[item.color.objective()] += 1.0;
                        }
                    }
                    candidates.push((counts, s));
                }
            }
            // Non-dominated filter over count vectors, deduplicated.
            let mut entries: Vec<OracleEntry> = Vec::new();
            for (counts, subset) in &candidates {
                let dominated = candidates.iter().any(|(other, _)| {
                    other != counts
                        && other.iter().zip(counts).all(|(o, c)| o >= c)
                        && other.iter().zip(counts).any(|(o, c)| o > c)
                });
                if !dominated && !entries.iter().any(|e| &e.ret.0 == counts) {
                    entries.push(OracleEntry {
                        label: format!("items-{subset:#b}"),
                        ret: RewardVector(counts.clone()),
                    });
                }
            }
            Ok(entries)
        }
    }
}

/// The return vector of the scalarized-optimal Pareto candidate for `w`.
/// Ties break toward the lexicographically smallest return vector so the
/// result is deterministic.
pub fn oracle_best(spec: &EnvSpec, w: &PreferenceVector) -> Result<RewardVector> {
    let entries = oracle_returns(spec, DEFAULT_ORACLE_BUDGET)?;
    best_of(&entries, w)
}

/// Argmax of `scalarize(w, entry)` over precomputed oracle entries.
pub fn best_of(entries: &[OracleEntry], w: &PreferenceVector) -> Result<RewardVector> {
    let mut best: Option<(f64, &RewardVector)> = None;
    for e in entries {
        if e.ret.m() != w.m() {
            return Err(DwpiError::DimensionMismatch {
                expected: w.m(),
                got: e.ret.m(),
            });
        }
        let u = scalarize_slice(w, &e.ret.0);
        best = match best {
            None => Some((u, &e.ret)),
            Some((bu, br)) => {
                if u > bu || (u == bu && lex_less(&e.ret.0, &br.0)) {
                    Some((u, &e.ret))
                } else {
                    Some((bu, br))
                }
            }
        };
    }
    best.map(|(_, r)| r.clone())
        .ok_or_else(|| DwpiError::Empty("oracle entries".into()))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Less) => return true,
            Some(Ordering::Greater) => return false,
            _ => {}
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CdstLayout, EnvSpec, Item, ItemColor, ItemGatheringLayout};
    use crate::morl::{enumerate_simplex, scalarize, RewardVector};

    #[test]
    fn cdst_entries_match_shortest_paths() {
        let spec = EnvSpec::default_cdst();
        let layout = match &spec {
            EnvSpec::Cdst(l) => l,
            _ => unreachable!(),
        };
        let entries = oracle_returns(&spec, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!(entries.len(), layout.cols);
        for (c, e) in entries.iter().enumerate() {
            // Staircase layout: shortest path to column c's treasure is
            // c steps right plus depths[c] steps down.
            assert_eq!(e.ret.0[0], layout.treasure_values[c]);
            assert_eq!(e.ret.0[1], -((c + layout.depths[c]) as f64));
        }
    }

    #[test]
    fn cdst_degenerate_adjacent_treasure() {
        let spec = EnvSpec::Cdst(CdstLayout {
            rows: 2,
            cols: 1,
            depths: vec![1],
            treasure_values: vec![7.0],
            episode_cap: 5,
            discount: 1.0,
        });
        let entries = oracle_returns(&spec, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].ret.0, vec![7.0, -1.0]);
    }

    #[test]
    fn oracle_best_degenerate_weights() {
        let spec = EnvSpec::default_cdst();
        let layout = match &spec {
            EnvSpec::Cdst(l) => l,
            _ => unreachable!(),
        };
        // All weight on value: richest treasure. All weight on time: nearest.
        let rich = oracle_best(&spec, &pref(&[1.0, 0.0]));
        assert_eq!(
            rich.unwrap().0[0],
            *layout.treasure_values.last().unwrap()
        );
        let near = oracle_best(&spec, &pref(&[0.0, 1.0])).unwrap();
        assert_eq!(near.0[1], -1.0);
    }

    #[test]
    fn cdst_front_is_convex() {
        // Every treasure must win some point of the fine m=2 lattice; that
        // is the property that makes the front convex.
        let spec = EnvSpec::default_cdst();
        let entries = oracle_returns(&spec, DEFAULT_ORACLE_BUDGET).unwrap();
        let lattice = enumerate_simplex(2, 0.01).unwrap();
        let mut winners = std::collections::HashSet::new();
        for w in lattice.points() {
            let best = best_of(&entries, w).unwrap();
            for (i, e) in entries.iter().enumerate() {
                if e.ret == best {
                    winners.insert(i);
                }
            }
        }
        assert_eq!(winners.len(), entries.len());
    }

    #[test]
    fn item_gathering_tiny_exhaustive_cross_check() {
        // 2x2 grid, one item per color, cap 6: the oracle must agree with a
        // brute force over all action sequences.
        let layout = ItemGatheringLayout {
            rows: 2,
            cols: 2,
            start: (0, 0),
            items: vec![
                Item { row: 0, col: 1, color: ItemColor::Green },
                Item { row: 1, col: 0, color: ItemColor::Red },
                Item { row: 1, col: 1, color: ItemColor::Yellow },
            ],
            episode_cap: 6,
            discount: 1.0,
            randomize_items: false,
        };
        let spec = EnvSpec::ItemGathering(layout);
        let entries = oracle_returns(&spec, DEFAULT_ORACLE_BUDGET).unwrap();

        // Brute force: enumerate every action sequence of length <= cap.
        let mut achieved: Vec<Vec<f64>> = Vec::new();
        let cap = spec.episode_cap();
        let mut stack = vec![(spec.reset(0), vec![0.0; 3])];
        for _ in 0..cap {
            let mut next = Vec::new();
            for (s, totals) in &stack {
                for a in 0..spec.actions() {
                    let t = spec.step(s, a).unwrap();
                    let mut tot = totals.clone();
                    for (acc, r) in tot.iter_mut().zip(&t.reward.0) {
                        *acc += r;
                    }
                    achieved.push(tot.clone());
                    if !t.done() {
                        next.push((t.next_state, tot));
                    }
                }
            }
            stack = next;
        }
        let dominated = |c: &Vec<f64>| {
            achieved.iter().any(|o| {
                o != c
                    && o.iter().zip(c.iter()).all(|(a, b)| a >= b)
                    && o.iter().zip(c.iter()).any(|(a, b)| a > b)
            })
        };
        let mut frontier: Vec<Vec<f64>> = achieved
            .iter()
            .filter(|c| !dominated(c))
            .cloned()
            .collect();
        frontier.sort_by(|a, b| a.partial_cmp(b).unwrap());
        frontier.dedup();
        let mut oracle: Vec<Vec<f64>> = entries.iter().map(|e| e.ret.0.clone()).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(frontier, oracle);
    }

    #[test]
    fn budget_exhaustion_errors() {
        let spec = EnvSpec::default_item_gathering();
        assert!(matches!(
            oracle_returns(&spec, 10),
            Err(crate::error::DwpiError::OracleBudget { .. })
        ));
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let entries = vec![
            OracleEntry { label: "a".into(), ret: RewardVector(vec![2.0, 1.0]) },
            OracleEntry { label: "b".into(), ret: RewardVector(vec![1.0, 2.0]) },
        ];
        let w = pref(&[0.5, 0.5]);
        assert_eq!(best_of(&entries, &w).unwrap().0, vec![1.0, 2.0]);
    }

    fn pref(w: &[f64]) -> crate::morl::PreferenceVector {
        crate::morl::PreferenceVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn oracle_scalarized_derived_value() {
        // Frozen from the oracle itself: w = [0.7, 0.3] on the default CDST
        // picks the column-6 treasure (value 30.0, 13 steps).
        let spec = EnvSpec::default_cdst();
        let w = pref(&[0.7, 0.3]);
        let best = oracle_best(&spec, &w).unwrap();
        let u = scalarize(&w, &best).unwrap();
        assert!((u - (0.7 * 30.0 - 0.3 * 13.0)).abs() < 1e-9);
    }
}
