//! Convex Deep Sea Treasure.
//!
//! A submarine starts at the top-left corner of a staircase grid. Column `c`
//! has sea floor at row `depths[c]`; the treasure for that column sits on the
//! floor. Every step costs `(0, -1)`; entering a treasure cell yields
//! `(value, -1)` and ends the episode. Cells below the floor are walls and
//! moves into them (or off the grid) leave the submarine in place.
//!
//! The default layout's treasure values are chosen so that every treasure is
//! the scalarized optimum for some preference: marginal value per extra step
//! strictly decreases with depth, which makes the Pareto front convex.

use serde::{Deserialize, Serialize};

use super::{moved, EnvState, Transition};
use crate::error::{DwpiError, Result};
use crate::morl::RewardVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdstLayout {
    pub rows: usize,
    pub cols: usize,
    /// Sea-floor row per column; the treasure cell is `(depths[c], c)`.
    pub depths: Vec<usize>,
    /// Treasure value per column, strictly increasing with depth.
    pub treasure_values: Vec<f64>,
    pub episode_cap: usize,
    pub discount: f64,
}

impl CdstLayout {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DwpiError::InvalidConfig(format!("cdst layout: {msg}")));
        if self.rows == 0 || self.cols == 0 {
            return fail("empty grid".into());
        }
        if self.depths.len() != self.cols || self.treasure_values.len() != self.cols {
            return fail("depths and treasure_values must have one entry per column".into());
        }
        if self.depths.iter().any(|d| *d == 0 || *d >= self.rows) {
            return fail("every depth must lie in [1, rows)".into());
        }
        for w in self.treasure_values.windows(2) {
            if w[1] <= w[0] {
                return fail(format!(
                    "treasure values must strictly increase with depth ({} !< {})",
                    w[0], w[1]
                ));
            }
        }
        if self.treasure_values[0] <= 0.0 {
            return fail("treasure values must be positive".into());
        }
        if self.episode_cap == 0 {
            return fail("episode_cap must be positive".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.discount));
        }
        // Reachability: every treasure must be reachable from (0, 0) through
        // water cells. With per-column floors this reduces to checking the
        // floor never cuts off a column, which BFS verifies generically.
        let dists = self.shortest_paths();
        for c in 0..self.cols {
            if dists[self.cell_index(self.depths[c], c)].is_none() {
                return fail(format!("treasure in column {c} unreachable from start"));
            }
        }
        Ok(())
    }

    pub fn is_water(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && row <= self.depths[col]
    }

    pub fn treasure_at(&self, row: usize, col: usize) -> Option<f64> {
        (row == self.depths[col]).then(|| self.treasure_values[col])
    }

    fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// BFS step counts from the start to every water cell, treating treasure
    /// cells as absorbing.
    pub(crate) fn shortest_paths(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.rows * self.cols];
        let mut queue = std::collections::VecDeque::new();
        dist[0] = Some(0);
        queue.push_back((0usize, 0usize));
        while let Some((r, c)) = queue.pop_front() {
            if self.treasure_at(r, c).is_some() {
                continue;
            }
            let d = dist[self.cell_index(r, c)].unwrap();
            for a in 0..4 {
                let (nr, nc) = moved(r, c, a);
                if nr < 0 || nc < 0 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if self.is_water(nr, nc) && dist[self.cell_index(nr, nc)].is_none() {
                    dist[self.cell_index(nr, nc)] = Some(d + 1);
                    queue.push_back((nr, nc));
                }
            }
        }
        dist
    }

    pub(crate) fn step(&self, s: &EnvState, action: usize) -> Result<Transition> {
        let (nr, nc) = moved(s.row, s.col, action);
        let (row, col) = if nr >= 0 && nc >= 0 && self.is_water(nr as usize, nc as usize) {
            (nr as usize, nc as usize)
        } else {
            (s.row, s.col) // blocked move: position unchanged, step still costs
        };
        let step_count = s.step_count + 1;
        let next_state = EnvState {
            row,
            col,
            mask: 0,
            step_count,
            item_cells: None,
        };
        match self.treasure_at(row, col) {
            Some(value) => Ok(Transition {
                next_state,
                reward: RewardVector(vec![value, -1.0]),
                terminal: true,
                truncated: false,
            }),
            None => Ok(Transition {
                next_state,
                reward: RewardVector(vec![0.0, -1.0]),
                terminal: false,
                truncated: step_count >= self.episode_cap,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvSpec, ACTION_DOWN, ACTION_RIGHT, ACTION_UP};

    fn default_layout() -> CdstLayout {
        match EnvSpec::default_cdst() {
            EnvSpec::Cdst(l) => l,
            _ => unreachable!(),
        }
    }

    #[test]
    fn reset_is_fixed_start() {
        let spec = EnvSpec::default_cdst();
        let s = spec.reset(0);
        assert_eq!((s.row, s.col, s.step_count), (0, 0, 0));
        assert_eq!(spec.reset(0), spec.reset(0));
    }

    #[test]
    fn plain_move_costs_time() {
        let spec = EnvSpec::default_cdst();
        let t = spec.step(&spec.reset(0), ACTION_RIGHT).unwrap();
        assert_eq!(t.reward.0, vec![0.0, -1.0]);
        assert!(!t.terminal);
        assert_eq!((t.next_state.row, t.next_state.col), (0, 1));
    }

    #[test]
    fn wall_move_blocked() {
        let spec = EnvSpec::default_cdst();
        let t = spec.step(&spec.reset(0), ACTION_UP).unwrap();
        assert_eq!((t.next_state.row, t.next_state.col), (0, 0));
        assert_eq!(t.reward.0, vec![0.0, -1.0]);
        assert_eq!(t.next_state.step_count, 1);
    }

    #[test]
    fn treasure_terminates() {
        let layout = default_layout();
        let spec = EnvSpec::Cdst(layout.clone());
        // First column's treasure is directly below the start.
        let mut s = spec.reset(0);
        let mut t = spec.step(&s, ACTION_DOWN).unwrap();
        for _ in 0..layout.depths[0].saturating_sub(1) {
            s = t.next_state;
            t = spec.step(&s, ACTION_DOWN).unwrap();
        }
        assert!(t.terminal);
        assert_eq!(t.reward.0, vec![layout.treasure_values[0], -1.0]);
    }

    #[test]
    fn degenerate_single_treasure_adjacent() {
        let layout = CdstLayout {
            rows: 2,
            cols: 1,
            depths: vec![1],
            treasure_values: vec![5.0],
            episode_cap: 10,
            discount: 1.0,
        };
        layout.validate().unwrap();
        let spec = EnvSpec::Cdst(layout);
        let t = spec.step(&spec.reset(0), ACTION_DOWN).unwrap();
        assert!(t.terminal);
        assert_eq!(t.reward.0, vec![5.0, -1.0]);
    }

    #[test]
    fn validation_rejects_non_increasing_values() {
        let mut layout = default_layout();
        layout.treasure_values[5] = layout.treasure_values[4];
        assert!(layout.validate().is_err());
    }
}
