//! Item Gathering.
//!
//! An agent moves on an open grid holding colored items (green, red, yellow).
//! Moves are clamped at the borders. Entering a cell with an item removes it
//! and pays +1 on that color's reward component. The episode ends when no
//! items remain or when the step cap is hit; the cap is what forces a
//! preference trade-off between the colors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{moved, EnvState, Transition};
use crate::error::{DwpiError, Result};
use crate::morl::RewardVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemColor {
    Green,
    Red,
    Yellow,
}

impl ItemColor {
    /// Objective index of this color.
    pub fn objective(self) -> usize {
        match self {
            ItemColor::Green => 0,
            ItemColor::Red => 1,
            ItemColor::Yellow => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub row: usize,
    pub col: usize,
    pub color: ItemColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemGatheringLayout {
    pub rows: usize,
    pub cols: usize,
    pub start: (usize, usize),
    pub items: Vec<Item>,
    pub episode_cap: usize,
    pub discount: f64,
    /// When set, item positions are reshuffled uniformly over non-start
    /// cells at every reset, keyed by the reset seed.
    #[serde(default)]
    pub randomize_items: bool,
}

impl ItemGatheringLayout {
    pub fn validate(&self) -> Result<()> {
        let fail =
            |msg: String| Err(DwpiError::InvalidConfig(format!("item gathering layout: {msg}")));
        if self.rows == 0 || self.cols == 0 {
            return fail("empty grid".into());
        }
        if self.start.0 >= self.rows || self.start.1 >= self.cols {
            return fail("start outside grid".into());
        }
        if self.items.len() > 20 {
            return fail("at most 20 items supported (bitmask state)".into());
        }
        for color in [ItemColor::Green, ItemColor::Red, ItemColor::Yellow] {
            if !self.items.iter().any(|i| i.color == color) {
                return fail(format!("need at least one {color:?} item"));
            }
        }
        let mut cells: Vec<(usize, usize)> = self.items.iter().map(|i| (i.row, i.col)).collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.len() != self.items.len() {
            return fail("duplicate item cells".into());
        }
        if self.items.iter().any(|i| i.row >= self.rows || i.col >= self.cols) {
            return fail("item outside grid".into());
        }
        if self.items.iter().any(|i| (i.row, i.col) == self.start) {
            return fail("item on the start cell".into());
        }
        if self.episode_cap == 0 {
            return fail("episode_cap must be positive".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.discount));
        }
        Ok(())
    }

    /// Items per objective: `[green, red, yellow]`.
    pub fn color_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for i in &self.items {
            counts[i.color.objective()] += 1;
        }
        counts
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.items.len()) - 1
    }

    pub(crate) fn reset(&self, rng_seed: u64) -> EnvState {
        let item_cells = if self.randomize_items {
            let mut free: Vec<(usize, usize)> = (0..self.rows)
                .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
                .filter(|cell| *cell != self.start)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            free.shuffle(&mut rng);
            Some(free.into_iter().take(self.items.len()).collect())
        } else {
            None
        };
        EnvState {
            row: self.start.0,
            col: self.start.1,
            mask: self.full_mask(),
            step_count: 0,
            item_cells,
        }
    }

    fn item_cell(&self, state: &EnvState, index: usize) -> (usize, usize) {
        match &state.item_cells {
            Some(cells) => cells[index],
            None => (self.items[index].row, self.items[index].col),
        }
    }

    pub(crate) fn step(&self, s: &EnvState, action: usize) -> Result<Transition> {
        let (nr, nc) = moved(s.row, s.col, action);
        let row = nr.clamp(0, self.rows as isize - 1) as usize;
        let col = nc.clamp(0, self.cols as isize - 1) as usize;
        let mut mask = s.mask;
        let mut reward = vec![0.0; 3];
        for (i, item) in self.items.iter().enumerate() {
            let bit = 1u32 << i;
            if mask & bit != 0 && self.item_cell(s, i) == (row, col) {
                mask &= !bit;
                reward[item.color.objective()] += 1.0;
            }
        }
        let step_count = s.step_count + 1;
        let terminal = mask == 0;
        Ok(Transition {
            next_state: EnvState {
                row,
                col,
                mask,
                step_count,
                item_cells: s.item_cells.clone(),
            },
            reward: RewardVector(reward),
            terminal,
            truncated: !terminal && step_count >= self.episode_cap,
        })
    }
}
