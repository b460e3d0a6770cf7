//! Vector-reward episodic gridworlds behind one environment contract.
//!
//! Two concrete environments ship with the crate: Convex Deep Sea Treasure
//! (two objectives: treasure value, time penalty) and Item Gathering (three
//! objectives: green/red/yellow pickups). Both are deterministic state
//! machines; a brute-force oracle materializes the Pareto-candidate returns
//! for small instances so trained agents can be checked exactly.

mod cdst;
mod item_gathering;
mod oracle;

pub use cdst::CdstLayout;
pub use item_gathering::{Item, ItemColor, ItemGatheringLayout};
pub use oracle::{best_of, oracle_best, oracle_returns, OracleEntry, DEFAULT_ORACLE_BUDGET};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DwpiError, Result};
use crate::morl::RewardVector;

/// Grid actions, indexed 0..4.
pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const ACTION_LEFT: usize = 2;
pub const ACTION_RIGHT: usize = 3;
pub const NUM_ACTIONS: usize = 4;

/// Environment description: which gridworld, its layout, and episode limits.
/// Serializes to the JSON layout format shipped under `data/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvSpec {
    Cdst(CdstLayout),
    ItemGathering(ItemGatheringLayout),
}

impl EnvSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: EnvSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| DwpiError::io(path.display().to_string(), e))?;
        Self::from_json(&json)
    }

    /// The default Convex Deep Sea Treasure instance shipped with the crate.
    pub fn default_cdst() -> Self {
        EnvSpec::from_json(include_str!("../../data/cdst_default.json"))
            .expect("bundled CDST layout is valid")
    }

    /// The default Item Gathering instance shipped with the crate.
    pub fn default_item_gathering() -> Self {
        EnvSpec::from_json(include_str!("../../data/item_gathering_default.json"))
            .expect("bundled Item Gathering layout is valid")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Cdst(l) => l.validate(),
            EnvSpec::ItemGathering(l) => l.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Cdst(_) => "cdst",
            EnvSpec::ItemGathering(_) => "item_gathering",
        }
    }

    /// Objective count.
    pub fn m(&self) -> usize {
        match self {
            EnvSpec::Cdst(_) => 2,
            EnvSpec::ItemGathering(_) => 3,
        }
    }

    pub fn actions(&self) -> usize {
        NUM_ACTIONS
    }

    pub fn episode_cap(&self) -> usize {
        match self {
            EnvSpec::Cdst(l) => l.episode_cap,
            EnvSpec::ItemGathering(l) => l.episode_cap,
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            EnvSpec::Cdst(l) => l.discount,
            EnvSpec::ItemGathering(l) => l.discount,
        }
    }

    /// Number of dense state indices.
    pub fn state_count(&self) -> usize {
        match self {
            EnvSpec::Cdst(l) => l.rows * l.cols,
            EnvSpec::ItemGathering(l) => l.rows * l.cols * (1usize << l.items.len()),
        }
    }

    pub fn state_index(&self, s: &EnvState) -> usize {
        match self {
            EnvSpec::Cdst(l) => s.row * l.cols + s.col,
            EnvSpec::ItemGathering(l) => {
                (s.row * l.cols + s.col) * (1usize << l.items.len()) + s.mask as usize
            }
        }
    }

    pub fn reset(&self, rng_seed: u64) -> EnvState {
        match self {
            EnvSpec::Cdst(_) => EnvState {
                row: 0,
                col: 0,
                mask: 0,
                step_count: 0,
                item_cells: None,
            },
            EnvSpec::ItemGathering(l) => l.reset(rng_seed),
        }
    }

    pub fn step(&self, s: &EnvState, action: usize) -> Result<Transition> {
        if action >= NUM_ACTIONS {
            return Err(DwpiError::InvalidAction {
                action,
                actions: NUM_ACTIONS,
            });
        }
        match self {
            EnvSpec::Cdst(l) => l.step(s, action),
            EnvSpec::ItemGathering(l) => l.step(s, action),
        }
    }

    /// Attainable per-objective return bounds `(lo, hi)` over any episode.
    pub fn return_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            EnvSpec::Cdst(l) => {
                let max_v = l
                    .treasure_values
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                vec![(0.0, max_v), (-(l.episode_cap as f64), -1.0)]
            }
            EnvSpec::ItemGathering(l) => {
                let counts = l.color_counts();
                counts.iter().map(|c| (0.0, *c as f64)).collect()
            }
        }
    }

    /// Per-objective return span across the oracle's Pareto candidates.
    /// Used as the default noise scale so eta is comparable across
    /// objectives with different units.
    pub fn oracle_ranges(&self) -> Result<Vec<f64>> {
        let entries = oracle_returns(self, DEFAULT_ORACLE_BUDGET)?;
        let m = self.m();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for e in &entries {
            for i in 0..m {
                lo[i] = lo[i].min(e.ret.0[i]);
                hi[i] = hi[i].max(e.ret.0[i]);
            }
        }
        Ok((0..m).map(|i| (hi[i] - lo[i]).max(1e-8)).collect())
    }

    /// Stable identity of the environment: SHA-256 of the canonical layout
    /// JSON. Artifacts embed this and refuse to load against a different
    /// environment.
    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Discrete environment state. `mask` is the set of remaining items
/// (Item Gathering only); `item_cells` is populated only for seed-randomized
/// item layouts, where cell positions are episode state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub row: usize,
    pub col: usize,
    pub mask: u32,
    pub step_count: usize,
    pub item_cells: Option<Vec<(usize, usize)>>,
}

/// `terminal` marks a real absorbing state (treasure entered, all items
/// collected); `truncated` marks the episode cap. Learning targets must
/// bootstrap through truncation: state indices carry no step counter, so
/// treating the cap as absorbing would corrupt the values of states that
/// happen to be visited late in an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: EnvState,
    pub reward: RewardVector,
    pub terminal: bool,
    pub truncated: bool,
}

impl Transition {
    /// The episode cannot continue past this transition.
    #[inline]
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub(crate) fn moved(row: usize, col: usize, action: usize) -> (isize, isize) {
    let (r, c) = (row as isize, col as isize);
    match action {
        ACTION_UP => (r - 1, c),
        ACTION_DOWN => (r + 1, c),
        ACTION_LEFT => (r, c - 1),
        ACTION_RIGHT => (r, c + 1),
        _ => unreachable!("action validated by caller"),
    }
}
