//! The dynamic-weight RL agent: tabular Q-learning conditioned on a
//! discretized preference vector.
//!
//! One table is trained across the whole preference lattice; the preference
//! index is part of the lookup key, so the trained artifact serves every
//! lattice preference. Rollouts are greedy and deterministic, which makes the
//! preference-to-behavior map piecewise constant and directly checkable
//! against the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demos::ReturnSummary;
use crate::envs::EnvSpec;
use crate::error::{DwpiError, Result};
use crate::morl::{derive_seed, scalarize_slice, PreferenceSpace, PreferenceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub discount: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DwpiError::InvalidConfig(format!("train config: {msg}")));
        if self.episodes < 1 {
            return fail("episodes must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha {} outside (0, 1]", self.alpha));
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return fail(format!("{name} {eps} outside [0, 1]"));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.discount));
        }
        Ok(())
    }
}

/// Scalarized action values keyed by (state index, preference index, action).
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    space: PreferenceSpace,
    spec: EnvSpec,
    n_states: usize,
    n_actions: usize,
}

impl QTable {
    pub fn zeros(spec: EnvSpec, space: PreferenceSpace) -> Self {
        let n_states = spec.state_count();
        let n_actions = spec.actions();
        QTable {
            values: vec![0.0; n_states * space.len() * n_actions],
            space,
            spec,
            n_states,
            n_actions,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn space(&self) -> &PreferenceSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_parts(spec: EnvSpec, space: PreferenceSpace, values: Vec<f64>) -> Result<Self> {
        let expected = spec.state_count() * space.len() * spec.actions();
        if values.len() != expected {
            return Err(DwpiError::Artifact(format!(
                "q table has {} values, expected {expected}",
                values.len()
            )));
        }
        let n_states = spec.state_count();
        let n_actions = spec.actions();
        Ok(QTable {
            values,
            space,
            spec,
            n_states,
            n_actions,
        })
    }

    #[inline]
    fn base(&self, state: usize, pref: usize) -> usize {
        (state * self.space.len() + pref) * self.n_actions
    }

    #[inline]
    pub fn q(&self, state: usize, pref: usize, action: usize) -> f64 {
        self.values[self.base(state, pref) + action]
    }

    #[inline]
    fn max_q(&self, state: usize, pref: usize) -> f64 {
        let b = self.base(state, pref);
        self.values[b..b + self.n_actions]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties break toward the lowest action index.
    #[inline]
    pub fn greedy_action(&self, state: usize, pref: usize) -> usize {
        let b = self.base(state, pref);
        let mut best = 0;
        let mut best_v = self.values[b];
        for a in 1..self.n_actions {
            if self.values[b + a] > best_v {
                best_v = self.values[b + a];
                best = a;
            }
        }
        best
    }
}

/// Trains the shared table across the whole lattice: each episode samples a
/// lattice preference and runs epsilon-greedy Q-learning on the scalarized
/// reward, keyed by (state, preference). Deterministic given the seed.
pub fn train_agent(spec: &EnvSpec, space: &PreferenceSpace, cfg: &TrainConfig) -> Result<QTable> {
    cfg.validate()?;
    spec.validate()?;
    if space.is_empty() {
        return Err(DwpiError::Empty("preference space".into()));
    }
    let mut q = QTable::zeros(spec.clone(), space.clone());
    // Optimistic start: every entry begins at the scalarized upper return
    // bound for its preference. Untried actions then dominate the greedy
    // choice, which sweeps the reachable state space systematically;
    // plain epsilon-greedy random walks almost never reach the deep
    // treasures within the episode cap.
    let bounds = spec.return_bounds();
    for (p, w) in space.points().iter().enumerate() {
        let ceiling: f64 = w
            .weights()
            .iter()
            .zip(&bounds)
            .map(|(wi, (_, hi))| wi * hi)
            .sum();
        for s in 0..q.n_states {
            let b = (s * space.len() + p) * q.n_actions;
            q.values[b..b + q.n_actions].fill(ceiling);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_actions = q.n_actions;
    for episode in 0..cfg.episodes {
        let pref = rng.gen_range(0..space.len());
        let w = &space.points()[pref];
        let frac = if cfg.episodes > 1 {
            episode as f64 / (cfg.episodes - 1) as f64
        } else {
            1.0
        };
        let epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
        let mut state = spec.reset(derive_seed(cfg.seed, 1, episode as u64));
        loop {
            let si = spec.state_index(&state);
            let action = if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..n_actions)
            } else {
                q.greedy_action(si, pref)
            };
            let t = spec.step(&state, action)?;
            let r = scalarize_slice(w, &t.reward.0);
            let target = if t.terminal {
                r
            } else {
                r + cfg.discount * q.max_q(spec.state_index(&t.next_state), pref)
            };
            let idx = q.base(si, pref) + action;
            q.values[idx] += cfg.alpha * (target - q.values[idx]);
            if t.done() {
                break;
            }
            state = t.next_state;
        }
    }
    Ok(q)
}

/// Plays one greedy episode conditioned on `w` (snapped to the lattice) and
/// returns the undiscounted per-objective return vector.
pub fn greedy_rollout(q: &QTable, w: &PreferenceVector, rng_seed: u64) -> Result<ReturnSummary> {
    let pref = q.space.snap_checked(w)?;
    greedy_rollout_by_index(q, pref, rng_seed)
}

/// As [`greedy_rollout`], addressed by lattice index.
pub fn greedy_rollout_by_index(q: &QTable, pref: usize, rng_seed: u64) -> Result<ReturnSummary> {
    let spec = &q.spec;
    let mut state = spec.reset(rng_seed);
    let mut returns = vec![0.0; spec.m()];
    loop {
        let action = q.greedy_action(spec.state_index(&state), pref);
        let t = spec.step(&state, action)?;
        for (acc, r) in returns.iter_mut().zip(&t.reward.0) {
            *acc += r;
        }
        if t.done() {
            break;
        }
        state = t.next_state;
    }
    ReturnSummary::new(returns)
}

/// Oracle agreement: the fraction of lattice points whose greedy scalarized
/// return matches the brute-force optimum within `tol`.
pub fn oracle_match_fraction(q: &QTable, tol: f64) -> Result<f64> {
    let entries = crate::envs::oracle_returns(&q.spec, crate::envs::DEFAULT_ORACLE_BUDGET)?;
    let mut matched = 0usize;
    for (i, w) in q.space.points().iter().enumerate() {
        let rollout = greedy_rollout_by_index(q, i, 0)?;
        let achieved = scalarize_slice(w, rollout.returns());
        let best = scalarize_slice(w, &crate::envs::best_of(&entries, w)?.0);
        if achieved >= best - tol {
            matched += 1;
        }
    }
    Ok(matched as f64 / q.space.len() as f64)
}
