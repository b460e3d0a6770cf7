//! Preference inference for multi-objective reinforcement learning.
//!
//! The pipeline: train one tabular Q-learning agent conditioned on a
//! lattice of preference weight vectors over vector-reward gridworlds,
//! roll it out to collect (noisy) per-objective return summaries, then
//! train a small feed-forward network that maps a return summary back to
//! the preference that produced it. Two apprenticeship-learning baselines
//! (the projection method and multiplicative weights) recover the same
//! quantity by repeated inner RL solves; the evaluation harness compares
//! all three on accuracy and per-query wall-clock.
//!
//! Everything is deterministic given a master seed: rerunning a stage
//! reproduces its artifact byte for byte.
//!
//! ```
//! use dwpi::envs::EnvSpec;
//! use dwpi::morl::{enumerate_simplex, scalarize_slice};
//!
//! let spec = EnvSpec::default_cdst();
//! let lattice = enumerate_simplex(spec.m(), 0.1)?;
//! assert_eq!(lattice.len(), 11);
//! let w = &lattice.points()[5];
//! let best = dwpi::envs::oracle_best(&spec, w)?;
//! assert!(scalarize_slice(w, &best.0) > 0.0);
//! # Ok::<(), dwpi::error::DwpiError>(())
//! ```

pub mod agent;
pub mod artifact;
pub mod baselines;
pub mod config;
pub mod demos;
pub mod envs;
pub mod error;
pub mod eval;
pub mod model;
pub mod morl;

pub use agent::{greedy_rollout, oracle_match_fraction, train_agent, QTable, TrainConfig};
pub use config::RunConfig;
pub use demos::{generate_demos, DemoSet, Demonstration, ReturnSummary, Split};
pub use envs::EnvSpec;
pub use error::{DwpiError, Result};
pub use eval::{benchmark, kl_metric, mse_metric, utility_metric, EvalReport};
pub use model::{fit, MlpModel};
pub use morl::{enumerate_simplex, PreferenceSpace, PreferenceVector};

/// Guide chapters double as doc-tests so their snippets stay honest.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(preferences, "../../../book/src/preferences.md");
    chapter!(environments, "../../../book/src/environments.md");
    chapter!(agent, "../../../book/src/agent.md");
    chapter!(demonstrations, "../../../book/src/demonstrations.md");
    chapter!(inference_model, "../../../book/src/inference-model.md");
    chapter!(baselines, "../../../book/src/baselines.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(cli, "../../../book/src/cli.md");
}
