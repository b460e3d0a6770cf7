//! Accuracy metrics and the benchmarking harness.
//!
//! Three accuracy metrics (KL divergence, mean squared error, utility
//! loss) plus per-query wall-clock statistics, aggregated per method and
//! demo regime into a serializable report with CSV emission.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::agent::{greedy_rollout_by_index, QTable};
use crate::baselines::{mwal_infer, pm_infer, BaselineConfig, FeatureSource};
use crate::demos::Demonstration;
use crate::envs::{best_of, oracle_returns, EnvSpec, OracleEntry, DEFAULT_ORACLE_BUDGET};
use crate::error::{DwpiError, Result};
use crate::model::MlpModel;
use crate::morl::{scalarize_slice, PreferenceVector};

/// Additive smoothing applied to both arguments of the KL metric.
pub const KL_EPSILON: f64 = 1e-8;

fn check_dims(a: &PreferenceVector, b: &PreferenceVector) -> Result<()> {
    if a.m() != b.m() {
        return Err(DwpiError::DimensionMismatch {
            expected: a.m(),
            got: b.m(),
        });
    }
    Ok(())
}

/// KL(true ‖ inferred) over the simplex vectors read as categorical
/// distributions, with epsilon smoothing and renormalization on both sides.
pub fn kl_metric(true_w: &PreferenceVector, inferred: &PreferenceVector) -> Result<f64> {
    check_dims(true_w, inferred)?;
    let smooth = |w: &PreferenceVector| -> Vec<f64> {
        let total: f64 = w.weights().iter().map(|v| v + KL_EPSILON).sum();
        w.weights().iter().map(|v| (v + KL_EPSILON) / total).collect()
    };
    let p = smooth(true_w);
    let q = smooth(inferred);
    let kl: f64 = p
        .iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum();
    Ok(kl.max(0.0))
}

pub fn mse_metric(true_w: &PreferenceVector, inferred: &PreferenceVector) -> Result<f64> {
    check_dims(true_w, inferred)?;
    let m = true_w.m() as f64;
    Ok(true_w
        .weights()
        .iter()
        .zip(inferred.weights())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / m)
}

/// Scalarized return forgone by acting on `inferred` instead of `true_w`,
/// measured through the trained agent's own greedy policy map. Both
/// weights snap to their nearest lattice point, so vectors in the same
/// decision region cost nothing. Clipped at zero.
pub fn utility_metric(
    q: &QTable,
    true_w: &PreferenceVector,
    inferred: &PreferenceVector,
) -> Result<f64> {
    check_dims(true_w, inferred)?;
    let ti = q.space().nearest_index(true_w);
    let ii = q.space().nearest_index(inferred);
    if ti == ii {
        return Ok(0.0);
    }
    let true_ret = greedy_rollout_by_index(q, ti, 0)?;
    let inf_ret = greedy_rollout_by_index(q, ii, 0)?;
    let loss = scalarize_slice(true_w, true_ret.returns())
        - scalarize_slice(true_w, inf_ret.returns());
    Ok(loss.max(0.0))
}

/// As [`utility_metric`] but judged against the brute-force oracle's best
/// returns instead of the trained agent. Emitted alongside for audit.
pub fn oracle_utility_metric(
    entries: &[OracleEntry],
    true_w: &PreferenceVector,
    inferred: &PreferenceVector,
) -> Result<f64> {
    check_dims(true_w, inferred)?;
    let true_ret = best_of(entries, true_w)?;
    let inf_ret = best_of(entries, inferred)?;
    let loss = scalarize_slice(true_w, &true_ret.0) - scalarize_slice(true_w, &inf_ret.0);
    Ok(loss.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dwpi,
    Pm,
    Mwal,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dwpi, Method::Pm, Method::Mwal];

    pub fn label(self) -> &'static str {
        match self {
            Method::Dwpi => "dwpi",
            Method::Pm => "pm",
            Method::Mwal => "mwal",
        }
    }
}

/// Optimal demos carry eta = 0; sub-optimal demos carry eta > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Optimal,
    SubOptimal,
}

impl Regime {
    pub fn of(demo: &Demonstration) -> Regime {
        if demo.noise_eta == 0.0 {
            Regime::Optimal
        } else {
            Regime::SubOptimal
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Optimal => "optimal",
            Regime::SubOptimal => "sub-optimal",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodStats {
    pub method: Method,
    pub regime: Regime,
    pub queries: usize,
    pub failures: usize,
    pub mean_kl: f64,
    pub mean_mse: f64,
    pub mean_utility_loss: f64,
    pub mean_oracle_utility_loss: f64,
    pub median_time_s: f64,
    pub p90_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub method: Method,
    pub regime: Regime,
    pub demo_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub environment: String,
    pub spec_hash: String,
    pub m: usize,
    pub grid_step: f64,
    pub master_seed: u64,
    pub baseline_seed: u64,
    pub kl_epsilon: f64,
    /// One-time cost of producing the inference model, reported separately
    /// from per-query time.
    pub dwpi_training_cost_s: f64,
    pub stats: Vec<MethodStats>,
    pub failures: Vec<FailureRecord>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Default)]
struct Accum {
    kl: Vec<f64>,
    mse: Vec<f64>,
    ul: Vec<f64>,
    oul: Vec<f64>,
    times: Vec<f64>,
    failures: usize,
}

impl Accum {
    fn push(&mut self, kl: f64, mse: f64, ul: f64, oul: f64, time_s: f64) {
        self.kl.push(kl);
        self.mse.push(mse);
        self.ul.push(ul);
        self.oul.push(oul);
        self.times.push(time_s);
    }

    fn stats(&self, method: Method, regime: Regime) -> MethodStats {
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mut times = self.times.clone();
        times.sort_by(|a, b| a.total_cmp(b));
        MethodStats {
            method,
            regime,
            queries: self.kl.len(),
            failures: self.failures,
            mean_kl: mean(&self.kl),
            mean_mse: mean(&self.mse),
            mean_utility_loss: mean(&self.ul),
            mean_oracle_utility_loss: mean(&self.oul),
            median_time_s: median(&times),
            p90_time_s: percentile(&times, 0.9),
        }
    }
}

/// Runs every method over every demo, strictly sequentially so per-query
/// timings are comparable. The first query per method is a discarded
/// warm-up. Per-demo method failures are recorded and excluded from the
/// aggregates.
#[allow(clippy::too_many_arguments)]
pub fn benchmark(
    spec: &EnvSpec,
    q: &QTable,
    model: &MlpModel,
    demos: &[&Demonstration],
    pm_cfg: &BaselineConfig,
    mwal_cfg: &BaselineConfig,
    dwpi_training_cost: Duration,
    master_seed: u64,
) -> Result<EvalReport> {
    if demos.is_empty() {
        return Err(DwpiError::Empty("benchmark demo set".into()));
    }
    let entries = oracle_returns(spec, DEFAULT_ORACLE_BUDGET)?;
    let source = FeatureSource::InnerRl;
    let mut acc: std::collections::HashMap<(Method, Regime), Accum> =
        std::collections::HashMap::new();
    let mut failures = Vec::new();

    let infer_with = |method: Method, demo: &Demonstration| -> Result<(PreferenceVector, f64)> {
        match method {
            Method::Dwpi => {
                // The raw simplex output is the model's estimate; the
                // divergence metrics punish hard zeros, so snapping is
                // left to the utility metric where only the decision
                // region matters.
                let t0 = Instant::now();
                let out = model.forward(&demo.features)?;
                let dt = t0.elapsed().as_secs_f64();
                Ok((out, dt))
            }
            Method::Pm => {
                let res = pm_infer(spec, &demo.features, pm_cfg, &source)?;
                Ok((res.inferred, res.wall_clock.as_secs_f64()))
            }
            Method::Mwal => {
                let res = mwal_infer(spec, &demo.features, mwal_cfg, &source)?;
                Ok((res.inferred, res.wall_clock.as_secs_f64()))
            }
        }
    };

    for method in Method::ALL {
        // Warm-up query: caches, lazy init, branch predictors.
        let _ = infer_with(method, demos[0]);
        for (idx, demo) in demos.iter().enumerate() {
            let regime = Regime::of(demo);
            let slot = acc.entry((method, regime)).or_default();
            match infer_with(method, demo) {
                Ok((inferred, time_s)) => {
                    let kl = kl_metric(&demo.target, &inferred)?;
                    let mse = mse_metric(&demo.target, &inferred)?;
                    let ul = utility_metric(q, &demo.target, &inferred)?;
                    let oul = oracle_utility_metric(&entries, &demo.target, &inferred)?;
                    slot.push(kl, mse, ul, oul, time_s);
                }
                Err(e) => {
                    slot.failures += 1;
                    failures.push(FailureRecord {
                        method,
                        regime,
                        demo_index: idx,
                        message: e.to_string(),
                    });
                }
            }
        }
    }

    let mut stats = Vec::new();
    for method in Method::ALL {
        for regime in [Regime::Optimal, Regime::SubOptimal] {
            if let Some(a) = acc.get(&(method, regime)) {
                stats.push(a.stats(method, regime));
            }
        }
    }
    Ok(EvalReport {
        environment: spec.name().to_string(),
        spec_hash: spec.spec_hash(),
        m: spec.m(),
        grid_step: model.space().grid_step(),
        master_seed,
        baseline_seed: pm_cfg.seed,
        kl_epsilon: KL_EPSILON,
        dwpi_training_cost_s: dwpi_training_cost.as_secs_f64(),
        stats,
        failures,
    })
}

impl EvalReport {
    /// Long-format accuracy table. Columns:
    /// `environment,method,regime,metric,value,queries`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("environment,method,regime,metric,value,queries\n");
        for s in &self.stats {
            for (metric, value) in [
                ("kl", s.mean_kl),
                ("mse", s.mean_mse),
                ("utility_loss", s.mean_utility_loss),
                ("oracle_utility_loss", s.mean_oracle_utility_loss),
            ] {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    self.environment,
                    s.method.label(),
                    s.regime.label(),
                    metric,
                    value,
                    s.queries
                ));
            }
        }
        out
    }

    /// Long-format timing table. Columns:
    /// `environment,method,regime,stat,seconds`. The one-time model
    /// training cost appears as `stat=training_total` with regime `-`.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("environment,method,regime,stat,seconds\n");
        for s in &self.stats {
            for (stat, value) in [("median", s.median_time_s), ("p90", s.p90_time_s)] {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.environment,
                    s.method.label(),
                    s.regime.label(),
                    stat,
                    value
                ));
            }
        }
        out.push_str(&format!(
            "{},dwpi,-,training_total,{}\n",
            self.environment, self.dwpi_training_cost_s
        ));
        out
    }

    pub fn stat(&self, method: Method, regime: Regime) -> Option<&MethodStats> {
        self.stats
            .iter()
            .find(|s| s.method == method && s.regime == regime)
    }
}
