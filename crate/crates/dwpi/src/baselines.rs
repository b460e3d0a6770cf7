//! Comparison inference methods: the projection method (PM) and
//! multiplicative weights apprenticeship learning (MWAL).
//!
//! Both recover a preference vector from a single per-objective return
//! summary by repeatedly solving the forward RL problem for candidate
//! weights. That inner solve dominates their cost, which is the point of
//! the wall-clock comparison against the learned inverse model.
//!
//! Loop equations are reconstructions from the methods' canonical sources,
//! adapted to emit a preference vector. Two adaptations are deliberate:
//! the MWAL gain rewards objectives on which the candidate still trails
//! the demonstrator (shrinking the weights of objectives it already
//! matches), and the reported MWAL vector is the iterate whose feature
//! expectations came closest to the demonstration rather than the mean of
//! iterates, since the mean retains transient drag from the uniform start
//! and cannot reach corner decision regions.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{greedy_rollout_by_index, train_agent, TrainConfig};
use crate::demos::ReturnSummary;
use crate::envs::{best_of, oracle_returns, EnvSpec, OracleEntry, DEFAULT_ORACLE_BUDGET};
use crate::error::{DwpiError, Result};
use crate::morl::{derive_seed, PreferenceSpace, PreferenceVector};

/// Serializes as the string `"auto"` or a bare number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MwalBeta {
    /// `1 / (1 + sqrt(2 ln m / T))`.
    Auto,
    Fixed(f64),
}

impl Serialize for MwalBeta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MwalBeta::Auto => s.serialize_str("auto"),
            MwalBeta::Fixed(b) => s.serialize_f64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for MwalBeta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "auto" => Ok(MwalBeta::Auto),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(MwalBeta::Fixed)
                .ok_or_else(|| D::Error::custom("mwal_beta not representable as f64")),
            other => Err(D::Error::custom(format!(
                "expected \"auto\" or a number, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub iterations: usize,
    pub inner: TrainConfig,
    pub mwal_beta: MwalBeta,
    /// Per-objective `[lo, hi]` covering every achievable return.
    pub return_bounds: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DwpiError::InvalidConfig(format!("baseline config: {msg}")));
        if self.iterations < 1 {
            return fail("iterations must be >= 1".into());
        }
        self.inner.validate()?;
        if let MwalBeta::Fixed(b) = self.mwal_beta {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("mwal_beta {b} outside (0, 1)"));
            }
        }
        if self.return_bounds.is_empty() {
            return fail("return_bounds must not be empty".into());
        }
        for (i, (lo, hi)) in self.return_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return fail(format!("return_bounds[{i}] = [{lo}, {hi}] invalid"));
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail(format!("tolerance {} must be positive", self.tolerance));
        }
        Ok(())
    }

    pub fn beta(&self, m: usize) -> f64 {
        match self.mwal_beta {
            MwalBeta::Fixed(b) => b,
            MwalBeta::Auto => {
                1.0 / (1.0 + (2.0 * (m as f64).ln() / self.iterations as f64).sqrt())
            }
        }
    }
}

/// Where candidate weights get their feature expectations.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// A fresh single-preference tabular Q-learner per candidate weight.
    InnerRl,
    /// Exact best returns from the brute-force oracle. Closed-loop testing
    /// only: removes inner RL error so recovery failures implicate the
    /// baseline loop itself.
    Oracle(Vec<OracleEntry>),
}

impl FeatureSource {
    pub fn oracle(spec: &EnvSpec) -> Result<Self> {
        Ok(FeatureSource::Oracle(oracle_returns(
            spec,
            DEFAULT_ORACLE_BUDGET,
        )?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    /// Direction before clipping (PM) or the positive weight vector (MWAL).
    pub raw: Vec<f64>,
    /// Simplex candidate actually evaluated.
    pub weight: Vec<f64>,
    /// Its feature expectations.
    pub mu: Vec<f64>,
    /// PM: margin after the projection step. MWAL: distance of `mu` from
    /// the demonstration.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub inferred: PreferenceVector,
    pub iterations_used: usize,
    #[serde(serialize_with = "ser_secs")]
    pub wall_clock: Duration,
    pub history: Vec<IterationRecord>,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// Per-objective return of a policy trained to optimize `scalarize(w, .)`.
pub fn feature_expectation(
    spec: &EnvSpec,
    w: &PreferenceVector,
    inner: &TrainConfig,
    source: &FeatureSource,
) -> Result<ReturnSummary> {
    match source {
        FeatureSource::Oracle(entries) => ReturnSummary::new(best_of(entries, w)?.0),
        FeatureSource::InnerRl => {
            let space = PreferenceSpace::from_points(vec![w.clone()], 1.0)?;
            let q = train_agent(spec, &space, inner)?;
            greedy_rollout_by_index(&q, 0, 0)
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn clip_normalize(raw: &[f64]) -> Result<PreferenceVector> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 0.0 {
        return Err(DwpiError::ZeroCandidate);
    }
    PreferenceVector::normalized(&clipped)
}

/// Projection-method loop. `mu_bar` tracks the convex projection of the
/// demonstration onto the hull spanned so far; each candidate weight is
/// the residual direction, clipped onto the simplex for the inner solve.
pub fn pm_infer(
    spec: &EnvSpec,
    demo: &ReturnSummary,
    cfg: &BaselineConfig,
    source: &FeatureSource,
) -> Result<BaselineResult> {
    cfg.validate()?;
    spec.validate()?;
    let start = Instant::now();
    let m = spec.m();
    if demo.m() != m {
        return Err(DwpiError::DimensionMismatch {
            expected: m,
            got: demo.m(),
        });
    }
    let mu_e = demo.returns();
    let mut inner = cfg.inner.clone();
    inner.seed = derive_seed(cfg.seed, 1, 0);
    let w0 = PreferenceVector::uniform(m)?;
    let mu0 = feature_expectation(spec, &w0, &inner, source)?;
    let mut mu_bar: Vec<f64> = mu0.returns().to_vec();
    let mut history = vec![IterationRecord {
        raw: w0.weights().to_vec(),
        weight: w0.weights().to_vec(),
        mu: mu_bar.clone(),
        residual: l2(mu_e, &mu_bar),
    }];
    let mut inferred = w0;
    let mut iterations_used = 0;
    for i in 1..=cfg.iterations {
        if l2(mu_e, &mu_bar) < cfg.tolerance {
            break;
        }
        let raw: Vec<f64> = mu_e.iter().zip(&mu_bar).map(|(e, b)| e - b).collect();
        let w = clip_normalize(&raw)?;
        inner.seed = derive_seed(cfg.seed, 1, i as u64);
        let mu = feature_expectation(spec, &w, &inner, source)?;
        // Convex projection of mu_e onto the segment [mu_bar, mu].
        let seg: Vec<f64> = mu.returns().iter().zip(&mu_bar).map(|(a, b)| a - b).collect();
        let denom: f64 = seg.iter().map(|v| v * v).sum();
        let t = if denom > 0.0 {
            let num: f64 = mu_e
                .iter()
                .zip(&mu_bar)
                .zip(&seg)
                .map(|((e, b), s)| (e - b) * s)
                .sum();
            (num / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for (b, s) in mu_bar.iter_mut().zip(&seg) {
            *b += t * s;
        }
        history.push(IterationRecord {
            raw,
            weight: w.weights().to_vec(),
            mu: mu.returns().to_vec(),
            residual: l2(mu_e, &mu_bar),
        });
        inferred = w;
        iterations_used = i;
    }
    Ok(BaselineResult {
        inferred,
        iterations_used,
        wall_clock: start.elapsed(),
        history,
    })
}

/// One multiplicative update: `W(i) <- W(i) * beta^G(i)`.
fn mwal_update(weights: &mut [f64], beta: f64, gains: &[f64]) {
    for (w, g) in weights.iter_mut().zip(gains) {
        *w *= beta.powf(*g);
    }
}

/// MWAL loop over positive objective weights. The gain on objective `i` is
/// high when the candidate already matches or beats the demonstration
/// there, so `beta^G` shifts mass toward objectives still underserved.
pub fn mwal_infer(
    spec: &EnvSpec,
    demo: &ReturnSummary,
    cfg: &BaselineConfig,
    source: &FeatureSource,
) -> Result<BaselineResult> {
    cfg.validate()?;
    spec.validate()?;
    let start = Instant::now();
    let m = spec.m();
    if demo.m() != m {
        return Err(DwpiError::DimensionMismatch {
            expected: m,
            got: demo.m(),
        });
    }
    if cfg.return_bounds.len() != m {
        return Err(DwpiError::DimensionMismatch {
            expected: m,
            got: cfg.return_bounds.len(),
        });
    }
    let check_bounds = |ret: &[f64]| -> Result<()> {
        for (i, (&v, &(lo, hi))) in ret.iter().zip(&cfg.return_bounds).enumerate() {
            if v < lo - cfg.tolerance || v > hi + cfg.tolerance {
                return Err(DwpiError::BoundViolated {
                    objective: i,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    };
    let mu_e = demo.returns();
    check_bounds(mu_e)?;
    let beta = cfg.beta(m);
    let mut inner = cfg.inner.clone();
    let mut weights = vec![1.0; m];
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, PreferenceVector)> = None;
    for i in 0..cfg.iterations {
        let w = PreferenceVector::normalized(&weights)?;
        inner.seed = derive_seed(cfg.seed, 2, i as u64);
        let mu = feature_expectation(spec, &w, &inner, source)?;
        check_bounds(mu.returns())?;
        let dist = l2(mu.returns(), mu_e);
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, w.clone()));
        }
        let gains: Vec<f64> = mu
            .returns()
            .iter()
            .zip(mu_e)
            .zip(&cfg.return_bounds)
            .map(|((mv, ev), (lo, hi))| (((mv - ev) / (hi - lo) + 1.0) / 2.0).clamp(0.0, 1.0))
            .collect();
        mwal_update(&mut weights, beta, &gains);
        history.push(IterationRecord {
            raw: weights.clone(),
            weight: w.weights().to_vec(),
            mu: mu.returns().to_vec(),
            residual: dist,
        });
    }
    let (_, inferred) = best.expect("iterations >= 1");
    Ok(BaselineResult {
        inferred,
        iterations_used: history.len(),
        wall_clock: start.elapsed(),
        history,
    })
}
