//! Preferences, vector rewards, linear scalarization, and the simplex lattice.
//!
//! A preference is a point on the probability simplex: non-negative weights,
//! one per objective, summing to one. Scalarizing a reward vector with a
//! preference collapses it to a single utility via the dot product. The
//! preference space is discretized to a lattice with configurable spacing so
//! the preference-conditioned agent has a finite conditioning set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{DwpiError, Result};

/// Tolerance for the simplex sum invariant.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A weight vector on the m-simplex. Immutable after construction; every
/// constructor either normalizes drift below [`SIMPLEX_TOL`] or rejects.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVector {
    weights: Vec<f64>,
}

impl PreferenceVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(DwpiError::InvalidPreference(format!(
                "need at least 2 objectives, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(DwpiError::InvalidPreference("non-finite component".into()));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(DwpiError::InvalidPreference(format!(
                "negative component {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(DwpiError::InvalidPreference(format!(
                "components sum to {sum}, expected 1"
            )));
        }
        // Remove the residual drift so stored vectors sum to 1 exactly
        // (up to float rounding of the division).
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(Self { weights })
    }

    /// Normalizes an arbitrary non-negative, non-zero vector onto the simplex.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(DwpiError::InvalidPreference(format!(
                "cannot normalize vector with sum {sum}"
            )));
        }
        Self::new(raw.iter().map(|w| w / sum).collect())
    }

    /// The uniform preference over `m` objectives.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn euclidean_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Serialize for PreferenceVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.weights.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PreferenceVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let weights = Vec::<f64>::deserialize(deserializer)?;
        PreferenceVector::new(weights).map_err(serde::de::Error::custom)
    }
}

/// Per-objective instantaneous reward, in environment units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }
}

/// Dot product of a preference and a reward vector.
pub fn scalarize(w: &PreferenceVector, r: &RewardVector) -> Result<f64> {
    if w.m() != r.m() {
        return Err(DwpiError::DimensionMismatch {
            expected: w.m(),
            got: r.m(),
        });
    }
    Ok(w.weights().iter().zip(&r.0).map(|(a, b)| a * b).sum())
}

/// Scalarize against a plain slice; used in hot loops where the reward is
/// accumulated in place.
pub fn scalarize_slice(w: &PreferenceVector, r: &[f64]) -> f64 {
    w.weights().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// The discretized preference space: all simplex lattice points with
/// components that are multiples of `grid_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpace {
    m: usize,
    grid_step: f64,
    points: Vec<PreferenceVector>,
}

impl PreferenceSpace {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn points(&self) -> &[PreferenceVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A space holding explicitly listed points. Used where a solver needs a
    /// single-preference conditioning set (e.g. baseline inner RL); the
    /// lattice enumeration invariant applies to [`enumerate_simplex`] output,
    /// not to spaces built here.
    pub fn from_points(points: Vec<PreferenceVector>, grid_step: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(DwpiError::Empty("preference space".into()));
        }
        let m = points[0].m();
        if points.iter().any(|p| p.m() != m) {
            return Err(DwpiError::InvalidPreference(
                "mixed dimensions in preference space".into(),
            ));
        }
        Ok(Self {
            m,
            grid_step,
            points,
        })
    }

    /// Index of the lattice point nearest to `w` in Euclidean distance.
    /// Ties resolve to the lexicographically smallest point (lowest index,
    /// points are enumerated in lexicographic component order).
    pub fn nearest_index(&self, w: &PreferenceVector) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.euclidean_distance(w);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Nearest lattice point, erroring when `w` is farther than
    /// `grid_step / 2` from every point. The guard prevents silently
    /// snapping a preference the lattice was never trained for.
    pub fn snap_checked(&self, w: &PreferenceVector) -> Result<usize> {
        let idx = self.nearest_index(w);
        if self.points[idx].euclidean_distance(w) > self.grid_step / 2.0 + SIMPLEX_TOL {
            return Err(DwpiError::OffLattice(w.weights().to_vec()));
        }
        Ok(idx)
    }
}

/// Enumerates the full simplex lattice for `m` objectives with spacing
/// `grid_step`. `1/grid_step` must be an integer; the lattice has
/// C(1/grid_step + m - 1, m - 1) points, in lexicographic order.
pub fn enumerate_simplex(m: usize, grid_step: f64) -> Result<PreferenceSpace> {
    if m < 2 {
        return Err(DwpiError::InvalidPreference(format!(
            "need at least 2 objectives, got {m}"
        )));
    }
    let reciprocal = 1.0 / grid_step;
    let steps = reciprocal.round();
    if steps < 1.0 || (reciprocal - steps).abs() > 1e-9 {
        return Err(DwpiError::InvalidGridStep { reciprocal });
    }
    let steps = steps as u32;
    let mut points = Vec::new();
    let mut counts = vec![0u32; m];
    fill_lattice(&mut points, &mut counts, 0, steps, steps);
    PreferenceSpace::from_points(points, grid_step)
}

fn fill_lattice(
    points: &mut Vec<PreferenceVector>,
    counts: &mut Vec<u32>,
    pos: usize,
    remaining: u32,
    steps: u32,
) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        let weights: Vec<f64> = counts.iter().map(|c| *c as f64 / steps as f64).collect();
        points.push(PreferenceVector::new(weights).expect("lattice point is on the simplex"));
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill_lattice(points, counts, pos + 1, remaining - c, steps);
    }
}

/// Uniform draw from the lattice. Deterministic given the seed.
pub fn sample_preference(space: &PreferenceSpace, rng_seed: u64) -> PreferenceVector {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_preference_with(space, &mut rng)
}

pub fn sample_preference_with<R: Rng>(space: &PreferenceSpace, rng: &mut R) -> PreferenceVector {
    space.points()[rng.gen_range(0..space.len())].clone()
}

/// Sub-optimal noise: additive, uniform per objective, with half-width
/// `eta` expressed as a fraction of that objective's attainable return range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub per_objective_range: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(eta: f64, per_objective_range: Vec<f64>) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(DwpiError::InvalidConfig(format!("noise eta {eta} < 0")));
        }
        if per_objective_range.iter().any(|r| !(*r > 0.0)) {
            return Err(DwpiError::InvalidConfig(
                "every noise range component must be > 0".into(),
            ));
        }
        Ok(Self {
            eta,
            per_objective_range,
        })
    }

    pub fn m(&self) -> usize {
        self.per_objective_range.len()
    }
}

/// Draws one noise vector: component i uniform on
/// `[-eta * range_i, +eta * range_i]`. Deterministic given the seed.
pub fn sample_noise(spec: &NoiseSpec, rng_seed: u64) -> RewardVector {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_noise_with(spec, &mut rng)
}

pub fn sample_noise_with<R: Rng>(spec: &NoiseSpec, rng: &mut R) -> RewardVector {
    RewardVector(
        spec.per_objective_range
            .iter()
            .map(|range| {
                let half = spec.eta * range;
                if half == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-half..=half)
                }
            })
            .collect(),
    )
}

/// Derives a child seed for an independent stream. Mixing follows
/// splitmix64 so per-index streams stay decorrelated regardless of the
/// evaluation order.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
