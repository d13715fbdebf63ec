//! The statistical core: normalized nonconformity scores, regime-partitioned
//! (Mondrian) calibration, margin computation, per-class difficulty, and
//! online risk adaptation.
//!
//! Scores are angular errors divided by a per-class difficulty scale, so one
//! quantile is meaningful across scenes of different stability. Calibration
//! keeps a separate sliding window per regime: storm-time errors never widen
//! calm-time margins and vice versa. When a bin is empty or too small for the
//! requested risk level the quantile is +∞, which downstream saturates to the
//! full sphere — the fallback fails toward coverage, never toward bandwidth.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::sphere::{angular_error, Direction};
use crate::traces::Regime;

/// Classes with fewer calibration samples than this fall back to the global
/// difficulty estimate.
pub const MIN_CLASS_SAMPLES: usize = 20;
/// Default sliding-window capacity per calibration bin.
pub const DEFAULT_BIN_CAPACITY: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum ConformalError {
    #[error("difficulty fit needs at least one sample")]
    NoSamples,
    #[error("difficulty scale must be > 0, got {0}")]
    BadSigma(f64),
    #[error("difficulty floor must be > 0, got {0}")]
    BadFloor(f64),
    #[error("angular error must be finite and >= 0, got {0}")]
    BadError(f64),
    #[error("risk level must be in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("risk bounds must satisfy 0 < min < max < 1, got [{min}, {max}]")]
    BadBounds { min: f64, max: f64 },
    #[error("invalid calibration snapshot: {0}")]
    BadSnapshot(String),
}

/// A prediction error in difficulty units: angular error divided by the
/// difficulty scale of what was being watched.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NonconformityScore(f64);

impl NonconformityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Normalize a prediction error by the difficulty scale.
pub fn score(
    true_dir: Direction,
    predicted: Direction,
    sigma: f64,
) -> Result<NonconformityScore, ConformalError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ConformalError::BadSigma(sigma));
    }
    Ok(NonconformityScore(
        angular_error(true_dir, predicted) / sigma,
    ))
}

/// Eq-style margin: the calibrated quantile times the difficulty scale,
/// in degrees. An infinite quantile propagates.
pub fn margin(q: f64, sigma: f64) -> f64 {
    q * sigma
}

/// Per-class difficulty scale σ̂ (degrees): mean absolute angular error per
/// semantic class, floored, with a global fallback for unseen classes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DifficultyTable {
    per_class: BTreeMap<u8, f64>,
    global: f64,
    floor: f64,
}

impl DifficultyTable {
    /// Uniform table: every lookup yields `sigma`.
    pub fn uniform(sigma: f64) -> Result<Self, ConformalError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(ConformalError::BadSigma(sigma));
        }
        Ok(Self {
            per_class: BTreeMap::new(),
            global: sigma,
            floor: sigma,
        })
    }

    pub fn global(&self) -> f64 {
        self.global
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn classes(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.per_class.iter().map(|(&c, &s)| (c, s))
    }
}

/// σ̂ for a class: the per-class estimate when known, else the global
/// fallback; never below the floor.
pub fn difficulty(table: &DifficultyTable, class: Option<u8>) -> f64 {
    let raw = class
        .and_then(|c| table.per_class.get(&c).copied())
        .unwrap_or(table.global);
    raw.max(table.floor)
}

/// Fit a difficulty table from (class, angular error) calibration pairs.
/// Classes with fewer than [`MIN_CLASS_SAMPLES`] samples fall back to the
/// global mean; everything is floored at `sigma_min`.
pub fn fit_difficulty(
    samples: &[(Option<u8>, f64)],
    sigma_min: f64,
) -> Result<DifficultyTable, ConformalError> {
    if samples.is_empty() {
        return Err(ConformalError::NoSamples);
    }
    if !(sigma_min > 0.0) || !sigma_min.is_finite() {
        return Err(ConformalError::BadFloor(sigma_min));
    }
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for &(class, err) in samples {
        if !err.is_finite() || err < 0.0 {
            return Err(ConformalError::BadError(err));
        }
        total += err.abs();
        if let Some(c) = class {
            let e = sums.entry(c).or_insert((0.0, 0));
            e.0 += err.abs();
            e.1 += 1;
        }
    }
    let global = (total / samples.len() as f64).max(sigma_min);
    let per_class = sums
        .into_iter()
        .filter(|&(_, (_, n))| n >= MIN_CLASS_SAMPLES)
        .map(|(c, (sum, n))| (c, (sum / n as f64).max(sigma_min)))
        .collect();
    Ok(DifficultyTable {
        per_class,
        global,
        floor: sigma_min,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Bin {
    order: VecDeque<f64>,
    sorted: Vec<f64>,
}

impl Bin {
    fn push(&mut self, value: f64, capacity: usize) {
        if self.order.len() == capacity {
            let old = self.order.pop_front().expect("non-empty at capacity");
            let at = self
                .sorted
                .binary_search_by(|v| v.partial_cmp(&old).unwrap())
                .expect("evicted value present in sorted view");
            self.sorted.remove(at);
        }
        self.order.push_back(value);
        let at = match self
            .sorted
            .binary_search_by(|v| v.partial_cmp(&value).unwrap())
        {
            Ok(i) | Err(i) => i,
        };
        self.sorted.insert(at, value);
    }
}

/// Mondrian calibration state: one bounded sliding window of nonconformity
/// scores per regime, oldest-first eviction. Quantile queries read a sorted
/// view maintained incrementally, so they are O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStore {
    capacity: usize,
    calm: Bin,
    storm: Bin,
}

impl CalibrationStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            calm: Bin::default(),
            storm: Bin::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn bin(&self, regime: Regime) -> &Bin {
        match regime {
            Regime::Calm => &self.calm,
            Regime::Storm => &self.storm,
        }
    }

    pub fn len(&self, regime: Regime) -> usize {
        self.bin(regime).order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calm.order.is_empty() && self.storm.order.is_empty()
    }

    /// Append a score to the regime's bin, evicting the oldest at capacity.
    /// Non-finite scores are ignored.
    pub fn observe(&mut self, regime: Regime, score: NonconformityScore) {
        let v = score.value();
        if !v.is_finite() || v < 0.0 {
            return;
        }
        let cap = self.capacity;
        match regime {
            Regime::Calm => self.calm.push(v, cap),
            Regime::Storm => self.storm.push(v, cap),
        }
    }

    /// Finite-sample conformal quantile for the regime bin: the
    /// ⌈(n+1)(1−α)⌉-th smallest score, or +∞ when the bin is too small for
    /// the requested risk (which forces the full-sphere fallback).
    pub fn quantile(&self, regime: Regime, alpha: f64) -> Result<f64, ConformalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::BadAlpha(alpha));
        }
        let sorted = &self.bin(regime).sorted;
        let n = sorted.len();
        let rank = conformal_rank(n, alpha);
        if rank == 0 || rank > n {
            return Ok(f64::INFINITY);
        }
        Ok(sorted[rank - 1])
    }

    pub fn snapshot(&self, difficulty: &DifficultyTable) -> CalibrationSnapshot {
        CalibrationSnapshot {
            capacity: self.capacity,
            calm: self.calm.order.iter().copied().collect(),
            storm: self.storm.order.iter().copied().collect(),
            difficulty: difficulty.clone(),
        }
    }
}

/// ⌈(n+1)(1−α)⌉ with a small guard against the float product landing one ulp
/// above an exact integer.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    (((n + 1) as f64 * (1.0 - alpha)) - 1e-9).ceil() as usize
}

/// Serializable calibration state (per-bin score arrays in insertion order
/// plus the difficulty table) for reproducible experiment restarts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationSnapshot {
    pub capacity: usize,
    pub calm: Vec<f64>,
    pub storm: Vec<f64>,
    pub difficulty: DifficultyTable,
}

impl CalibrationSnapshot {
    pub fn restore(&self) -> Result<(CalibrationStore, DifficultyTable), ConformalError> {
        if self.calm.len() > self.capacity || self.storm.len() > self.capacity {
            return Err(ConformalError::BadSnapshot(format!(
                "bin larger than capacity {}",
                self.capacity
            )));
        }
        let mut store = CalibrationStore::new(self.capacity);
        for &v in &self.calm {
            store.observe(Regime::Calm, NonconformityScore(v));
        }
        for &v in &self.storm {
            store.observe(Regime::Storm, NonconformityScore(v));
        }
        Ok((store, self.difficulty.clone()))
    }
}

/// Online risk controller: after each chunk the working risk level moves by
/// γ(α_target − err), where err is 1 on a coverage failure and 0 otherwise.
/// Failures lower α (sets widen); successes raise it toward and past the
/// target (sets tighten). Always clamped to [α_min, α_max].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AciState {
    pub alpha: f64,
    pub alpha_target: f64,
    pub gamma: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl AciState {
    pub fn new(
        alpha_target: f64,
        gamma: f64,
        alpha_min: f64,
        alpha_max: f64,
    ) -> Result<Self, ConformalError> {
        if !(alpha_min > 0.0 && alpha_min < alpha_max && alpha_max < 1.0) {
            return Err(ConformalError::BadBounds {
                min: alpha_min,
                max: alpha_max,
            });
        }
        if !(alpha_target > 0.0 && alpha_target < 1.0) {
            return Err(ConformalError::BadAlpha(alpha_target));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(ConformalError::BadAlpha(gamma));
        }
        Ok(Self {
            alpha: alpha_target.clamp(alpha_min, alpha_max),
            alpha_target,
            gamma,
            alpha_min,
            alpha_max,
        })
    }
}

/// One step of the online update.
pub fn aci_update(state: AciState, covered: bool) -> AciState {
    let err = if covered { 0.0 } else { 1.0 };
    let alpha = (state.alpha + state.gamma * (state.alpha_target - err))
        .clamp(state.alpha_min, state.alpha_max);
    AciState { alpha, ..state }
}
