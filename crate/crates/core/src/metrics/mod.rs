//! Speedup, Amdahl bound, straggler gap, overhead and token metrics.

pub mod stats;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::RunRecord;

/// Floating-point scalar the metric formulas are written against.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("parallel fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("processor count {0} below 1")]
    Processors(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("empty latency list")]
    Empty,
}

fn lossy<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn positive<T: Scalar>(name: &'static str, x: T) -> Result<T, MetricError> {
    if x > T::zero() && x.is_finite() {
        Ok(x)
    } else {
        Err(MetricError::NonPositive { name, value: lossy(x) })
    }
}

/// `1 / ((1 - p) + p / s)`.
pub fn amdahl_bound<T: Scalar>(p: T, s: T) -> Result<T, MetricError> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(MetricError::Fraction(lossy(p)));
    }
    if !(s >= T::one()) {
        return Err(MetricError::Processors(lossy(s)));
    }
    Ok(T::one() / ((T::one() - p) + p / s))
}

pub fn speedup<T: Scalar>(t_baseline: T, t_team: T) -> Result<T, MetricError> {
    Ok(positive("baseline time", t_baseline)? / positive("team time", t_team)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StragglerMode {
    /// Slowest minus the mean of the remaining agents.
    #[default]
    OthersMean,
    /// Slowest minus the mean of all agents.
    AllMean,
}

pub fn straggler_gap<T: Scalar>(latencies: &[T], mode: StragglerMode) -> Result<T, MetricError> {
    let n = latencies.len();
    if n == 0 {
        return Err(MetricError::Empty);
    }
    if n == 1 {
        return Ok(T::zero());
    }
    let max = latencies.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = latencies.iter().copied().fold(T::zero(), |a, b| a + b);
    let mean = match mode {
        StragglerMode::OthersMean => (sum - max) / T::from_usize(n - 1).unwrap(),
        StragglerMode::AllMean => sum / T::from_usize(n).unwrap(),
    };
    // Rounding can leave a hair below zero when every entry is equal.
    Ok((max - mean).max(T::zero()))
}

pub fn token_multiplier<T: Scalar>(tokens: T, baseline_tokens: T) -> Result<T, MetricError> {
    Ok(positive("run tokens", tokens)? / positive("baseline tokens", baseline_tokens)?)
}

/// Positive when token cost grows faster than speedup.
pub fn efficiency_gap<T: Scalar>(multiplier: T, speedup: T) -> T {
    multiplier - speedup
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Overhead {
    pub messages: u64,
    pub idle_rounds: u64,
}

pub fn overhead_counts(record: &RunRecord) -> Overhead {
    Overhead {
        messages: record.messages_per_agent.iter().sum(),
        idle_rounds: record.idle_rounds_per_agent.iter().sum(),
    }
}

/// Straggler gap of every executed round.
pub fn round_straggler_gaps(record: &RunRecord, mode: StragglerMode) -> Vec<f64> {
    record.rounds.iter().filter_map(|r| straggler_gap(&r.latencies(), mode).ok()).collect()
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}
