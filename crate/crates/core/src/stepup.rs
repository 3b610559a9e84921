//! The step-up functional, weighted rejection counting and the (multi-)weighted
//! BH engine.
//!
//! Thresholds are always evaluated through [`threshold`] so that every route
//! (single weight vector, weight function, optimizer output) compares p-values
//! against bit-identical numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupedPValues, RejectionSet};

/// Per-group nonnegative finite weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("weight {w} is not finite and >= 0")));
        }
        Ok(Self(weights))
    }

    pub fn ones(groups: usize) -> Self {
        Self(vec![1.0; groups])
    }

    pub fn constant(groups: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; groups])
    }

    pub fn zeros(groups: usize) -> Self {
        Self(vec![0.0; groups])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sum_g costs_g * w_g`; membership in a budget set means this is `<= 1`.
    pub fn spend(&self, costs: &[f64]) -> f64 {
        self.0.iter().zip(costs).map(|(w, c)| w * c).sum()
    }
}

/// Rejection threshold `alpha * u * w` for one group.
#[inline]
pub fn threshold(alpha: f64, u: f64, w: f64) -> f64 {
    alpha * u * w
}

/// Grid point `k / m`.
#[inline]
pub fn grid_point(k: usize, m: usize) -> f64 {
    k as f64 / m as f64
}

/// Smallest weight whose [`threshold`] at `(alpha, u)` reaches `target`.
///
/// A zero target with `positive` set still yields a strictly positive
/// threshold, so p-values equal to 0 stay rejectable.
pub(crate) fn weight_reaching(target: f64, alpha: f64, u: f64, positive: bool) -> f64 {
    if u <= 0.0 || (target <= 0.0 && !positive) {
        return 0.0;
    }
    let mut w = if target > 0.0 {
        target / (alpha * u)
    } else {
        f64::MIN_POSITIVE / (alpha * u)
    };
    while threshold(alpha, u, w) < target || threshold(alpha, u, w) <= 0.0 {
        w = w.next_up();
    }
    w
}

/// `I(h)` for a nondecreasing grid function given by its counts:
/// `h(k/m) = counts[k] / m`, `k = 0..=m`. Returns the largest `k` with
/// `counts[k] >= k` (0 when no positive grid point crosses).
pub fn crossing_point(counts: &[usize]) -> Result<usize> {
    let m = counts.len().saturating_sub(1);
    if counts.is_empty() || counts[0] != 0 {
        return Err(Error::InvalidParameter("h(0) must be 0".into()));
    }
    for k in 1..counts.len() {
        if counts[k] < counts[k - 1] {
            return Err(Error::NonMonotone { index: k });
        }
    }
    if counts[m] > m {
        return Err(Error::InvalidParameter("h(1) must be <= 1".into()));
    }
    Ok((0..=m).rev().find(|&k| counts[k] >= k).unwrap_or(0))
}

/// `G_w(u)`: fraction of p-values with `p_{g,i} <= alpha * u * w_g`.
pub fn g_hat(data: &GroupedPValues, w: &WeightVector, u: f64, alpha: f64) -> f64 {
    rejection_count(data, w, u, alpha) as f64 / data.m() as f64
}

fn rejection_count(data: &GroupedPValues, w: &WeightVector, u: f64, alpha: f64) -> usize {
    (0..data.num_groups())
        .map(|g| data.count_at_most(g, threshold(alpha, u, w.as_slice()[g])))
        .sum()
}

/// Weighted BH counting function on the grid: `counts[k] = m * G_w(k/m)`.
pub fn wbh_counts(data: &GroupedPValues, w: &WeightVector, alpha: f64) -> Vec<usize> {
    let m = data.m();
    let mut counts = vec![0usize; m + 1];
    for g in 0..data.num_groups() {
        let sorted = data.sorted(g);
        let wg = w.as_slice()[g];
        let mut cursor = 0;
        for (k, count) in counts.iter_mut().enumerate().skip(1) {
            let t = threshold(alpha, grid_point(k, m), wg);
            if t > 0.0 {
                while cursor < sorted.len() && sorted[cursor] <= t {
                    cursor += 1;
                }
            }
            *count += cursor;
        }
    }
    counts
}

/// Result of a step-up procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepUpOutcome {
    /// Step-up threshold, a multiple of `1/m`.
    pub u_hat: f64,
    /// `m * u_hat`.
    pub k_hat: usize,
    pub weights: WeightVector,
    /// Per-group p-value thresholds `alpha * u_hat * w_g`.
    pub thresholds: Vec<f64>,
    pub rejections: RejectionSet,
    pub alpha: f64,
}

impl StepUpOutcome {
    /// Rejects at `(u, weights)`: `{p_{g,i} <= alpha * u * w_g}`.
    pub fn at(data: &GroupedPValues, k_hat: usize, weights: WeightVector, alpha: f64) -> Self {
        let u_hat = grid_point(k_hat, data.m());
        let thresholds: Vec<f64> = weights
            .as_slice()
            .iter()
            .map(|&w| threshold(alpha, u_hat, w))
            .collect();
        let rejections = RejectionSet::from_thresholds(data, &thresholds);
        Self {
            u_hat,
            k_hat,
            weights,
            thresholds,
            rejections,
            alpha,
        }
    }

    pub fn num_rejections(&self) -> usize {
        self.rejections.len()
    }
}

/// Weighted BH: rejects `p_{g,i} <= alpha * I(G_w) * w_g`.
pub fn wbh(data: &GroupedPValues, w: &WeightVector, alpha: f64) -> StepUpOutcome {
    let counts = wbh_counts(data, w, alpha);
    let k_hat = crossing_point(&counts).expect("weighted counts are monotone");
    StepUpOutcome::at(data, k_hat, w.clone(), alpha)
}

/// Plain Benjamini-Hochberg, i.e. WBH with unit weights.
pub fn bh(data: &GroupedPValues, alpha: f64) -> StepUpOutcome {
    wbh(data, &WeightVector::ones(data.num_groups()), alpha)
}

/// A weight vector for every grid point `u = k/m`, `k = 0..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    m: usize,
    weights: Vec<WeightVector>,
}

impl WeightFunction {
    pub fn new(m: usize, weights: Vec<WeightVector>) -> Result<Self> {
        if weights.len() != m + 1 {
            return Err(Error::ShapeMismatch(format!(
                "weight function needs {} grid rows, got {}",
                m + 1,
                weights.len()
            )));
        }
        Ok(Self { m, weights })
    }

    /// The constant weight function `u -> w`.
    pub fn constant(m: usize, w: &WeightVector) -> Self {
        Self {
            m,
            weights: vec![w.clone(); m + 1],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn at(&self, k: usize) -> &WeightVector {
        &self.weights[k]
    }

    /// Largest `sum_g costs_g * W_g(k/m)` over the grid.
    pub fn max_spend(&self, costs: &[f64]) -> f64 {
        self.weights
            .iter()
            .map(|w| w.spend(costs))
            .fold(0.0, f64::max)
    }
}

/// `counts[k] = m * G_W(k/m)` for a weight function.
pub fn mwbh_counts(data: &GroupedPValues, weights: &WeightFunction, alpha: f64) -> Vec<usize> {
    let m = data.m();
    let mut counts = vec![0usize; m + 1];
    for (k, count) in counts.iter_mut().enumerate().skip(1) {
        *count = rejection_count(data, weights.at(k), grid_point(k, m), alpha);
    }
    counts
}

/// Multi-weighted BH: `u_hat = max{r : #{p / W(r/m) <= alpha r/m} >= r} / m`,
/// rejecting at `W(u_hat)`. Fails if `u -> G_W(u)` is not nondecreasing.
pub fn mwbh(data: &GroupedPValues, weights: &WeightFunction, alpha: f64) -> Result<StepUpOutcome> {
    if weights.m() != data.m() {
        return Err(Error::ShapeMismatch(format!(
            "weight function built for m = {}, data has m = {}",
            weights.m(),
            data.m()
        )));
    }
    if weights.at(0).len() != data.num_groups() {
        return Err(Error::ShapeMismatch("weight vectors do not match group count".into()));
    }
    let counts = mwbh_counts(data, weights, alpha);
    let k_hat = crossing_point(&counts)?;
    Ok(StepUpOutcome::at(data, k_hat, weights.at(k_hat).clone(), alpha))
}
