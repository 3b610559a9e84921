//! The ADDOW optimizer.
//!
//! Maximizing `G_w(u)` over the budget set `{w >= 0 : sum_g c_g w_g <= 1}`
//! only depends on how many p-values each group rejects: rejecting the `k`
//! smallest p-values of group `g` needs `alpha u w_g >= p_{g,(k)}`, which
//! spends `c_g p_{g,(k)} / (alpha u)` of the budget. So for every total count
//! `r` we compute the cheapest split `(k_1, .., k_G)` once (a multiple-choice
//! knapsack solved by a min-plus dynamic program over groups), and every
//! threshold question becomes a lookup in that u-independent profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{lcm, NullEstimates, StepFunction};
use crate::model::GroupedPValues;
use crate::stepup::{grid_point, weight_reaching, StepUpOutcome, WeightVector};

/// Relative slack when comparing a summed cost against a budget.
pub const BUDGET_GUARD: f64 = 1e-12;

#[inline]
pub fn within_budget(cost: f64, budget: f64) -> bool {
    cost <= budget + budget * BUDGET_GUARD
}

/// Budget coefficients `c_g = (m_g / m) * pi0_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter(format!("cost {c} is not positive")));
        }
        Ok(Self(costs))
    }

    pub fn from_estimates(data: &GroupedPValues, estimates: &NullEstimates) -> Self {
        let m = data.m() as f64;
        Self(
            data.group_sizes()
                .iter()
                .zip(estimates.pi0())
                .map(|(&mg, &pi0)| mg as f64 / m * pi0)
                .collect(),
        )
    }

    /// Costs with every null proportion set to 1.
    pub fn non_estimated(data: &GroupedPValues) -> Self {
        Self::from_estimates(data, &NullEstimates::non_estimated(data))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `min_cost[r]`: the least `sum_g c_g p_{g,(k_g)}` over splits with
/// `sum_g k_g = r` (`p_{g,(0)} = 0`), for `r = 0..=m`.
#[derive(Debug, Clone)]
pub struct MinCostProfile {
    min_cost: Vec<f64>,
    // levels[g][r]: the same minimum restricted to groups 0..=g
    levels: Vec<Vec<f64>>,
    costs: CostVector,
}

/// Runs the count-split dynamic program, a min-plus convolution over groups.
/// `O(m * max_g m_g)`.
pub fn min_cost_profile(data: &GroupedPValues, costs: &CostVector) -> MinCostProfile {
    assert_eq!(costs.as_slice().len(), data.num_groups(), "one cost per group");
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(data.num_groups());
    let mut prev = vec![0.0];
    for (g, &c) in costs.as_slice().iter().enumerate() {
        let sorted = data.sorted(g);
        let mut next = vec![f64::INFINITY; prev.len() + sorted.len()];
        next[..prev.len()].copy_from_slice(&prev);
        for (k, &p) in sorted.iter().enumerate() {
            let step = c * p;
            let dst = &mut next[k + 1..k + 1 + prev.len()];
            for (d, &a) in dst.iter_mut().zip(&prev) {
                let v = a + step;
                if v < *d {
                    *d = v;
                }
            }
        }
        levels.push(next.clone());
        prev = next;
    }
    debug_assert!(
        prev.windows(2).all(|w| w[0] <= w[1]),
        "minimum cost profile must be nondecreasing"
    );
    MinCostProfile {
        min_cost: prev,
        levels,
        costs: costs.clone(),
    }
}

impl MinCostProfile {
    pub fn min_cost(&self) -> &[f64] {
        &self.min_cost
    }

    pub fn costs(&self) -> &CostVector {
        &self.costs
    }

    /// An optimal split `(k_1, .., k_G)` for total count `r`; ties favor larger
    /// counts in lower-indexed groups.
    pub fn split(&self, data: &GroupedPValues, r: usize) -> Vec<usize> {
        let groups = self.levels.len();
        let mut split = vec![0; groups];
        let mut rem = r;
        for g in (1..groups).rev() {
            let prev = &self.levels[g - 1];
            let target = self.levels[g][rem];
            let sorted = data.sorted(g);
            let c = self.costs.as_slice()[g];
            let lo = rem.saturating_sub(prev.len() - 1);
            let hi = sorted.len().min(rem);
            let k = (lo..=hi)
                .find(|&k| {
                    let step = if k == 0 { 0.0 } else { c * sorted[k - 1] };
                    prev[rem - k] + step == target
                })
                .expect("dynamic program is reproducible");
            split[g] = k;
            rem -= k;
        }
        split[0] = rem;
        split
    }

    /// Largest `r` with `min_cost[r] <= budget`.
    pub fn max_count_within(&self, budget: f64) -> usize {
        self.min_cost.partition_point(|&c| within_budget(c, budget)) - 1
    }

    /// `m * max_w G_w(k/m)` for every `k = 0..=m`, by one merged scan.
    pub fn optimal_counts(&self, alpha: f64) -> Vec<usize> {
        let m = self.min_cost.len() - 1;
        let mut counts = vec![0; m + 1];
        let mut r = 0;
        for (k, count) in counts.iter_mut().enumerate().skip(1) {
            let budget = alpha * grid_point(k, m);
            while r < m && within_budget(self.min_cost[r + 1], budget) {
                r += 1;
            }
            *count = r;
        }
        counts
    }

    /// The step-up count `max{r : min_cost[r] <= alpha r / m}`.
    pub fn step_up_count(&self, alpha: f64) -> usize {
        let m = self.min_cost.len() - 1;
        (0..=m)
            .rev()
            .find(|&r| within_budget(self.min_cost[r], alpha * grid_point(r, m)))
            .unwrap_or(0)
    }

    /// Minimal weights rejecting the optimal split for count `r` at level
    /// `u = k/m`.
    fn weights_for(&self, data: &GroupedPValues, r: usize, k: usize, alpha: f64) -> WeightVector {
        let u = grid_point(k, data.m());
        let split = self.split(data, r);
        let weights = split
            .iter()
            .enumerate()
            .map(|(g, &kg)| {
                let t = if kg == 0 { 0.0 } else { data.sorted(g)[kg - 1] };
                weight_reaching(t, alpha, u, kg > 0)
            })
            .collect();
        WeightVector::new(weights).expect("recovered weights are finite")
    }
}

/// ADDOW with a precomputed profile.
pub fn addow_with_profile(
    data: &GroupedPValues,
    profile: &MinCostProfile,
    alpha: f64,
) -> StepUpOutcome {
    let r_hat = profile.step_up_count(alpha);
    if r_hat == 0 {
        return StepUpOutcome::at(data, 0, WeightVector::zeros(data.num_groups()), alpha);
    }
    let weights = profile.weights_for(data, r_hat, r_hat, alpha);
    StepUpOutcome::at(data, r_hat, weights, alpha)
}

/// ADDOW: multi-weighted BH with weights maximizing the rejection count over
/// the estimated budget set at every threshold. With non-estimated
/// proportions this is IHW.
pub fn addow(data: &GroupedPValues, estimates: &NullEstimates, alpha: f64) -> StepUpOutcome {
    let profile = min_cost_profile(data, &CostVector::from_estimates(data, estimates));
    addow_with_profile(data, &profile, alpha)
}

/// IHW: ADDOW with every null proportion set to 1.
pub fn ihw(data: &GroupedPValues, alpha: f64) -> StepUpOutcome {
    addow(data, &NullEstimates::non_estimated(data), alpha)
}

/// `W*(u)` on the grid `u = k/m`, scaled from the optimal split for budget
/// `alpha u`. The zero vector at `k = 0`.
pub fn argmax_weights_on_grid(
    data: &GroupedPValues,
    profile: &MinCostProfile,
    alpha: f64,
    k: usize,
) -> WeightVector {
    if k == 0 {
        return WeightVector::zeros(data.num_groups());
    }
    let u = grid_point(k, data.m());
    let r = profile.max_count_within(alpha * u);
    profile.weights_for(data, r, k, alpha)
}

/// `W*(u)` for an arbitrary `u` in `(0, 1]`; thresholds are rounded up to the
/// order statistics they reach. The zero vector when `u = 0`.
pub fn argmax_weights_at(
    data: &GroupedPValues,
    estimates: &NullEstimates,
    alpha: f64,
    u: f64,
) -> WeightVector {
    let profile = min_cost_profile(data, &CostVector::from_estimates(data, estimates));
    argmax_weights_with_profile(data, &profile, alpha, u)
}

pub fn argmax_weights_with_profile(
    data: &GroupedPValues,
    profile: &MinCostProfile,
    alpha: f64,
    u: f64,
) -> WeightVector {
    if u <= 0.0 {
        return WeightVector::zeros(data.num_groups());
    }
    let r = profile.max_count_within(alpha * u);
    let split = profile.split(data, r);
    let weights = split
        .iter()
        .enumerate()
        .map(|(g, &kg)| {
            let t = if kg == 0 { 0.0 } else { data.sorted(g)[kg - 1] };
            weight_reaching(t, alpha, u, kg > 0)
        })
        .collect();
    WeightVector::new(weights).expect("recovered weights are finite")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Unit {
    group: usize,
    start: f64,
    width: f64,
    cost: f64,
}

/// Per-count minimum cost for the least-concave-majorant objective.
///
/// Each group's majorant is cut into unit steps of height `1 / m_g`; unit
/// costs are nondecreasing within a group by concavity, so merging all
/// groups' units by cost gives the exact minimum of the concave problem.
#[derive(Debug, Clone)]
pub struct LcmProfile {
    min_cost: Vec<f64>,
    order: Vec<Unit>,
    positions: Vec<Vec<f64>>,
}

pub fn lcm_profile(data: &GroupedPValues, costs: &CostVector) -> LcmProfile {
    let mut per_group: Vec<Vec<Unit>> = Vec::with_capacity(data.num_groups());
    let mut positions = Vec::with_capacity(data.num_groups());
    for (g, &c) in costs.as_slice().iter().enumerate() {
        let hull = lcm(&StepFunction::ecdf(data.sorted(g)));
        let mut units = Vec::with_capacity(data.sorted(g).len());
        let mut pos = Vec::with_capacity(units.capacity());
        let (xs, counts) = (hull.xs(), hull.counts());
        // mass at zero is free
        for _ in 0..counts[0] {
            units.push(Unit { group: g, start: 0.0, width: 0.0, cost: 0.0 });
            pos.push(0.0);
        }
        for j in 1..xs.len() {
            let steps = counts[j] - counts[j - 1];
            if steps == 0 {
                continue;
            }
            let width = (xs[j] - xs[j - 1]) / steps as f64;
            for s in 0..steps {
                let start = xs[j - 1] + width * s as f64;
                units.push(Unit { group: g, start, width, cost: c * width });
                pos.push(if s + 1 == steps { xs[j] } else { start + width });
            }
        }
        per_group.push(units);
        positions.push(pos);
    }

    let total: usize = per_group.iter().map(Vec::len).sum();
    let mut heads = vec![0usize; per_group.len()];
    let mut order = Vec::with_capacity(total);
    for _ in 0..total {
        let g = (0..per_group.len())
            .filter(|&g| heads[g] < per_group[g].len())
            .min_by(|&a, &b| {
                per_group[a][heads[a]]
                    .cost
                    .total_cmp(&per_group[b][heads[b]].cost)
                    .then(a.cmp(&b))
            })
            .expect("units remain");
        order.push(per_group[g][heads[g]]);
        heads[g] += 1;
    }
    let mut min_cost = Vec::with_capacity(total + 1);
    min_cost.push(0.0);
    let mut acc = 0.0;
    for unit in &order {
        acc += unit.cost;
        min_cost.push(acc);
    }
    LcmProfile { min_cost, order, positions }
}

impl LcmProfile {
    pub fn min_cost(&self) -> &[f64] {
        &self.min_cost
    }

    /// Majorant abscissa reached after `k` units of group `g`, `k = 1..=m_g`.
    pub fn group_positions(&self, g: usize) -> &[f64] {
        &self.positions[g]
    }

    pub fn step_up_count(&self, alpha: f64) -> usize {
        let m = self.min_cost.len() - 1;
        (0..=m)
            .rev()
            .find(|&r| within_budget(self.min_cost[r], alpha * grid_point(r, m)))
            .unwrap_or(0)
    }

    /// Optimal per-group thresholds for a budget, spending it in full; the
    /// second vector flags groups that received any unit.
    pub fn allocate(&self, groups: usize, budget: f64) -> (Vec<f64>, Vec<bool>) {
        let mut thresholds = vec![0.0; groups];
        let mut touched = vec![false; groups];
        let mut spent = 0.0;
        for unit in &self.order {
            if spent + unit.cost <= budget {
                spent += unit.cost;
                thresholds[unit.group] = unit.start + unit.width;
                touched[unit.group] = true;
            } else {
                let fraction = (budget - spent) / unit.cost;
                if fraction > 0.0 {
                    thresholds[unit.group] = unit.start + fraction * unit.width;
                    touched[unit.group] = true;
                }
                break;
            }
        }
        (thresholds, touched)
    }
}

/// ADDOW on the least concave majorants of the per-group empirical c.d.f.s.
pub fn addow_lcm(data: &GroupedPValues, estimates: &NullEstimates, alpha: f64) -> StepUpOutcome {
    let profile = lcm_profile(data, &CostVector::from_estimates(data, estimates));
    addow_lcm_with_profile(data, &profile, alpha)
}

pub fn addow_lcm_with_profile(
    data: &GroupedPValues,
    profile: &LcmProfile,
    alpha: f64,
) -> StepUpOutcome {
    let r_hat = profile.step_up_count(alpha);
    if r_hat == 0 {
        return StepUpOutcome::at(data, 0, WeightVector::zeros(data.num_groups()), alpha);
    }
    let u = grid_point(r_hat, data.m());
    let (thresholds, touched) = profile.allocate(data.num_groups(), alpha * u);
    let weights = thresholds
        .iter()
        .zip(&touched)
        .map(|(&t, &hit)| weight_reaching(t, alpha, u, hit))
        .collect();
    StepUpOutcome::at(
        data,
        r_hat,
        WeightVector::new(weights).expect("finite weights"),
        alpha,
    )
}
