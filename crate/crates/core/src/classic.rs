//! Comparison procedures: adaptive BH, HZZ and the two-stage Pro1/Pro2.

use crate::addow::{argmax_weights_with_profile, min_cost_profile, CostVector, MinCostProfile};
use crate::error::{Error, Result};
use crate::estimation::NullEstimates;
use crate::model::GroupedPValues;
use crate::stepup::{grid_point, wbh, StepUpOutcome, WeightVector};

/// Constant weights `1 / pi0_pooled`.
pub fn abh_weights(data: &GroupedPValues, estimates: &NullEstimates) -> WeightVector {
    WeightVector::constant(data.num_groups(), 1.0 / estimates.pooled())
        .expect("pooled estimate is positive")
}

/// Adaptive BH: WBH with every weight `1 / pi0_pooled`.
pub fn abh(data: &GroupedPValues, estimates: &NullEstimates, alpha: f64) -> StepUpOutcome {
    wbh(data, &abh_weights(data, estimates), alpha)
}

/// `w_g = (1 - pi0_g) / (pi0_g (1 - pi0_pooled))`; undefined when the pooled
/// estimate is 1.
pub fn hzz_weights(data: &GroupedPValues, estimates: &NullEstimates) -> Result<WeightVector> {
    let pooled = estimates.pooled();
    if pooled >= 1.0 {
        return Err(Error::WeightsUndefined(
            "pooled null proportion is 1; fall back to BH".into(),
        ));
    }
    debug_assert_eq!(estimates.pi0().len(), data.num_groups());
    WeightVector::new(
        estimates
            .pi0()
            .iter()
            .map(|&p| (1.0 - p) / (p * (1.0 - pooled)))
            .collect(),
    )
}

pub fn hzz(data: &GroupedPValues, estimates: &NullEstimates, alpha: f64) -> Result<StepUpOutcome> {
    Ok(wbh(data, &hzz_weights(data, estimates)?, alpha))
}

/// Both two-stage procedures, plus the shared stage-one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStage {
    pub u_m: f64,
    pub pro1: StepUpOutcome,
    pub pro2: StepUpOutcome,
}

pub fn pro1_pro2(data: &GroupedPValues, estimates: &NullEstimates, alpha: f64) -> TwoStage {
    let profile = min_cost_profile(data, &CostVector::from_estimates(data, estimates));
    pro1_pro2_with_profile(data, estimates, &profile, alpha)
}

/// Stage one takes `u_M = max(u_hat(w1), u_hat(w2))` from ABH and HZZ (ABH
/// alone when the HZZ weights are undefined); stage two maximizes `G_w(u_M)`
/// over the budget set. Pro1 rejects at `u_M` directly, Pro2 reruns WBH with
/// the stage-two weights.
pub fn pro1_pro2_with_profile(
    data: &GroupedPValues,
    estimates: &NullEstimates,
    profile: &MinCostProfile,
    alpha: f64,
) -> TwoStage {
    let first = wbh(data, &abh_weights(data, estimates), alpha).k_hat;
    let second = hzz_weights(data, estimates)
        .map(|w| wbh(data, &w, alpha).k_hat)
        .unwrap_or(0);
    let k_m = first.max(second);
    let u_m = grid_point(k_m, data.m());
    let weights = argmax_weights_with_profile(data, profile, alpha, u_m);
    let pro1 = StepUpOutcome::at(data, k_m, weights.clone(), alpha);
    let pro2 = wbh(data, &weights, alpha);
    TwoStage { u_m, pro1, pro2 }
}
