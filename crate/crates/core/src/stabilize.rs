//! Weak-signal pre-test and the stabilized procedure sADDOW.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addow::{addow_with_profile, min_cost_profile, CostVector, MinCostProfile};
use crate::error::{Error, Result};
use crate::estimation::NullEstimates;
use crate::model::GroupedPValues;
use crate::stepup::{bh, grid_point, StepUpOutcome};

/// `Z_m = sqrt(m) * max_{1<=k<=m} (max_w G_w(k/m) - alpha k/m)` with
/// non-estimated costs.
pub fn z_statistic(data: &GroupedPValues, alpha: f64) -> f64 {
    let profile = min_cost_profile(data, &CostVector::non_estimated(data));
    z_statistic_with_profile(&profile, alpha)
}

/// [`z_statistic`] from a profile built with non-estimated costs.
pub fn z_statistic_with_profile(profile: &MinCostProfile, alpha: f64) -> f64 {
    let counts = profile.optimal_counts(alpha);
    let m = counts.len() - 1;
    let best = counts
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &r)| grid_point(r, m) - alpha * grid_point(k, m))
        .fold(f64::NEG_INFINITY, f64::max);
    (m as f64).sqrt() * best
}

/// Sorted Monte Carlo draws of the statistic under the full null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullQuantileTable {
    pub m: usize,
    pub group_sizes: Vec<usize>,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub samples: Vec<f64>,
}

fn null_sample(group_sizes: &[usize], alpha: f64, seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let pvalues = group_sizes
        .iter()
        .map(|&n| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let data = GroupedPValues::from_pvalues(pvalues).expect("uniform draws are valid");
    z_statistic(&data, alpha)
}

/// Simulates `replicates` datasets of independent uniforms with the given
/// group sizes. Replicate `b` uses stream `b` of the seeded generator, so the
/// table does not depend on the thread count.
pub fn null_quantile_table(
    group_sizes: &[usize],
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<NullQuantileTable> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("at least one replicate required".into()));
    }
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::InvalidParameter("group sizes must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    #[cfg(feature = "parallel")]
    let mut samples: Vec<f64> = {
        use rayon::prelude::*;
        (0..replicates)
            .into_par_iter()
            .map(|b| null_sample(group_sizes, alpha, seed, b))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut samples: Vec<f64> = (0..replicates)
        .map(|b| null_sample(group_sizes, alpha, seed, b))
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(NullQuantileTable {
        m: group_sizes.iter().sum(),
        group_sizes: group_sizes.to_vec(),
        alpha,
        replicates,
        seed,
        samples,
    })
}

impl NullQuantileTable {
    /// The `ceil((1 - beta)(B + 1))`-th smallest sample, clamped to `1..=B`.
    pub fn quantile(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta {beta} outside (0, 1)")));
        }
        let b = self.samples.len();
        let rank = ((1.0 - beta) * (b as f64 + 1.0)).ceil() as usize;
        Ok(self.samples[rank.clamp(1, b) - 1])
    }

    pub fn check_matches(&self, data: &GroupedPValues, alpha: f64) -> Result<()> {
        if self.group_sizes != data.group_sizes() {
            return Err(Error::ShapeMismatch(format!(
                "table built for group sizes {:?}, data has {:?}",
                self.group_sizes,
                data.group_sizes()
            )));
        }
        if self.alpha != alpha {
            return Err(Error::ShapeMismatch(format!(
                "table built for alpha {}, requested {alpha}",
                self.alpha
            )));
        }
        if self.samples.is_empty() || self.samples.len() != self.replicates {
            return Err(Error::InvalidData("table has no samples".into()));
        }
        Ok(())
    }
}

/// sADDOW result with the test decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilized {
    pub outcome: StepUpOutcome,
    /// `true` when the weak-signal hypothesis is rejected and ADDOW ran.
    pub phi: bool,
    pub z: f64,
    pub q: f64,
}

/// ADDOW when `Z_m > q_beta`, BH otherwise.
pub fn saddow(
    data: &GroupedPValues,
    estimates: &NullEstimates,
    alpha: f64,
    beta: f64,
    table: &NullQuantileTable,
) -> Result<Stabilized> {
    let ne = min_cost_profile(data, &CostVector::non_estimated(data));
    let estimated = min_cost_profile(data, &CostVector::from_estimates(data, estimates));
    saddow_with_profiles(data, &ne, &estimated, alpha, beta, table)
}

/// [`saddow`] reusing the non-estimated profile (for the test) and the
/// estimated one (for ADDOW).
pub fn saddow_with_profiles(
    data: &GroupedPValues,
    non_estimated: &MinCostProfile,
    estimated: &MinCostProfile,
    alpha: f64,
    beta: f64,
    table: &NullQuantileTable,
) -> Result<Stabilized> {
    table.check_matches(data, alpha)?;
    let q = table.quantile(beta)?;
    let z = z_statistic_with_profile(non_estimated, alpha);
    let phi = z > q;
    let outcome = if phi {
        addow_with_profile(data, estimated, alpha)
    } else {
        bh(data, alpha)
    };
    Ok(Stabilized { outcome, phi, z, q })
}
