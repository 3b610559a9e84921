//! One-sided Gaussian model: alternative c.d.f.s, data generation, oracle
//! optimal weights and the critical level.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::addow::CostVector;
use crate::error::{Error, Result};
use crate::model::{Group, GroupedPValues, Hypothesis};
use crate::stepup::{grid_point, WeightFunction, WeightVector};

const MAX_BISECTIONS: usize = 200;

/// Upper tail `P(Z >= z)` of the standard normal.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

fn normal_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`upper_tail`], refined by one Newton step.
pub fn upper_tail_inv(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let z = SQRT_2 * erfc_inv(2.0 * x);
    let density = normal_density(z);
    if density > 0.0 {
        z + (upper_tail(z) - x) / density
    } else {
        z
    }
}

/// A concave alternative c.d.f. on `[0, 1]`.
pub trait AlternativeCdf {
    fn cdf(&self, x: f64) -> f64;
    fn density(&self, x: f64) -> f64;
    /// `f(0+)`, possibly infinite.
    fn density_at_zero(&self) -> f64;
}

/// `F(x) = Φ̄(Φ̄⁻¹(x) - μ)`: p-values of a `N(μ, 1)` statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAlternative {
    pub mu: f64,
}

impl GaussianAlternative {
    /// `f⁻¹(y) = Φ̄(ln(y) / μ + μ / 2)`.
    pub fn density_inv(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        upper_tail(y.ln() / self.mu + self.mu / 2.0)
    }
}

impl AlternativeCdf for GaussianAlternative {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            upper_tail(upper_tail_inv(x) - self.mu)
        }
    }

    fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            f64::INFINITY
        } else if x >= 1.0 {
            0.0
        } else {
            (self.mu * (upper_tail_inv(x) - self.mu / 2.0)).exp()
        }
    }

    fn density_at_zero(&self) -> f64 {
        f64::INFINITY
    }
}

/// Groups with fixed null counts and Gaussian one-sided alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mu: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub null_counts: Vec<usize>,
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>, group_sizes: Vec<usize>, null_counts: Vec<usize>) -> Result<Self> {
        let model = Self { mu, group_sizes, null_counts };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.mu.len();
        if g == 0 || self.group_sizes.len() != g || self.null_counts.len() != g {
            return Err(Error::ShapeMismatch(
                "mu, group_sizes and null_counts need one entry per group".into(),
            ));
        }
        for i in 0..g {
            if !(self.mu[i].is_finite() && self.mu[i] > 0.0) {
                return Err(Error::InvalidParameter(format!("mu[{i}] must be positive")));
            }
            if !(self.null_counts[i] > 0 && self.null_counts[i] < self.group_sizes[i]) {
                return Err(Error::InvalidParameter(format!(
                    "group {i} needs 0 < null count < size"
                )));
            }
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn alternative_counts(&self) -> Vec<usize> {
        self.group_sizes
            .iter()
            .zip(&self.null_counts)
            .map(|(s, n)| s - n)
            .collect()
    }

    pub fn alternatives(&self) -> Vec<GaussianAlternative> {
        self.mu.iter().map(|&mu| GaussianAlternative { mu }).collect()
    }

    /// `π_g = m_g / m`.
    pub fn group_fractions(&self) -> Vec<f64> {
        let m = self.m() as f64;
        self.group_sizes.iter().map(|&s| s as f64 / m).collect()
    }

    /// `π_{g,0} = m_{g,0} / m_g`.
    pub fn null_fractions(&self) -> Vec<f64> {
        self.group_sizes
            .iter()
            .zip(&self.null_counts)
            .map(|(&s, &n)| n as f64 / s as f64)
            .collect()
    }

    /// `π_0 = Σ π_g π_{g,0}`.
    pub fn pi0(&self) -> f64 {
        self.null_counts.iter().sum::<usize>() as f64 / self.m() as f64
    }

    /// Budget coefficients `(m_g / m) * pibar_g`.
    pub fn costs(&self, pibar: &[f64]) -> Result<CostVector> {
        CostVector::new(
            self.group_fractions()
                .iter()
                .zip(pibar)
                .map(|(f, p)| f * p)
                .collect(),
        )
    }

    /// Costs with every null proportion set to 1.
    pub fn non_estimated_costs(&self) -> CostVector {
        CostVector::new(self.group_fractions()).expect("sizes are positive")
    }

    /// Costs at the true null proportions.
    pub fn consistent_costs(&self) -> CostVector {
        self.costs(&self.null_fractions()).expect("null counts are positive")
    }

    /// Labeled draw: nulls first in every group, then alternatives.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupedPValues {
        let groups = (0..self.num_groups())
            .map(|g| {
                let size = self.group_sizes[g];
                let nulls = self.null_counts[g];
                let mut pvalues = Vec::with_capacity(size);
                let mut labels = Vec::with_capacity(size);
                for i in 0..size {
                    let z: f64 = rng.sample(StandardNormal);
                    if i < nulls {
                        pvalues.push(upper_tail(z));
                        labels.push(Hypothesis::Null);
                    } else {
                        pvalues.push(upper_tail(z + self.mu[g]));
                        labels.push(Hypothesis::Alternative);
                    }
                }
                Group {
                    name: (g + 1).to_string(),
                    pvalues,
                    labels: Some(labels),
                }
            })
            .collect();
        GroupedPValues::new(groups).expect("generated p-values are valid")
    }

    pub fn generate_seeded(&self, seed: u64) -> GroupedPValues {
        self.generate(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `α*` with the given limits `pibar_g` of the null-proportion estimates.
    /// Zero for Gaussian alternatives since `f_g(0+) = ∞`.
    pub fn critical_alpha(&self, pibar: &[f64]) -> Result<f64> {
        let alternatives = self.alternatives();
        let groups: Vec<CriticalGroup<'_>> = self
            .group_fractions()
            .into_iter()
            .zip(self.null_fractions())
            .zip(&alternatives)
            .map(|((weight, null_fraction), alt)| CriticalGroup {
                weight,
                null_fraction,
                alternative: alt as &dyn AlternativeCdf,
            })
            .collect();
        critical_alpha(&groups, pibar)
    }
}

/// One group's inputs to [`critical_alpha`].
pub struct CriticalGroup<'a> {
    /// `π_g`.
    pub weight: f64,
    /// `π_{g,0}`.
    pub null_fraction: f64,
    pub alternative: &'a dyn AlternativeCdf,
}

/// `α* = inf_{w ∈ K∞} 1 / Σ π_g w_g (π_{g,0} + π_{g,1} f_g(0+))`.
///
/// The denominator is linear in `w` over a simplex-like set, so the infimum
/// sits at a vertex: `min_g pibar_g / (π_{g,0} + π_{g,1} f_g(0+))`.
pub fn critical_alpha(groups: &[CriticalGroup<'_>], pibar: &[f64]) -> Result<f64> {
    if groups.len() != pibar.len() || groups.is_empty() {
        return Err(Error::ShapeMismatch("one pibar per group required".into()));
    }
    if let Some(p) = pibar.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidParameter(format!("pibar {p} outside (0, 1]")));
    }
    Ok(groups
        .iter()
        .zip(pibar)
        .map(|(group, &bar)| {
            let slope = group.alternative.density_at_zero();
            if slope.is_infinite() {
                0.0
            } else {
                bar / (group.null_fraction + (1.0 - group.null_fraction) * slope)
            }
        })
        .fold(f64::INFINITY, f64::min))
}

/// Oracle weights and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub weights: WeightVector,
    /// Per-group p-value thresholds `alpha u w_g`, each in `[0, 1]`.
    pub thresholds: Vec<f64>,
    /// Lagrange multiplier of the budget constraint (0 when it is slack).
    pub multiplier: f64,
    /// `|Σ c_g w_g - 1|`, 0 when the budget is slack.
    pub residual: f64,
    pub iterations: usize,
}

/// Maximizes `Σ_g (m_{g,1}/m) F_g(alpha u w_g)` over `Σ_g c_g w_g <= 1`.
pub fn oracle_weights(
    model: &GaussianModel,
    costs: &CostVector,
    alpha: f64,
    u: f64,
) -> Result<WeightVector> {
    Ok(oracle_solution(model, costs, alpha, u)?.weights)
}

pub fn oracle_solution(
    model: &GaussianModel,
    costs: &CostVector,
    alpha: f64,
    u: f64,
) -> Result<OracleSolution> {
    solve_with_bracket(model, costs, alpha, u, None)
}

fn thresholds_at(
    alternatives: &[GaussianAlternative],
    gains: &[f64],
    costs: &[f64],
    log_nu: f64,
) -> Vec<f64> {
    let nu = log_nu.exp();
    alternatives
        .iter()
        .zip(gains.iter().zip(costs))
        .map(|(alt, (&a, &c))| alt.density_inv(nu * c / a).clamp(0.0, 1.0))
        .collect()
}

fn spend(thresholds: &[f64], costs: &[f64]) -> f64 {
    thresholds.iter().zip(costs).map(|(t, c)| t * c).sum()
}

// `upper` caps the multiplier from above (warm start along the grid).
fn solve_with_bracket(
    model: &GaussianModel,
    costs: &CostVector,
    alpha: f64,
    u: f64,
    upper: Option<f64>,
) -> Result<OracleSolution> {
    if !(alpha * u > 0.0) {
        return Err(Error::InvalidParameter("oracle weights need alpha * u > 0".into()));
    }
    let c = costs.as_slice();
    if c.len() != model.num_groups() {
        return Err(Error::ShapeMismatch("one cost per group required".into()));
    }
    let budget = alpha * u;
    let m = model.m() as f64;
    let gains: Vec<f64> = model.alternative_counts().iter().map(|&n| n as f64 / m).collect();
    let alternatives = model.alternatives();

    if c.iter().sum::<f64>() <= budget {
        let w = 1.0 / budget;
        return Ok(OracleSolution {
            weights: WeightVector::new(vec![w; c.len()])?,
            thresholds: vec![1.0; c.len()],
            multiplier: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }

    let over = |log_nu: f64| spend(&thresholds_at(&alternatives, &gains, c, log_nu), c) - budget;
    let mut hi = upper.map_or(8.0, f64::ln);
    while over(hi) > 0.0 {
        hi += 8.0;
    }
    let mut lo = hi - 8.0;
    while over(lo) < 0.0 {
        lo -= 8.0;
    }

    let mut iterations = 0;
    let mut best = (f64::INFINITY, hi);
    while iterations < MAX_BISECTIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let gap = over(mid);
        if gap.abs() < best.0 {
            best = (gap.abs(), mid);
        }
        if gap == 0.0 || mid <= lo || mid >= hi {
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_nu = best.1;
    let thresholds = thresholds_at(&alternatives, &gains, c, log_nu);
    let residual = (spend(&thresholds, c) / budget - 1.0).abs();
    if residual > 1e-10 {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let weights = WeightVector::new(thresholds.iter().map(|t| t / budget).collect())?;
    Ok(OracleSolution {
        weights,
        thresholds,
        multiplier: log_nu.exp(),
        residual,
        iterations,
    })
}

/// The oracle weight function on the grid `u = k/m` (zero row at `k = 0`).
pub fn oracle_weight_function(
    model: &GaussianModel,
    costs: &CostVector,
    alpha: f64,
) -> Result<WeightFunction> {
    let m = model.m();
    let mut rows = Vec::with_capacity(m + 1);
    rows.push(WeightVector::zeros(model.num_groups()));
    let mut upper = None;
    for k in 1..=m {
        let solution = solve_with_bracket(model, costs, alpha, grid_point(k, m), upper)?;
        if solution.multiplier > 0.0 {
            upper = Some(solution.multiplier);
        }
        rows.push(solution.weights);
    }
    WeightFunction::new(m, rows)
}

/// Expected power `Σ_g (m_{g,1}/m) F_g(alpha u w_g)` of fixed weights.
pub fn expected_power(model: &GaussianModel, weights: &WeightVector, alpha: f64, u: f64) -> f64 {
    let m = model.m() as f64;
    model
        .alternatives()
        .iter()
        .zip(model.alternative_counts())
        .zip(weights.as_slice())
        .map(|((alt, n1), &w)| n1 as f64 / m * alt.cdf(alpha * u * w))
        .sum()
}
