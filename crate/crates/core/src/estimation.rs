//! Storey-type null-proportion estimators, per-group empirical c.d.f.s and
//! their least concave majorants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroupedPValues;

/// Default Storey parameter.
pub const DEFAULT_LAMBDA: f64 = 0.5;
/// Default exponent `e` of the schedule `lambda_m = 1 - m^-e`.
pub const DEFAULT_SCHEDULE_EXPONENT: f64 = 0.25;

/// How the per-group null proportions were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pi0Mode {
    /// Estimation skipped, every proportion is 1.
    NonEstimated,
    FixedLambda { lambda: f64 },
    Schedule { exponent: f64, lambda: f64 },
    /// Externally supplied values (e.g. the true proportions in a simulation).
    Oracle,
}

/// Estimated null proportions, one per group, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEstimates {
    pi0: Vec<f64>,
    mode: Pi0Mode,
    pooled: f64,
}

impl NullEstimates {
    fn build(data: &GroupedPValues, pi0: Vec<f64>, mode: Pi0Mode) -> Self {
        let m = data.m() as f64;
        let pooled = data
            .group_sizes()
            .iter()
            .zip(&pi0)
            .map(|(&mg, &p)| mg as f64 / m * p)
            .sum();
        Self { pi0, mode, pooled }
    }

    pub fn non_estimated(data: &GroupedPValues) -> Self {
        Self::build(data, vec![1.0; data.num_groups()], Pi0Mode::NonEstimated)
    }

    pub fn oracle(data: &GroupedPValues, values: Vec<f64>) -> Result<Self> {
        if values.len() != data.num_groups() {
            return Err(Error::ShapeMismatch(format!(
                "{} null proportions for {} groups",
                values.len(),
                data.num_groups()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "null proportion {v} outside (0, 1]"
            )));
        }
        Ok(Self::build(data, values, Pi0Mode::Oracle))
    }

    pub fn pi0(&self) -> &[f64] {
        &self.pi0
    }

    pub fn mode(&self) -> &Pi0Mode {
        &self.mode
    }

    /// `sum_g (m_g / m) * pi0_g`.
    pub fn pooled(&self) -> f64 {
        self.pooled
    }
}

/// Storey estimator with the `+1/m` correction, clipped to 1.
pub fn storey_estimate(data: &GroupedPValues, lambda: f64) -> Result<NullEstimates> {
    let pi0 = storey_values(data, lambda)?;
    Ok(NullEstimates::build(data, pi0, Pi0Mode::FixedLambda { lambda }))
}

fn storey_values(data: &GroupedPValues, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside (0, 1)")));
    }
    let inv_m = 1.0 / data.m() as f64;
    Ok((0..data.num_groups())
        .map(|g| {
            let sorted = data.sorted(g);
            let below = sorted.partition_point(|&p| p <= lambda) as f64 / sorted.len() as f64;
            ((1.0 - below + inv_m) / (1.0 - lambda)).min(1.0)
        })
        .collect())
}

/// `lambda_m = 1 - m^-exponent`.
pub fn schedule_lambda(m: usize, exponent: f64) -> f64 {
    1.0 - (m as f64).powf(-exponent)
}

/// Storey estimator with `lambda_m = 1 - m^-exponent`, which tends to 1 slowly
/// enough for consistency under purity when `0 < exponent < 1/2`.
pub fn storey_schedule(data: &GroupedPValues, exponent: f64) -> Result<NullEstimates> {
    if !(exponent > 0.0 && exponent < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "schedule exponent {exponent} outside (0, 1/2)"
        )));
    }
    let lambda = schedule_lambda(data.m(), exponent);
    let pi0 = storey_values(data, lambda)?;
    Ok(NullEstimates::build(
        data,
        pi0,
        Pi0Mode::Schedule { exponent, lambda },
    ))
}

/// Right-continuous step function on `[0, 1]`, e.g. an empirical c.d.f.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    knots: Vec<f64>,
    counts: Vec<usize>,
    n: usize,
}

impl StepFunction {
    /// Empirical c.d.f. of `pvalues`. Ties produce a single multi-unit jump.
    pub fn ecdf(pvalues: &[f64]) -> Self {
        let mut sorted = pvalues.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut knots: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for (i, &p) in sorted.iter().enumerate() {
            if knots.last() == Some(&p) {
                *counts.last_mut().unwrap() = i + 1;
            } else {
                knots.push(p);
                counts.push(i + 1);
            }
        }
        Self { knots, counts, n: sorted.len() }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Cumulative counts at each knot.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let j = self.knots.partition_point(|&k| k <= t);
        if j == 0 {
            0.0
        } else {
            self.counts[j - 1] as f64 / self.n as f64
        }
    }
}

/// Empirical c.d.f. of group `g`.
pub fn ecdf(data: &GroupedPValues, g: usize) -> StepFunction {
    StepFunction::ecdf(data.sorted(g))
}

/// Concave piecewise-linear function through vertices `(x_j, counts_j / n)`.
///
/// Vertex ordinates are kept as integer counts so the unit structure of an
/// empirical c.d.f. survives the hull construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveMajorant {
    xs: Vec<f64>,
    counts: Vec<usize>,
    n: usize,
}

impl ConcaveMajorant {
    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs
            .iter()
            .zip(&self.counts)
            .map(|(&x, &c)| (x, c as f64 / self.n as f64))
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.n as f64;
        if t <= self.xs[0] {
            return self.counts[0] as f64 / n;
        }
        let j = self.xs.partition_point(|&x| x <= t);
        if j == self.xs.len() {
            return *self.counts.last().unwrap() as f64 / n;
        }
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.counts[j - 1] as f64 / n, self.counts[j] as f64 / n);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    /// Slopes of successive segments (nonincreasing).
    pub fn slopes(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.xs
            .windows(2)
            .zip(self.counts.windows(2))
            .map(|(x, c)| (c[1] as f64 - c[0] as f64) / n / (x[1] - x[0]))
            .collect()
    }
}

/// Least concave majorant of a step function on `[0, 1]`: the upper hull of
/// `(0, 0)`, the jump points and `(1, 1)`, collinear points merged.
pub fn lcm(f: &StepFunction) -> ConcaveMajorant {
    let mut points: Vec<(f64, usize)> = Vec::with_capacity(f.knots.len() + 2);
    points.push((0.0, 0));
    for (&x, &c) in f.knots.iter().zip(&f.counts) {
        if x == 0.0 {
            // mass at zero: keep the highest ordinate for the abscissa
            points[0].1 = c;
        } else {
            points.push((x, c));
        }
    }
    if points.last().unwrap().0 < 1.0 {
        points.push((1.0, f.n));
    }

    let mut hull: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    for p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b unless a -> b -> p turns clockwise
            let cross = (b.0 - a.0) * (p.1 as f64 - a.1 as f64)
                - (b.1 as f64 - a.1 as f64) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let (xs, counts) = hull.into_iter().unzip();
    ConcaveMajorant { xs, counts, n: f.n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_group(p: Vec<f64>) -> GroupedPValues {
        GroupedPValues::from_pvalues(vec![p]).unwrap()
    }

    #[test]
    fn storey_clips_at_one() {
        // m_g = 4 in a dataset with m = 8: raw (1 - 0 + 1/8) / 0.5 = 2.25
        let data =
            GroupedPValues::from_pvalues(vec![vec![0.6, 0.7, 0.8, 0.9], vec![0.1; 4]]).unwrap();
        let est = storey_estimate(&data, 0.5).unwrap();
        assert_eq!(est.pi0()[0], 1.0);
        // (1 - 1 + 1/8) / 0.5 = 0.25
        assert!((est.pi0()[1] - 0.25).abs() < 1e-15);
        assert!((est.pooled() - 0.625).abs() < 1e-15);
        assert_eq!(est.mode(), &Pi0Mode::FixedLambda { lambda: 0.5 });
    }

    #[test]
    fn storey_hand_evaluation() {
        // (1 - 0.5 + 0.125) / 0.5 = 1.25 -> 1
        let data =
            GroupedPValues::from_pvalues(vec![vec![0.1, 0.2, 0.6, 0.9], vec![0.5; 4]]).unwrap();
        assert_eq!(storey_estimate(&data, 0.5).unwrap().pi0()[0], 1.0);
        // (1 - 3/4 + 1/8) / 0.5 = 0.75 with lambda 0.5 on (0.1, 0.2, 0.4, 0.9)
        let data =
            GroupedPValues::from_pvalues(vec![vec![0.1, 0.2, 0.4, 0.9], vec![0.5; 4]]).unwrap();
        assert!((storey_estimate(&data, 0.5).unwrap().pi0()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn storey_rejects_bad_lambda() {
        let data = one_group(vec![0.5]);
        assert!(storey_estimate(&data, 0.0).is_err());
        assert!(storey_estimate(&data, 1.0).is_err());
        assert!(storey_schedule(&data, 0.5).is_err());
        assert!(storey_schedule(&data, 0.0).is_err());
    }

    #[test]
    fn schedule_arithmetic() {
        assert!((schedule_lambda(10_000, 0.25) - 0.9).abs() < 1e-12);
        assert!((schedule_lambda(16, 0.25) - 0.5).abs() < 1e-15);
        let data = one_group(vec![0.3; 16]);
        let est = storey_schedule(&data, 0.25).unwrap();
        assert!(matches!(est.mode(), Pi0Mode::Schedule { lambda, .. } if (*lambda - 0.5).abs() < 1e-15));
    }

    #[test]
    fn non_estimated_is_all_ones() {
        let data = GroupedPValues::from_pvalues(vec![vec![0.1], vec![0.2, 0.3]]).unwrap();
        let est = NullEstimates::non_estimated(&data);
        assert_eq!(est.pi0(), &[1.0, 1.0]);
        assert_eq!(est.pooled(), 1.0);
        assert!(NullEstimates::oracle(&data, vec![0.0, 1.0]).is_err());
        assert!(NullEstimates::oracle(&data, vec![0.5]).is_err());
    }

    #[test]
    fn ecdf_cases() {
        let f = StepFunction::ecdf(&[0.5]);
        assert_eq!(f.eval(0.49), 0.0);
        assert_eq!(f.eval(0.5), 1.0);

        let f = StepFunction::ecdf(&[0.2, 0.2]);
        assert_eq!(f.knots(), &[0.2]);
        assert_eq!(f.counts(), &[2]);
        assert_eq!(f.eval(0.2), 1.0);

        let f = StepFunction::ecdf(&[0.9, 0.1, 0.4]);
        assert!((f.eval(0.4) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval(0.0), 0.0);
    }

    #[test]
    fn lcm_single_point() {
        let h = lcm(&StepFunction::ecdf(&[0.5]));
        let v: Vec<_> = h.vertices().collect();
        assert_eq!(v, vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn lcm_fixed_point_on_concave_points() {
        // (0.1, 1/3), (0.3, 2/3), (0.7, 1): slopes 10/3, 5/3, 5/6, then flat
        let h = lcm(&StepFunction::ecdf(&[0.1, 0.3, 0.7]));
        let v: Vec<_> = h.xs().to_vec();
        assert_eq!(v, vec![0.0, 0.1, 0.3, 0.7, 1.0]);
        assert_eq!(h.counts(), &[0, 1, 2, 3, 3]);
    }

    #[test]
    fn lcm_merges_collinear_and_skips_interior_points() {
        let h = lcm(&StepFunction::ecdf(&[0.25, 0.5, 0.75, 1.0]));
        assert_eq!(h.xs(), &[0.0, 1.0]);
        let h = lcm(&StepFunction::ecdf(&[0.1, 0.8, 0.85]));
        assert_eq!(h.xs(), &[0.0, 0.1, 0.85, 1.0]);
    }

    #[test]
    fn lcm_with_zero_pvalues() {
        let h = lcm(&StepFunction::ecdf(&[0.0, 0.0, 0.5, 0.9]));
        assert_eq!(h.xs()[0], 0.0);
        assert_eq!(h.counts()[0], 2);
        assert_eq!(h.eval(1.0), 1.0);
    }

    proptest! {
        #[test]
        fn lcm_is_concave_majorant(p in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let f = StepFunction::ecdf(&p);
            let h = lcm(&f);
            let slopes = h.slopes();
            for w in slopes.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            for (&x, v) in f.knots().iter().zip(f.values()) {
                prop_assert!(h.eval(x) >= v - 1e-12);
            }
            prop_assert!((h.eval(1.0) - 1.0).abs() < 1e-15);
            // every hull vertex other than the anchors is an input point
            for (x, y) in h.vertices() {
                if x > 0.0 && x < 1.0 {
                    prop_assert!((f.eval(x) - y).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn ecdf_is_monotone(p in proptest::collection::vec(0.0f64..=1.0, 1..40),
                            t in proptest::collection::vec(0.0f64..=1.0, 2..10)) {
            let f = StepFunction::ecdf(&p);
            let mut t = t;
            t.sort_by(f64::total_cmp);
            for w in t.windows(2) {
                prop_assert!(f.eval(w[0]) <= f.eval(w[1]));
            }
            prop_assert_eq!(f.eval(1.0), 1.0);
        }

        #[test]
        fn storey_in_unit_interval(p in proptest::collection::vec(0.0f64..=1.0, 1..40),
                                   lambda in 0.01f64..0.99) {
            let data = one_group(p);
            let est = storey_estimate(&data, lambda).unwrap();
            prop_assert!(est.pi0()[0] > 0.0 && est.pi0()[0] <= 1.0);
        }
    }
}
