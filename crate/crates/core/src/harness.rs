//! Paired Monte Carlo comparisons on the two-group Gaussian model.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addow::{
    addow_lcm_with_profile, addow_with_profile, lcm_profile, min_cost_profile, CostVector,
    LcmProfile, MinCostProfile,
};
use crate::classic::{abh, hzz, pro1_pro2_with_profile};
use crate::error::{Error, Result};
use crate::estimation::{
    storey_estimate, storey_schedule, NullEstimates, DEFAULT_LAMBDA, DEFAULT_SCHEDULE_EXPONENT,
};
use crate::model::{diff_pow, GroupedPValues, MetricSample, RejectionSet};
use crate::oracle::{oracle_weight_function, GaussianModel};
use crate::stabilize::{null_quantile_table, saddow_with_profiles, NullQuantileTable};
use crate::stepup::{bh, mwbh, WeightFunction};

/// Where a procedure's null proportions come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateSpec {
    /// Every proportion set to 1.
    NonEstimated,
    /// The true proportions of the generating model.
    Consistent,
    Storey(f64),
    Schedule(f64),
}

impl EstimateSpec {
    pub fn estimate(&self, data: &GroupedPValues, model: &GaussianModel) -> Result<NullEstimates> {
        match *self {
            Self::NonEstimated => Ok(NullEstimates::non_estimated(data)),
            Self::Consistent => NullEstimates::oracle(data, model.null_fractions()),
            Self::Storey(lambda) => storey_estimate(data, lambda),
            Self::Schedule(exponent) => storey_schedule(data, exponent),
        }
    }
}

impl fmt::Display for EstimateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonEstimated => write!(f, "ne"),
            Self::Consistent => write!(f, "ce"),
            Self::Storey(l) => write!(f, "storey:{l}"),
            Self::Schedule(e) => write!(f, "schedule:{e}"),
        }
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::InvalidParameter(format!("{what} '{s}' is not a number")))
}

impl FromStr for EstimateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let spec = match (head, arg) {
            ("ne", None) => Self::NonEstimated,
            ("ce", None) => Self::Consistent,
            ("storey", None) => Self::Storey(DEFAULT_LAMBDA),
            ("storey", Some(a)) => Self::Storey(parse_number(a, "lambda")?),
            ("schedule", None) => Self::Schedule(DEFAULT_SCHEDULE_EXPONENT),
            ("schedule", Some(a)) => Self::Schedule(parse_number(a, "exponent")?),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown estimate mode '{s}' (ne, ce, storey[:lambda], schedule[:exponent])"
                )))
            }
        };
        match spec {
            Self::Storey(l) if !(l > 0.0 && l < 1.0) => Err(Error::InvalidParameter(format!(
                "lambda {l} outside (0, 1)"
            ))),
            Self::Schedule(e) if !(e > 0.0 && e < 0.5) => Err(Error::InvalidParameter(format!(
                "schedule exponent {e} outside (0, 1/2)"
            ))),
            _ => Ok(spec),
        }
    }
}

/// A procedure as named in configs and reports, e.g. `addow:ce`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Procedure {
    Bh,
    /// ADDOW with non-estimated proportions.
    Ihw,
    Addow(EstimateSpec),
    AddowLcm(EstimateSpec),
    Abh(EstimateSpec),
    Hzz(EstimateSpec),
    Pro1(EstimateSpec),
    Pro2(EstimateSpec),
    Saddow(EstimateSpec),
    /// MWBH with the model's oracle weight function; only `ne` and `ce`.
    OracleMwbh(EstimateSpec),
}

impl Procedure {
    fn estimate(&self) -> Option<EstimateSpec> {
        match *self {
            Self::Bh => None,
            Self::Ihw => Some(EstimateSpec::NonEstimated),
            Self::Addow(e)
            | Self::AddowLcm(e)
            | Self::Abh(e)
            | Self::Hzz(e)
            | Self::Pro1(e)
            | Self::Pro2(e)
            | Self::Saddow(e)
            | Self::OracleMwbh(e) => Some(e),
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bh => write!(f, "bh"),
            Self::Ihw => write!(f, "ihw"),
            Self::Addow(e) => write!(f, "addow:{e}"),
            Self::AddowLcm(e) => write!(f, "addow-lcm:{e}"),
            Self::Abh(e) => write!(f, "abh:{e}"),
            Self::Hzz(e) => write!(f, "hzz:{e}"),
            Self::Pro1(e) => write!(f, "pro1:{e}"),
            Self::Pro2(e) => write!(f, "pro2:{e}"),
            Self::Saddow(e) => write!(f, "saddow:{e}"),
            Self::OracleMwbh(e) => write!(f, "oracle-mwbh:{e}"),
        }
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "bh" => return Ok(Self::Bh),
            "ihw" => return Ok(Self::Ihw),
            _ => {}
        }
        let (name, rest) = s.split_once(':').ok_or_else(|| {
            Error::InvalidParameter(format!("unknown procedure '{s}'"))
        })?;
        let e: EstimateSpec = rest.parse()?;
        Ok(match name {
            "addow" => Self::Addow(e),
            "addow-lcm" => Self::AddowLcm(e),
            "abh" => Self::Abh(e),
            "hzz" => Self::Hzz(e),
            "pro1" => Self::Pro1(e),
            "pro2" => Self::Pro2(e),
            "saddow" => Self::Saddow(e),
            "oracle-mwbh" => match e {
                EstimateSpec::NonEstimated | EstimateSpec::Consistent => Self::OracleMwbh(e),
                _ => {
                    return Err(Error::InvalidParameter(
                        "oracle-mwbh takes ne or ce".into(),
                    ))
                }
            },
            _ => return Err(Error::InvalidParameter(format!("unknown procedure '{s}'"))),
        })
    }
}

impl TryFrom<String> for Procedure {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Procedure> for String {
    fn from(p: Procedure) -> String {
        p.to_string()
    }
}

/// `mu_g = offset + scale * mu_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuRule {
    pub offset: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu_bar: f64,
    pub m: usize,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!("mu_bar={};m={}", self.mu_bar, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mu_rule: Vec<MuRule>,
    /// `m_g / m`; the last group absorbs rounding.
    pub size_fractions: Vec<f64>,
    /// `m_{g,0} / m_g`.
    pub null_fractions: Vec<f64>,
    pub sweep: Vec<SweepPoint>,
    pub alpha: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    pub procedures: Vec<Procedure>,
    pub replications: usize,
    #[serde(default = "default_quantile_replicates")]
    pub quantile_replicates: usize,
    pub seed: u64,
}

fn default_quantile_replicates() -> usize {
    1000
}

fn rule(offset_scale: &[(f64, f64)]) -> Vec<MuRule> {
    offset_scale
        .iter()
        .map(|&(offset, scale)| MuRule { offset, scale })
        .collect()
}

fn parse_all(names: &[&str]) -> Vec<Procedure> {
    names.iter().map(|n| n.parse().expect("preset names parse")).collect()
}

impl ScenarioConfig {
    /// Preset by name: `scenario1`, `scenario2` or `scenario3`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "scenario1" => Ok(Self::scenario1()),
            "scenario2" => Ok(Self::scenario2()),
            "scenario3" => Ok(Self::scenario3()),
            _ => Err(Error::InvalidParameter(format!(
                "unknown preset '{name}' (scenario1, scenario2, scenario3)"
            ))),
        }
    }

    /// `mu = (mu_bar, 2 mu_bar)`, `m_1 = m_2 = 2000`, null fractions 0.7 and
    /// 0.8, alpha 0.05, beta 0.001 with 10000 null draws.
    pub fn scenario1() -> Self {
        let mut grid = vec![0.01, 0.02, 0.05];
        grid.extend((0..11).map(|i| 0.5 + 0.25 * i as f64));
        Self {
            name: "scenario1".into(),
            mu_rule: rule(&[(0.0, 1.0), (0.0, 2.0)]),
            size_fractions: vec![0.5, 0.5],
            null_fractions: vec![0.7, 0.8],
            sweep: grid.into_iter().map(|mu_bar| SweepPoint { mu_bar, m: 4000 }).collect(),
            alpha: 0.05,
            beta: Some(0.001),
            procedures: parse_all(&[
                "bh",
                "oracle-mwbh:ne",
                "ihw",
                "saddow:ne",
                "pro2:ne",
                "abh:ce",
                "hzz:ce",
                "oracle-mwbh:ce",
                "addow:ce",
                "saddow:ce",
                "pro2:ce",
            ]),
            replications: 1000,
            quantile_replicates: 10000,
            seed: 1,
        }
    }

    /// `mu = (2, mu_bar)`, `m_1 = 1000`, `m_2 = 9000`, null fractions 0.05 and
    /// 0.85, alpha 0.7.
    pub fn scenario2() -> Self {
        Self {
            name: "scenario2".into(),
            mu_rule: rule(&[(2.0, 0.0), (0.0, 1.0)]),
            size_fractions: vec![0.1, 0.9],
            null_fractions: vec![0.05, 0.85],
            sweep: (0..7)
                .map(|i| SweepPoint { mu_bar: (17 + i) as f64 / 10.0, m: 10_000 })
                .collect(),
            alpha: 0.7,
            beta: None,
            procedures: parse_all(&["bh", "ihw", "addow:ce"]),
            replications: 1000,
            quantile_replicates: 1000,
            seed: 2,
        }
    }

    /// `mu = (mu_bar, 2 mu_bar)`, equal halves, null fraction 0.8, alpha 0.05,
    /// beta 0.05 with 1000 null draws, over `m` and `mu_bar in {0.01, 3}`.
    pub fn scenario3() -> Self {
        let mut sweep = Vec::new();
        for mu_bar in [0.01, 3.0] {
            for m in [100, 300, 500, 1000, 2000, 5000] {
                sweep.push(SweepPoint { mu_bar, m });
            }
        }
        Self {
            name: "scenario3".into(),
            mu_rule: rule(&[(0.0, 1.0), (0.0, 2.0)]),
            size_fractions: vec![0.5, 0.5],
            null_fractions: vec![0.8, 0.8],
            sweep,
            alpha: 0.05,
            beta: Some(0.05),
            procedures: parse_all(&["bh", "addow:ne", "saddow:ne"]),
            replications: 1000,
            quantile_replicates: 1000,
            seed: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.mu_rule.len();
        if g == 0 || self.size_fractions.len() != g || self.null_fractions.len() != g {
            return Err(Error::ShapeMismatch(
                "mu_rule, size_fractions and null_fractions need one entry per group".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if (self.size_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("size fractions must sum to 1".into()));
        }
        if self.procedures.iter().any(|p| matches!(p, Procedure::Saddow(_))) {
            match self.beta {
                Some(b) if b > 0.0 && b < 1.0 => {}
                _ => {
                    return Err(Error::InvalidParameter(
                        "saddow needs beta in (0, 1)".into(),
                    ))
                }
            }
            if self.quantile_replicates == 0 {
                return Err(Error::InvalidParameter(
                    "saddow needs quantile_replicates >= 1".into(),
                ));
            }
        }
        for point in &self.sweep {
            self.model(point)?;
        }
        Ok(())
    }

    /// The generating model at one sweep point.
    pub fn model(&self, point: &SweepPoint) -> Result<GaussianModel> {
        let g = self.size_fractions.len();
        let mut sizes: Vec<usize> = self.size_fractions[..g - 1]
            .iter()
            .map(|f| (f * point.m as f64).round() as usize)
            .collect();
        let head: usize = sizes.iter().sum();
        if head >= point.m {
            return Err(Error::InvalidParameter(format!("m = {} too small", point.m)));
        }
        sizes.push(point.m - head);
        let nulls = sizes
            .iter()
            .zip(&self.null_fractions)
            .map(|(&s, f)| (f * s as f64).round() as usize)
            .collect();
        let mu = self
            .mu_rule
            .iter()
            .map(|r| r.offset + r.scale * point.mu_bar)
            .collect();
        GaussianModel::new(mu, sizes, nulls)
    }
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Directory for null-quantile tables, reused across runs.
    pub table_cache: Option<PathBuf>,
}

/// Aggregated metrics for one procedure at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep: String,
    pub mu_bar: f64,
    pub m: usize,
    pub procedure: String,
    /// Successful replications.
    pub replications: usize,
    #[serde(with = "nan_as_null")]
    pub fdr: f64,
    #[serde(with = "nan_as_null")]
    pub fdr_se: f64,
    /// Mean of `|R ∩ H1| / m`.
    #[serde(with = "nan_as_null")]
    pub pow: f64,
    #[serde(with = "nan_as_null")]
    pub pow_se: f64,
    /// Mean of `|R ∩ H1| / m_1`.
    #[serde(with = "nan_as_null")]
    pub pow_m1: f64,
    #[serde(with = "nan_as_null")]
    pub diffpow: f64,
    #[serde(with = "nan_as_null")]
    pub diffpow_se: f64,
    /// Fraction of replications where sADDOW ran ADDOW.
    pub branch_rate: Option<f64>,
    pub failures: usize,
    /// Replications where the procedure was undefined and BH ran instead.
    pub fallbacks: usize,
}

// Cells where every replication failed hold NaN, stored as JSON null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::InvalidParameter(format!("unknown format '{s}' (csv, json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    fdp: f64,
    pow: f64,
    diffpow: f64,
    branch: Option<bool>,
    fallback: bool,
}

struct Point {
    model: GaussianModel,
    oracle: Vec<(EstimateSpec, std::result::Result<WeightFunction, String>)>,
    table: Option<NullQuantileTable>,
}

struct Profiles {
    entries: Vec<(EstimateSpec, NullEstimates, Option<MinCostProfile>)>,
    lcm: Vec<(EstimateSpec, LcmProfile)>,
}

impl Profiles {
    fn build(data: &GroupedPValues, model: &GaussianModel, procedures: &[Procedure]) -> Result<Self> {
        let mut profiles = Self { entries: Vec::new(), lcm: Vec::new() };
        for p in procedures {
            match *p {
                Procedure::Bh | Procedure::OracleMwbh(_) => {}
                Procedure::Abh(e) | Procedure::Hzz(e) => profiles.prepare(e, false, data, model)?,
                Procedure::AddowLcm(e) => {
                    if !profiles.lcm.iter().any(|(x, _)| *x == e) {
                        let est = e.estimate(data, model)?;
                        let costs = CostVector::from_estimates(data, &est);
                        profiles.lcm.push((e, lcm_profile(data, &costs)));
                    }
                }
                Procedure::Saddow(e) => {
                    profiles.prepare(EstimateSpec::NonEstimated, true, data, model)?;
                    profiles.prepare(e, true, data, model)?;
                }
                other => profiles.prepare(other.estimate().expect("estimated"), true, data, model)?,
            }
        }
        Ok(profiles)
    }

    fn prepare(
        &mut self,
        e: EstimateSpec,
        with_profile: bool,
        data: &GroupedPValues,
        model: &GaussianModel,
    ) -> Result<()> {
        let index = match self.entries.iter().position(|(x, _, _)| *x == e) {
            Some(i) => i,
            None => {
                self.entries.push((e, e.estimate(data, model)?, None));
                self.entries.len() - 1
            }
        };
        let entry = &mut self.entries[index];
        if with_profile && entry.2.is_none() {
            entry.2 = Some(min_cost_profile(data, &CostVector::from_estimates(data, &entry.1)));
        }
        Ok(())
    }

    fn estimates(&self, e: EstimateSpec) -> &NullEstimates {
        &self.entries.iter().find(|(x, _, _)| *x == e).expect("estimates prepared").1
    }

    fn get(&self, e: EstimateSpec) -> (&NullEstimates, &MinCostProfile) {
        let (_, est, profile) = self
            .entries
            .iter()
            .find(|(x, _, _)| *x == e)
            .expect("profile prepared");
        (est, profile.as_ref().expect("profile prepared"))
    }

    fn lcm(&self, e: EstimateSpec) -> &LcmProfile {
        &self.lcm.iter().find(|(x, _)| *x == e).expect("profile prepared").1
    }
}

fn rng_for(seed: u64, sweep: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sweep as u64) << 32) | rep as u64);
    rng
}

fn run_one(
    procedure: Procedure,
    data: &GroupedPValues,
    point: &Point,
    profiles: &Profiles,
    bh_rejections: &RejectionSet,
    alpha: f64,
    beta: Option<f64>,
) -> Result<(RejectionSet, Option<bool>, bool)> {
    Ok(match procedure {
        Procedure::Bh => (bh_rejections.clone(), None, false),
        Procedure::Ihw | Procedure::Addow(_) => {
            let (_, profile) = profiles.get(procedure.estimate().unwrap());
            (addow_with_profile(data, profile, alpha).rejections, None, false)
        }
        Procedure::AddowLcm(e) => {
            (addow_lcm_with_profile(data, profiles.lcm(e), alpha).rejections, None, false)
        }
        Procedure::Abh(e) => (abh(data, profiles.estimates(e), alpha).rejections, None, false),
        Procedure::Hzz(e) => match hzz(data, profiles.estimates(e), alpha) {
            Ok(out) => (out.rejections, None, false),
            Err(Error::WeightsUndefined(_)) => (bh_rejections.clone(), None, true),
            Err(err) => return Err(err),
        },
        Procedure::Pro1(e) | Procedure::Pro2(e) => {
            let (est, profile) = profiles.get(e);
            let two = pro1_pro2_with_profile(data, est, profile, alpha);
            let out = if matches!(procedure, Procedure::Pro1(_)) { two.pro1 } else { two.pro2 };
            (out.rejections, None, false)
        }
        Procedure::Saddow(e) => {
            let (_, ne) = profiles.get(EstimateSpec::NonEstimated);
            let (_, estimated) = profiles.get(e);
            let table = point.table.as_ref().expect("table prepared");
            let beta = beta.expect("validated");
            let s = saddow_with_profiles(data, ne, estimated, alpha, beta, table)?;
            (s.outcome.rejections, Some(s.phi), false)
        }
        Procedure::OracleMwbh(e) => {
            let wf = point
                .oracle
                .iter()
                .find(|(x, _)| *x == e)
                .expect("oracle prepared");
            match &wf.1 {
                Ok(wf) => (mwbh(data, wf, alpha)?.rejections, None, false),
                Err(msg) => return Err(Error::InvalidData(msg.clone())),
            }
        }
    })
}

fn replicate(
    config: &ScenarioConfig,
    point: &Point,
    sweep_index: usize,
    rep: usize,
) -> Vec<std::result::Result<Sample, String>> {
    let mut rng = rng_for(config.seed, sweep_index, rep);
    let data = point.model.generate(&mut rng);
    let m = data.m();
    let m1 = data.alternative_count().expect("generated data is labeled");
    let bh_out = bh(&data, config.alpha);
    let bh_metrics = MetricSample::evaluate(&bh_out.rejections, &data).expect("labeled");
    let profiles = match Profiles::build(&data, &point.model, &config.procedures) {
        Ok(p) => p,
        Err(e) => return vec![Err(e.to_string()); config.procedures.len()],
    };
    config
        .procedures
        .iter()
        .map(|&p| {
            let (rejections, branch, fallback) =
                run_one(p, &data, point, &profiles, &bh_out.rejections, config.alpha, config.beta)
                    .map_err(|e| e.to_string())?;
            let metrics = MetricSample::evaluate(&rejections, &data).map_err(|e| e.to_string())?;
            let diffpow = if p == Procedure::Bh {
                0.0
            } else {
                diff_pow(metrics.power, bh_metrics.power, m, m1).map_err(|e| e.to_string())?
            };
            Ok(Sample {
                fdp: metrics.fdp,
                pow: metrics.power,
                diffpow,
                branch,
                fallback,
            })
        })
        .collect()
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn table_path(dir: &Path, sizes: &[usize], alpha: f64, b: usize, seed: u64) -> PathBuf {
    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    dir.join(format!(
        "z0_sizes{}_alpha{}_B{}_seed{}.json",
        sizes.join("-"),
        alpha,
        b,
        seed
    ))
}

/// Builds the null table, or reads it from `cache` when a matching file exists.
pub fn cached_null_table(
    sizes: &[usize],
    alpha: f64,
    replicates: usize,
    seed: u64,
    cache: Option<&Path>,
) -> Result<NullQuantileTable> {
    let path = cache.map(|dir| table_path(dir, sizes, alpha, replicates, seed));
    if let Some(path) = &path {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(table) = serde_json::from_str::<NullQuantileTable>(&text) {
                if table.group_sizes == sizes
                    && table.alpha == alpha
                    && table.replicates == replicates
                    && table.seed == seed
                    && table.samples.len() == replicates
                {
                    return Ok(table);
                }
            }
        }
    }
    let table = null_quantile_table(sizes, alpha, replicates, seed)?;
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(&table)?)?;
    }
    Ok(table)
}

fn table_seed(seed: u64) -> u64 {
    seed ^ 0x6e75_6c6c_7461_626c
}

fn prepare_point(config: &ScenarioConfig, point: &SweepPoint, options: &RunOptions) -> Result<Point> {
    let model = config.model(point)?;
    let mut oracle = Vec::new();
    for p in &config.procedures {
        if let Procedure::OracleMwbh(e) = *p {
            if oracle.iter().any(|(x, _)| *x == e) {
                continue;
            }
            let costs = match e {
                EstimateSpec::Consistent => model.consistent_costs(),
                _ => model.non_estimated_costs(),
            };
            let wf = oracle_weight_function(&model, &costs, config.alpha).map_err(|e| e.to_string());
            oracle.push((e, wf));
        }
    }
    let table = if config.procedures.iter().any(|p| matches!(p, Procedure::Saddow(_))) {
        Some(cached_null_table(
            &model.group_sizes,
            config.alpha,
            config.quantile_replicates,
            table_seed(config.seed),
            options.table_cache.as_deref(),
        )?)
    } else {
        None
    };
    Ok(Point { model, oracle, table })
}

fn run_point(config: &ScenarioConfig, point: &Point, sweep_index: usize) -> Vec<Vec<std::result::Result<Sample, String>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..config.replications)
            .into_par_iter()
            .map(|rep| replicate(config, point, sweep_index, rep))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..config.replications)
            .map(|rep| replicate(config, point, sweep_index, rep))
            .collect()
    }
}

/// Runs every procedure on the same simulated datasets and aggregates.
pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<ScenarioReport> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    if let Some(threads) = options.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        return pool.install(|| run_scenario_inner(config, options));
    }
    run_scenario_inner(config, options)
}

fn run_scenario_inner(config: &ScenarioConfig, options: &RunOptions) -> Result<ScenarioReport> {
    let mut rows = Vec::new();
    for (index, sweep) in config.sweep.iter().enumerate() {
        let point = prepare_point(config, sweep, options)?;
        let m = point.model.m() as f64;
        let m1 = point.model.alternative_counts().iter().sum::<usize>() as f64;
        let samples = run_point(config, &point, index);
        for (j, procedure) in config.procedures.iter().enumerate() {
            let ok: Vec<Sample> = samples.iter().filter_map(|rep| rep[j].as_ref().ok().copied()).collect();
            let failures = config.replications - ok.len();
            let (fdr, fdr_se) = mean_se(ok.iter().map(|s| s.fdp));
            let (pow, pow_se) = mean_se(ok.iter().map(|s| s.pow));
            let (diffpow, diffpow_se) = mean_se(ok.iter().map(|s| s.diffpow));
            let branch_rate = matches!(procedure, Procedure::Saddow(_)).then(|| {
                ok.iter().filter(|s| s.branch == Some(true)).count() as f64 / ok.len().max(1) as f64
            });
            rows.push(ReportRow {
                sweep: sweep.label(),
                mu_bar: sweep.mu_bar,
                m: sweep.m,
                procedure: procedure.to_string(),
                replications: ok.len(),
                fdr,
                fdr_se,
                pow,
                pow_se,
                pow_m1: pow * m / m1,
                diffpow,
                diffpow_se,
                branch_rate,
                failures,
                fallbacks: ok.iter().filter(|s| s.fallback).count(),
            });
        }
    }
    Ok(ScenarioReport {
        scenario: config.name.clone(),
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        rows,
    })
}

/// `x` with 6 significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return "NaN".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exponent) {
        let decimals = (5 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub const CSV_HEADER: &str = "sweep,procedure,fdr,fdr_se,pow,pow_se,diffpow,branch_rate";

pub fn write_report<W: Write>(report: &ScenarioReport, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.sweep,
                    r.procedure,
                    format_sig(r.fdr),
                    format_sig(r.fdr_se),
                    format_sig(r.pow),
                    format_sig(r.pow_se),
                    format_sig(r.diffpow),
                    r.branch_rate.map(format_sig).unwrap_or_default()
                )?;
            }
        }
    }
    Ok(())
}

/// Writes the report to `path`.
pub fn emit_report(report: &ScenarioReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_report(report, format, &mut out)?;
    out.flush()?;
    Ok(())
}
