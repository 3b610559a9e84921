//! Grouped p-value data, ground truth and the per-replication metrics.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground truth of a single hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    fn from_flag(flag: &str) -> Option<Self> {
        match flag {
            "0" => Some(Hypothesis::Null),
            "1" => Some(Hypothesis::Alternative),
            _ => None,
        }
    }

    fn flag(self) -> u8 {
        match self {
            Hypothesis::Null => 0,
            Hypothesis::Alternative => 1,
        }
    }
}

/// One group of p-values, optionally with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub pvalues: Vec<f64>,
    pub labels: Option<Vec<Hypothesis>>,
}

/// The observable dataset: `G >= 1` non-empty groups of p-values in `[0, 1]`.
///
/// Each group also keeps an ascending copy of its p-values, which every
/// step-up routine works from.
#[derive(Debug, Clone)]
pub struct GroupedPValues {
    groups: Vec<Group>,
    sorted: Vec<Vec<f64>>,
    m: usize,
}

impl PartialEq for GroupedPValues {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

impl GroupedPValues {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Empty);
        }
        let labeled = groups[0].labels.is_some();
        for (g, group) in groups.iter().enumerate() {
            if group.pvalues.is_empty() {
                return Err(Error::InvalidData(format!("group {g} is empty")));
            }
            if let Some(&p) = group.pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidData(format!(
                    "group {g}: p-value {p} outside [0, 1]"
                )));
            }
            match &group.labels {
                Some(labels) if labels.len() != group.pvalues.len() => {
                    return Err(Error::InvalidData(format!(
                        "group {g}: {} labels for {} p-values",
                        labels.len(),
                        group.pvalues.len()
                    )));
                }
                Some(_) if !labeled => {
                    return Err(Error::InvalidData("labels must cover all groups or none".into()))
                }
                None if labeled => {
                    return Err(Error::InvalidData("labels must cover all groups or none".into()))
                }
                _ => {}
            }
        }
        let sorted = groups
            .iter()
            .map(|group| {
                let mut p = group.pvalues.clone();
                p.sort_by(f64::total_cmp);
                p
            })
            .collect();
        let m = groups.iter().map(|g| g.pvalues.len()).sum();
        Ok(Self { groups, sorted, m })
    }

    /// Unlabeled groups named `1..=G`.
    pub fn from_pvalues(pvalues: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            pvalues
                .into_iter()
                .enumerate()
                .map(|(g, pvalues)| Group {
                    name: (g + 1).to_string(),
                    pvalues,
                    labels: None,
                })
                .collect(),
        )
    }

    /// Labeled groups named `1..=G`.
    pub fn from_labeled(pvalues: Vec<Vec<f64>>, labels: Vec<Vec<Hypothesis>>) -> Result<Self> {
        if pvalues.len() != labels.len() {
            return Err(Error::InvalidData("one label array per group required".into()));
        }
        Self::new(
            pvalues
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(g, (pvalues, labels))| Group {
                    name: (g + 1).to_string(),
                    pvalues,
                    labels: Some(labels),
                })
                .collect(),
        )
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &Group {
        &self.groups[g]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.pvalues.len()).collect()
    }

    /// Ascending p-values of group `g`.
    pub fn sorted(&self, g: usize) -> &[f64] {
        &self.sorted[g]
    }

    pub fn is_labeled(&self) -> bool {
        self.groups[0].labels.is_some()
    }

    /// Number of true alternatives, if labels are present.
    pub fn alternative_count(&self) -> Option<usize> {
        self.groups
            .iter()
            .map(|g| {
                g.labels
                    .as_ref()
                    .map(|l| l.iter().filter(|h| **h == Hypothesis::Alternative).count())
            })
            .sum()
    }

    /// Number of p-values of group `g` not exceeding `threshold`.
    ///
    /// A non-positive threshold rejects nothing: a zero weight or a zero
    /// threshold level maps every p-value to `+inf`.
    pub fn count_at_most(&self, g: usize, threshold: f64) -> usize {
        if threshold <= 0.0 {
            return 0;
        }
        self.sorted[g].partition_point(|&p| p <= threshold)
    }

    /// Writes the dataset back out as `group,pvalue[,label]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        if self.is_labeled() {
            writer.write_record(["group", "pvalue", "label"])?;
        } else {
            writer.write_record(["group", "pvalue"])?;
        }
        for group in &self.groups {
            for (i, p) in group.pvalues.iter().enumerate() {
                let p = p.to_string();
                match &group.labels {
                    Some(labels) => writer.write_record([
                        group.name.as_str(),
                        p.as_str(),
                        &labels[i].flag().to_string(),
                    ])?,
                    None => writer.write_record([group.name.as_str(), p.as_str()])?,
                }
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Parses a `group,pvalue[,label]` CSV stream. Group keys are mapped to
/// indices in order of first appearance.
pub fn load_dataset<R: Read>(source: R) -> Result<GroupedPValues> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        Some(record) => record?,
        None => return Err(Error::Empty),
    };
    let columns: Vec<&str> = header.iter().collect();
    let header_labeled = match columns.as_slice() {
        ["group", "pvalue"] => false,
        ["group", "pvalue", "label"] => true,
        _ => return Err(Error::MalformedHeader(columns.join(","))),
    };

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut labeled: Option<bool> = None;
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        let (key, raw, label) = match fields.as_slice() {
            [key, raw] => (*key, *raw, None),
            [key, raw, ""] => (*key, *raw, None),
            [key, raw, label] => (*key, *raw, Some(*label)),
            _ => return Err(Error::MalformedRow { line }),
        };
        let p: f64 = raw.parse().map_err(|_| Error::MalformedNumber {
            line,
            value: raw.to_string(),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PValueOutOfRange { line, value: p });
        }
        let this_labeled = label.is_some();
        if this_labeled != *labeled.get_or_insert(this_labeled) || this_labeled != header_labeled {
            return Err(Error::MixedLabels { line });
        }
        let g = *index.entry(key.to_string()).or_insert_with(|| {
            groups.push(Group {
                name: key.to_string(),
                pvalues: Vec::new(),
                labels: this_labeled.then(Vec::new),
            });
            groups.len() - 1
        });
        groups[g].pvalues.push(p);
        if let Some(flag) = label {
            let h = Hypothesis::from_flag(flag).ok_or_else(|| Error::InvalidLabel {
                line,
                value: flag.to_string(),
            })?;
            groups[g].labels.as_mut().expect("labeled group").push(h);
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty);
    }
    GroupedPValues::new(groups)
}

/// A set of rejected `(group, index)` pairs, kept sorted and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionSet {
    indices: Vec<(usize, usize)>,
}

impl RejectionSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates every pair against `data`.
    pub fn from_pairs<I>(data: &GroupedPValues, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut indices: Vec<(usize, usize)> = pairs.into_iter().collect();
        for &(g, i) in &indices {
            if g >= data.num_groups() || i >= data.group(g).pvalues.len() {
                return Err(Error::InvalidData(format!("index ({g}, {i}) out of range")));
            }
        }
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(Error::InvalidData("duplicate rejection index".into()));
        }
        Ok(Self { indices })
    }

    /// Rejects `p_{g,i} <= thresholds[g]`; non-positive thresholds reject nothing.
    pub fn from_thresholds(data: &GroupedPValues, thresholds: &[f64]) -> Self {
        let mut indices = Vec::new();
        for (g, group) in data.groups().iter().enumerate() {
            let t = thresholds[g];
            if t <= 0.0 {
                continue;
            }
            indices.extend(
                group
                    .pvalues
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p <= t)
                    .map(|(i, _)| (g, i)),
            );
        }
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, g: usize, i: usize) -> bool {
        self.indices.binary_search(&(g, i)).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().copied()
    }

    /// Number of rejections per group.
    pub fn counts_per_group(&self, num_groups: usize) -> Vec<usize> {
        let mut counts = vec![0; num_groups];
        for &(g, _) in &self.indices {
            counts[g] += 1;
        }
        counts
    }

    /// `(|R ∩ H0|, |R ∩ H1|)`.
    pub fn split_by_truth(&self, data: &GroupedPValues) -> Result<(usize, usize)> {
        if !data.is_labeled() {
            return Err(Error::MissingLabels);
        }
        let mut nulls = 0;
        for &(g, i) in &self.indices {
            let labels = data.group(g).labels.as_ref().ok_or(Error::MissingLabels)?;
            if labels[i] == Hypothesis::Null {
                nulls += 1;
            }
        }
        Ok((nulls, self.indices.len() - nulls))
    }
}

/// One replication's realized FDP and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub fdp: f64,
    /// True discoveries over `m`.
    pub power: f64,
    pub rejections: usize,
}

impl MetricSample {
    pub fn evaluate(rejections: &RejectionSet, data: &GroupedPValues) -> Result<Self> {
        let (nulls, alternatives) = rejections.split_by_truth(data)?;
        let total = nulls + alternatives;
        Ok(Self {
            fdp: nulls as f64 / total.max(1) as f64,
            power: alternatives as f64 / data.m() as f64,
            rejections: total,
        })
    }
}

/// False discovery proportion `|R ∩ H0| / max(|R|, 1)`.
pub fn fdp(rejections: &RejectionSet, data: &GroupedPValues) -> Result<f64> {
    Ok(MetricSample::evaluate(rejections, data)?.fdp)
}

/// True discoveries divided by `m` (not by the number of alternatives).
pub fn power_sample(rejections: &RejectionSet, data: &GroupedPValues) -> Result<f64> {
    Ok(MetricSample::evaluate(rejections, data)?.power)
}

/// Power difference to BH rescaled by `m / m1`.
pub fn diff_pow(pow_r: f64, pow_bh: f64, m: usize, m1: usize) -> Result<f64> {
    if m1 == 0 {
        return Err(Error::InvalidParameter("DiffPow needs m1 > 0".into()));
    }
    Ok(m as f64 / m1 as f64 * (pow_r - pow_bh))
}
