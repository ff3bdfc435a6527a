//! Experiment reports and their aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use oracle_lab::classifier::ConfusionMatrix;
use oracle_lab::planner::AllocationComparison;
use oracle_lab::similarity::EmdMatrix;
use oracle_lab::{Error, Result};
use serde::{Deserialize, Serialize};

/// Accuracy of a model on one capture session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session: u32,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sessions: Vec<SessionMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emd_matrix: Option<EmdMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber_comparison: Option<AllocationComparison>,
}

/// Outcome of one `eval` or `plan` run.
///
/// Wall-clock timings are kept out of the serialized report (they go to a
/// sidecar file) so that equal configs produce byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub device_count: usize,
    pub metrics: Metrics,
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7): `h = (n - 1) p`, interpolating `x[floor h]` and
/// `x[floor h + 1]`. `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "box statistics need finite values".into(),
            ));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(BoxStats {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Aggregated tables over a set of reports.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Accuracy box per device count, over every evaluated session.
    pub accuracy: BTreeMap<usize, BoxStats>,
    /// Greedy-vs-random rows keyed by radio count, in report order.
    pub ber: Vec<AllocationComparison>,
    /// Distinct config hashes seen, when more than one.
    pub mixed_hashes: Vec<String>,
}

pub fn summarize(reports: &[ExperimentReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::InvalidInput(
            "report needs at least one input".into(),
        ));
    }
    let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut ber = Vec::new();
    for r in reports {
        for s in &r.metrics.sessions {
            acc.entry(r.device_count).or_default().push(s.accuracy);
        }
        if let Some(c) = &r.metrics.ber_comparison {
            ber.push(c.clone());
        }
    }
    ber.sort_by_key(|c| c.radios);
    let mut hashes: Vec<String> = reports.iter().map(|r| r.config_hash.clone()).collect();
    hashes.sort();
    hashes.dedup();
    Ok(Summary {
        accuracy: acc
            .into_iter()
            .map(|(k, v)| Ok((k, BoxStats::from_values(&v)?)))
            .collect::<Result<_>>()?,
        ber,
        mixed_hashes: if hashes.len() > 1 { hashes } else { Vec::new() },
    })
}

pub fn write_accuracy_csv<W: Write>(s: &Summary, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["devices", "n", "min", "q1", "median", "q3", "max"])?;
    for (k, b) in &s.accuracy {
        wr.write_record([
            k.to_string(),
            b.n.to_string(),
            b.min.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.max.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_ber_csv<W: Write>(s: &Summary, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "radios",
        "greedy_mean_total_ber",
        "random_mean_total_ber",
        "greedy_violations",
        "greedy_unclassifiable_mean",
    ])?;
    for c in &s.ber {
        wr.write_record([
            c.radios.to_string(),
            format!("{:e}", c.greedy_mean_total_ber),
            format!("{:e}", c.random_mean_total_ber),
            c.greedy_violations.to_string(),
            c.greedy_unclassifiable_mean.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
