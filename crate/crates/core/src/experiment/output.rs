use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ExperimentResults};
use crate::error::{Error, Result};
use crate::evaluation::DiversityDistribution;
use crate::io::write_json;

pub const METRICS_FILE: &str = "metrics.csv";
pub const LEARNING_CURVES_FILE: &str = "learning_curves.csv";
pub const DIVERSITY_FILE: &str = "diversity.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub replication: String,
    pub policy: String,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Replication index, or `mean` for the average over replications.
    pub replication: String,
    pub policy: String,
    pub round: u32,
    pub cumulative_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub replication: String,
    pub policy: String,
    pub weight_loss: f64,
    pub diet: f64,
    pub exercise: f64,
    /// Divergence from the logged selections; empty on the reference row.
    pub jsd: Option<f64>,
}

impl DiversityRow {
    pub fn new(replication: usize, policy: &str, dist: DiversityDistribution, jsd: Option<f64>) -> Self {
        let [weight_loss, diet, exercise] = dist.0;
        Self {
            replication: replication.to_string(),
            policy: policy.to_string(),
            weight_loss,
            diet,
            exercise,
            jsd,
        }
    }
}

/// One (policy, metric) aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub metric: String,
    pub value: f64,
    /// Standard deviation over replications divided by `√n`.
    pub std_error: f64,
    pub n_replications: usize,
    pub seed_list: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub replications: usize,
    pub policies: Vec<String>,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

pub(crate) fn mean_curves(curves: &[CurveRow]) -> Vec<CurveRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut acc: BTreeMap<(&str, u32), (f64, usize)> = BTreeMap::new();
    for c in curves {
        if !order.contains(&c.policy.as_str()) {
            order.push(&c.policy);
        }
        let e = acc.entry((&c.policy, c.round)).or_insert((0.0, 0));
        e.0 += c.cumulative_mean;
        e.1 += 1;
    }
    order
        .iter()
        .flat_map(|p| {
            acc.range((*p, 0)..=(*p, u32::MAX)).map(|(&(policy, round), &(s, n))| CurveRow {
                replication: "mean".into(),
                policy: policy.to_string(),
                round,
                cumulative_mean: s / n as f64,
            })
        })
        .collect()
}

/// SHA-256 of the config's canonical JSON serialization.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Aggregates metric rows per (policy, metric) in first-appearance order.
pub fn summarize(rows: &[MetricRow], seed: u64) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    let mut values: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.policy.clone(), r.metric.clone());
        if !values.contains_key(&key) {
            keys.push(key.clone());
        }
        values.entry(key).or_default().push(r.value);
    }
    keys.into_iter()
        .map(|key| {
            let v = &values[&key];
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std_error = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                policy: key.0,
                metric: key.1,
                value: mean,
                std_error,
                n_replications: n,
                seed_list: vec![seed],
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(header)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes metrics, learning curves, diversity, summary and manifest into
/// `dir`.
pub fn write_results(dir: &Path, cfg: &ExperimentConfig, results: &ExperimentResults) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join(METRICS_FILE),
        &results.metrics,
        &["replication", "policy", "metric", "value", "std_error"],
    )?;
    write_csv(
        &dir.join(LEARNING_CURVES_FILE),
        &results.curves,
        &["replication", "policy", "round", "cumulative_mean"],
    )?;
    write_csv(
        &dir.join(DIVERSITY_FILE),
        &results.diversity,
        &["replication", "policy", "weight_loss", "diet", "exercise", "jsd"],
    )?;
    let seed = cfg.environment.seed;
    write_json(&dir.join(SUMMARY_FILE), &summarize(&results.metrics, seed))?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg),
        seed,
        replications: cfg.replications,
        policies: cfg.policies.iter().map(|p| p.name.clone()).collect(),
        files: [METRICS_FILE, LEARNING_CURVES_FILE, DIVERSITY_FILE, SUMMARY_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        config: cfg.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}
