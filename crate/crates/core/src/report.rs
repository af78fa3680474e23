//! Machine-readable experiment reports: a CSV with one row per record and a
//! JSON sidecar carrying the spec echo and the environment stamp.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measured cell: a (variant, seed, sweep-value) triple with one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub variant: String,
    pub seed: u64,
    /// Name of the sweep axis (for example `rerank_k` or `parameters`).
    pub parameter: String,
    /// Value on the sweep axis.
    pub value: f64,
    pub metric: String,
    pub metric_value: f64,
    pub runtime_ms: f64,
}

/// Build/runtime facts stamped into every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub artifact_version: String,
    pub float_width_bits: u32,
    /// Tolerances the numeric invariants are held to.
    pub collinearity_abs_tol: f64,
    pub permutation_invariance_rel_tol: f64,
    pub softmax_sum_tol: f64,
    pub gradient_check_rel_tol: f64,
}

impl Default for EnvironmentStamp {
    fn default() -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            float_width_bits: 64,
            collinearity_abs_tol: 1e-12,
            permutation_invariance_rel_tol: 1e-9,
            softmax_sum_tol: 1e-12,
            gradient_check_rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport<S: Serialize> {
    pub spec: S,
    pub environment: EnvironmentStamp,
    pub notes: Vec<String>,
    pub records: Vec<Record>,
}

impl<S: Serialize> ExperimentReport<S> {
    pub fn new(spec: S, records: Vec<Record>, notes: Vec<String>) -> Self {
        Self {
            spec,
            environment: EnvironmentStamp::default(),
            notes,
            records,
        }
    }

    /// Records for one metric name, in record order.
    pub fn metric_values(&self, variant: &str, metric: &str) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.variant == variant && r.metric == metric)
            .collect()
    }

    /// Writes `<stem>.csv` (records) and `<stem>.json` (spec echo +
    /// environment stamp + notes). Returns the two paths.
    pub fn write(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");

        let mut writer =
            csv::Writer::from_path(&csv_path).map_err(|e| Error::Serialize(e.to_string()))?;
        writer
            .write_record([
                "variant",
                "seed",
                "parameter",
                "value",
                "metric",
                "metric_value",
                "runtime_ms",
            ])
            .map_err(|e| Error::Serialize(e.to_string()))?;
        for r in &self.records {
            writer
                .write_record([
                    r.variant.clone(),
                    r.seed.to_string(),
                    r.parameter.clone(),
                    format_float(r.value),
                    r.metric.clone(),
                    format_float(r.metric_value),
                    format!("{:.3}", r.runtime_ms),
                ])
                .map_err(|e| Error::Serialize(e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(&csv_path, e))?;

        let sidecar = serde_json::json!({
            "spec": self.spec,
            "environment": self.environment,
            "notes": self.notes,
        });
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Serialize(e.to_string()))?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

/// Shortest exact decimal for a f64, so reruns produce identical bytes for
/// identical values.
fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float formatting is shortest-round-trip; reuse it.
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

/// Mean and population standard deviation of a sample.
pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
