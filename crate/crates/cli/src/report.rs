//! Report rows and serialization. The CSV column order is part of the
//! interface: identifying columns first, metric columns in a fixed order,
//! the run timestamp last so byte comparisons can strip it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// One experiment cell. Metric columns are optional because each experiment
/// fills only the ones it measures; empty CSV cells mean "not computed".
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Row {
    pub row: usize,
    pub experiment: String,
    pub label: String,
    pub order: usize,
    pub partition: String,
    pub atoms: usize,
    pub dim: usize,
    pub measure: String,
    pub weights: String,
    pub seed: u64,
    pub config_hash: String,
    pub mesh_leb: f64,
    pub mesh_mu: f64,
    pub g_norm: Option<f64>,
    pub g_inv_norm: Option<f64>,
    pub gp_norm: Option<f64>,
    pub gp_inv_norm: Option<f64>,
    pub demko_c: Option<f64>,
    pub demko_q: Option<f64>,
    pub demko_q_tail: Option<f64>,
    pub demko_violation: Option<f64>,
    pub x_norm: Option<f64>,
    pub contraction: Option<bool>,
    pub op_norm: Option<f64>,
    pub theta_proxy: Option<f64>,
    pub band_c: Option<usize>,
    pub norm_c: Option<f64>,
    pub sup_diff: Option<f64>,
    pub bound_ratio: Option<f64>,
    pub residual: Option<f64>,
    pub warnings: usize,
    /// Unix seconds, stamped once per run; excluded from replay comparison.
    pub timestamp: u64,
}

impl Row {
    /// Blank row carrying only the identifying columns.
    pub fn skeleton(
        experiment: &str,
        label: &str,
        order: usize,
        partition: String,
        measure: String,
        weights: String,
        seed: u64,
        config_hash: String,
    ) -> Self {
        Row {
            row: 0,
            experiment: experiment.to_string(),
            label: label.to_string(),
            order,
            partition,
            atoms: 0,
            dim: 0,
            measure,
            weights,
            seed,
            config_hash,
            mesh_leb: 0.0,
            mesh_mu: 0.0,
            g_norm: None,
            g_inv_norm: None,
            gp_norm: None,
            gp_inv_norm: None,
            demko_c: None,
            demko_q: None,
            demko_q_tail: None,
            demko_violation: None,
            x_norm: None,
            contraction: None,
            op_norm: None,
            theta_proxy: None,
            band_c: None,
            norm_c: None,
            sup_diff: None,
            bound_ratio: None,
            residual: None,
            warnings: 0,
            timestamp: 0,
        }
    }
}

/// Row plus the structured extras that do not fit a flat CSV cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JsonRow {
    #[serde(flatten)]
    pub row: Row,
    /// Per-experiment detail (per-index comparisons, warning texts).
    pub detail: serde_json::Value,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rows: Vec<JsonRow>,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path:?}: {e}")))
    }

    pub fn save_json(&self, path: &Path) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
        for jr in &self.rows {
            w.serialize(&jr.row)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Append rows from several reports to one CSV file with row numbers
/// continuing across reports, used by sweeps.
pub fn write_combined_csv(path: &Path, reports: &[Report]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(e.to_string()))?;
    let mut next = 0usize;
    for report in reports {
        for jr in &report.rows {
            let mut row = jr.row.clone();
            row.row = next;
            next += 1;
            w.serialize(&row)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Compare two rows field by field through their JSON maps, ignoring the
/// timestamp. Returns the names of differing fields.
pub fn row_diff(a: &Row, b: &Row) -> Vec<String> {
    let to_map = |r: &Row| -> serde_json::Map<String, serde_json::Value> {
        match serde_json::to_value(r) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => serde_json::Map::new(),
        }
    };
    let mut ma = to_map(a);
    let mut mb = to_map(b);
    ma.remove("timestamp");
    mb.remove("timestamp");
    let mut diff: Vec<String> = ma
        .iter()
        .filter(|(k, v)| mb.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    for k in mb.keys() {
        if !ma.contains_key(k) && !diff.contains(k) {
            diff.push(k.clone());
        }
    }
    diff.sort();
    diff
}
