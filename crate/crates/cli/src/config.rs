//! Experiment configuration: a JSON document naming an experiment kind, a
//! basis order, partition and measure recipes, and sampling knobs. Every
//! randomized ingredient carries its seed inside the config, so a config
//! hash pins the entire run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use splinelab::families::FunctionSpec;
use splinelab::partition::{MeasureSpec, PartitionSpec};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Gram matrix and inverse norms per partition.
    GramBound,
    /// Gram inverse plus fitted geometric decay envelope.
    Demko,
    /// Chebyshevian basis against the classical one.
    ChebCompare,
    /// Projector operator norm.
    ProjNorm,
    /// Perturbation conditions of the weighted family.
    PerturbCheck,
    /// Full two-stage pipeline: classical Gram, perturbed Gram, contraction,
    /// decay, conditions and operator norm in one row.
    TheoremPipeline,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GramBound => "gram_bound",
            Experiment::Demko => "demko",
            Experiment::ChebCompare => "cheb_compare",
            Experiment::ProjNorm => "proj_norm",
            Experiment::PerturbCheck => "perturb_check",
            Experiment::TheoremPipeline => "theorem_pipeline",
        }
    }
}

fn default_measure() -> MeasureSpec {
    MeasureSpec::Lebesgue
}

fn default_samples() -> usize {
    4
}

fn default_grid() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Spline order k (1 = piecewise constants).
    pub order: usize,
    /// One experiment cell per partition recipe.
    pub partitions: Vec<PartitionSpec>,
    #[serde(default = "default_measure")]
    pub measure: MeasureSpec,
    /// Weight functions for Chebyshevian bases; must have length `order`
    /// when the experiment uses them.
    #[serde(default)]
    pub weights: Vec<FunctionSpec>,
    /// Chebyshev sample points per atom in operator norm estimation.
    #[serde(default = "default_samples")]
    pub samples_per_atom: usize,
    /// Sup-norm sampling density for basis comparisons.
    #[serde(default = "default_grid")]
    pub grid_per_atom: usize,
    /// Base seed for randomized test functions.
    pub seed: u64,
    #[serde(default)]
    pub label: String,
    /// Output directory; the --out flag wins over this, which wins over
    /// $SPLINELAB_OUT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.order == 0 || self.order > 8 {
            return Err(CliError::Config(format!(
                "order {} outside 1..=8",
                self.order
            )));
        }
        if self.partitions.is_empty() {
            return Err(CliError::Config("no partitions listed".to_string()));
        }
        if self.samples_per_atom < 4 {
            return Err(CliError::Config(
                "samples_per_atom must be at least 4".to_string(),
            ));
        }
        if self.grid_per_atom == 0 {
            return Err(CliError::Config("grid_per_atom must be positive".to_string()));
        }
        if self.experiment == Experiment::ChebCompare && self.weights.len() != self.order {
            return Err(CliError::Config(format!(
                "cheb_compare needs exactly {} weight functions, got {}",
                self.order,
                self.weights.len()
            )));
        }
        // materialize the recipes once so bad parameters fail before the run
        for p in &self.partitions {
            p.build().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.measure
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Hash of the canonical serialization; identifies the run for replay.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex::encode(hasher.finalize())
    }

    pub fn weights_label(&self) -> String {
        self.weights
            .iter()
            .map(|w| w.label())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Compact one-line descriptor for report rows.
pub fn partition_label(spec: &PartitionSpec) -> String {
    match spec {
        PartitionSpec::Uniform { n } => format!("uniform(n={n})"),
        PartitionSpec::Random { n, seed, grading } => {
            format!("random(n={n},seed={seed},grading={grading})")
        }
        PartitionSpec::Explicit { breakpoints } => {
            format!("explicit({} atoms)", breakpoints.len().saturating_sub(1))
        }
    }
}
