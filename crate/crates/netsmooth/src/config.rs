//! Experiment configuration files.

use std::fmt;
use std::path::Path;

use netsmooth_core::contagion::ContagionKind;
use netsmooth_core::corrupt::CorruptionSpec;
use netsmooth_core::netgen::{BlockMatrixSpec, DegreeCorrection, Sparsity, SubgammaSpec};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Node counts of the desk-scale grid.
pub const DESK_GRID: [usize; 5] = [100, 163, 264, 430, 698];
/// Node counts of the full grid.
pub const FULL_GRID: [usize; 8] = [100, 163, 264, 430, 698, 1135, 1845, 3000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Observed `G` with the embedding of the observed network.
    PeerTsls,
    /// Smoothed `G^` with the recovered embedding.
    LatentTsls,
    /// True `X` and observed `G`.
    OraclePeer,
    /// True `X` and expected `G~`.
    OracleLatent,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::PeerTsls => "peer_tsls",
            EstimatorKind::LatentTsls => "latent_tsls",
            EstimatorKind::OraclePeer => "oracle_peer",
            EstimatorKind::OracleLatent => "oracle_latent",
        }
    }

    /// Whether the estimator reads the (possibly corrupted) network.
    /// Others run once per replication, under the baseline label.
    pub fn uses_corrupted_network(self) -> bool {
        matches!(self, EstimatorKind::LatentTsls)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// True coefficients and noise level of the outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Coefficients {
    pub intercept: f64,
    pub covariates: Vec<f64>,
    pub latents: Vec<f64>,
    pub contagion: f64,
    pub error_sd: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            intercept: 0.0,
            covariates: vec![5.0; 3],
            latents: vec![2.0; 5],
            contagion: 0.2,
            error_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Strictly increasing node counts. Ignored when `full_grid` is set.
    pub n_grid: Vec<usize>,
    pub full_grid: bool,
    pub reps: usize,
    pub dgp: ContagionKind,
    pub sparsity: Sparsity,
    /// Number of blocks, which is also the latent and embedding dimension.
    pub num_blocks: usize,
    pub block_matrix: BlockMatrixSpec,
    pub degree_correction: DegreeCorrection,
    pub edge_noise: SubgammaSpec,
    pub corruptions: Vec<CorruptionSpec>,
    pub estimators: Vec<EstimatorKind>,
    pub coefficients: Coefficients,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_grid: DESK_GRID.to_vec(),
            full_grid: false,
            reps: 50,
            dgp: ContagionKind::Latent,
            sparsity: Sparsity::DegreeExponent(0.75),
            num_blocks: 5,
            block_matrix: BlockMatrixSpec::default(),
            degree_correction: DegreeCorrection::default(),
            edge_noise: SubgammaSpec::Poisson,
            corruptions: vec![CorruptionSpec::Baseline],
            estimators: vec![EstimatorKind::LatentTsls],
            coefficients: Coefficients::default(),
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(ConfigError::Parse)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Vec<usize> {
        if self.full_grid {
            FULL_GRID.to_vec()
        } else {
            self.n_grid.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let grid = self.grid();
        if grid.is_empty() {
            return invalid("n_grid is empty".into());
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!("n_grid must be strictly increasing, got {grid:?}"));
        }
        if self.reps == 0 {
            return invalid("reps must be at least 1".into());
        }
        if self.num_blocks == 0 {
            return invalid("num_blocks must be at least 1".into());
        }
        let p = self.coefficients.covariates.len();
        let k = p + self.num_blocks + 2;
        if grid.iter().any(|&n| n <= k) {
            return invalid(format!("every n must exceed the {k} regressors"));
        }
        if self.coefficients.latents.len() != self.num_blocks {
            return invalid(format!(
                "{} latent coefficients for {} blocks",
                self.coefficients.latents.len(),
                self.num_blocks
            ));
        }
        let c = self.coefficients.contagion;
        if c.is_nan() || c.abs() >= 1.0 {
            return invalid("contagion coefficient must lie in (-1, 1)".into());
        }
        let sd = self.coefficients.error_sd;
        if sd.is_nan() || sd <= 0.0 {
            return invalid("error_sd must be positive".into());
        }
        if self.corruptions.is_empty() || self.estimators.is_empty() {
            return invalid("corruptions and estimators must be nonempty".into());
        }
        for c in &self.corruptions {
            c.validate()
                .map_err(|e| ConfigError::Invalid(format!("corruption {}: {e}", c.label())))?;
        }
        Ok(())
    }
}
