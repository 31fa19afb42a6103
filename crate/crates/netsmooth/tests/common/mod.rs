#![allow(dead_code)]

use netsmooth::config::{EstimatorKind, ExperimentConfig};
use netsmooth::core::corrupt::CorruptionSpec;
use netsmooth::harness::ResultRow;

/// A config that exercises every estimator and corruption in seconds.
pub fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_grid: vec![60, 90],
        reps: 3,
        corruptions: CorruptionSpec::defaults().to_vec(),
        estimators: vec![
            EstimatorKind::PeerTsls,
            EstimatorKind::LatentTsls,
            EstimatorKind::OraclePeer,
            EstimatorKind::OracleLatent,
        ],
        base_seed: 7,
        ..ExperimentConfig::default()
    }
}

pub fn row(estimator: &str, n: usize, rep: usize, estimate: f64, truth: f64) -> ResultRow {
    ResultRow {
        dgp: "latent".into(),
        estimator: estimator.into(),
        corruption: "baseline".into(),
        n,
        rep,
        coefficient: "contagion".into(),
        coefficient_index: 0,
        estimate,
        truth,
        squared_error: (estimate - truth) * (estimate - truth),
        ci_lower: estimate - 0.1,
        ci_upper: estimate + 0.1,
        covered: (estimate - truth).abs() <= 0.1,
        failed: false,
        seed: rep as u64,
    }
}

use netsmooth::core::contagion::{generate_outcomes, ContagionDesign, ContagionKind};
use netsmooth::core::linalg::{Matrix, Vector};
use netsmooth::core::netgen::{
    realize_network, sample_dcsbm_latents, BlockMatrixSpec, DcsbmParams, DegreeCorrection,
    Sparsity, SubgammaSpec,
};
use netsmooth::core::rng;
use rand_distr::{Distribution, StandardNormal};

pub const PLANTED_CONTAGION: f64 = 0.2;
pub const PLANTED_DIM: usize = 2;

/// Directed two-block network with outcomes from the latent model.
/// Each ordered pair gets its own Poisson draw: the upper triangle comes
/// from one symmetric realization and the lower from another.
pub fn planted_directed(n: usize, seed: u64) -> (Matrix, Matrix, Vector) {
    let params = DcsbmParams::equal_blocks(
        n,
        PLANTED_DIM,
        &BlockMatrixSpec::Explicit(vec![vec![0.8, 0.1], vec![0.1, 0.5]]),
        DegreeCorrection::default(),
        Sparsity::DegreeExponent(0.75),
        seed,
    )
    .unwrap();
    let latent = sample_dcsbm_latents(&params, rng::derive_seed(seed, &[1])).unwrap();
    let upper = realize_network(
        &latent,
        &SubgammaSpec::Poisson,
        rng::derive_seed(seed, &[2]),
    )
    .unwrap();
    let lower = realize_network(
        &latent,
        &SubgammaSpec::Poisson,
        rng::derive_seed(seed, &[3]),
    )
    .unwrap();
    let adjacency = Matrix::from_fn(n, n, |i, j| {
        if i < j {
            upper.adjacency[(i, j)]
        } else {
            lower.adjacency[(i, j)]
        }
    });
    let mut gen = rng::stream(rng::derive_seed(seed, &[4]), "covariates");
    let covariates = Matrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut gen));
    let design = ContagionDesign {
        intercept: 0.0,
        covariate_coefs: vec![1.0],
        latent_coefs: vec![2.0; PLANTED_DIM],
        contagion_coef: PLANTED_CONTAGION,
        covariates: covariates.clone(),
        error_sd: 1.0,
        kind: ContagionKind::Latent,
    };
    let y = generate_outcomes(
        &design,
        &latent.latent_operator,
        &latent.latent_positions,
        rng::derive_seed(seed, &[5]),
    )
    .unwrap()
    .responses;
    (adjacency, covariates, y)
}

/// Writes `src,dst,weight` for every nonzero entry, node IDs `v{i}`.
pub fn write_edges(path: &std::path::Path, adjacency: &Matrix, directed: bool) {
    let mut text = String::from("src,dst,weight\n");
    for i in 0..adjacency.nrows() {
        for j in 0..adjacency.ncols() {
            if adjacency[(i, j)] != 0.0 && (directed || i < j) {
                text.push_str(&format!("v{i},v{j},{}\n", adjacency[(i, j)]));
            }
        }
    }
    std::fs::write(path, text).unwrap();
}

/// Writes `id,y,w1,..` node rows.
pub fn write_nodes(path: &std::path::Path, covariates: &Matrix, y: &Vector) {
    let mut text = String::from("id,y");
    for j in 0..covariates.ncols() {
        text.push_str(&format!(",w{}", j + 1));
    }
    text.push('\n');
    for i in 0..y.len() {
        text.push_str(&format!("v{i},{}", y[i]));
        for j in 0..covariates.ncols() {
            text.push_str(&format!(",{}", covariates[(i, j)]));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
