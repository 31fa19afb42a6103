//! Monte Carlo driver: replications over a grid of network sizes, tidy
//! result rows, and their summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use netsmooth_core::contagion::{generate_outcomes, ContagionDesign, ContagionKind};
use netsmooth_core::corrupt::{corrupt, CorruptionSpec};
use netsmooth_core::estimators::{
    self, covariate_name, latent_name, FitResult, CONTAGION, INTERCEPT,
};
use netsmooth_core::linalg::Matrix;
use netsmooth_core::netgen::{
    realize_network, sample_dcsbm_latents, DcsbmParams, LatentNetwork, ObservedNetwork,
};
use netsmooth_core::recover::{recover_subspace, SubspaceEstimate};
use netsmooth_core::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorKind, ExperimentConfig};

pub const RESULTS_HEADER: [&str; 14] = [
    "dgp",
    "estimator",
    "corruption",
    "n",
    "rep",
    "coefficient",
    "estimate",
    "truth",
    "squared_error",
    "ci_lower",
    "ci_upper",
    "covered",
    "failed",
    "seed",
];

/// Fewest grid points a rate fit is computed from.
pub const MIN_RATE_POINTS: usize = 4;

/// One coefficient of one fit in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dgp: String,
    pub estimator: String,
    pub corruption: String,
    pub n: usize,
    pub rep: usize,
    pub coefficient: String,
    /// Position of the coefficient in design order; used for sorting.
    pub coefficient_index: usize,
    pub estimate: f64,
    pub truth: f64,
    pub squared_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
    pub failed: bool,
    pub seed: u64,
}

impl ResultRow {
    fn sort_key(&self) -> (&str, &str, &str, usize, usize, usize) {
        (
            &self.dgp,
            &self.estimator,
            &self.corruption,
            self.n,
            self.rep,
            self.coefficient_index,
        )
    }
}

/// Coefficient names in design order.
pub fn coefficient_names(p: usize, d: usize) -> Vec<String> {
    let mut names = vec![INTERCEPT.to_string()];
    names.extend((0..p).map(covariate_name));
    names.extend((0..d).map(latent_name));
    names.push(CONTAGION.to_string());
    names
}

/// Seed of replication `rep` at size `n`.
pub fn replication_seed(config: &ExperimentConfig, n: usize, rep: usize) -> u64 {
    rng::derive_seed(
        config.base_seed,
        &[rng::hash_label(config.dgp.label()), n as u64, rep as u64],
    )
}

/// Runs every replication of `config` on a pool of `workers` threads.
/// Rows come back sorted, so the output does not depend on `workers`.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> anyhow::Result<Vec<ResultRow>> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = config
        .grid()
        .into_iter()
        .flat_map(|n| (0..config.reps).map(move |rep| (n, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let chunks: Vec<Vec<ResultRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, rep)| run_replication(config, n, rep))
            .collect()
    });
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

struct World {
    latent: LatentNetwork,
    network: ObservedNetwork,
    covariates: Matrix,
    outcomes: netsmooth_core::linalg::Vector,
}

fn build_world(config: &ExperimentConfig, n: usize, seed: u64) -> netsmooth_core::Result<World> {
    let params = DcsbmParams::equal_blocks(
        n,
        config.num_blocks,
        &config.block_matrix,
        config.degree_correction.clone(),
        config.sparsity,
        rng::derive_seed(seed, &[0]),
    )?;
    let latent = sample_dcsbm_latents(&params, rng::derive_seed(seed, &[1]))?;
    let network = realize_network(&latent, &config.edge_noise, rng::derive_seed(seed, &[2]))?;
    let p = config.coefficients.covariates.len();
    let mut gen = rng::stream(rng::derive_seed(seed, &[3]), "covariates");
    let covariates = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut gen));
    let coefs = &config.coefficients;
    let design = ContagionDesign {
        intercept: coefs.intercept,
        covariate_coefs: coefs.covariates.clone(),
        latent_coefs: coefs.latents.clone(),
        contagion_coef: coefs.contagion,
        covariates: covariates.clone(),
        error_sd: coefs.error_sd,
        kind: config.dgp,
    };
    let operator = match config.dgp {
        ContagionKind::Peer => &network.operator,
        ContagionKind::Latent => &latent.latent_operator,
    };
    let outcomes = generate_outcomes(
        &design,
        operator,
        &latent.latent_positions,
        rng::derive_seed(seed, &[4]),
    )?
    .responses;
    Ok(World {
        latent,
        network,
        covariates,
        outcomes,
    })
}

/// All (estimator, corruption) cells a replication produces.
fn cells(config: &ExperimentConfig) -> Vec<(EstimatorKind, CorruptionSpec)> {
    let mut out = Vec::new();
    for &estimator in &config.estimators {
        if estimator.uses_corrupted_network() {
            out.extend(config.corruptions.iter().map(|c| (estimator, *c)));
        } else {
            out.push((estimator, CorruptionSpec::Baseline));
        }
    }
    out
}

fn run_replication(config: &ExperimentConfig, n: usize, rep: usize) -> Vec<ResultRow> {
    let seed = replication_seed(config, n, rep);
    let truth = config_truth(config);
    let names = coefficient_names(config.coefficients.covariates.len(), config.num_blocks);
    let cells = cells(config);
    let world = match build_world(config, n, seed) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("n={n} rep={rep}: data generation failed: {e}");
            return cells
                .iter()
                .flat_map(|(est, c)| failed_rows(config, *est, c, n, rep, seed, &names, &truth))
                .collect();
        }
    };
    let k = config.num_blocks;
    let mut baseline: Option<netsmooth_core::Result<SubspaceEstimate>> = None;
    let mut baseline_estimate = |world: &World| -> netsmooth_core::Result<SubspaceEstimate> {
        baseline
            .get_or_insert_with(|| {
                let view = corrupt(&world.network, &CorruptionSpec::Baseline, None, seed)?;
                recover_subspace(&view, k)
            })
            .clone()
    };

    let x = &world.latent.latent_positions;
    let mut rows = Vec::new();
    for (estimator, corruption) in &cells {
        let outcome: netsmooth_core::Result<FitResult> = match estimator {
            EstimatorKind::LatentTsls => {
                let estimate = if *corruption == CorruptionSpec::Baseline {
                    baseline_estimate(&world)
                } else {
                    let corruption_seed =
                        rng::derive_seed(seed, &[5, rng::hash_label(&corruption.label())]);
                    corrupt(&world.network, corruption, Some(x), corruption_seed)
                        .and_then(|view| recover_subspace(&view, k))
                };
                estimate.and_then(|est| {
                    let fit = estimators::fit(
                        &world.outcomes,
                        &world.covariates,
                        &est.embedding,
                        &est.smoothed_operator,
                        true,
                        ContagionKind::Latent,
                    )?;
                    estimators::align_latent_fit(&fit, &est.embedding, x)
                })
            }
            EstimatorKind::PeerTsls => baseline_estimate(&world).and_then(|est| {
                let fit = estimators::fit(
                    &world.outcomes,
                    &world.covariates,
                    &est.embedding,
                    &world.network.operator,
                    true,
                    ContagionKind::Peer,
                )?;
                estimators::align_latent_fit(&fit, &est.embedding, x)
            }),
            EstimatorKind::OraclePeer => estimators::oracle_fit(
                &world.outcomes,
                &world.covariates,
                x,
                &world.network.operator,
                ContagionKind::Peer,
            ),
            EstimatorKind::OracleLatent => estimators::oracle_fit(
                &world.outcomes,
                &world.covariates,
                x,
                &world.latent.latent_operator,
                ContagionKind::Latent,
            ),
        };
        match outcome {
            Ok(fit) => rows.extend(fit_rows(
                config, *estimator, corruption, n, rep, seed, &names, &truth, &fit,
            )),
            Err(e) => {
                log::debug!(
                    "n={n} rep={rep} {} {}: {e}",
                    estimator.label(),
                    corruption.label()
                );
                rows.extend(failed_rows(
                    config, *estimator, corruption, n, rep, seed, &names, &truth,
                ));
            }
        }
    }
    rows
}

fn config_truth(config: &ExperimentConfig) -> Vec<f64> {
    let c = &config.coefficients;
    let mut v = vec![c.intercept];
    v.extend_from_slice(&c.covariates);
    v.extend_from_slice(&c.latents);
    v.push(c.contagion);
    v
}

#[allow(clippy::too_many_arguments)]
fn fit_rows(
    config: &ExperimentConfig,
    estimator: EstimatorKind,
    corruption: &CorruptionSpec,
    n: usize,
    rep: usize,
    seed: u64,
    names: &[String],
    truth: &[f64],
    fit: &FitResult,
) -> Vec<ResultRow> {
    names
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(idx, (name, &t))| match fit.index_of(name) {
            Some(i) => {
                let estimate = fit.coefficients[i];
                let [lo, hi] = fit.ci_95[i];
                ResultRow {
                    dgp: config.dgp.label().to_string(),
                    estimator: estimator.label().to_string(),
                    corruption: corruption.label(),
                    n,
                    rep,
                    coefficient: name.clone(),
                    coefficient_index: idx,
                    estimate,
                    truth: t,
                    squared_error: (estimate - t) * (estimate - t),
                    ci_lower: lo,
                    ci_upper: hi,
                    covered: lo <= t && t <= hi,
                    failed: false,
                    seed,
                }
            }
            None => failed_row(config, estimator, corruption, n, rep, seed, idx, name, t),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn failed_rows(
    config: &ExperimentConfig,
    estimator: EstimatorKind,
    corruption: &CorruptionSpec,
    n: usize,
    rep: usize,
    seed: u64,
    names: &[String],
    truth: &[f64],
) -> Vec<ResultRow> {
    names
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(idx, (name, &t))| {
            failed_row(config, estimator, corruption, n, rep, seed, idx, name, t)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn failed_row(
    config: &ExperimentConfig,
    estimator: EstimatorKind,
    corruption: &CorruptionSpec,
    n: usize,
    rep: usize,
    seed: u64,
    idx: usize,
    name: &str,
    truth: f64,
) -> ResultRow {
    ResultRow {
        dgp: config.dgp.label().to_string(),
        estimator: estimator.label().to_string(),
        corruption: corruption.label(),
        n,
        rep,
        coefficient: name.to_string(),
        coefficient_index: idx,
        estimate: f64::NAN,
        truth,
        squared_error: f64::NAN,
        ci_lower: f64::NAN,
        ci_upper: f64::NAN,
        covered: false,
        failed: true,
        seed,
    }
}

/// Writes rows as CSV under [`RESULTS_HEADER`]. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.dgp.clone(),
            r.estimator.clone(),
            r.corruption.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            r.coefficient.clone(),
            r.estimate.to_string(),
            r.truth.to_string(),
            r.squared_error.to_string(),
            r.ci_lower.to_string(),
            r.ci_upper.to_string(),
            r.covered.to_string(),
            r.failed.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsReadError {
    #[error("results header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("results file has no rows")]
    Empty,
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses a results CSV written by [`write_results`]. Coefficients are
/// ordered by first appearance within each replication.
pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>, ResultsReadError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(ResultsReadError::Header {
            expected: RESULTS_HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut rows = Vec::new();
    let mut order: BTreeMap<(String, String, String, usize, usize), usize> = BTreeMap::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| ResultsReadError::Field {
            line,
            message: format!(
                "cannot parse {what} from {:?}",
                record.iter().collect::<Vec<_>>()
            ),
        };
        let float = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
        let n: usize = field(3).parse().map_err(|_| bad("n"))?;
        let rep: usize = field(4).parse().map_err(|_| bad("rep"))?;
        let slot = order
            .entry((field(0).into(), field(1).into(), field(2).into(), n, rep))
            .or_insert(0);
        let coefficient_index = *slot;
        *slot += 1;
        rows.push(ResultRow {
            dgp: field(0).to_string(),
            estimator: field(1).to_string(),
            corruption: field(2).to_string(),
            n,
            rep,
            coefficient: field(5).to_string(),
            coefficient_index,
            estimate: float(6, "estimate")?,
            truth: float(7, "truth")?,
            squared_error: float(8, "squared_error")?,
            ci_lower: float(9, "ci_lower")?,
            ci_upper: float(10, "ci_upper")?,
            covered: field(11).parse().map_err(|_| bad("covered"))?,
            failed: field(12).parse().map_err(|_| bad("failed"))?,
            seed: field(13).parse().map_err(|_| bad("seed"))?,
        });
    }
    if rows.is_empty() {
        return Err(ResultsReadError::Empty);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub dgp: String,
    pub estimator: String,
    pub corruption: String,
    pub coefficient: String,
    pub n: usize,
    /// Mean squared error over successful replications.
    pub mse: f64,
    pub median_squared_error: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub dgp: String,
    pub estimator: String,
    pub corruption: String,
    pub coefficient: String,
    pub n: usize,
    pub coverage: f64,
    pub reps: usize,
}

/// Least-squares line of `log(mse)` on `log(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub dgp: String,
    pub estimator: String,
    pub corruption: String,
    pub coefficient: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mse_table: Vec<MseEntry>,
    pub coverage_table: Vec<CoverageEntry>,
    pub rate_fits: Vec<RateFit>,
}

/// `(slope, intercept, r_squared)` of the least-squares line through
/// `(ln x, ln y)`. Needs [`MIN_RATE_POINTS`] points with positive,
/// finite coordinates.
pub fn fit_log_log(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < MIN_RATE_POINTS {
        return None;
    }
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some((slope, intercept, r_squared))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Per-cell MSE and coverage, and a rate fit per (dgp, estimator,
/// corruption, coefficient) with enough grid points.
pub fn summarize(rows: &[ResultRow]) -> Summary {
    type CellKey = (String, String, String, usize, String);
    type CellIndex = (String, String, String, usize, usize);
    type CurveKey = (String, String, String, usize);
    struct Acc {
        errors: Vec<f64>,
        covered: usize,
        failures: usize,
    }
    let mut cells: BTreeMap<CellIndex, (CellKey, Acc)> = BTreeMap::new();
    for r in rows {
        let key = (
            r.dgp.clone(),
            r.estimator.clone(),
            r.corruption.clone(),
            r.n,
            r.coefficient_index,
        );
        let (_, acc) = cells.entry(key).or_insert_with(|| {
            (
                (
                    r.dgp.clone(),
                    r.estimator.clone(),
                    r.corruption.clone(),
                    r.n,
                    r.coefficient.clone(),
                ),
                Acc {
                    errors: Vec::new(),
                    covered: 0,
                    failures: 0,
                },
            )
        });
        if r.failed || !r.squared_error.is_finite() {
            acc.failures += 1;
        } else {
            acc.errors.push(r.squared_error);
            acc.covered += usize::from(r.covered);
        }
    }

    let mut mse_table = Vec::new();
    let mut coverage_table = Vec::new();
    let mut curves: BTreeMap<CurveKey, (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for ((dgp, estimator, corruption, n, idx), ((_, _, _, _, coefficient), mut acc)) in cells {
        let reps = acc.errors.len();
        let mse = if reps == 0 {
            f64::NAN
        } else {
            acc.errors.iter().sum::<f64>() / reps as f64
        };
        let coverage = if reps == 0 {
            f64::NAN
        } else {
            acc.covered as f64 / reps as f64
        };
        curves
            .entry((dgp.clone(), estimator.clone(), corruption.clone(), idx))
            .or_insert_with(|| (coefficient.clone(), Vec::new()))
            .1
            .push((n as f64, mse));
        mse_table.push(MseEntry {
            dgp: dgp.clone(),
            estimator: estimator.clone(),
            corruption: corruption.clone(),
            coefficient: coefficient.clone(),
            n,
            mse,
            median_squared_error: median(&mut acc.errors),
            reps,
            failures: acc.failures,
        });
        coverage_table.push(CoverageEntry {
            dgp,
            estimator,
            corruption,
            coefficient,
            n,
            coverage,
            reps,
        });
    }
    let rate_fits = curves
        .into_iter()
        .filter_map(|((dgp, estimator, corruption, _), (coefficient, points))| {
            fit_log_log(&points).map(|(slope, intercept, r_squared)| RateFit {
                dgp,
                estimator,
                corruption,
                coefficient,
                slope,
                intercept,
                r_squared,
                points: points.len(),
            })
        })
        .collect();
    Summary {
        mse_table,
        coverage_table,
        rate_fits,
    }
}

impl Summary {
    pub fn mse(
        &self,
        estimator: &str,
        corruption: &str,
        coefficient: &str,
        n: usize,
    ) -> Option<&MseEntry> {
        self.mse_table.iter().find(|e| {
            e.estimator == estimator
                && e.corruption == corruption
                && e.coefficient == coefficient
                && e.n == n
        })
    }

    pub fn rate(&self, estimator: &str, corruption: &str, coefficient: &str) -> Option<&RateFit> {
        self.rate_fits.iter().find(|f| {
            f.estimator == estimator && f.corruption == corruption && f.coefficient == coefficient
        })
    }
}
