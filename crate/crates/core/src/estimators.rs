//! Two-stage least squares for peer and latent contagion.
//!
//! The regressors are `Z = [1 W X Op*Y]`; `Op*Y` is endogenous and is
//! instrumented by `H = [W X Op*W Op*X Op^2*W Op^2*X]`, pruned of columns
//! that add no rank. Fitting against estimated `X` and `Op` gives the
//! feasible estimators, against the true ones the oracle estimators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::contagion::{ContagionDesign, ContagionKind, OutcomeSolver};
use crate::error::{dimension, validation, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::netgen::{realize_network, LatentNetwork, SubgammaSpec};
use crate::rng;

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959964;
/// A candidate instrument is pruned when its residual against the kept
/// columns falls below this fraction of its norm.
pub const PRUNE_TOLERANCE: f64 = 1e-8;
/// Smallest number of outcome draws accepted for projection parameters.
pub const MIN_PROJECTION_DRAWS: usize = 100;

pub const INTERCEPT: &str = "intercept";
pub const CONTAGION: &str = "contagion";

/// Name of covariate column `j` (zero-based).
pub fn covariate_name(j: usize) -> String {
    format!("w{}", j + 1)
}

/// Name of latent column `j` (zero-based).
pub fn latent_name(j: usize) -> String {
    format!("x{}", j + 1)
}

/// Regressors, instruments and the bookkeeping of how they were built.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    /// `Z`, columns named by `names`.
    pub design: Matrix,
    pub names: Vec<String>,
    /// Retained instrument columns.
    pub instruments: Matrix,
    pub instrument_names: Vec<String>,
    pub pruned_columns: Vec<String>,
    pub intercept_dropped: bool,
    pub operator_kind: ContagionKind,
    /// Rank the instruments must reach: `p + d + 1`.
    pub required_rank: usize,
}

impl DesignBundle {
    pub fn instrument_rank(&self) -> usize {
        self.instruments.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub instrument_rank: usize,
    /// Condition number of the projected design after scaling its columns
    /// to unit norm.
    pub design_condition_number: f64,
    pub pruned_columns: Vec<String>,
    pub intercept_dropped: bool,
    pub identified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Row-major, `k x k`.
    pub covariance: Vec<Vec<f64>>,
    pub ci_95: Vec<[f64; 2]>,
    pub sigma_eps_hat: f64,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.index_of(name)
            .map(|i| linalg::sqrt(self.covariance[i][i].max(0.0)))
    }

    pub fn interval(&self, name: &str) -> Option<[f64; 2]> {
        self.index_of(name).map(|i| self.ci_95[i])
    }

    /// Coefficients of the latent block, in order.
    pub fn latent_block(&self) -> Vec<f64> {
        self.names
            .iter()
            .zip(&self.coefficients)
            .filter(|(n, _)| is_latent_name(n))
            .map(|(_, c)| *c)
            .collect()
    }
}

fn is_latent_name(name: &str) -> bool {
    name.strip_prefix('x')
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// True when the all-ones vector lies in the numerical span of `columns`.
fn spans_constant(columns: &Matrix) -> bool {
    let n = columns.nrows();
    if columns.ncols() == 0 || n == 0 {
        return false;
    }
    let ones = Vector::from_element(n, 1.0);
    let augmented = linalg::hstack(
        n,
        &[columns, &Matrix::from_column_slice(n, 1, ones.as_slice())],
    );
    match augmented {
        Ok(m) => {
            linalg::numerical_rank(&m, linalg::RANK_TOLERANCE)
                == linalg::numerical_rank(columns, linalg::RANK_TOLERANCE)
        }
        Err(_) => false,
    }
}

/// Greedy left-to-right selection of columns that each raise the rank.
/// Returns the indices kept.
fn prune_columns(candidates: &Matrix) -> Vec<usize> {
    let n = candidates.nrows();
    let mut basis: Vec<Vector> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..candidates.ncols() {
        let column = candidates.column(j).into_owned();
        let norm = column.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut residual = column.clone();
        // Two passes of Gram-Schmidt keep the residual honest.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&residual);
                residual.axpy(-proj, q, 1.0);
            }
        }
        let rnorm = residual.norm();
        if rnorm > PRUNE_TOLERANCE * norm && basis.len() < n {
            basis.push(residual / rnorm);
            kept.push(j);
        }
    }
    kept
}

/// Assembles `Z` and the pruned `H` for a latent-contagion fit. See
/// [`build_design_with_kind`] to label the operator explicitly.
pub fn build_design(
    outcomes: &Vector,
    covariates: &Matrix,
    embedding: &Matrix,
    operator: &Matrix,
    include_latents: bool,
) -> Result<DesignBundle> {
    build_design_with_kind(
        outcomes,
        covariates,
        embedding,
        operator,
        include_latents,
        ContagionKind::Latent,
    )
}

/// [`build_design`] with the operator's role recorded.
pub fn build_design_with_kind(
    outcomes: &Vector,
    covariates: &Matrix,
    embedding: &Matrix,
    operator: &Matrix,
    include_latents: bool,
    operator_kind: ContagionKind,
) -> Result<DesignBundle> {
    let n = outcomes.len();
    if operator.shape() != (n, n) {
        return Err(dimension(format!(
            "operator is {}x{} for {n} outcomes",
            operator.nrows(),
            operator.ncols()
        )));
    }
    let p = covariates.ncols();
    if p > 0 && covariates.nrows() != n {
        return Err(dimension(format!(
            "covariates have {} rows for {n} outcomes",
            covariates.nrows()
        )));
    }
    let d = if include_latents {
        embedding.ncols()
    } else {
        0
    };
    if d > 0 && embedding.nrows() != n {
        return Err(dimension(format!(
            "embedding has {} rows for {n} outcomes",
            embedding.nrows()
        )));
    }
    if outcomes
        .iter()
        .chain(covariates.iter())
        .any(|v| !v.is_finite())
    {
        return Err(validation("outcomes and covariates must be finite"));
    }
    if (0..n).any(|i| operator.row(i).sum() > 1.0 + 1e-8) {
        return Err(validation("operator rows must sum to at most one"));
    }

    let w = if p > 0 {
        covariates.clone()
    } else {
        Matrix::zeros(n, 0)
    };
    let x = if d > 0 {
        embedding.clone()
    } else {
        Matrix::zeros(n, 0)
    };
    let intercept_dropped = d > 0 && spans_constant(&x);

    let spill = operator * outcomes;
    let mut blocks: Vec<Matrix> = Vec::new();
    let mut names = Vec::new();
    if !intercept_dropped {
        blocks.push(Matrix::from_element(n, 1, 1.0));
        names.push(INTERCEPT.to_string());
    }
    blocks.push(w.clone());
    names.extend((0..p).map(covariate_name));
    blocks.push(x.clone());
    names.extend((0..d).map(latent_name));
    blocks.push(Matrix::from_column_slice(n, 1, spill.as_slice()));
    names.push(CONTAGION.to_string());
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let design = linalg::hstack(n, &refs)?;
    for (j, name) in names.iter().enumerate() {
        if design.column(j).iter().all(|v| *v == 0.0) {
            return Err(validation(format!(
                "design column {name} is identically zero"
            )));
        }
    }

    let ow = operator * &w;
    let ox = operator * &x;
    let oow = operator * &ow;
    let oox = operator * &ox;
    let candidate_blocks = [
        (&w, ""),
        (&x, ""),
        (&ow, "op_"),
        (&ox, "op_"),
        (&oow, "op2_"),
        (&oox, "op2_"),
    ];
    let mut candidate_names = Vec::new();
    for (block, (m, prefix)) in candidate_blocks.iter().enumerate() {
        for j in 0..m.ncols() {
            let base = if block % 2 == 0 {
                covariate_name(j)
            } else {
                latent_name(j)
            };
            candidate_names.push(format!("{prefix}{base}"));
        }
    }
    let candidate_refs: Vec<&Matrix> = candidate_blocks.iter().map(|(m, _)| *m).collect();
    let candidates = linalg::hstack(n, &candidate_refs)?;
    let kept = prune_columns(&candidates);
    let instruments = candidates.select_columns(&kept);
    let instrument_names: Vec<String> = kept.iter().map(|&j| candidate_names[j].clone()).collect();
    let pruned_columns: Vec<String> = (0..candidates.ncols())
        .filter(|j| !kept.contains(j))
        .map(|j| candidate_names[j].clone())
        .collect();

    let required_rank = p + d + 1;
    if instruments.ncols() < required_rank {
        return Err(Error::NotIdentified {
            rank: instruments.ncols(),
            required: required_rank,
        });
    }
    Ok(DesignBundle {
        design,
        names,
        instruments,
        instrument_names,
        pruned_columns,
        intercept_dropped,
        operator_kind,
        required_rank,
    })
}

/// Two-stage least squares on a prepared bundle.
///
/// `Z` is projected onto the span of `H` through a thin QR, the outcome is
/// regressed on the projection, and `sigma^2 (Z^T M Z)^{-1}` gives the
/// covariance with `sigma^2 = ||Y - Z b||^2 / (n - k)`.
pub fn tsls_fit(bundle: &DesignBundle, outcomes: &Vector) -> Result<FitResult> {
    let z = &bundle.design;
    let (n, k) = z.shape();
    if outcomes.len() != n {
        return Err(dimension("outcome length differs from design"));
    }
    if n <= k {
        return Err(dimension(format!("{n} observations for {k} coefficients")));
    }
    let q_h = bundle.instruments.clone().qr().q();
    let projected = &q_h * (q_h.transpose() * z);
    // Rank is judged on unit-norm columns so that a tiny but informative
    // column (e.g. from a floored spectrum) is not mistaken for collinearity.
    let mut scaled = projected.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let condition = linalg::condition_number(&scaled);
    if linalg::numerical_rank(&scaled, linalg::RANK_TOLERANCE) < k {
        return Err(Error::DegenerateDesign { condition });
    }
    let qr = projected.qr();
    let r = qr.r();
    let q = qr.q();
    let rhs = q.transpose() * outcomes;
    let coefficients = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::DegenerateDesign { condition })?;
    let r_inv = r
        .solve_upper_triangular(&Matrix::identity(k, k))
        .ok_or(Error::DegenerateDesign { condition })?;
    let unscaled = &r_inv * r_inv.transpose();

    let residual = outcomes - z * &coefficients;
    let sigma2 = residual.norm_squared() / (n - k) as f64;
    let covariance = (&unscaled + unscaled.transpose()) * (0.5 * sigma2);

    let ci_95 = (0..k)
        .map(|i| {
            let half = Z_975 * linalg::sqrt(covariance[(i, i)].max(0.0));
            [coefficients[i] - half, coefficients[i] + half]
        })
        .collect();
    Ok(FitResult {
        names: bundle.names.clone(),
        coefficients: coefficients.iter().copied().collect(),
        covariance: (0..k)
            .map(|i| covariance.row(i).iter().copied().collect())
            .collect(),
        ci_95,
        sigma_eps_hat: linalg::sqrt(sigma2),
        diagnostics: FitDiagnostics {
            instrument_rank: bundle.instrument_rank(),
            design_condition_number: condition,
            pruned_columns: bundle.pruned_columns.clone(),
            intercept_dropped: bundle.intercept_dropped,
            identified: true,
        },
    })
}

/// Builds the design and fits in one step.
pub fn fit(
    outcomes: &Vector,
    covariates: &Matrix,
    embedding: &Matrix,
    operator: &Matrix,
    include_latents: bool,
    operator_kind: ContagionKind,
) -> Result<FitResult> {
    let bundle = build_design_with_kind(
        outcomes,
        covariates,
        embedding,
        operator,
        include_latents,
        operator_kind,
    )?;
    tsls_fit(&bundle, outcomes)
}

/// The infeasible fit that uses the true latent positions and operator.
pub fn oracle_fit(
    outcomes: &Vector,
    covariates: &Matrix,
    true_latents: &Matrix,
    true_operator: &Matrix,
    operator_kind: ContagionKind,
) -> Result<FitResult> {
    fit(
        outcomes,
        covariates,
        true_latents,
        true_operator,
        true,
        operator_kind,
    )
}

/// Coefficients with the latent block rotated into the frame of
/// `true_latents`: `Q^T b_x`, where `Q` aligns `embedding` onto
/// `true_latents`. Fits without a latent block are returned unchanged.
pub fn align_latent_coefs(
    fit: &FitResult,
    embedding: &Matrix,
    true_latents: &Matrix,
) -> Result<Vec<f64>> {
    align_latent_fit(fit, embedding, true_latents).map(|f| f.coefficients)
}

/// [`align_latent_coefs`] applied to the whole fit: the covariance and
/// intervals of the latent block are rotated along with the estimates.
pub fn align_latent_fit(
    fit: &FitResult,
    embedding: &Matrix,
    true_latents: &Matrix,
) -> Result<FitResult> {
    let positions: Vec<usize> = (0..fit.names.len())
        .filter(|&i| is_latent_name(&fit.names[i]))
        .collect();
    if positions.is_empty() {
        return Ok(fit.clone());
    }
    if positions.len() != embedding.ncols() {
        return Err(dimension(format!(
            "fit has {} latent coefficients for a {}-column embedding",
            positions.len(),
            embedding.ncols()
        )));
    }
    let rotation = linalg::procrustes_align(embedding, true_latents)?.rotation;
    let k = fit.coefficients.len();
    let mut transform = Matrix::identity(k, k);
    for (a, &i) in positions.iter().enumerate() {
        for (b, &j) in positions.iter().enumerate() {
            transform[(i, j)] = rotation[(b, a)];
        }
    }
    let coefficients = &transform * Vector::from_column_slice(&fit.coefficients);
    let covariance = Matrix::from_fn(k, k, |i, j| fit.covariance[i][j]);
    let covariance = &transform * covariance * transform.transpose();
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let mut out = fit.clone();
    out.coefficients = coefficients.iter().copied().collect();
    out.covariance = (0..k)
        .map(|i| covariance.row(i).iter().copied().collect())
        .collect();
    out.ci_95 = (0..k)
        .map(|i| {
            let half = Z_975 * linalg::sqrt(covariance[(i, i)].max(0.0));
            [coefficients[i] - half, coefficients[i] + half]
        })
        .collect();
    Ok(out)
}

/// Operator used for the spillover regressor in a projection functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionOperator {
    /// Realized `G` of each draw.
    Observed,
    /// Expected `G~`.
    Expected,
}

/// Monte Carlo projection coefficients `E[Z^T Z]^{-1} E[Z^T Y]` with
/// `Z = [1 W X Op*Y]`, averaging over `draws` independent networks and
/// error vectors while the latent positions stay fixed.
///
/// With the `parallel` feature the draws are spread over the rayon pool;
/// per-draw seeds and an ordered reduction keep the result bit-identical.
pub fn estimate_projection_params(
    latent: &LatentNetwork,
    design: &ContagionDesign,
    noise: &SubgammaSpec,
    operator: ProjectionOperator,
    draws: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if draws < MIN_PROJECTION_DRAWS {
        return Err(validation(format!(
            "projection parameters need at least {MIN_PROJECTION_DRAWS} draws, got {draws}"
        )));
    }
    let x = &latent.latent_positions;
    let n = latent.n();
    let k = design.covariate_coefs.len() + x.ncols() + 2;
    let latent_solver = match design.kind {
        ContagionKind::Latent => Some(OutcomeSolver::new(design, &latent.latent_operator, x)?),
        ContagionKind::Peer => None,
    };
    let mut fixed = Matrix::zeros(n, k);
    fixed.column_mut(0).fill(1.0);
    let p = design.covariate_coefs.len();
    if p > 0 {
        fixed.columns_mut(1, p).copy_from(&design.covariates);
    }
    fixed.columns_mut(1 + p, x.ncols()).copy_from(x);

    let one_draw = |r: usize| -> Result<(Matrix, Vector)> {
        let network = realize_network(latent, noise, rng::derive_seed(rng_seed, &[r as u64, 0]))?;
        let error_seed = rng::derive_seed(rng_seed, &[r as u64, 1]);
        let y = match &latent_solver {
            Some(solver) => solver.draw(error_seed)?.responses,
            None => {
                OutcomeSolver::new(design, &network.operator, x)?
                    .draw(error_seed)?
                    .responses
            }
        };
        let op = match operator {
            ProjectionOperator::Observed => &network.operator,
            ProjectionOperator::Expected => &latent.latent_operator,
        };
        let mut z = fixed.clone();
        z.set_column(k - 1, &(op * &y));
        let zt = z.transpose();
        Ok((&zt * &z, &zt * y))
    };

    #[cfg(feature = "parallel")]
    let moments: Vec<Result<(Matrix, Vector)>> = {
        use rayon::prelude::*;
        (0..draws).into_par_iter().map(one_draw).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let moments: Vec<Result<(Matrix, Vector)>> = (0..draws).map(one_draw).collect();

    let mut ztz = Matrix::zeros(k, k);
    let mut zty = Vector::zeros(k);
    for m in moments {
        let (a, b) = m?;
        ztz += a;
        zty += b;
    }
    ztz /= draws as f64;
    zty /= draws as f64;
    let solution = ztz.clone().lu().solve(&zty).ok_or(Error::Numerical {
        context: "averaged moment matrix",
        iterations: draws,
    })?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            context: "averaged moment matrix",
            iterations: draws,
        });
    }
    Ok(solution.iter().copied().collect())
}

/// Euclidean distance between two coefficient vectors.
pub fn coefficient_distance(a: &[f64], b: &[f64]) -> f64 {
    linalg::sqrt(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
}
