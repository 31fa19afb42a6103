//! Principal-subspace recovery from a corrupted view.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corrupt::{complement, CorruptedView, Payload};
use crate::error::{dimension, validation, Error, Result};
use crate::linalg::{self, Matrix, TruncatedFactorization, Vector};
use crate::netgen::row_normalize;

/// Spectrum entries below this are floored (and counted).
pub const SPECTRUM_FLOOR: f64 = 1e-12;
/// Relative cutoff for the pseudoinverse of the ego block.
pub const PINV_TOLERANCE: f64 = 1e-8;
pub const IMPUTE_TOLERANCE: f64 = 1e-6;
pub const IMPUTE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    /// Spectrum entries raised to [`SPECTRUM_FLOOR`].
    pub floored: usize,
    /// Outer iterations of matrix completion, when it ran.
    pub impute_iterations: Option<usize>,
    /// False when completion hit its iteration cap.
    pub converged: bool,
}

/// Estimated rank-k principal subspace and the quantities built from it.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// `n x k`, orthonormal columns.
    pub basis: Matrix,
    /// Nonincreasing, at least [`SPECTRUM_FLOOR`].
    pub spectrum: Vector,
    /// `basis * diag(sqrt(spectrum))`.
    pub embedding: Matrix,
    /// `embedding * embedding^T`.
    pub smoothed_adjacency: Matrix,
    /// Degree normalization of `smoothed_adjacency`.
    pub smoothed_operator: Matrix,
    pub diagnostics: RecoveryDiagnostics,
}

impl SubspaceEstimate {
    pub fn from_parts(
        basis: Matrix,
        spectrum: Vector,
        mut diagnostics: RecoveryDiagnostics,
    ) -> Result<Self> {
        if basis.ncols() != spectrum.len() {
            return Err(dimension("basis and spectrum sizes differ"));
        }
        let mut spectrum = spectrum;
        for s in spectrum.iter_mut() {
            if !s.is_finite() {
                return Err(Error::Numerical {
                    context: "non-finite spectrum",
                    iterations: 0,
                });
            }
            if *s < SPECTRUM_FLOOR {
                *s = SPECTRUM_FLOOR;
                diagnostics.floored += 1;
            }
        }
        let mut embedding = basis.clone();
        for (mut col, s) in embedding.column_iter_mut().zip(spectrum.iter()) {
            col *= linalg::sqrt(*s);
        }
        let smoothed_adjacency = &embedding * embedding.transpose();
        let smoothed_operator = row_normalize(&smoothed_adjacency);
        Ok(SubspaceEstimate {
            basis,
            spectrum,
            embedding,
            smoothed_adjacency,
            smoothed_operator,
            diagnostics,
        })
    }

    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }
}

fn from_factorization(
    f: TruncatedFactorization,
    diagnostics: RecoveryDiagnostics,
) -> Result<SubspaceEstimate> {
    SubspaceEstimate::from_parts(f.left_vectors, f.singular_values, diagnostics)
}

fn converged() -> RecoveryDiagnostics {
    RecoveryDiagnostics {
        converged: true,
        ..RecoveryDiagnostics::default()
    }
}

/// Recovers a rank-`rank` subspace using the estimator matched to the view.
pub fn recover_subspace(view: &CorruptedView, rank: usize) -> Result<SubspaceEstimate> {
    let n = view.n();
    if rank == 0 || rank > n {
        return Err(dimension(format!("rank {rank} outside 1..={n}")));
    }
    match &view.payload {
        Payload::Dense(a) => from_factorization(linalg::truncated_svd(a, rank)?, converged()),
        Payload::Masked { values, mask } => impute(values, mask, rank),
        Payload::Aggregated { aggregated, traits } => from_aggregates(aggregated, traits, rank),
        Payload::Egocentric {
            n,
            ego,
            ego_block,
            cross_block,
        } => from_egocentric(*n, ego, ego_block, cross_block, rank),
    }
}

/// Hard-impute: fill unobserved entries with the observed mean, then
/// alternate rank-k projection and re-imposing the observed entries.
fn impute(
    values: &Matrix,
    mask: &nalgebra::DMatrix<bool>,
    rank: usize,
) -> Result<SubspaceEstimate> {
    if mask.shape() != values.shape() {
        return Err(dimension("mask shape differs from values"));
    }
    let observed = mask.iter().filter(|m| **m).count();
    if observed == 0 {
        return Err(validation("no observed entries"));
    }
    let mean = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / observed as f64;
    let mut current = values.clone();
    for (v, m) in current.iter_mut().zip(mask.iter()) {
        if !*m {
            *v = mean;
        }
    }
    let mut warm: Option<Matrix> = None;
    let mut diagnostics = RecoveryDiagnostics::default();
    for iteration in 1..=IMPUTE_MAX_ITER {
        let run = linalg::subspace_iteration(
            &current,
            rank,
            warm.as_ref(),
            linalg::ITERATIVE_TOLERANCE,
            linalg::ITERATIVE_MAX_ITER,
        )?;
        let low_rank = run.factorization.reconstruct();
        let low_rank = (&low_rank + low_rank.transpose()) * 0.5;
        warm = Some(run.basis);
        let mut change = 0.0;
        for ((c, (v, m)), l) in current
            .iter_mut()
            .zip(values.iter().zip(mask.iter()))
            .zip(low_rank.iter())
        {
            let next = if *m { *v } else { *l };
            change += (next - *c) * (next - *c);
            *c = next;
        }
        let scale = linalg::frobenius_norm(&current).max(f64::MIN_POSITIVE);
        diagnostics.impute_iterations = Some(iteration);
        if linalg::sqrt(change) / scale < IMPUTE_TOLERANCE {
            diagnostics.converged = true;
            break;
        }
    }
    let run = linalg::subspace_iteration(
        &current,
        rank,
        warm.as_ref(),
        linalg::ITERATIVE_TOLERANCE,
        linalg::ITERATIVE_MAX_ITER,
    )?;
    from_factorization(run.factorization, diagnostics)
}

/// Subspace from `A W` and `W`: `U_bar` spans the top left singular vectors
/// of `A W`, and the `k x k` core
/// `S = U_bar^T (A W) W^T U_bar (U_bar^T W W^T U_bar)^{-1}`
/// is symmetrized and diagonalized to rotate `U_bar`.
fn from_aggregates(aggregated: &Matrix, traits: &Matrix, rank: usize) -> Result<SubspaceEstimate> {
    if aggregated.shape() != traits.shape() {
        return Err(dimension("aggregates and traits differ in shape"));
    }
    if rank > traits.ncols() {
        return Err(dimension(format!(
            "rank {rank} exceeds the {} observed traits",
            traits.ncols()
        )));
    }
    let u_bar = linalg::truncated_svd_general(aggregated, rank)?.left_vectors;
    let ut_w = u_bar.transpose() * traits;
    let ut_aw = u_bar.transpose() * aggregated;
    let numerator = &ut_aw * ut_w.transpose();
    let gram = &ut_w * ut_w.transpose();
    if linalg::numerical_rank(&gram, linalg::RANK_TOLERANCE) < rank {
        return Err(Error::RankDeficient {
            rank: linalg::numerical_rank(&gram, linalg::RANK_TOLERANCE),
            required: rank,
        });
    }
    let gram_inv = gram.try_inverse().ok_or(Error::Numerical {
        context: "trait Gram inverse",
        iterations: 0,
    })?;
    let core = numerator * gram_inv;
    let core = (&core + core.transpose()) * 0.5;
    let eig = core.symmetric_eigen();
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut rotation = Matrix::zeros(rank, rank);
    let mut spectrum = Vector::zeros(rank);
    for (c, &i) in order.iter().enumerate() {
        rotation.set_column(c, &eig.eigenvectors.column(i));
        spectrum[c] = eig.eigenvalues[i];
    }
    SubspaceEstimate::from_parts(u_bar * rotation, spectrum, converged())
}

/// Completes the adjacency from the ego rows: the ego-ego and ego-alter
/// blocks come from a rank-k fit of `[A11 A12]`, and the alter-alter block
/// is `A12^T pinv(A11_k) A12` where `A11_k` is the rank-k part of `A11`.
fn from_egocentric(
    n: usize,
    ego: &[usize],
    ego_block: &Matrix,
    cross_block: &Matrix,
    rank: usize,
) -> Result<SubspaceEstimate> {
    let m = ego.len();
    if m < rank {
        return Err(Error::RankDeficient {
            rank: m,
            required: rank,
        });
    }
    if ego_block.shape() != (m, m) || cross_block.shape() != (m, n - m) {
        return Err(dimension("egocentric blocks do not match the ego set"));
    }
    let alters = complement(n, ego);
    let core = linalg::truncated_svd(ego_block, rank)?;
    let top = core.singular_values.get(0).copied().unwrap_or(0.0);
    let mut pinv = Matrix::zeros(m, m);
    for c in 0..rank {
        let s = core.singular_values[c];
        if s > PINV_TOLERANCE * top && s > 0.0 {
            pinv += core.right_vectors.column(c) * core.left_vectors.column(c).transpose() / s;
        }
    }
    let alter_block = cross_block.transpose() * pinv * cross_block;

    let rows = linalg::hstack(m, &[ego_block, cross_block])?;
    let fit = linalg::truncated_svd_general(&rows, rank)?.reconstruct();
    let mut full = Matrix::zeros(n, n);
    for (r, &i) in ego.iter().enumerate() {
        for (c, &j) in ego.iter().enumerate() {
            full[(i, j)] = 0.5 * (fit[(r, c)] + fit[(c, r)]);
        }
        for (c, &j) in alters.iter().enumerate() {
            full[(i, j)] = fit[(r, m + c)];
            full[(j, i)] = fit[(r, m + c)];
        }
    }
    for (r, &i) in alters.iter().enumerate() {
        for (c, &j) in alters.iter().enumerate() {
            full[(i, j)] = 0.5 * (alter_block[(r, c)] + alter_block[(c, r)]);
        }
    }
    from_factorization(linalg::truncated_svd(&full, rank)?, converged())
}
