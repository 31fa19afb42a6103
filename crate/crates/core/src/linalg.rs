//! Dense kernels: truncated spectral factorizations, least squares,
//! numerical rank and orthogonal Procrustes alignment.
//!
//! Singular vectors follow a fixed sign convention: the largest-magnitude
//! entry of every left singular vector is positive (first such entry on
//! ties). Right vectors are flipped to match, so fixtures reproduce exactly.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dimension, validation, Error, Result};
use crate::rng;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold (to the largest singular value) below which a
/// singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Largest order solved with a full symmetric eigendecomposition; larger
/// matrices go through block subspace iteration.
pub const FULL_EIGEN_MAX_N: usize = 2000;

/// Residual tolerance of the iterative eigensolver, relative to the top
/// eigenvalue magnitude.
pub const ITERATIVE_TOLERANCE: f64 = 1e-10;

pub const ITERATIVE_MAX_ITER: usize = 1000;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Rank-k factorization `left * diag(singular_values) * right^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFactorization {
    pub left_vectors: Matrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vector,
    pub right_vectors: Matrix,
}

impl TruncatedFactorization {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U S V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.left_vectors.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(self.singular_values.iter()) {
            col *= *s;
        }
        scaled * self.right_vectors.transpose()
    }
}

/// Orthogonal alignment of one point cloud onto another.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    pub rotation: Matrix,
    /// `||source * rotation - target||_F`.
    pub residual: f64,
}

/// Output of [`subspace_iteration`], including the full iterated block so
/// callers can warm-start a later solve.
#[derive(Debug, Clone)]
pub struct SubspaceRun {
    pub factorization: TruncatedFactorization,
    pub basis: Matrix,
    pub iterations: usize,
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.norm()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    let n = m.nrows();
    (0..n).all(|i| (i + 1..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(dimension(alloc::format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, SYMMETRY_TOLERANCE) {
        return Err(validation("matrix is not symmetric"));
    }
    Ok(())
}

/// Concatenates blocks side by side. Every block needs `rows` rows; empty
/// blocks (zero columns) are allowed.
pub fn hstack(rows: usize, blocks: &[&Matrix]) -> Result<Matrix> {
    if let Some(bad) = blocks.iter().find(|b| b.nrows() != rows && b.ncols() > 0) {
        return Err(dimension(alloc::format!(
            "block with {} rows stacked against {rows}",
            bad.nrows()
        )));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.ncols() > 0 {
            out.columns_mut(at, b.ncols()).copy_from(b);
            at += b.ncols();
        }
    }
    Ok(out)
}

/// Index of the first entry of maximal magnitude.
fn argmax_abs(v: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v.enumerate() {
        match best {
            Some((_, b)) if x.abs() <= b => {}
            _ => best = Some((i, x.abs())),
        }
    }
    best.map(|(i, _)| i)
}

/// Flips columns of `left` (and the matching columns of `right`) so that the
/// largest-magnitude entry of each left column is positive.
fn apply_sign_convention(left: &mut Matrix, right: &mut Matrix) {
    for j in 0..left.ncols() {
        if let Some(i) = argmax_abs(left.column(j).iter().copied()) {
            if left[(i, j)] < 0.0 {
                left.column_mut(j).neg_mut();
                right.column_mut(j).neg_mut();
            }
        }
    }
}

/// Orders eigenpairs by decreasing magnitude (ties broken by larger value,
/// then original index) and returns the first `k` indices.
fn top_by_magnitude(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(values[b].total_cmp(&values[a]))
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Builds the SVD view of selected symmetric eigenpairs.
fn factorization_from_eigenpairs(
    vectors: &Matrix,
    values: &[f64],
    order: &[usize],
) -> TruncatedFactorization {
    let n = vectors.nrows();
    let k = order.len();
    let mut left = Matrix::zeros(n, k);
    let mut right = Matrix::zeros(n, k);
    let mut sv = Vector::zeros(k);
    for (c, &idx) in order.iter().enumerate() {
        let lambda = values[idx];
        left.set_column(c, &vectors.column(idx));
        if lambda < 0.0 {
            right.set_column(c, &(-vectors.column(idx)));
        } else {
            right.set_column(c, &vectors.column(idx));
        }
        sv[c] = lambda.abs();
    }
    apply_sign_convention(&mut left, &mut right);
    TruncatedFactorization {
        left_vectors: left,
        singular_values: sv,
        right_vectors: right,
    }
}

/// Top-`rank` singular triplets of a symmetric matrix.
///
/// For symmetric input the singular values are the eigenvalue magnitudes;
/// a right vector equals its left vector times the eigenvalue's sign.
pub fn truncated_svd(matrix: &Matrix, rank: usize) -> Result<TruncatedFactorization> {
    check_symmetric(matrix)?;
    let n = matrix.nrows();
    if rank == 0 || rank > n {
        return Err(dimension(alloc::format!("rank {rank} outside 1..={n}")));
    }
    if n <= FULL_EIGEN_MAX_N {
        full_truncated_svd(matrix, rank)
    } else {
        subspace_iteration(matrix, rank, None, ITERATIVE_TOLERANCE, ITERATIVE_MAX_ITER)
            .map(|run| run.factorization)
    }
}

pub(crate) fn full_truncated_svd(matrix: &Matrix, rank: usize) -> Result<TruncatedFactorization> {
    const MAX_SWEEPS: usize = 100_000;
    let eig = matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::Numerical {
            context: "symmetric eigendecomposition",
            iterations: MAX_SWEEPS,
        })?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = top_by_magnitude(&values, rank);
    Ok(factorization_from_eigenpairs(
        &eig.eigenvectors,
        &values,
        &order,
    ))
}

/// Orthonormal basis for the column space of `m` (thin QR).
pub fn orthonormalize(m: &Matrix) -> Matrix {
    m.clone().qr().q()
}

/// Block subspace iteration with Rayleigh-Ritz extraction for the
/// top-`rank` eigenpairs (by magnitude) of a symmetric matrix.
///
/// `start` seeds the block; missing columns are filled deterministically.
/// Converges when every wanted Ritz pair has residual at most
/// `tol * |lambda_1|`.
pub fn subspace_iteration(
    matrix: &Matrix,
    rank: usize,
    start: Option<&Matrix>,
    tol: f64,
    max_iter: usize,
) -> Result<SubspaceRun> {
    check_symmetric(matrix)?;
    let n = matrix.nrows();
    if rank == 0 || rank > n {
        return Err(dimension(alloc::format!("rank {rank} outside 1..={n}")));
    }
    let block = n.min(2 * rank + 8);
    let mut q = Matrix::zeros(n, block);
    let mut filled = 0;
    if let Some(s) = start {
        if s.nrows() != n {
            return Err(dimension("warm-start block has the wrong row count"));
        }
        filled = s.ncols().min(block);
        q.columns_mut(0, filled).copy_from(&s.columns(0, filled));
    }
    let mut gen = rng::stream(0x5eed, "subspace-start");
    for j in filled..block {
        for i in 0..n {
            q[(i, j)] = StandardNormal.sample(&mut gen);
        }
    }
    q = orthonormalize(&q);

    for iteration in 1..=max_iter {
        let w = matrix * &q;
        let mut t = q.transpose() * &w;
        t = (&t + t.transpose()) * 0.5;
        let eig = t.symmetric_eigen();
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let order = top_by_magnitude(&values, block);
        let mut rotation = Matrix::zeros(block, block);
        for (c, &idx) in order.iter().enumerate() {
            rotation.set_column(c, &eig.eigenvectors.column(idx));
        }
        let ritz = &q * &rotation;
        let image = &w * &rotation;
        let scale = values[order[0]].abs();
        let converged = (0..rank).all(|c| {
            let lambda = values[order[c]];
            let resid = (image.column(c) - ritz.column(c) * lambda).norm();
            resid <= tol * scale || scale == 0.0
        });
        if converged {
            let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let ids: Vec<usize> = (0..rank).collect();
            let factorization = factorization_from_eigenpairs(&ritz, &sorted, &ids);
            return Ok(SubspaceRun {
                factorization,
                basis: ritz,
                iterations: iteration,
            });
        }
        q = orthonormalize(&image);
    }
    Err(Error::Numerical {
        context: "subspace iteration",
        iterations: max_iter,
    })
}

/// Top-`rank` singular triplets of an arbitrary (rectangular) matrix.
pub fn truncated_svd_general(matrix: &Matrix, rank: usize) -> Result<TruncatedFactorization> {
    let (r, c) = matrix.shape();
    let full = r.min(c);
    if rank == 0 || rank > full {
        return Err(dimension(alloc::format!("rank {rank} outside 1..={full}")));
    }
    const MAX_SWEEPS: usize = 100_000;
    let svd = matrix
        .clone()
        .try_svd(true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::Numerical {
            context: "singular value decomposition",
            iterations: MAX_SWEEPS,
        })?;
    let u = svd.u.as_ref().ok_or(Error::Numerical {
        context: "singular value decomposition",
        iterations: 0,
    })?;
    let v_t = svd.v_t.as_ref().ok_or(Error::Numerical {
        context: "singular value decomposition",
        iterations: 0,
    })?;
    let values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let order = top_by_magnitude(&values, rank);
    let mut left = Matrix::zeros(r, rank);
    let mut right = Matrix::zeros(c, rank);
    let mut sv = Vector::zeros(rank);
    for (k, &idx) in order.iter().enumerate() {
        left.set_column(k, &u.column(idx));
        right.set_column(k, &v_t.row(idx).transpose());
        sv[k] = values[idx];
    }
    apply_sign_convention(&mut left, &mut right);
    Ok(TruncatedFactorization {
        left_vectors: left,
        singular_values: sv,
        right_vectors: right,
    })
}

/// Singular values of `matrix`, in decreasing order.
pub fn singular_values(matrix: &Matrix) -> Vec<f64> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = matrix.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tolerance` times the largest one.
pub fn numerical_rank(matrix: &Matrix, tolerance: f64) -> usize {
    let s = singular_values(matrix);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > tolerance * top).count(),
        _ => 0,
    }
}

/// Ratio of the extreme singular values (infinite when singular).
pub fn condition_number(matrix: &Matrix) -> f64 {
    let s = singular_values(matrix);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// `argmin_b ||design * b - response||_2` through a Householder QR.
pub fn solve_least_squares(design: &Matrix, response: &Vector) -> Result<Vector> {
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(dimension(alloc::format!(
            "design has {n} rows but response has {}",
            response.len()
        )));
    }
    if k == 0 {
        return Ok(Vector::zeros(0));
    }
    if n < k {
        return Err(dimension(alloc::format!(
            "{n} observations for {k} unknowns"
        )));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let rank = numerical_rank(&r, RANK_TOLERANCE);
    if rank < k {
        return Err(Error::RankDeficient { rank, required: k });
    }
    let mut qty = response.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { rank, required: k })
}

/// Orthogonal `Q` minimizing `||source * Q - target||_F`.
pub fn procrustes_align(source: &Matrix, target: &Matrix) -> Result<ProcrustesResult> {
    if source.shape() != target.shape() {
        return Err(dimension(alloc::format!(
            "source is {}x{} but target is {}x{}",
            source.nrows(),
            source.ncols(),
            target.nrows(),
            target.ncols()
        )));
    }
    if source.ncols() == 0 {
        return Err(dimension("Procrustes alignment needs at least one column"));
    }
    let cross = source.transpose() * target;
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::Numerical {
                context: "Procrustes SVD",
                iterations: 0,
            })
        }
    };
    let rotation = u * v_t;
    let residual = (source * &rotation - target).norm();
    Ok(ProcrustesResult { rotation, residual })
}
