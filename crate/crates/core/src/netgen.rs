//! Latent structure and realized networks.
//!
//! Networks come from a Poisson degree-corrected stochastic blockmodel:
//! node `i` has block `z_i` and propensity `xi_i`, and the expected edge
//! weight between `i` and `j` is `rho * xi_i * B[z_i, z_j] * xi_j`. That
//! expectation is a rank-`d` PSD matrix, so it factors as `X X^T` and the
//! rows of `X` serve as latent positions.
//!
//! Degrees and averaging operators exclude the diagonal throughout: the
//! operator built from any adjacency has a zero diagonal, and every row with
//! positive degree sums to one. Rows with no positive degree are zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, validation, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng;

/// Retries allowed when a sampled configuration leaves a node with zero
/// expected degree, or a sampled block matrix fails to be PSD.
pub const MAX_RESAMPLES: usize = 100;

/// Per-node degree-correction propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeCorrection {
    /// Explicit positive values, one per node.
    Fixed(Vec<f64>),
    /// `shift + Exponential(rate)`.
    ShiftedExponential { rate: f64, shift: f64 },
}

impl Default for DegreeCorrection {
    fn default() -> Self {
        DegreeCorrection::ShiftedExponential {
            rate: 1.0 / 3.0,
            shift: 1.0,
        }
    }
}

/// How the overall edge density is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Explicit scaling factor `rho` in (0, 1].
    Rho(f64),
    /// Target mean expected degree.
    MeanDegree(f64),
    /// Target mean expected degree `n^exponent`.
    DegreeExponent(f64),
}

impl Sparsity {
    pub fn target_mean_degree(&self, n: usize) -> Option<f64> {
        match *self {
            Sparsity::Rho(_) => None,
            Sparsity::MeanDegree(m) => Some(m),
            Sparsity::DegreeExponent(e) => Some(libm::pow(n as f64, e)),
        }
    }
}

/// Block matrix source: explicit, or sampled with an assortative pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMatrixSpec {
    Explicit(Vec<Vec<f64>>),
    /// Diagonal entries uniform on `diag`, off-diagonal uniform on `off`.
    Assortative {
        diag: (f64, f64),
        off: (f64, f64),
    },
}

impl Default for BlockMatrixSpec {
    fn default() -> Self {
        BlockMatrixSpec::Assortative {
            diag: (0.75, 0.85),
            off: (0.01, 0.05),
        }
    }
}

impl BlockMatrixSpec {
    /// Resolves to a concrete `d x d` symmetric PSD matrix. Sampled
    /// matrices that fail the PSD check are redrawn.
    pub fn resolve(&self, num_blocks: usize, seed: u64) -> Result<Matrix> {
        match self {
            BlockMatrixSpec::Explicit(rows) => {
                let b = matrix_from_rows(rows)?;
                if b.nrows() != num_blocks {
                    return Err(dimension(format!(
                        "block matrix is {}x{} but {num_blocks} blocks were requested",
                        b.nrows(),
                        b.ncols()
                    )));
                }
                validate_block_matrix(&b)?;
                Ok(b)
            }
            BlockMatrixSpec::Assortative { diag, off } => {
                check_range(*diag, "diagonal range")?;
                check_range(*off, "off-diagonal range")?;
                let mut gen = rng::stream(seed, "block-matrix");
                for _ in 0..MAX_RESAMPLES {
                    let mut b = Matrix::zeros(num_blocks, num_blocks);
                    for i in 0..num_blocks {
                        for j in i..num_blocks {
                            let v = if i == j {
                                sample_uniform(&mut gen, *diag)
                            } else {
                                sample_uniform(&mut gen, *off)
                            };
                            b[(i, j)] = v;
                            b[(j, i)] = v;
                        }
                    }
                    if validate_block_matrix(&b).is_ok() {
                        return Ok(b);
                    }
                }
                Err(validation(
                    "could not sample a positive semidefinite block matrix",
                ))
            }
        }
    }
}

fn check_range((lo, hi): (f64, f64), what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(validation(format!(
            "{what} ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"
        )));
    }
    Ok(())
}

fn sample_uniform<R: Rng>(gen: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new(lo, hi).map(|u| u.sample(gen)).unwrap_or(lo)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(dimension("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn validate_block_matrix(b: &Matrix) -> Result<()> {
    if !b.is_square() || b.nrows() == 0 {
        return Err(dimension("block matrix must be square and nonempty"));
    }
    if !linalg::is_symmetric(b, 1e-12) {
        return Err(validation("block matrix must be symmetric"));
    }
    if b.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(validation("block matrix entries must lie in [0, 1]"));
    }
    let min_eig = b.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-12 {
        return Err(validation(format!(
            "block matrix is not positive semidefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// Degree-corrected blockmodel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcsbmParams {
    pub n: usize,
    /// Block probabilities, summing to one.
    pub block_probs: Vec<f64>,
    /// Symmetric PSD block matrix with entries in [0, 1].
    pub block_matrix: Vec<Vec<f64>>,
    pub degree_correction: DegreeCorrection,
    pub sparsity: Sparsity,
    /// Fixed block memberships; drawn from `block_probs` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memberships: Option<Vec<usize>>,
}

impl DcsbmParams {
    /// Equal-probability blocks with a block matrix drawn from `spec`.
    pub fn equal_blocks(
        n: usize,
        num_blocks: usize,
        spec: &BlockMatrixSpec,
        degree_correction: DegreeCorrection,
        sparsity: Sparsity,
        seed: u64,
    ) -> Result<Self> {
        if num_blocks == 0 {
            return Err(validation("need at least one block"));
        }
        let b = spec.resolve(num_blocks, seed)?;
        Ok(DcsbmParams {
            n,
            block_probs: vec![1.0 / num_blocks as f64; num_blocks],
            block_matrix: matrix_to_rows(&b),
            degree_correction,
            sparsity,
            memberships: None,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.block_probs.len()
    }

    fn validate(&self) -> Result<Matrix> {
        if self.n == 0 {
            return Err(validation("network needs at least one node"));
        }
        let d = self.num_blocks();
        if d == 0 {
            return Err(validation("need at least one block"));
        }
        if self.block_probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(validation("block probabilities must be nonnegative"));
        }
        let total: f64 = self.block_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(validation(format!(
                "block probabilities sum to {total}, not 1"
            )));
        }
        let b = matrix_from_rows(&self.block_matrix)?;
        if b.nrows() != d || b.ncols() != d {
            return Err(dimension(format!(
                "block matrix is {}x{} for {d} blocks",
                b.nrows(),
                b.ncols()
            )));
        }
        validate_block_matrix(&b)?;
        match &self.degree_correction {
            DegreeCorrection::Fixed(xi) => {
                if xi.len() != self.n {
                    return Err(dimension(format!(
                        "{} degree corrections for {} nodes",
                        xi.len(),
                        self.n
                    )));
                }
                if xi.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(validation("degree corrections must be positive"));
                }
            }
            DegreeCorrection::ShiftedExponential { rate, shift } => {
                if !(*rate > 0.0) || !(*shift > 0.0) {
                    return Err(validation(
                        "shifted exponential needs positive rate and shift",
                    ));
                }
            }
        }
        if let Some(z) = &self.memberships {
            if z.len() != self.n || z.iter().any(|&k| k >= d) {
                return Err(validation("memberships must list one valid block per node"));
            }
        }
        match self.sparsity {
            Sparsity::Rho(r) if !(r > 0.0 && r <= 1.0) => {
                return Err(validation(format!("rho = {r} outside (0, 1]")))
            }
            Sparsity::MeanDegree(m) if !(m > 0.0) => {
                return Err(validation("mean degree must be positive"))
            }
            Sparsity::DegreeExponent(e) if !(e > 0.0 && e <= 1.0) => {
                return Err(validation("degree exponent must lie in (0, 1]"))
            }
            _ => {}
        }
        Ok(b)
    }
}

/// Latent positions and the expected network they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentNetwork {
    /// `n x d` latent positions `X = U S^{1/2}`.
    pub latent_positions: Matrix,
    /// `X X^T`, diagonal included.
    pub expected_adjacency: Matrix,
    /// Off-diagonal row sums of the expected adjacency.
    pub expected_degrees: Vector,
    /// Row-normalized expected adjacency with zero diagonal.
    pub latent_operator: Matrix,
    pub memberships: Vec<usize>,
    pub degree_correction: Vec<f64>,
    pub rho: f64,
}

impl LatentNetwork {
    /// Latent network induced by arbitrary positions (random dot product
    /// graph). Fails if any node has nonpositive expected degree.
    pub fn from_positions(latent_positions: Matrix) -> Result<Self> {
        let expected_adjacency = &latent_positions * latent_positions.transpose();
        let expected_degrees = off_diagonal_row_sums(&expected_adjacency);
        if expected_degrees.iter().any(|d| !(*d > 0.0)) {
            return Err(validation(
                "latent positions give a node nonpositive expected degree",
            ));
        }
        let latent_operator = row_normalize(&expected_adjacency);
        Ok(LatentNetwork {
            latent_positions,
            expected_adjacency,
            expected_degrees,
            latent_operator,
            memberships: Vec::new(),
            degree_correction: Vec::new(),
            rho: 1.0,
        })
    }

    pub fn n(&self) -> usize {
        self.latent_positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.latent_positions.ncols()
    }
}

/// A realized (or observed) undirected network.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedNetwork {
    /// Symmetric, zero diagonal.
    pub adjacency: Matrix,
    pub degrees: Vector,
    pub operator: Matrix,
}

impl ObservedNetwork {
    /// Wraps a symmetric adjacency; the diagonal is discarded.
    pub fn from_adjacency(mut adjacency: Matrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(dimension("adjacency must be square"));
        }
        if !linalg::is_symmetric(&adjacency, 1e-12) {
            return Err(validation("adjacency must be symmetric"));
        }
        adjacency.fill_diagonal(0.0);
        let degrees = off_diagonal_row_sums(&adjacency);
        let operator = row_normalize(&adjacency);
        Ok(ObservedNetwork {
            adjacency,
            degrees,
            operator,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }
}

/// Edge noise family around the expected adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SubgammaSpec {
    #[default]
    Poisson,
    Gaussian {
        sigma: f64,
    },
    /// `Exp(rate) - 1/rate`.
    CenteredExponential {
        rate: f64,
    },
    /// Edges equal their expectations.
    None,
}

impl SubgammaSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            SubgammaSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(validation("gaussian sigma must be finite and nonnegative"))
            }
            SubgammaSpec::CenteredExponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(validation("exponential rate must be positive"))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn off_diagonal_row_sums(m: &Matrix) -> Vector {
    Vector::from_fn(m.nrows(), |i, _| m.row(i).sum() - m[(i, i)])
}

/// Degree-normalizes an adjacency: `G_ij = A_ij / d_i` for `j != i`, zero
/// diagonal, and a zero row whenever `d_i = sum_{j != i} A_ij` is not
/// positive. Rows are normalized independently, so directed (row = sender)
/// adjacencies are accepted too.
pub fn row_normalize(adjacency: &Matrix) -> Matrix {
    let (n, m) = adjacency.shape();
    let mut out = adjacency.clone();
    for i in 0..n {
        let diag = if i < m { adjacency[(i, i)] } else { 0.0 };
        let degree = adjacency.row(i).sum() - diag;
        if degree > 0.0 {
            let mut row = out.row_mut(i);
            row /= degree;
            if i < m {
                row[i] = 0.0;
            }
        } else {
            out.row_mut(i).fill(0.0);
        }
    }
    out
}

/// Draws blocks and propensities, calibrates `rho`, and factors the
/// expected adjacency into latent positions.
pub fn sample_dcsbm_latents(params: &DcsbmParams, rng_seed: u64) -> Result<LatentNetwork> {
    let b = params.validate()?;
    let n = params.n;
    let d = params.num_blocks();

    let memberships = match &params.memberships {
        Some(z) => z.clone(),
        None => {
            let weights = WeightedIndex::new(&params.block_probs)
                .map_err(|_| validation("block probabilities cannot all be zero"))?;
            let mut gen = rng::stream(rng_seed, "memberships");
            (0..n).map(|_| weights.sample(&mut gen)).collect()
        }
    };

    let mut attempt = 0;
    let (xi, base_degrees) = loop {
        let xi = match &params.degree_correction {
            DegreeCorrection::Fixed(v) => v.clone(),
            DegreeCorrection::ShiftedExponential { rate, shift } => {
                let exp = Exp::new(*rate).map_err(|_| validation("invalid exponential rate"))?;
                let mut gen = rng::stream(
                    rng::derive_seed(rng_seed, &[attempt as u64]),
                    "degree-correction",
                );
                (0..n).map(|_| shift + exp.sample(&mut gen)).collect()
            }
        };
        let degrees = unit_rho_degrees(&memberships, &xi, &b, d);
        if degrees.iter().all(|v| *v > 0.0) {
            break (xi, degrees);
        }
        attempt += 1;
        if matches!(params.degree_correction, DegreeCorrection::Fixed(_))
            || attempt >= MAX_RESAMPLES
        {
            return Err(validation(format!(
                "a node has zero expected degree after {attempt} degree-correction draws"
            )));
        }
    };

    let rho = match params.sparsity {
        Sparsity::Rho(r) => r,
        s => {
            let target = s.target_mean_degree(n).unwrap_or(0.0);
            let base_mean = base_degrees.iter().sum::<f64>() / n as f64;
            let rho = target / base_mean;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(validation(format!(
                    "mean degree {target} needs rho = {rho}, outside (0, 1]"
                )));
            }
            rho
        }
    };

    // Loadings M = sqrt(rho) diag(xi) Z, so that E[A] = M B M^T.
    let scale = linalg::sqrt(rho);
    let mut loadings = Matrix::zeros(n, d);
    for i in 0..n {
        loadings[(i, memberships[i])] = scale * xi[i];
    }
    let expected_adjacency = &loadings * &b * loadings.transpose();
    let expected_adjacency = (&expected_adjacency + expected_adjacency.transpose()) * 0.5;

    // Thin QR of the loadings turns the eigenproblem into a d x d one.
    let qr = loadings.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let core = &r * &b * r.transpose();
    let core = (&core + core.transpose()) * 0.5;
    let eig = core.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let mut latent_positions = Matrix::zeros(n, d);
    for (c, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let mut u = &q * eig.eigenvectors.column(idx);
        let pivot = u.iamax();
        if u[pivot] < 0.0 {
            u.neg_mut();
        }
        latent_positions.set_column(c, &(u * linalg::sqrt(lambda)));
    }

    let expected_degrees = off_diagonal_row_sums(&expected_adjacency);
    let latent_operator = row_normalize(&expected_adjacency);
    Ok(LatentNetwork {
        latent_positions,
        expected_adjacency,
        expected_degrees,
        latent_operator,
        memberships,
        degree_correction: xi,
        rho,
    })
}

/// Expected degrees at `rho = 1`, diagonal excluded.
fn unit_rho_degrees(z: &[usize], xi: &[f64], b: &Matrix, d: usize) -> Vec<f64> {
    let mut block_mass = vec![0.0; d];
    for (&k, &x) in z.iter().zip(xi) {
        block_mass[k] += x;
    }
    z.iter()
        .zip(xi)
        .map(|(&k, &x)| {
            let total: f64 = (0..d).map(|l| b[(k, l)] * block_mass[l]).sum();
            x * (total - b[(k, k)] * x)
        })
        .collect()
}

/// Draws a symmetric network around the expected adjacency.
pub fn realize_network(
    latent: &LatentNetwork,
    noise: &SubgammaSpec,
    rng_seed: u64,
) -> Result<ObservedNetwork> {
    noise.validate()?;
    let expected = &latent.expected_adjacency;
    let n = expected.nrows();
    let mut gen = rng::stream(rng_seed, "edges");
    let mut a = Matrix::zeros(n, n);
    let normal = match noise {
        SubgammaSpec::Gaussian { sigma } => {
            Some(Normal::new(0.0, *sigma).map_err(|_| validation("invalid sigma"))?)
        }
        _ => None,
    };
    let exp = match noise {
        SubgammaSpec::CenteredExponential { rate } => Some((
            Exp::new(*rate).map_err(|_| validation("invalid rate"))?,
            1.0 / rate,
        )),
        _ => None,
    };
    for j in 0..n {
        for i in 0..j {
            let mean = expected[(i, j)];
            let value = match noise {
                SubgammaSpec::Poisson => {
                    if mean < 0.0 || !mean.is_finite() {
                        return Err(validation(format!(
                            "negative Poisson rate {mean} at ({i}, {j})"
                        )));
                    }
                    if mean == 0.0 {
                        0.0
                    } else {
                        Poisson::new(mean)
                            .map_err(|_| validation(format!("invalid Poisson rate {mean}")))?
                            .sample(&mut gen)
                    }
                }
                SubgammaSpec::Gaussian { .. } => {
                    mean + normal.as_ref().map_or(0.0, |d| d.sample(&mut gen))
                }
                SubgammaSpec::CenteredExponential { .. } => {
                    let (dist, centre) = exp.as_ref().ok_or(Error::Numerical {
                        context: "exponential edge noise",
                        iterations: 0,
                    })?;
                    mean + dist.sample(&mut gen) - centre
                }
                SubgammaSpec::None => mean,
            };
            a[(i, j)] = value;
            a[(j, i)] = value;
        }
    }
    ObservedNetwork::from_adjacency(a)
}
