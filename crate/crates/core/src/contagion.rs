//! Outcome generation under peer and latent contagion, plus the rank
//! diagnostic that decides whether the contagion coefficient is identified.
//!
//! Both models share the reduced form
//! `Y = (I - c * Op)^{-1} (1 * b0 + W bw + X bx + e)`; they differ only in
//! the averaging operator `Op`: the realized `G` for peer contagion, the
//! expected `G~` for latent contagion.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Dyn;
use nalgebra::LU;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, validation, Error, Result};
use crate::linalg::{self, hstack, Matrix, Vector};
use crate::netgen::{off_diagonal_row_sums, row_normalize};
use crate::rng;

/// Which operator carries spillovers in the data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContagionKind {
    /// Spillovers over the realized network.
    Peer,
    /// Spillovers over the expected network.
    Latent,
}

impl ContagionKind {
    pub fn label(self) -> &'static str {
        match self {
            ContagionKind::Peer => "peer",
            ContagionKind::Latent => "latent",
        }
    }
}

/// Coefficients, covariates and noise level of a contagion model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionDesign {
    pub intercept: f64,
    pub covariate_coefs: Vec<f64>,
    pub latent_coefs: Vec<f64>,
    /// Must lie strictly inside (-1, 1).
    pub contagion_coef: f64,
    /// `n x p`.
    pub covariates: Matrix,
    pub error_sd: f64,
    pub kind: ContagionKind,
}

impl ContagionDesign {
    /// Coefficient vector in design order: intercept, covariates, latents,
    /// contagion.
    pub fn coefficient_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.covariate_coefs.len() + self.latent_coefs.len() + 2);
        v.push(self.intercept);
        v.extend_from_slice(&self.covariate_coefs);
        v.extend_from_slice(&self.latent_coefs);
        v.push(self.contagion_coef);
        v
    }

    fn validate(&self, n: usize, latent_dim: usize) -> Result<()> {
        if !(self.contagion_coef.abs() < 1.0) {
            return Err(validation(format!(
                "contagion coefficient {} outside (-1, 1)",
                self.contagion_coef
            )));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(validation("covariates must be finite"));
        }
        if self.covariates.ncols() != self.covariate_coefs.len() {
            return Err(dimension(format!(
                "{} covariate columns for {} coefficients",
                self.covariates.ncols(),
                self.covariate_coefs.len()
            )));
        }
        if self.covariates.ncols() > 0 && self.covariates.nrows() != n {
            return Err(dimension(format!(
                "covariates have {} rows for {n} nodes",
                self.covariates.nrows()
            )));
        }
        if latent_dim != self.latent_coefs.len() {
            return Err(dimension(format!(
                "{latent_dim} latent columns for {} coefficients",
                self.latent_coefs.len()
            )));
        }
        if !(self.error_sd >= 0.0 && self.error_sd.is_finite()) {
            return Err(validation(
                "error standard deviation must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// One draw of the outcome vector and the errors behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDraw {
    pub responses: Vector,
    pub errors: Vector,
}

/// A factored `I - c * Op` together with the systematic part of the
/// right-hand side, reusable across error draws.
pub struct OutcomeSolver {
    lu: LU<f64, Dyn, Dyn>,
    systematic: Vector,
    error_sd: f64,
}

impl OutcomeSolver {
    pub fn new(design: &ContagionDesign, operator: &Matrix, latents: &Matrix) -> Result<Self> {
        let n = operator.nrows();
        if !operator.is_square() {
            return Err(dimension("operator must be square"));
        }
        if latents.nrows() != n {
            return Err(dimension(format!(
                "latents have {} rows for {n} nodes",
                latents.nrows()
            )));
        }
        design.validate(n, latents.ncols())?;
        if (0..n).any(|i| operator.row(i).sum() > 1.0 + 1e-9) {
            return Err(validation("operator rows must sum to at most one"));
        }
        let mut systematic = Vector::from_element(n, design.intercept);
        if !design.covariate_coefs.is_empty() {
            systematic += &design.covariates * Vector::from_column_slice(&design.covariate_coefs);
        }
        if !design.latent_coefs.is_empty() {
            systematic += latents * Vector::from_column_slice(&design.latent_coefs);
        }
        let system = Matrix::identity(n, n) - operator * design.contagion_coef;
        Ok(OutcomeSolver {
            lu: system.lu(),
            systematic,
            error_sd: design.error_sd,
        })
    }

    pub fn n(&self) -> usize {
        self.systematic.len()
    }

    /// Outcomes for a given error vector.
    pub fn solve(&self, errors: &Vector) -> Result<Vector> {
        if errors.len() != self.n() {
            return Err(dimension("error vector length"));
        }
        let rhs = &self.systematic + errors;
        self.lu.solve(&rhs).ok_or(Error::Numerical {
            context: "contagion system solve",
            iterations: 0,
        })
    }

    /// Draws `N(0, sd^2)` errors from `rng_seed` and solves.
    pub fn draw(&self, rng_seed: u64) -> Result<OutcomeDraw> {
        let errors = normal_errors(self.n(), self.error_sd, rng_seed)?;
        let responses = self.solve(&errors)?;
        Ok(OutcomeDraw { responses, errors })
    }
}

fn normal_errors(n: usize, sd: f64, rng_seed: u64) -> Result<Vector> {
    let normal = Normal::new(0.0, 1.0).map_err(|_| validation("invalid normal"))?;
    let mut gen = rng::stream(rng_seed, "outcome-errors");
    Ok(Vector::from_fn(n, |_, _| sd * normal.sample(&mut gen)))
}

/// Draws outcomes satisfying `(I - c Op) Y = 1 b0 + W bw + X bx + e`.
pub fn generate_outcomes(
    design: &ContagionDesign,
    operator: &Matrix,
    latents: &Matrix,
    rng_seed: u64,
) -> Result<OutcomeDraw> {
    OutcomeSolver::new(design, operator, latents)?.draw(rng_seed)
}

/// Spillover weights proportional to latent inner products:
/// row-normalized `X X^T` with a zero diagonal.
pub fn cosine_influence_weights(latents: &Matrix) -> Result<Matrix> {
    let gram = latents * latents.transpose();
    let sums = off_diagonal_row_sums(&gram);
    if let Some(i) = sums.iter().position(|s| !(*s > 0.0)) {
        return Err(validation(format!(
            "node {i} has nonpositive total latent affinity"
        )));
    }
    Ok(row_normalize(&gram))
}

/// Outcome of the rank test for identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationDiagnostic {
    pub identified: bool,
    /// Rank of `[1 W X Op W Op X]`.
    pub rank_full: usize,
    /// Rank of `[1 W X]`.
    pub rank_base: usize,
}

/// Identified iff spreading the exogenous columns through the operator
/// adds rank: `rank [1 W X OpW OpX] > rank [1 W X]`.
pub fn identification_check(
    covariates: &Matrix,
    latents: &Matrix,
    operator: &Matrix,
    tolerance: f64,
) -> Result<IdentificationDiagnostic> {
    let n = operator.nrows();
    let ones = Matrix::from_element(n, 1, 1.0);
    let base = hstack(n, &[&ones, covariates, latents])?;
    let op_w = operator * covariates;
    let op_x = operator * latents;
    let full = hstack(n, &[&base, &op_w, &op_x])?;
    let rank_base = linalg::numerical_rank(&base, tolerance);
    let rank_full = linalg::numerical_rank(&full, tolerance);
    Ok(IdentificationDiagnostic {
        identified: rank_full > rank_base,
        rank_full,
        rank_base,
    })
}
