//! Contagion estimates across embedding dimensions and model variants for
//! an observed network.

use std::fmt;
use std::str::FromStr;

use netsmooth_core::contagion::ContagionKind;
use netsmooth_core::estimators;
use netsmooth_core::linalg::{self, Matrix, Vector};
use netsmooth_core::netgen::row_normalize;
use serde::{Deserialize, Serialize};

/// Operator and whether the embedding enters as covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "peer-no-x")]
    PeerNoX,
    #[serde(rename = "peer-x")]
    PeerX,
    #[serde(rename = "latent-no-x")]
    LatentNoX,
    #[serde(rename = "latent-x")]
    LatentX,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::PeerNoX,
        Variant::PeerX,
        Variant::LatentNoX,
        Variant::LatentX,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::PeerNoX => "peer-no-x",
            Variant::PeerX => "peer-x",
            Variant::LatentNoX => "latent-no-x",
            Variant::LatentX => "latent-x",
        }
    }

    pub fn kind(self) -> ContagionKind {
        match self {
            Variant::PeerNoX | Variant::PeerX => ContagionKind::Peer,
            Variant::LatentNoX | Variant::LatentX => ContagionKind::Latent,
        }
    }

    pub fn includes_latents(self) -> bool {
        matches!(self, Variant::PeerX | Variant::LatentX)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of peer-no-x, peer-x, latent-no-x, latent-x"))
    }
}

/// Aligned network, covariates and outcome.
#[derive(Debug, Clone)]
pub struct MultiverseInput {
    /// Row `i` holds the edges sent by node `i`.
    pub adjacency: Matrix,
    pub covariates: Matrix,
    pub outcome: Vector,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiverseRow {
    pub d: usize,
    pub variant: Variant,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct MultiverseOutput {
    pub rows: Vec<MultiverseRow>,
    /// Largest dimension actually used.
    pub d_max: usize,
    pub warnings: Vec<String>,
}

/// Embedding `n x d_max` whose leading `d` columns are the rank-`d`
/// embedding: the adjacency spectral embedding for undirected input, the
/// right co-embedding `V S^{1/2}` for directed input.
fn embedding(adjacency: &Matrix, directed: bool, d_max: usize) -> netsmooth_core::Result<Matrix> {
    let f = if directed {
        linalg::truncated_svd_general(adjacency, d_max)?
    } else {
        linalg::truncated_svd(adjacency, d_max)?
    };
    let mut x = if directed {
        f.right_vectors
    } else {
        f.left_vectors
    };
    for (mut col, s) in x.column_iter_mut().zip(f.singular_values.iter()) {
        col *= s.max(0.0).sqrt();
    }
    Ok(x)
}

/// Fits every variant for each `d` in `d_min..=d_max`. Dimensions beyond
/// the numerical rank of the adjacency are dropped with a warning; fits
/// that fail are kept as rows flagged `failed`.
pub fn run_multiverse(
    input: &MultiverseInput,
    d_min: usize,
    d_max: usize,
    variants: &[Variant],
) -> anyhow::Result<MultiverseOutput> {
    let n = input.outcome.len();
    anyhow::ensure!(
        input.adjacency.shape() == (n, n),
        "adjacency does not match outcome length"
    );
    anyhow::ensure!(
        input.covariates.nrows() == n,
        "covariates do not match outcome length"
    );
    anyhow::ensure!(d_min >= 1 && d_min <= d_max, "need 1 <= d_min <= d_max");
    if !input.directed {
        anyhow::ensure!(
            linalg::is_symmetric(&input.adjacency, 1e-10),
            "undirected analysis needs a symmetric adjacency"
        );
    }
    let mut warnings = Vec::new();
    let rank = linalg::numerical_rank(&input.adjacency, linalg::RANK_TOLERANCE);
    let mut top = d_max;
    if top > rank {
        let msg = format!("d_max {d_max} exceeds the adjacency rank {rank}; truncating");
        log::warn!("{msg}");
        warnings.push(msg);
        top = rank;
    }
    let mut rows = Vec::new();
    if top < d_min {
        return Ok(MultiverseOutput {
            rows,
            d_max: top,
            warnings,
        });
    }
    let x_full = embedding(&input.adjacency, input.directed, top)?;
    let peer_operator = row_normalize(&input.adjacency);
    for d in d_min..=top {
        let x = x_full.columns(0, d).into_owned();
        let smoothed = row_normalize(&(&x * x.transpose()));
        for &variant in variants {
            let operator = match variant.kind() {
                ContagionKind::Peer => &peer_operator,
                ContagionKind::Latent => &smoothed,
            };
            let fit = estimators::fit(
                &input.outcome,
                &input.covariates,
                &x,
                operator,
                variant.includes_latents(),
                variant.kind(),
            );
            let row = match fit {
                Ok(f) => {
                    let estimate = f.coefficient(estimators::CONTAGION).unwrap_or(f64::NAN);
                    let [lo, hi] = f.interval(estimators::CONTAGION).unwrap_or([f64::NAN; 2]);
                    MultiverseRow {
                        d,
                        variant,
                        estimate,
                        std_error: f.standard_error(estimators::CONTAGION).unwrap_or(f64::NAN),
                        ci_lower: lo,
                        ci_upper: hi,
                        failed: false,
                    }
                }
                Err(e) => {
                    log::warn!("d={d} {variant}: {e}");
                    MultiverseRow {
                        d,
                        variant,
                        estimate: f64::NAN,
                        std_error: f64::NAN,
                        ci_lower: f64::NAN,
                        ci_upper: f64::NAN,
                        failed: true,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(MultiverseOutput {
        rows,
        d_max: top,
        warnings,
    })
}

pub const MULTIVERSE_HEADER: [&str; 7] = [
    "d",
    "variant",
    "estimate",
    "std_error",
    "ci_lower",
    "ci_upper",
    "failed",
];

pub fn write_multiverse<W: std::io::Write>(rows: &[MultiverseRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(MULTIVERSE_HEADER)?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.variant.label().to_string(),
            r.estimate.to_string(),
            r.std_error.to_string(),
            r.ci_lower.to_string(),
            r.ci_upper.to_string(),
            r.failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
