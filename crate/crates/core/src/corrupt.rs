//! Measurement-error processes applied to an observed network.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, validation, Result};
use crate::linalg::{self, Matrix};
use crate::netgen::ObservedNetwork;
use crate::rng;

/// A corruption process and its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    /// Network observed exactly.
    Baseline,
    /// Symmetric `N(0, sigma^2)` noise added off the diagonal.
    Gaussian { sigma: f64 },
    /// Each unordered pair missing independently with this probability.
    Missing { fraction: f64 },
    /// Only `A W` is observed, for traits `W` correlated with the latent
    /// positions.
    Ard { trait_correlation: f64 },
    /// Only edges incident to a random ego set are observed.
    Egocentric { ego_fraction: f64 },
    /// Each node keeps at most `d_max` incident edges.
    DegreeCapped { d_max: usize },
    /// This fraction of edges swap values with random differing slots.
    EdgeFlipped { fraction: f64 },
}

impl CorruptionSpec {
    /// Defaults used in the noise-robustness study.
    pub fn defaults() -> [CorruptionSpec; 7] {
        [
            CorruptionSpec::Baseline,
            CorruptionSpec::Gaussian { sigma: 1.0 },
            CorruptionSpec::Missing { fraction: 0.3 },
            CorruptionSpec::Ard {
                trait_correlation: 0.8,
            },
            CorruptionSpec::Egocentric { ego_fraction: 0.5 },
            CorruptionSpec::DegreeCapped { d_max: 20 },
            CorruptionSpec::EdgeFlipped { fraction: 0.15 },
        ]
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CorruptionSpec::Baseline => "baseline",
            CorruptionSpec::Gaussian { .. } => "gaussian",
            CorruptionSpec::Missing { .. } => "missing",
            CorruptionSpec::Ard { .. } => "ard",
            CorruptionSpec::Egocentric { .. } => "egocentric",
            CorruptionSpec::DegreeCapped { .. } => "degree_capped",
            CorruptionSpec::EdgeFlipped { .. } => "edge_flipped",
        }
    }

    /// Stable label such as `missing:0.3`, used in result files.
    pub fn label(&self) -> String {
        match *self {
            CorruptionSpec::Baseline => String::from("baseline"),
            CorruptionSpec::Gaussian { sigma } => format!("gaussian:{sigma}"),
            CorruptionSpec::Missing { fraction } => format!("missing:{fraction}"),
            CorruptionSpec::Ard { trait_correlation } => format!("ard:{trait_correlation}"),
            CorruptionSpec::Egocentric { ego_fraction } => format!("egocentric:{ego_fraction}"),
            CorruptionSpec::DegreeCapped { d_max } => format!("degree_capped:{d_max}"),
            CorruptionSpec::EdgeFlipped { fraction } => format!("edge_flipped:{fraction}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(validation(format!("{what} = {v} outside [0, 1]")))
            }
        };
        match *self {
            CorruptionSpec::Baseline => Ok(()),
            CorruptionSpec::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            CorruptionSpec::Gaussian { sigma } => Err(validation(format!(
                "gaussian sigma {sigma} must be positive"
            ))),
            CorruptionSpec::Missing { fraction } => unit(fraction, "missing fraction"),
            CorruptionSpec::Ard { trait_correlation } => {
                unit(trait_correlation, "trait correlation")
            }
            CorruptionSpec::Egocentric { ego_fraction } => unit(ego_fraction, "ego fraction"),
            CorruptionSpec::DegreeCapped { d_max } if d_max >= 1 => Ok(()),
            CorruptionSpec::DegreeCapped { .. } => Err(validation("degree cap must be at least 1")),
            CorruptionSpec::EdgeFlipped { fraction } => unit(fraction, "flip fraction"),
        }
    }
}

/// What the analyst gets to see after corruption.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// A full (noisy) symmetric adjacency.
    Dense(Matrix),
    /// Symmetric adjacency with unobserved entries zeroed; `mask` is true
    /// where an entry was observed.
    Masked { values: Matrix, mask: DMatrix<bool> },
    /// `A W` together with the traits `W`.
    Aggregated { aggregated: Matrix, traits: Matrix },
    /// Ego-ego and ego-alter blocks. `ego` is sorted; the alter block's
    /// columns follow the remaining nodes in increasing order.
    Egocentric {
        n: usize,
        ego: Vec<usize>,
        ego_block: Matrix,
        cross_block: Matrix,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedView {
    pub spec: CorruptionSpec,
    pub payload: Payload,
}

impl CorruptedView {
    pub fn n(&self) -> usize {
        match &self.payload {
            Payload::Dense(m) => m.nrows(),
            Payload::Masked { values, .. } => values.nrows(),
            Payload::Aggregated { aggregated, .. } => aggregated.nrows(),
            Payload::Egocentric { n, .. } => *n,
        }
    }
}

/// Complement of a sorted index set within `0..n`.
pub fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; n];
    for &i in sorted {
        inside[i] = true;
    }
    (0..n).filter(|&i| !inside[i]).collect()
}

/// Applies `spec` to `network`. ARD needs the latent positions (`aux`) to
/// synthesize correlated traits.
pub fn corrupt(
    network: &ObservedNetwork,
    spec: &CorruptionSpec,
    aux: Option<&Matrix>,
    rng_seed: u64,
) -> Result<CorruptedView> {
    spec.validate()?;
    let a = &network.adjacency;
    let n = a.nrows();
    let mut gen = rng::stream(rng_seed, spec.kind_name());
    let payload = match *spec {
        CorruptionSpec::Baseline => Payload::Dense(a.clone()),
        CorruptionSpec::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).map_err(|_| validation("invalid sigma"))?;
            let mut noisy = a.clone();
            for j in 0..n {
                for i in 0..j {
                    let e = normal.sample(&mut gen);
                    noisy[(i, j)] += e;
                    noisy[(j, i)] += e;
                }
            }
            Payload::Dense(noisy)
        }
        CorruptionSpec::Missing { fraction } => {
            let mut values = a.clone();
            let mut mask = DMatrix::from_element(n, n, true);
            for j in 0..n {
                for i in 0..j {
                    if gen.random::<f64>() < fraction {
                        mask[(i, j)] = false;
                        mask[(j, i)] = false;
                        values[(i, j)] = 0.0;
                        values[(j, i)] = 0.0;
                    }
                }
            }
            Payload::Masked { values, mask }
        }
        CorruptionSpec::Ard { trait_correlation } => {
            let latents =
                aux.ok_or_else(|| validation("aggregated relational data needs latent positions"))?;
            if latents.nrows() != n {
                return Err(dimension(format!(
                    "latents have {} rows for {n} nodes",
                    latents.nrows()
                )));
            }
            let traits = correlated_traits(latents, trait_correlation, &mut gen);
            Payload::Aggregated {
                aggregated: a * &traits,
                traits,
            }
        }
        CorruptionSpec::Egocentric { ego_fraction } => {
            let size = libm::round(ego_fraction * n as f64) as usize;
            let mut ego: Vec<usize> = rand::seq::index::sample(&mut gen, n, size.min(n)).into_vec();
            ego.sort_unstable();
            let alters = complement(n, &ego);
            let ego_block = a.select_rows(&ego).select_columns(&ego);
            let cross_block = a.select_rows(&ego).select_columns(&alters);
            Payload::Egocentric {
                n,
                ego,
                ego_block,
                cross_block,
            }
        }
        CorruptionSpec::DegreeCapped { d_max } => Payload::Dense(cap_degrees(a, d_max, &mut gen)),
        CorruptionSpec::EdgeFlipped { fraction } => {
            Payload::Dense(flip_edges(a, fraction, &mut gen))
        }
    };
    Ok(CorruptedView {
        spec: *spec,
        payload,
    })
}

/// Column `c` is `rho * standardize(X_c) + sqrt(1 - rho^2) * N(0, 1)`.
fn correlated_traits<R: Rng>(latents: &Matrix, rho: f64, gen: &mut R) -> Matrix {
    let (n, d) = latents.shape();
    let spread = linalg::sqrt((1.0 - rho * rho).max(0.0));
    let mut traits = Matrix::zeros(n, d);
    for c in 0..d {
        let col = latents.column(c);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
        let sd = linalg::sqrt(var);
        for i in 0..n {
            let z = if sd > 0.0 { (col[i] - mean) / sd } else { 0.0 };
            let noise: f64 = StandardNormal.sample(gen);
            traits[(i, c)] = rho * z + spread * noise;
        }
    }
    traits
}

/// Each over-cap node nominates random incident edges for deletion until
/// the rest fit under the cap; an edge survives only when neither endpoint
/// nominated it.
fn cap_degrees<R: Rng>(a: &Matrix, d_max: usize, gen: &mut R) -> Matrix {
    let n = a.nrows();
    let mut dropped = DMatrix::from_element(n, n, false);
    for i in 0..n {
        let mut incident: Vec<usize> = (0..n).filter(|&j| j != i && a[(i, j)] != 0.0).collect();
        if incident.len() > d_max {
            incident.shuffle(gen);
            for &j in &incident[..incident.len() - d_max] {
                dropped[(i, j)] = true;
                dropped[(j, i)] = true;
            }
        }
    }
    let mut capped = a.clone();
    for j in 0..n {
        for i in 0..n {
            if dropped[(i, j)] {
                capped[(i, j)] = 0.0;
            }
        }
    }
    capped
}

/// Swaps the values of `round(fraction * edges)` randomly chosen edges with
/// uniformly drawn pairs holding a different value. The multiset of pair
/// values, and hence the edge total, is preserved.
fn flip_edges<R: Rng>(a: &Matrix, fraction: f64, gen: &mut R) -> Matrix {
    const MAX_PARTNER_DRAWS: usize = 10_000;
    let n = a.nrows();
    let mut out = a.clone();
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
    let edges: Vec<(usize, usize)> = slots
        .iter()
        .copied()
        .filter(|&(i, j)| a[(i, j)] != 0.0)
        .collect();
    if edges.is_empty() || slots.len() < 2 {
        return out;
    }
    let swaps = (libm::round(fraction * edges.len() as f64) as usize).min(edges.len());
    let chosen = rand::seq::index::sample(gen, edges.len(), swaps);
    for e in chosen.iter() {
        let (i, j) = edges[e];
        let value = out[(i, j)];
        for _ in 0..MAX_PARTNER_DRAWS {
            let (k, l) = slots[gen.random_range(0..slots.len())];
            let other = out[(k, l)];
            if other != value {
                out[(i, j)] = other;
                out[(j, i)] = other;
                out[(k, l)] = value;
                out[(l, k)] = value;
                break;
            }
        }
    }
    out
}
