mod common;

use common::{planted_directed, PLANTED_CONTAGION, PLANTED_DIM};
use netsmooth::core::linalg::{Matrix, Vector};
use netsmooth::multiverse::{run_multiverse, MultiverseInput, MultiverseRow, Variant};

fn row(rows: &[MultiverseRow], d: usize, v: Variant) -> &MultiverseRow {
    rows.iter().find(|r| r.d == d && r.variant == v).unwrap()
}

fn symmetric_input(n: usize, seed: u64) -> MultiverseInput {
    let (a, w, y) = planted_directed(n, seed);
    MultiverseInput {
        adjacency: &a + a.transpose(),
        covariates: w,
        outcome: y,
        directed: false,
    }
}

#[test]
fn planted_latent_coefficient_is_covered_at_true_dimension() {
    let (adjacency, covariates, outcome) = planted_directed(400, 11);
    let input = MultiverseInput {
        adjacency,
        covariates,
        outcome,
        directed: true,
    };
    let out = run_multiverse(&input, PLANTED_DIM, PLANTED_DIM, &Variant::ALL).unwrap();
    assert_eq!(out.rows.len(), 4);
    let r = row(&out.rows, PLANTED_DIM, Variant::LatentX);
    assert!(!r.failed);
    assert!(
        r.ci_lower <= PLANTED_CONTAGION && PLANTED_CONTAGION <= r.ci_upper,
        "[{}, {}]",
        r.ci_lower,
        r.ci_upper
    );
}

#[test]
fn omitting_the_embedding_inflates_contagion_under_homophily() {
    let (adjacency, covariates, outcome) = planted_directed(400, 11);
    let input = MultiverseInput {
        adjacency,
        covariates,
        outcome,
        directed: true,
    };
    let out = run_multiverse(&input, PLANTED_DIM, PLANTED_DIM, &Variant::ALL).unwrap();
    for (without, with) in [
        (Variant::LatentNoX, Variant::LatentX),
        (Variant::PeerNoX, Variant::PeerX),
    ] {
        let a = row(&out.rows, PLANTED_DIM, without).estimate;
        let b = row(&out.rows, PLANTED_DIM, with).estimate;
        assert!(a > b, "{without}: {a} vs {with}: {b}");
    }
}

#[test]
fn directed_path_matches_undirected_on_symmetric_input() {
    let undirected = symmetric_input(150, 3);
    let directed = MultiverseInput {
        directed: true,
        ..undirected.clone()
    };
    let a = run_multiverse(&undirected, 2, 4, &Variant::ALL).unwrap();
    let b = run_multiverse(&directed, 2, 4, &Variant::ALL).unwrap();
    assert_eq!(a.rows.len(), b.rows.len());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.d, x.variant, x.failed), (y.d, y.variant, y.failed));
        if !x.failed {
            let scale = x.std_error.max(1e-12);
            assert!(
                (x.estimate - y.estimate).abs() < 1e-6 * scale.max(1.0),
                "{x:?} {y:?}"
            );
            assert!((x.ci_lower - y.ci_lower).abs() < 1e-6 * scale.max(1.0));
        }
    }
}

#[test]
fn one_row_per_dimension_and_variant() {
    let input = symmetric_input(120, 5);
    let out = run_multiverse(&input, 2, 6, &Variant::ALL).unwrap();
    assert_eq!(out.rows.len(), 5 * 4);
    assert!(out.warnings.is_empty());
    let subset = run_multiverse(&input, 2, 6, &[Variant::LatentX]).unwrap();
    assert_eq!(subset.rows.len(), 5);
    assert!(subset.rows.iter().all(|r| r.variant == Variant::LatentX));
    for r in out.rows.iter().filter(|r| !r.failed) {
        assert!(r.ci_lower < r.estimate && r.estimate < r.ci_upper);
        assert!((r.ci_upper - r.estimate - 1.959964 * r.std_error).abs() < 1e-9);
    }
}

#[test]
fn dimensions_beyond_rank_are_truncated_with_warning() {
    // Six nodes cap the usable dimension well below 25.
    let mut a = Matrix::zeros(6, 6);
    for (i, j) in [(0, 1), (2, 3), (4, 5), (0, 2)] {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let rank = netsmooth::core::linalg::numerical_rank(&a, netsmooth::core::linalg::RANK_TOLERANCE);
    let input = MultiverseInput {
        adjacency: a,
        covariates: Matrix::zeros(6, 0),
        outcome: Vector::from_fn(6, |i, _| i as f64),
        directed: false,
    };
    let out = run_multiverse(&input, 2, 25, &Variant::ALL).unwrap();
    assert_eq!(out.d_max, rank);
    assert_eq!(out.warnings.len(), 1);
    assert!(out.rows.iter().all(|r| r.d <= rank));
}

#[test]
fn rejects_asymmetric_undirected_input_and_bad_ranges() {
    let mut input = symmetric_input(40, 9);
    assert!(run_multiverse(&input, 3, 2, &Variant::ALL).is_err());
    assert!(run_multiverse(&input, 0, 2, &Variant::ALL).is_err());
    input.adjacency[(0, 1)] += 1.0;
    assert!(run_multiverse(&input, 2, 3, &Variant::ALL).is_err());
}

#[test]
fn variant_names_parse() {
    for v in Variant::ALL {
        assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            format!("\"{}\"", v.label())
        );
    }
    assert!("latent".parse::<Variant>().is_err());
}
