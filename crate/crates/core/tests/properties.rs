mod common;

use atlas_core::corpus::{read_patents, write_patents, Corpus, PatentFormat, PatentRecord};
use atlas_core::layout::{kamada_kawai, stress, DistanceMatrix, LayoutOptions};
use atlas_core::linkage::{build_matrix, matrix_correlation, PlainVector, RelatednessMatrix, SimilarityKind};
use atlas_core::stats;
use proptest::prelude::*;

fn check(r: common::Check) {
    if let Err(e) = r {
        panic!("{e}");
    }
}

#[test]
fn matrices_are_symmetric_with_unit_diagonal() {
    check(common::matrix_invariants(11));
}

#[test]
fn vectors_are_normalized_and_super_vectors_conserve_mass() {
    check(common::vector_normalization(12));
}

#[test]
fn matcher_equals_brute_force_on_1000_references() {
    check(common::matcher_matches_brute_force(13, 1000));
}

#[test]
fn com_equals_brute_force_on_fixture() {
    check(common::com_matches_brute_force(14));
}

#[test]
fn equilateral_triangle_with_monotone_stress() {
    for seed in 0..5 {
        check(common::kk_equilateral(seed));
    }
}

#[test]
fn gradient_equals_central_differences() {
    check(common::gradient_matches_finite_differences(15));
}

#[test]
fn tails_equal_numerical_integration() {
    check(common::tails_match_integration());
}

#[test]
fn integration_oracle_reproduces_closed_forms() {
    // df = 1 is Cauchy; k = 2 is exponential with mean 2.
    for t in [0.5f64, 1.0, 4.0] {
        let cauchy = 0.5 - t.atan() / std::f64::consts::PI;
        assert!((common::t_upper_tail(t, 1.0) - cauchy).abs() < 1e-9);
    }
    for x in [0.3f64, 2.0, 9.0] {
        assert!((common::chi_square_upper_tail(x, 2.0) - (-x / 2.0).exp()).abs() < 1e-9);
    }
}

#[test]
fn two_sided_p_falls_as_correlation_grows() {
    for n in [5usize, 12, 30] {
        let df = (n - 2) as f64;
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let r = k as f64 / 100.0;
            let t = r * (df / (1.0 - r * r)).sqrt();
            let p = stats::student_t_two_sided(t, df);
            assert!(p < last || (k == 0 && p == 1.0), "n={n} r={r}: p {p} after {last}");
            last = p;
        }
    }
}

fn square_distances() -> DistanceMatrix {
    let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut d = vec![0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            let dx: f64 = pts[i][0] - pts[j][0];
            let dy: f64 = pts[i][1] - pts[j][1];
            d[i * 4 + j] = (dx * dx + dy * dy).sqrt();
        }
    }
    DistanceMatrix::new(vec!["a".into(), "b".into(), "c".into(), "d".into()], d).unwrap()
}

#[test]
fn planted_square_is_recovered() {
    let d = square_distances();
    let l = kamada_kawai(&d, 3, LayoutOptions::default()).unwrap();
    let initial = l.stress_history[0];
    assert!(l.stress < 1e-4 * initial, "stress {} from {initial}", l.stress);
    assert!(l.stress_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn layout_is_equivariant_under_relabeling() {
    let d = square_distances();
    let base = kamada_kawai(&d, 9, LayoutOptions::default()).unwrap();
    let order = [2usize, 0, 3, 1];
    let labels: Vec<String> = order.iter().map(|&i| d.labels[i].clone()).collect();
    let entries = order
        .iter()
        .flat_map(|&i| order.iter().map(move |&j| (i, j)))
        .map(|(i, j)| d.get(i, j))
        .collect();
    let pd = DistanceMatrix::new(labels, entries).unwrap();
    let permuted = kamada_kawai(&pd, 9, LayoutOptions::default()).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(permuted.labels[k], base.labels[i]);
        assert_eq!(permuted.positions[k], base.positions[i]);
    }
    assert_eq!(stress(&permuted.positions, &pd), permuted.stress);
}

fn vectors(rows: &[Vec<f64>]) -> Vec<PlainVector> {
    let dim = rows[0].len();
    rows.iter()
        .enumerate()
        .map(|(i, r)| PlainVector {
            domain: format!("d{i}"),
            basis: (0..dim).map(|k| format!("c{k}")).collect(),
            components: r.clone(),
        })
        .collect()
}

fn record_strategy() -> impl Strategy<Value = PatentRecord> {
    let class = "[A-H][0-9]{2}[A-Z][0-9]{1,2}";
    (
        "[A-Z]{2}[0-9]{1,7}",
        1976i32..2020,
        "[a-zA-Z ,;\"']{0,30}",
        "\\PC{0,40}",
        proptest::collection::btree_set(class, 0..3),
        proptest::collection::btree_set("[0-9]{3}/[0-9]{1,3}", 0..3),
        proptest::collection::btree_set("US[0-9]{4}", 0..4),
        proptest::collection::vec("[A-Za-z0-9 .,;\"'()-]{0,40}", 0..4),
    )
        .prop_map(|(id, year, title, abs, ipc, upc, cites, npl)| PatentRecord {
            patent_id: id,
            grant_year: year,
            title,
            abstract_text: abs,
            ipc_classes: ipc,
            upc_classes: upc,
            cited_patent_ids: cites,
            npl_citations: npl,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips(records in proptest::collection::vec(record_strategy(), 0..12)) {
        let mut seen = std::collections::BTreeSet::new();
        let records: Vec<PatentRecord> = records.into_iter().filter(|r| seen.insert(r.patent_id.clone())).collect();
        let corpus = Corpus::new(records).unwrap();
        for format in [PatentFormat::Jsonl, PatentFormat::Csv] {
            let mut buf = Vec::new();
            write_patents(&mut buf, &corpus, format).unwrap();
            let back = read_patents(buf.as_slice(), format, "mem").unwrap();
            prop_assert_eq!(back.records(), corpus.records());
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..30),
        a in 0.01f64..100.0, b in -100f64..100.0, c in 0.01f64..100.0, d in -100f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = stats::pearson(&x, &y) {
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            let r2 = stats::pearson(&xs, &ys).unwrap();
            prop_assert!((r - r2).abs() <= 1e-9 * (1.0 + r.abs()), "{} vs {}", r, r2);
        }
    }

    #[test]
    fn matrix_correlation_ignores_joint_permutation(
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 6), 4..9),
        other in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 6), 9),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let a = build_matrix(&vectors(&rows), SimilarityKind::Pearson).unwrap();
        let b = build_matrix(&vectors(&other[..n]), SimilarityKind::Cosine).unwrap();
        let Ok(base) = matrix_correlation(&a, &b) else { return Ok(()) };
        let mut order: Vec<usize> = (0..n).collect();
        use rand::{seq::SliceRandom, SeedableRng};
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (pa, pb): (RelatednessMatrix, RelatednessMatrix) = (a.permuted(&order), b.permuted(&order));
        let moved = matrix_correlation(&pa, &pb).unwrap();
        prop_assert!((base.r - moved.r).abs() < 1e-12, "{} vs {}", base.r, moved.r);
        prop_assert_eq!(base.pairs_used, moved.pairs_used);
    }

    #[test]
    fn built_matrices_hold_invariants(
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 2..8),
    ) {
        for kind in [SimilarityKind::Pearson, SimilarityKind::Cosine] {
            let m = build_matrix(&vectors(&rows), kind).unwrap();
            for i in 0..m.size() {
                for j in 0..m.size() {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    if let Some(v) = m.get(i, j) {
                        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
                    }
                }
                if let Some(v) = m.get(i, i) {
                    prop_assert!((v - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
