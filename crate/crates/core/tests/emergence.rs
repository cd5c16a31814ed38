mod common;

use std::collections::{BTreeMap, BTreeSet};

use atlas_core::emergence::{
    chi_square_2x2, lead_lag, monte_carlo_expectation, multilink_chi_square, multilink_stats, ContingencyTable2x2,
    Link, LinkKind, LinkTable, NullModelSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mc(spec: &NullModelSpec, kind: LinkKind) -> (f64, f64) {
    let r = monte_carlo_expectation(spec, kind).unwrap();
    (r.expectation, r.std_error)
}

#[test]
fn standard_error_shrinks_as_inverse_root_of_simulations() {
    let base = NullModelSpec::new(142, 35, 526, 1_000, 3);
    let mut errors = Vec::new();
    for n in [1_000usize, 10_000, 100_000] {
        let spec = NullModelSpec {
            n_simulations: n,
            ..base.clone()
        };
        errors.push(mc(&spec, LinkKind::SharedTopic).1);
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 10f64.sqrt()).abs() < 0.5, "se ratio {ratio} from {errors:?}");
    }
}

#[test]
fn seeds_agree_within_five_standard_errors() {
    let base = NullModelSpec::new(142, 35, 526, 20_000, 0)
        .with_patents(259)
        .with_papers(97);
    for kind in LinkKind::ALL {
        let (a, sa) = mc(
            &NullModelSpec {
                seed: 1,
                ..base.clone()
            },
            kind,
        );
        let (b, sb) = mc(
            &NullModelSpec {
                seed: 2,
                ..base.clone()
            },
            kind,
        );
        assert!(a != b, "{kind}: distinct seeds gave identical means");
        assert!((a - b).abs() <= 5.0 * (sa * sa + sb * sb).sqrt(), "{kind}: {a} vs {b}");
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let spec = NullModelSpec::new(30, 8, 60, 5_000, 77)
        .with_patents(45)
        .with_papers(12);
    for kind in LinkKind::ALL {
        assert_eq!(
            monte_carlo_expectation(&spec, kind).unwrap(),
            monte_carlo_expectation(&spec, kind).unwrap()
        );
    }
}

fn assert_matches_exact(spec: &NullModelSpec, kind: LinkKind, cells: &[usize]) {
    let exact = common::exact_multilink_expectation(cells, spec.n_links);
    let (mean, se) = mc(spec, kind);
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "{kind}: {mean} vs exact {exact} (se {se})"
    );
}

#[test]
fn small_models_match_exhaustive_enumeration() {
    // Two clusters of three topics, four links: 6^4 assignments.
    let k1 = NullModelSpec::new(2, 3, 4, 40_000, 5);
    assert_matches_exact(&k1, LinkKind::SharedTopic, &[0, 0, 0, 1, 1, 1]);

    // Patents split 2 + 1 over two clusters, two topics each patent.
    let mut k2 = NullModelSpec::new(2, 2, 4, 40_000, 6);
    k2.cluster_sizes = Some(vec![2, 1]);
    assert_matches_exact(&k2, LinkKind::RepeatedTopic, &[0, 0, 0, 0, 1, 1]);

    // Even split of five patents over two clusters gives sizes 3 and 2.
    let k2_even = NullModelSpec::new(2, 1, 3, 40_000, 7).with_patents(5);
    assert_matches_exact(&k2_even, LinkKind::RepeatedTopic, &[0, 0, 0, 1, 1]);

    let k3 = NullModelSpec::new(3, 9, 4, 40_000, 8).with_papers(2);
    assert_matches_exact(&k3, LinkKind::SharedPaper, &[0, 0, 1, 1, 2, 2]);
}

/// Probability that `k` uniform draws over `w` values are not all distinct.
fn collision(k: usize, w: usize) -> f64 {
    1.0 - (0..k)
        .map(|i| (w as f64 - i as f64).max(0.0) / w as f64)
        .product::<f64>()
}

#[test]
fn fixed_marginals_match_birthday_probabilities() {
    let counts = vec![1, 2, 3, 5, 0, 4];
    let spec = NullModelSpec::new(6, 7, counts.iter().sum(), 50_000, 9).with_fixed_marginals(counts.clone());
    let exact: f64 = counts.iter().map(|&k| collision(k, 7)).sum();
    let (mean, se) = mc(&spec, LinkKind::SharedTopic);
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

fn random_links(seed: u64, n: usize) -> LinkTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = (0..n)
        .map(|_| {
            let cluster = rng.gen_range(0..6);
            Link {
                cluster_id: format!("c{cluster}"),
                patent_id: format!("p{}-{}", cluster, rng.gen_range(0..4)),
                topic_id: format!("t{}", rng.gen_range(0..5)),
                paper_id: format!("x{}", rng.gen_range(0..12)),
                cluster_year: rng.gen_range(2000..2006),
                topic_year: rng.gen_range(2000..2006),
            }
        })
        .collect();
    LinkTable::new(links).unwrap()
}

/// Kind counts by pairwise comparison of links within each cluster.
fn naive_kinds(table: &LinkTable) -> [usize; 3] {
    let mut by_cluster: BTreeMap<&str, Vec<&Link>> = BTreeMap::new();
    for l in table.links() {
        by_cluster.entry(&l.cluster_id).or_default().push(l);
    }
    let mut out = [0; 3];
    for links in by_cluster.values() {
        let mut k = [false; 3];
        for a in links {
            for b in links {
                k[0] |= a.topic_id == b.topic_id && a.patent_id != b.patent_id;
                k[1] |= a.patent_id == b.patent_id && a.topic_id == b.topic_id && a.paper_id != b.paper_id;
                k[2] |= a.paper_id == b.paper_id && a.patent_id != b.patent_id;
            }
        }
        for i in 0..3 {
            out[i] += usize::from(k[i]);
        }
    }
    out
}

#[test]
fn multilink_counts_equal_pairwise_recount() {
    for seed in 0..40 {
        let table = random_links(seed, 5 + seed as usize);
        let stats = multilink_stats(&table);
        let want = naive_kinds(&table);
        assert_eq!([stats.kind1, stats.kind2, stats.kind3], want, "seed {seed}");
        let clusters: BTreeSet<&str> = table.links().iter().map(|l| l.cluster_id.as_str()).collect();
        assert_eq!(stats.linked_clusters, clusters.len());
        assert!(stats.any >= want.into_iter().max().unwrap());
    }
}

#[test]
fn lead_lag_partitions_links() {
    for seed in 0..10 {
        let table = random_links(100 + seed, 30);
        let ll = lead_lag(&table);
        let after = table.links().iter().filter(|l| l.cluster_year > l.topic_year).count();
        let same = table.links().iter().filter(|l| l.cluster_year == l.topic_year).count();
        assert_eq!(
            (ll.after, ll.same, ll.before, ll.total),
            (after, same, 30 - after - same, 30)
        );
        let ratios = ll.ratios.unwrap();
        assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fixture_multilinks_equal_planted_counts() {
    let bundle = common::fixture(42);
    let stats = multilink_stats(bundle.links.as_ref().unwrap());
    assert_eq!(Some([stats.kind1, stats.kind2, stats.kind3]), bundle.truth.multilink);
    assert_eq!(
        [stats.kind1, stats.kind2, stats.kind3],
        naive_kinds(bundle.links.as_ref().unwrap())
    );
}

/// Pearson chi-square of a 2x2 table from its expected counts.
fn naive_chi_square(a: f64, b: f64, c: f64, d: f64, yates: bool) -> f64 {
    let n = a + b + c + d;
    let rows = [a + b, c + d];
    let cols = [a + c, b + d];
    let obs = [[a, b], [c, d]];
    let mut x = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            let dev = (obs[i][j] - e).abs() - if yates { 0.5 } else { 0.0 };
            x += dev.max(0.0).powi(2) / e;
        }
    }
    x
}

#[test]
fn chi_square_equals_expected_count_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let cells: Vec<u64> = (0..4).map(|_| rng.gen_range(1..10_000)).collect();
        let table = ContingencyTable2x2::from_counts(cells[0], cells[1], cells[2], cells[3]).unwrap();
        for yates in [false, true] {
            let got = chi_square_2x2(&table, yates).unwrap();
            let want = naive_chi_square(
                cells[0] as f64,
                cells[1] as f64,
                cells[2] as f64,
                cells[3] as f64,
                yates,
            );
            assert!(
                (got.statistic - want).abs() <= 1e-9 * want.max(1.0),
                "{cells:?}: {} vs {want}",
                got.statistic
            );
            assert_eq!(got.dof, 1);
            let p = common::chi_square_upper_tail(got.statistic, 1.0);
            assert!((got.p_value - p).abs() < 1e-7, "p {} vs {p}", got.p_value);
        }
    }
}

#[test]
fn multilink_chi_square_compares_rows_of_clusters() {
    let got = multilink_chi_square(36.0, 23.7, 142, false).unwrap();
    let want = naive_chi_square(36.0, 106.0, 23.7, 118.3, false);
    assert!((got.statistic - want).abs() < 1e-9, "{} vs {want}", got.statistic);
}
