//! Independent oracles shared by the property suites and the acceptance run.
//! Each check returns a description of the first disagreement it finds.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use atlas_core::com::{com_search, ComOptions, ScoreRule, TermLogic};
use atlas_core::corpus::synthetic::{generate_synthetic_corpus, GeneratorSpec, SyntheticBundle};
use atlas_core::corpus::Corpus;
use atlas_core::emergence::{monte_carlo_expectation, LinkKind, NullModelSpec};
use atlas_core::layout::{kamada_kawai, stress, stress_gradient, DistanceMatrix, LayoutOptions};
use atlas_core::linkage::{self, build_matrix, CountingMode, Distribution, PlainVector, SimilarityKind};
use atlas_core::matcher::{match_corpus, normalize, Matcher};
use atlas_core::stats;
use atlas_core::taxonomy::{ExclusionList, Taxonomy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn fixture(seed: u64) -> SyntheticBundle {
    generate_synthetic_corpus(seed, &GeneratorSpec::fixture()).expect("fixture generates")
}

pub fn taxonomy_of(bundle: &SyntheticBundle) -> Taxonomy {
    Taxonomy::from_parts(bundle.journals.clone(), bundle.scheme.clone(), ExclusionList::default())
        .expect("fixture taxonomy is valid")
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<PlainVector> {
    let basis: Vec<String> = (0..dim).map(|k| format!("c{k:02}")).collect();
    (0..n)
        .map(|i| {
            let raw: Vec<f64> = (0..dim)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(0.0..10.0)
                    }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let components = if total > 0.0 {
                raw.iter().map(|x| x / total).collect()
            } else {
                raw
            };
            PlainVector {
                domain: format!("d{i:02}"),
                basis: basis.clone(),
                components,
            }
        })
        .collect()
}

/// Symmetry, unit diagonal for defined rows, and the value range of each kind.
pub fn matrix_invariants(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let n = rng.gen_range(2..12);
        let dim = rng.gen_range(2..30);
        let vectors = random_vectors(&mut rng, n, dim);
        for kind in [SimilarityKind::Pearson, SimilarityKind::Cosine] {
            let m = build_matrix(&vectors, kind).map_err(|e| e.to_string())?;
            let (lo, hi) = match kind {
                SimilarityKind::Pearson => (-1.0, 1.0),
                SimilarityKind::Cosine => (0.0, 1.0),
            };
            for i in 0..n {
                for j in 0..n {
                    ensure!(m.get(i, j) == m.get(j, i), "{kind:?} asymmetric at ({i}, {j})");
                    if let Some(v) = m.get(i, j) {
                        ensure!(
                            (lo - 1e-12..=hi + 1e-12).contains(&v),
                            "{kind:?} ({i}, {j}) = {v} out of range"
                        );
                    }
                }
                if let Some(v) = m.get(i, i) {
                    ensure!((v - 1.0).abs() < 1e-12, "{kind:?} diagonal {i} = {v}");
                }
            }
        }
    }
    Ok(())
}

/// Science, super and tech vectors sum to one, and aggregation to
/// super-disciplines conserves mass category by category.
pub fn vector_normalization(seed: u64) -> Check {
    let bundle = generate_synthetic_corpus(seed, &GeneratorSpec::generic(6, 30, 250)).map_err(|e| e.to_string())?;
    let taxonomy = taxonomy_of(&bundle);
    let matcher = Matcher::new(&taxonomy).map_err(|e| e.to_string())?;
    let table = match_corpus(&bundle.corpus, &bundle.domains, &matcher, true);
    let scheme = taxonomy.scheme();
    for mode in [CountingMode::PerCategory, CountingMode::Fractional] {
        for d in &bundle.domains {
            let v = linkage::science_vector(&d.domain_name, table.for_domain(&d.domain_name), None, scheme, mode)
                .map_err(|e| e.to_string())?;
            if v.total_contributions == 0.0 {
                continue;
            }
            let sum: f64 = v.components.iter().sum();
            ensure!(
                (sum - 1.0).abs() <= 1e-12,
                "science vector of {} sums to {sum}",
                d.domain_name
            );
            let s = linkage::super_vector(&v, scheme).map_err(|e| e.to_string())?;
            let ssum: f64 = s.components.iter().sum();
            ensure!(
                (ssum - 1.0).abs() <= 1e-12,
                "super vector of {} sums to {ssum}",
                d.domain_name
            );
            for (k, name) in s.basis.iter().enumerate() {
                let members: f64 = v
                    .basis
                    .iter()
                    .zip(&v.components)
                    .filter(|(c, _)| scheme.super_discipline_of(c) == Some(name.as_str()))
                    .map(|(_, f)| f)
                    .sum();
                ensure!(
                    (members - s.components[k]).abs() <= 1e-12,
                    "super {name} of {}",
                    d.domain_name
                );
            }
        }
    }
    for t in linkage::tech_vectors(&bundle.corpus, &bundle.domains) {
        if t.empty {
            continue;
        }
        let sum: f64 = t.components().iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-12, "tech vector of {} sums to {sum}", t.label());
    }
    Ok(())
}

/// r(x, y) equals r(a·x + b, c·y + d) for positive a and c.
pub fn pearson_affine(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v * rng.gen_range(-1.0..1.0) + rng.gen_range(-3.0..3.0))
            .collect();
        let (a, b, c, d) = (
            rng.gen_range(0.01..100.0),
            rng.gen_range(-50.0..50.0),
            rng.gen_range(0.01..100.0),
            rng.gen_range(-50.0..50.0),
        );
        let r = stats::pearson(&x, &y).map_err(|e| e.to_string())?;
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let r2 = stats::pearson(&xs, &ys).map_err(|e| e.to_string())?;
        ensure!((r - r2).abs() <= 1e-12, "r {r} vs transformed {r2}");
    }
    Ok(())
}

fn boundary(text: &[u8], start: usize, end: usize) -> bool {
    (start == 0 || text[start - 1] == b' ') && (end == text.len() || text[end] == b' ')
}

/// Naive scan: every occurrence of every resolvable title at every offset;
/// longest wins, then earliest, then lexicographically smallest.
pub fn brute_force_title(forms: &[String], text: &str) -> Option<(usize, String)> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize, &String)> = None;
    for form in forms {
        let f = form.as_bytes();
        if f.is_empty() || f.len() > bytes.len() {
            continue;
        }
        for start in 0..=bytes.len() - f.len() {
            if &bytes[start..start + f.len()] == f && boundary(bytes, start, start + f.len()) {
                let cand = (f.len(), start, form);
                best = match best {
                    None => Some(cand),
                    Some(b) => {
                        let better = cand.0 > b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2));
                        Some(if better { cand } else { b })
                    }
                };
            }
        }
    }
    best.map(|(_, start, form)| (start, form.clone()))
}

/// Reference strings mixing journal titles in all three forms, truncated
/// titles, glued titles and bibliographic noise.
pub fn random_references(bundle: &SyntheticBundle, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = [
        "Smith J", "et al.", "1998", "vol. 12", "pp. 3-9", "Proc.", "J", "OF", "Brochure", "(2004)", "AGE",
    ];
    (0..n)
        .map(|_| {
            let mut parts: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                parts.push(noise.choose(&mut rng).unwrap().to_string());
            }
            for _ in 0..rng.gen_range(0..3) {
                let j = bundle.journals.choose(&mut rng).unwrap();
                let form = match rng.gen_range(0..3) {
                    0 => j.full_title.clone(),
                    1 => j.abbrev_title.clone(),
                    _ => j.abbrev_dotted_title.clone(),
                };
                let form = match rng.gen_range(0..6) {
                    0 => form.split(' ').take(2).collect::<Vec<_>>().join(" "),
                    1 => format!("{form}X"),
                    2 => form.to_lowercase(),
                    _ => form,
                };
                let at = rng.gen_range(0..=parts.len());
                parts.insert(at, form);
            }
            let sep = if rng.gen_bool(0.2) { ", " } else { " " };
            parts.join(sep)
        })
        .collect()
}

/// The automaton matcher agrees with the naive scan on title, position and
/// category set.
pub fn matcher_matches_brute_force(seed: u64, n: usize) -> Check {
    let bundle = fixture(seed);
    let taxonomy = taxonomy_of(&bundle);
    let matcher = Matcher::new(&taxonomy).map_err(|e| e.to_string())?;
    let exclusions = ExclusionList::default();
    let mut forms: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for j in &bundle.journals {
        let jf = j.normalized_forms();
        if jf.iter().any(|f| exclusions.contains(f)) {
            continue;
        }
        for f in jf {
            forms.entry(f).or_default().extend(j.categories.iter().cloned());
        }
    }
    let titles: Vec<String> = forms.keys().cloned().collect();
    let mut matched = 0;
    for reference in random_references(&bundle, n, seed ^ 0x5eed) {
        let text = normalize(&reference);
        let want = brute_force_title(&titles, &text);
        let got = matcher.find_title(&text).map(|h| (h.start, h.title.to_string()));
        ensure!(got == want, "`{reference}`: automaton {got:?}, brute force {want:?}");
        let cited = matcher.match_reference("P", &reference);
        let cats = want.as_ref().map(|(_, t)| forms[t].clone()).unwrap_or_default();
        ensure!(cited.categories == cats, "`{reference}`: categories differ");
        matched += usize::from(want.is_some());
    }
    ensure!(
        matched > n / 4 && matched < n,
        "degenerate reference mix: {matched} of {n} matched"
    );
    Ok(())
}

fn naive_tokens(text: &str) -> String {
    let mut s = String::from(" ");
    for c in text.chars() {
        if c.is_alphanumeric() {
            s.extend(c.to_lowercase());
        } else if !s.ends_with(' ') {
            s.push(' ');
        }
    }
    if !s.ends_with(' ') {
        s.push(' ');
    }
    s
}

/// Classification-overlap search recomputed by direct counting.
pub fn naive_com(
    terms: &[&str],
    corpus: &Corpus,
    options: ComOptions,
) -> (BTreeSet<String>, Vec<(String, f64)>, Vec<(String, f64)>) {
    let phrases: Vec<String> = terms
        .iter()
        .map(|t| naive_tokens(t))
        .filter(|p| p.trim() != "")
        .collect();
    let pre: BTreeSet<String> = corpus
        .iter()
        .filter(|r| {
            let hay = [naive_tokens(&r.title), naive_tokens(&r.abstract_text)];
            let has = |p: &String| hay.iter().any(|h| h.contains(p.as_str()));
            match options.logic {
                TermLogic::All => phrases.iter().all(has),
                TermLogic::Any => phrases.iter().any(has),
            }
        })
        .map(|r| r.patent_id.clone())
        .collect();
    let rank = |ipc: bool| {
        let classes: BTreeSet<&String> = corpus
            .iter()
            .filter(|r| pre.contains(&r.patent_id))
            .flat_map(|r| {
                if ipc {
                    r.ipc_classes.iter()
                } else {
                    r.upc_classes.iter()
                }
            })
            .collect();
        let mut scored: Vec<(String, f64, usize)> = classes
            .into_iter()
            .map(|c| {
                let has = |r: &&atlas_core::corpus::PatentRecord| {
                    if ipc {
                        r.ipc_classes.contains(c)
                    } else {
                        r.upc_classes.contains(c)
                    }
                };
                let size = corpus.iter().filter(has).count();
                let hits = corpus.iter().filter(has).filter(|r| pre.contains(&r.patent_id)).count();
                let p = hits as f64 / size as f64;
                let q = hits as f64 / pre.len() as f64;
                let score = match options.score {
                    ScoreRule::Mean => (p + q) / 2.0,
                    ScoreRule::Harmonic => 2.0 * p * q / (p + q),
                };
                (c.clone(), score, hits)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(c, s, _)| (c, s)).collect::<Vec<_>>()
    };
    let (ipc, upc) = (rank(true), rank(false));
    let mut ids = BTreeSet::new();
    for (i, _) in ipc.iter().take(options.top_k.max(1)) {
        for (u, _) in upc.iter().take(options.top_k.max(1)) {
            ids.extend(
                corpus
                    .iter()
                    .filter(|r| r.ipc_classes.contains(i) && r.upc_classes.contains(u))
                    .map(|r| r.patent_id.clone()),
            );
        }
    }
    (ids, ipc, upc)
}

/// COM on the 500-patent fixture equals the naive recount for every domain
/// keyword set, term logic, score rule and top-k.
pub fn com_matches_brute_force(seed: u64) -> Check {
    let bundle = fixture(seed);
    ensure!(
        bundle.corpus.len() == 500,
        "fixture has {} patents",
        bundle.corpus.len()
    );
    let spec = GeneratorSpec::fixture();
    let mut term_sets: Vec<Vec<&str>> = spec
        .domains
        .iter()
        .map(|d| d.keywords.iter().map(String::as_str).collect())
        .collect();
    term_sets.push(vec!["battery", "turbine"]);
    for terms in &term_sets {
        for logic in [TermLogic::All, TermLogic::Any] {
            for score in [ScoreRule::Mean, ScoreRule::Harmonic] {
                for top_k in [1, 2, 3] {
                    let options = ComOptions { score, logic, top_k };
                    let (ids, ipc, upc) = naive_com(terms, &bundle.corpus, options);
                    let got = match com_search(terms, &bundle.corpus, options) {
                        Ok(r) => r,
                        Err(_) if ipc.is_empty() => continue,
                        Err(e) => return Err(format!("{terms:?}: {e}")),
                    };
                    ensure!(got.patent_ids == ids, "{terms:?} {options:?}: domain sets differ");
                    for (mine, theirs) in [(&got.ipc_ranking, &ipc), (&got.upc_ranking, &upc)] {
                        ensure!(mine.len() == theirs.len(), "{terms:?}: ranking lengths differ");
                        for (a, (c, s)) in mine.iter().zip(theirs.iter()) {
                            ensure!(
                                &a.class_code == c && (a.score - s).abs() < 1e-12,
                                "{terms:?}: ranking differs at {c}"
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn uniform_distances(n: usize, value: f64) -> DistanceMatrix {
    let labels = (0..n).map(|i| format!("n{i}")).collect();
    let d = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { value }).collect();
    DistanceMatrix::new(labels, d).expect("valid distances")
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Three mutually equidistant nodes land on an equilateral triangle and the
/// stress never increases along the way.
pub fn kk_equilateral(seed: u64) -> Check {
    let l = kamada_kawai(&uniform_distances(3, 1.0), seed, LayoutOptions::default()).map_err(|e| e.to_string())?;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let d = dist(l.positions[i], l.positions[j]);
        ensure!((d - 1.0).abs() <= 1e-3, "side ({i}, {j}) = {d}");
    }
    ensure!(l.stress_history.windows(2).all(|w| w[1] <= w[0]), "stress increased");
    Ok(())
}

/// Analytic stress gradient against central differences.
pub fn gradient_matches_finite_differences(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10 {
        let n = rng.gen_range(3..8);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(pts[i], pts[j]) * rng.gen_range(0.5..1.5);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        let dm = DistanceMatrix::new((0..n).map(|i| format!("n{i}")).collect(), d).map_err(|e| e.to_string())?;
        let p: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let g = stress_gradient(&p, &dm);
        let h = 1e-6;
        for m in 0..n {
            for k in 0..2 {
                let (mut plus, mut minus) = (p.clone(), p.clone());
                plus[m][k] += h;
                minus[m][k] -= h;
                let fd = (stress(&plus, &dm) - stress(&minus, &dm)) / (2.0 * h);
                ensure!(
                    (fd - g[m][k]).abs() <= 1e-5,
                    "node {m} axis {k}: analytic {} vs {fd}",
                    g[m][k]
                );
            }
        }
    }
    Ok(())
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Upper tail P(T > t) for Student's t by integrating its density.
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    0.5 - simpson(pdf, 0.0, t, 20_000)
}

/// Upper tail P(X > x) for chi-square by integrating its density under
/// x = u², which removes the singularity at zero.
pub fn chi_square_upper_tail(x: f64, k: f64) -> f64 {
    let ln_c = -(k / 2.0) * 2f64.ln() - ln_gamma(k / 2.0);
    let integrand = |u: f64| {
        if u == 0.0 {
            if k == 1.0 {
                2.0 * ln_c.exp()
            } else {
                0.0
            }
        } else {
            2.0 * (ln_c + (k - 1.0) * u.ln() - u * u / 2.0).exp()
        }
    };
    1.0 - simpson(integrand, 0.0, x.sqrt(), 20_000)
}

pub const T_DF: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 28.0];
pub const T_POINTS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 3.5, 6.0];
pub const CHI_DF: [f64; 4] = [1.0, 2.0, 3.0, 10.0];
pub const CHI_POINTS: [f64; 6] = [0.05, 0.5, 1.0, 3.84, 10.0, 25.0];

pub fn tails_match_integration() -> Check {
    for df in T_DF {
        for t in T_POINTS {
            let want = t_upper_tail(t, df);
            let got = 1.0 - stats::student_t_cdf(t, df);
            ensure!((got - want).abs() <= 1e-6, "t tail df={df} t={t}: {got} vs {want}");
            let two = stats::student_t_two_sided(t, df);
            ensure!(
                (two - 2.0 * want).abs() <= 1e-6,
                "two-sided t df={df} t={t}: {two} vs {}",
                2.0 * want
            );
        }
    }
    for k in CHI_DF {
        for x in CHI_POINTS {
            let want = chi_square_upper_tail(x, k);
            let got = stats::chi_square_sf(x, k);
            ensure!(
                (got - want).abs() <= 1e-6,
                "chi-square tail k={k} x={x}: {got} vs {want}"
            );
        }
    }
    Ok(())
}

/// Exact expectations of two tiny kind-1 models: two links on two cells
/// (0.5) and on four cells (0.25).
pub fn monte_carlo_exact_cases(seed: u64) -> Check {
    for (topics, exact) in [(1, 0.5), (2, 0.25)] {
        let spec = NullModelSpec::new(2, topics, 2, 20_000, seed);
        let r = monte_carlo_expectation(&spec, LinkKind::SharedTopic).map_err(|e| e.to_string())?;
        ensure!(
            (r.expectation - exact).abs() <= 3.0 * r.std_error,
            "{topics} topic(s): {} vs exact {exact} (se {})",
            r.expectation,
            r.std_error
        );
    }
    Ok(())
}

/// Exact expectation of clusters holding a multiply-hit cell, by enumerating
/// every assignment of `links` links to cells; `cell_cluster[c]` owns cell c.
pub fn exact_multilink_expectation(cell_cluster: &[usize], links: usize) -> f64 {
    let cells = cell_cluster.len();
    let n_clusters = cell_cluster.iter().max().map_or(0, |m| m + 1);
    let total = cells.pow(links as u32);
    let mut sum = 0usize;
    let mut counts = vec![0usize; cells];
    for code in 0..total {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut x = code;
        for _ in 0..links {
            counts[x % cells] += 1;
            x /= cells;
        }
        let mut hit = vec![false; n_clusters];
        for (c, &k) in counts.iter().enumerate() {
            if k >= 2 {
                hit[cell_cluster[c]] = true;
            }
        }
        sum += hit.iter().filter(|h| **h).count();
    }
    sum as f64 / total as f64
}

pub fn all_property_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("matrix symmetry, diagonal and range", matrix_invariants(1)),
        ("vector normalization and super-vector mass", vector_normalization(2)),
        ("Pearson affine invariance", pearson_affine(3)),
        (
            "matcher equals brute force on 1000 references",
            matcher_matches_brute_force(4, 1000),
        ),
        (
            "COM equals brute force on 500-patent fixture",
            com_matches_brute_force(5),
        ),
        ("Kamada-Kawai equilateral triangle, monotone stress", kk_equilateral(6)),
        (
            "stress gradient equals central differences",
            gradient_matches_finite_differences(7),
        ),
        (
            "t and chi-square tails equal numerical integration",
            tails_match_integration(),
        ),
        ("Monte Carlo exact 0.5 and 0.25 cases", monte_carlo_exact_cases(8)),
    ]
}
