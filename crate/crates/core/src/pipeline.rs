//! End-to-end run: match → vectors → matrices → matrix correlation → layout →
//! dynamics → emergence, written as a bundle of machine-readable files plus a
//! markdown report whose every number names the file it comes from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{derive_seed, RunConfig};
use crate::corpus::{load_domains, load_emergence, load_patents, Corpus, DomainDefinition, PatentFormat, Strictness};
use crate::dynamics::{self, CountSeries, ExpFit, PaperCounts, SeriesEntity};
use crate::emergence::{self, LinkTable};
use crate::error::{Error, Result};
use crate::layout::{self, LayoutFormat, LayoutOptions};
use crate::linkage::{
    self, breadth_metrics, build_matrix, matrix_correlation, rank_distribution, top_categories, Distribution,
    ScienceVector,
};
use crate::matcher::{match_corpus, Matcher};
use crate::taxonomy::Taxonomy;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FILE: &str = "report.md";

/// Files every bundle may contain.
pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const MATCHES: &str = "matches.csv";
    pub const MATCH_STATS: &str = "match_stats.json";
    pub const SCIENCE_VECTORS: &str = "science_vectors.csv";
    pub const SUPER_VECTORS: &str = "super_vectors.csv";
    pub const TECH_VECTORS: &str = "tech_vectors.csv";
    pub const BREADTH: &str = "breadth.csv";
    pub const RANKS: &str = "rank_distribution.csv";
    pub const SCIENCE_MATRIX: &str = "science_matrix.csv";
    pub const TECH_MATRIX: &str = "tech_matrix.csv";
    pub const MATRICES: &str = "matrices.json";
    pub const MATRIX_CORRELATION: &str = "matrix_correlation.json";
    pub const MAP_JSON: &str = "map.json";
    pub const MAP_SVG: &str = "map.svg";
    pub const MAP_DOT: &str = "map.dot";
    pub const MAP_NET: &str = "map.net";
    pub const MAP_META: &str = "map_meta.json";
    pub const DOMAIN_SERIES: &str = "domain_series.csv";
    pub const DOMAIN_FITS: &str = "domain_fits.csv";
    pub const SERIES_CORRELATIONS: &str = "series_correlations.csv";
    pub const SCIENCE_FITS: &str = "science_fits.csv";
    pub const EXPONENT_PAIRS: &str = "exponent_pairs.csv";
    pub const EXPONENT_TABLE: &str = "exponent_table.json";
    pub const EMERGENCE: &str = "emergence.json";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub config_hash: String,
}

struct Bundle {
    dir: PathBuf,
    files: BTreeSet<String>,
}

impl Bundle {
    fn put(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string());
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put(name, serde_json::to_string_pretty(value)? + "\n")
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn vectors_csv<D: Distribution>(vectors: &[D], key: &str) -> Result<String> {
    let mut buf = Vec::new();
    linkage::write_vectors_csv(&mut buf, vectors, key)?;
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    })
}

/// Statistics that may legitimately be unavailable for the data at hand.
fn is_soft(e: &Error) -> bool {
    matches!(e, Error::Undefined(_) | Error::InsufficientData(_))
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Runs every enabled stage and writes the bundle to `config.out_dir`. Output
/// is assembled in a sibling `.partial` directory and moved into place only on
/// success; on failure nothing is left behind. An existing bundle at the
/// destination is replaced; any other non-empty directory is refused.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let out = config.out_dir.clone().expect("validated");
    let replace = match fs::read_dir(&out) {
        Ok(mut entries) => {
            if entries.next().is_some() && !out.join(REPORT_FILE).is_file() {
                return Err(Error::Config(format!(
                    "{} exists and is not a report bundle",
                    out.display()
                )));
            }
            true
        }
        Err(_) => false,
    };
    let partial = partial_path(&out);
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    let mut bundle = Bundle {
        dir: partial.clone(),
        files: BTreeSet::new(),
    };
    let hash = match build(config, &mut bundle) {
        Ok(h) => h,
        Err(e) => {
            let _ = fs::remove_dir_all(&partial);
            return Err(e);
        }
    };
    if replace {
        fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    }
    fs::rename(&partial, &out).map_err(|e| Error::io(&out, e))?;
    Ok(RunSummary {
        out_dir: out,
        files: bundle.files.into_iter().collect(),
        config_hash: hash,
    })
}

/// Everything a run reads, loaded and cross-checked.
pub struct Inputs {
    pub corpus: Corpus,
    pub taxonomy: Taxonomy,
    pub domains: Vec<DomainDefinition>,
    pub paper_counts: Option<PaperCounts>,
    /// Present only when the emergence stage is enabled and both files are set.
    pub emergence: Option<(crate::corpus::EmergenceData, LinkTable)>,
}

/// Loads the inputs named by `config`. Patents, journals, categories and
/// domains must be set.
pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let strictness = if config.strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    };
    let required = |p: &Option<std::path::PathBuf>, key: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("`{key}` is required")))
    };
    let patents = required(&config.patents, "patents")?;
    let corpus = load_patents(&patents, PatentFormat::from_path(&patents))?;
    let taxonomy = Taxonomy::load(
        &required(&config.journals, "journals")?,
        &required(&config.categories, "categories")?,
        config.exclusions.as_deref(),
    )?;
    let domains = load_domains(&required(&config.domains, "domains")?, Some(&corpus), strictness)?;
    let paper_counts = match &config.paper_counts {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            Some(PaperCounts::read(f, &p.display().to_string())?)
        }
        None => None,
    };
    let emergence = match (&config.emergence, &config.links) {
        (Some(e), Some(l)) if config.emergence_tests => {
            let data = load_emergence(e, Some(&corpus), strictness)?;
            let f = fs::File::open(l).map_err(|err| Error::io(l, err))?;
            let links = LinkTable::read(f, &l.display().to_string())?;
            Some((data, links))
        }
        _ => None,
    };
    Ok(Inputs {
        corpus,
        taxonomy,
        domains,
        paper_counts,
        emergence,
    })
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn build(config: &RunConfig, bundle: &mut Bundle) -> Result<String> {
    let seed = config.seed.unwrap_or_default();
    let hash = config.hash()?;
    bundle.put(files::CONFIG, config.to_toml()?)?;
    let inputs = stage("load", load_inputs(config))?;
    let (first, last) = inputs.corpus.year_range().ok_or_else(|| Error::Stage {
        stage: "load",
        source: Box::new(Error::InsufficientData("corpus is empty".into())),
    })?;
    let years = config.year_start.unwrap_or(first)..=config.year_end.unwrap_or(last);
    let scheme = inputs.taxonomy.scheme();
    let mut report = Report::new(config, &hash, seed, &inputs, (*years.start(), *years.end()));

    // Matching
    let table = stage("match", {
        Matcher::new(&inputs.taxonomy).map(|m| match_corpus(&inputs.corpus, &inputs.domains, &m, true))
    })?;
    let mut buf = Vec::new();
    stage("match", table.write_csv(&mut buf))?;
    bundle.put(files::MATCHES, buf)?;
    let mut per_domain = BTreeMap::new();
    for ((domain, _), counts) in table.summary() {
        let e = per_domain.entry(domain).or_insert((0usize, 0usize));
        e.0 += counts.scientific;
        e.1 += counts.other;
    }
    let match_stats = json!({
        "references": table.len(),
        "scientific": table.rows().iter().filter(|r| r.citation.is_scientific).count(),
        "scientific_fraction": table.scientific_fraction(),
        "per_domain": per_domain.iter().map(|(d, (s, o))| (d.clone(), json!({
            "scientific": s,
            "other": o,
            "scientific_fraction": if s + o > 0 { Some(*s as f64 / (s + o) as f64) } else { None },
        }))).collect::<BTreeMap<_, _>>(),
    });
    bundle.put_json(files::MATCH_STATS, &match_stats)?;
    report.matching(&match_stats);

    // Vectors
    let science: Vec<ScienceVector> = stage(
        "vectors",
        inputs
            .domains
            .iter()
            .map(|d| {
                linkage::science_vector(
                    &d.domain_name,
                    table.for_domain(&d.domain_name),
                    Some(years.clone()),
                    scheme,
                    config.counting_mode,
                )
            })
            .collect(),
    )?;
    let supers = stage(
        "vectors",
        science
            .iter()
            .map(|v| linkage::super_vector(v, scheme))
            .collect::<Result<Vec<_>>>(),
    )?;
    let tech = linkage::tech_vectors(&inputs.corpus, &inputs.domains);
    bundle.put(
        files::SCIENCE_VECTORS,
        stage("vectors", vectors_csv(&science, "category"))?,
    )?;
    bundle.put(
        files::SUPER_VECTORS,
        stage("vectors", vectors_csv(&supers, "super_discipline"))?,
    )?;
    bundle.put(
        files::TECH_VECTORS,
        stage("vectors", vectors_csv(&tech, "cited_domain"))?,
    )?;
    let breadth_year = config.breadth_year.unwrap_or(*years.end());
    let breadth = stage(
        "vectors",
        inputs
            .domains
            .iter()
            .map(|d| {
                breadth_metrics(
                    &d.domain_name,
                    table.for_domain(&d.domain_name),
                    breadth_year,
                    scheme,
                    config.counting_mode,
                )
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    bundle.put(
        files::BREADTH,
        csv_text(
            &[
                "domain",
                "year",
                "n_super_disciplines",
                "n_categories",
                "top3_concentration",
            ],
            breadth.iter().map(|b| {
                vec![
                    b.domain.clone(),
                    b.year.to_string(),
                    b.n_super_disciplines.to_string(),
                    b.n_categories.to_string(),
                    b.top3_concentration
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "NA".into()),
                ]
            }),
        )?,
    )?;
    let mut rank_rows = Vec::new();
    for v in science.iter().filter(|v| !v.empty) {
        for r in stage("vectors", rank_distribution(v))? {
            rank_rows.push(vec![
                v.domain.clone(),
                r.rank.to_string(),
                r.category,
                r.fraction.to_string(),
            ]);
        }
    }
    bundle.put(
        files::RANKS,
        csv_text(&["domain", "rank", "category", "fraction"], rank_rows)?,
    )?;
    report.vectors(&science, &tech, &breadth, breadth_year);

    // Matrices
    let sm = stage("matrices", build_matrix(&science, config.science_similarity))?;
    let tm = stage("matrices", build_matrix(&tech, config.tech_similarity))?;
    bundle.put(files::SCIENCE_MATRIX, stage("matrices", sm.to_csv())?)?;
    bundle.put(files::TECH_MATRIX, stage("matrices", tm.to_csv())?)?;
    bundle.put_json(
        files::MATRICES,
        &json!({
            "science": {"file": files::SCIENCE_MATRIX, "kind": sm.kind, "undefined_labels": sm.undefined_labels()},
            "tech": {"file": files::TECH_MATRIX, "kind": tm.kind, "undefined_labels": tm.undefined_labels()},
            "counting_mode": config.counting_mode,
            "undefined_entries": "NA",
        }),
    )?;
    let mc = match matrix_correlation(&sm, &tm) {
        Ok(c) => {
            json!({"status": "ok", "r": c.r, "pairs_used": c.pairs_used, "pairs_skipped": c.pairs_skipped, "triangle": c.triangle})
        }
        Err(e) if is_soft(&e) => json!({"status": "undefined", "reason": e.to_string(), "triangle": "strict-upper"}),
        Err(e) => {
            return Err(Error::Stage {
                stage: "matrix_correlation",
                source: Box::new(e),
            })
        }
    };
    bundle.put_json(files::MATRIX_CORRELATION, &mc)?;
    report.matrices(config, &mc);

    // Layout
    if config.layout {
        let laid = layout::distances_from_similarity(&sm)
            .and_then(|d| layout::kamada_kawai(&d, derive_seed(seed, "layout"), LayoutOptions::default()));
        match laid {
            Ok(l) => {
                for (name, format) in [
                    (files::MAP_JSON, LayoutFormat::Json),
                    (files::MAP_SVG, LayoutFormat::SvgScatter),
                    (files::MAP_DOT, LayoutFormat::Dot),
                    (files::MAP_NET, LayoutFormat::PajekNet),
                ] {
                    bundle.put(name, stage("layout", layout::export_layout(&l, format))?)?;
                }
                let meta = json!({
                    "status": "ok",
                    "source": files::SCIENCE_MATRIX,
                    "transform": "distance = 1 - r, clamped to [1e-6, 2]",
                    "algorithm": "kamada-kawai, node-wise Newton updates",
                    "seed": derive_seed(seed, "layout"),
                    "stress": l.stress,
                    "iterations": l.iterations,
                    "converged": l.converged,
                });
                bundle.put_json(files::MAP_META, &meta)?;
                report.layout(Some(&meta), None);
            }
            Err(e) if is_soft(&e) || matches!(e, Error::InvalidInput(_)) => {
                let meta = json!({"status": "skipped", "reason": e.to_string()});
                bundle.put_json(files::MAP_META, &meta)?;
                report.layout(None, Some(&e.to_string()));
            }
            Err(e) => {
                return Err(Error::Stage {
                    stage: "layout",
                    source: Box::new(e),
                })
            }
        }
    }

    // Dynamics
    if config.dynamics {
        stage(
            "dynamics",
            dynamics_stage(config, &inputs, &science, years.clone(), bundle, &mut report),
        )?;
    }

    // Emergence
    if config.emergence_tests {
        match &inputs.emergence {
            Some((data, links)) => {
                let result = stage(
                    "emergence",
                    emergence::analyze(
                        data,
                        links,
                        config.simulations,
                        derive_seed(seed, "emergence"),
                        config.fixed_marginals,
                        config.yates,
                    ),
                )?;
                bundle.put_json(files::EMERGENCE, &result)?;
                report.emergence(Some(&result), config);
            }
            None => report.emergence(None, config),
        }
    }

    bundle.put(REPORT_FILE, report.finish())?;
    Ok(hash)
}

fn fit_row(label: &str, f: &ExpFit) -> Vec<String> {
    vec![
        label.to_string(),
        f.exponent.to_string(),
        f.intercept.to_string(),
        f.origin_year.to_string(),
        f.r_squared.to_string(),
        f.n_points.to_string(),
        f.excluded_years
            .iter()
            .map(|y| y.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    ]
}

const FIT_HEADER: [&str; 7] = [
    "series",
    "b",
    "a",
    "origin_year",
    "r_squared",
    "n_points",
    "excluded_years",
];

fn dynamics_stage(
    config: &RunConfig,
    inputs: &Inputs,
    science: &[ScienceVector],
    years: std::ops::RangeInclusive<i32>,
    bundle: &mut Bundle,
    report: &mut Report,
) -> Result<()> {
    let mut series_rows = Vec::new();
    let mut domain_fits = BTreeMap::new();
    let mut fit_rows = Vec::new();
    let mut notes = Vec::new();
    let mut domain_series = BTreeMap::new();
    for d in &inputs.domains {
        let s = dynamics::patent_count_series(&inputs.corpus, d, years.clone())?;
        for &(y, c) in s.points() {
            series_rows.push(vec![d.domain_name.clone(), y.to_string(), c.to_string()]);
        }
        match dynamics::fit_exponential(&s, config.fit_method) {
            Ok(f) => {
                fit_rows.push(fit_row(&d.domain_name, &f));
                domain_fits.insert(d.domain_name.clone(), f);
            }
            Err(e) if is_soft(&e) => notes.push(format!("{}: {e}", d.domain_name)),
            Err(e) => return Err(e),
        }
        domain_series.insert(d.domain_name.clone(), s);
    }
    bundle.put(
        files::DOMAIN_SERIES,
        csv_text(&["domain", "year", "count"], series_rows)?,
    )?;
    bundle.put(files::DOMAIN_FITS, csv_text(&FIT_HEADER, fit_rows)?)?;

    let mut corr_rows = Vec::new();
    let mut science_fits = BTreeMap::new();
    let mut sci_rows = Vec::new();
    let mut table = None;
    if let Some(papers) = &inputs.paper_counts {
        for v in science.iter().filter(|v| !v.empty) {
            let tops = top_categories(v, config.top_share);
            let own = &domain_series[&v.domain];
            let mut parts = Vec::new();
            for cat in &tops {
                let cs = papers.category_series(cat, years.clone())?;
                match dynamics::series_correlation(own, &cs) {
                    Ok(c) => corr_rows.push(vec![
                        v.domain.clone(),
                        cat.clone(),
                        c.r.to_string(),
                        c.p_value.to_string(),
                        c.n.to_string(),
                    ]),
                    Err(e) if is_soft(&e) => notes.push(format!("{} / {cat}: {e}", v.domain)),
                    Err(e) => return Err(e),
                }
                parts.push(cs);
            }
            let refs: Vec<&CountSeries> = parts.iter().collect();
            let combined = CountSeries::sum(v.domain.clone(), SeriesEntity::PapersInCategory, &refs)?;
            match dynamics::fit_exponential(&combined, config.fit_method) {
                Ok(f) => {
                    let mut row = fit_row(&v.domain, &f);
                    row.insert(1, tops.join(";"));
                    sci_rows.push(row);
                    science_fits.insert(v.domain.clone(), f);
                }
                Err(e) if is_soft(&e) => notes.push(format!("{} science: {e}", v.domain)),
                Err(e) => return Err(e),
            }
        }
        bundle.put(
            files::SERIES_CORRELATIONS,
            csv_text(&["domain", "field", "r", "p", "n"], corr_rows.clone())?,
        )?;
        let mut header = FIT_HEADER.to_vec();
        header[0] = "domain";
        header.insert(1, "categories");
        bundle.put(files::SCIENCE_FITS, csv_text(&header, sci_rows)?)?;
        let t = match dynamics::exponent_pair_table(&domain_fits, &science_fits, config.fit_threshold) {
            Ok(t) => {
                bundle.put(
                    files::EXPONENT_PAIRS,
                    csv_text(
                        &["domain", "b_domain", "b_categories"],
                        t.rows
                            .iter()
                            .map(|r| vec![r.domain.clone(), r.b_domain.to_string(), r.b_categories.to_string()]),
                    )?,
                )?;
                json!({"status": "ok", "r": t.r, "threshold": t.threshold, "rows": t.rows, "excluded": t.excluded})
            }
            Err(e) if is_soft(&e) => {
                json!({"status": "insufficient", "reason": e.to_string(), "threshold": config.fit_threshold})
            }
            Err(e) => return Err(e),
        };
        bundle.put_json(files::EXPONENT_TABLE, &t)?;
        table = Some(t);
    }
    report.dynamics(
        config,
        &domain_fits,
        &corr_rows,
        table.as_ref(),
        &notes,
        inputs.paper_counts.is_some(),
    );
    Ok(())
}

struct Report {
    text: String,
}

impl Report {
    fn new(config: &RunConfig, hash: &str, seed: u64, inputs: &Inputs, years: (i32, i32)) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# Science-technology linkage report\n");
        let _ = writeln!(text, "- tool version: {VERSION}");
        let _ = writeln!(text, "- seed: {seed}");
        let _ = writeln!(text, "- config sha256: `{hash}` (`{}`)", files::CONFIG);
        let _ = writeln!(text, "\n## Configuration\n");
        let _ = writeln!(text, "- year range: {}-{}", years.0, years.1);
        let _ = writeln!(text, "- counting mode: {}", config.counting_mode);
        let _ = writeln!(
            text,
            "- similarity: science {}, tech {}",
            config.science_similarity, config.tech_similarity
        );
        let _ = writeln!(text, "- matrix correlation triangle: strict upper (diagonal excluded)");
        let _ = writeln!(
            text,
            "- exponential fit: {}, r2 threshold {}",
            config.fit_method, config.fit_threshold
        );
        let _ = writeln!(text, "- top categories: cumulative share > {}", config.top_share);
        let _ = writeln!(text, "- growth series: raw annual counts");
        let _ = writeln!(
            text,
            "- null model: uniform assignment, {} simulations, {}",
            config.simulations,
            if config.fixed_marginals {
                "per-cluster link counts fixed"
            } else {
                "links placed independently"
            }
        );
        let _ = writeln!(
            text,
            "- chi-square: Pearson, {}",
            if config.yates { "Yates-corrected" } else { "uncorrected" }
        );
        let _ = writeln!(
            text,
            "- referential checks: {}",
            if config.strict { "strict" } else { "lenient" }
        );
        let counts = inputs.taxonomy.counts();
        let _ = writeln!(
            text,
            "- inputs: {} patents, {} domains, {} journals, {} categories",
            inputs.corpus.len(),
            inputs.domains.len(),
            counts.journals,
            counts.categories
        );
        Self { text }
    }

    fn section(&mut self, title: &str) {
        let _ = writeln!(self.text, "\n## {title}\n");
    }

    fn matching(&mut self, stats: &serde_json::Value) {
        self.section("Citation matching");
        let _ = writeln!(
            self.text,
            "{} references, {} matched to a journal, fraction {} (`{}`; rows in `{}`).",
            stats["references"],
            stats["scientific"],
            stats["scientific_fraction"]
                .as_f64()
                .map(fmt4)
                .unwrap_or_else(|| "NA".into()),
            files::MATCH_STATS,
            files::MATCHES
        );
    }

    fn vectors(
        &mut self,
        science: &[ScienceVector],
        tech: &[linkage::TechVector],
        breadth: &[linkage::Breadth],
        year: i32,
    ) {
        self.section("Science and tech vectors");
        let _ = writeln!(
            self.text,
            "Category fractions in `{}`, super-discipline fractions in `{}`, inter-domain fractions in `{}`, ranked categories in `{}`.\n",
            files::SCIENCE_VECTORS,
            files::SUPER_VECTORS,
            files::TECH_VECTORS,
            files::RANKS
        );
        let empty: Vec<&str> = science.iter().filter(|v| v.empty).map(|v| v.domain.as_str()).collect();
        let empty_tech: Vec<&str> = tech.iter().filter(|v| v.empty).map(|v| v.domain.as_str()).collect();
        if !empty.is_empty() {
            let _ = writeln!(
                self.text,
                "Domains without scientific citations: {}.\n",
                empty.join(", ")
            );
        }
        if !empty_tech.is_empty() {
            let _ = writeln!(
                self.text,
                "Domains without inter-domain citations: {}.\n",
                empty_tech.join(", ")
            );
        }
        let _ = writeln!(self.text, "Breadth in {year} (`{}`):\n", files::BREADTH);
        let _ = writeln!(self.text, "| domain | super-disciplines | categories | top-3 share |");
        let _ = writeln!(self.text, "|---|---|---|---|");
        for b in breadth {
            let _ = writeln!(
                self.text,
                "| {} | {} | {} | {} |",
                b.domain,
                b.n_super_disciplines,
                b.n_categories,
                b.top3_concentration.map(fmt4).unwrap_or_else(|| "NA".into())
            );
        }
    }

    fn matrices(&mut self, config: &RunConfig, mc: &serde_json::Value) {
        self.section("Relatedness matrices");
        let _ = writeln!(
            self.text,
            "Science matrix ({}) in `{}`, tech matrix ({}) in `{}`, metadata in `{}`.\n",
            config.science_similarity,
            files::SCIENCE_MATRIX,
            config.tech_similarity,
            files::TECH_MATRIX,
            files::MATRICES
        );
        match mc["r"].as_f64() {
            Some(r) => {
                let _ = writeln!(
                    self.text,
                    "Matrix-to-matrix correlation r = {} over {} pairs (`{}`).",
                    fmt4(r),
                    mc["pairs_used"],
                    files::MATRIX_CORRELATION
                );
            }
            None => {
                let _ = writeln!(
                    self.text,
                    "Matrix-to-matrix correlation undefined: {} (`{}`).",
                    mc["reason"].as_str().unwrap_or(""),
                    files::MATRIX_CORRELATION
                );
            }
        }
    }

    fn layout(&mut self, meta: Option<&serde_json::Value>, skipped: Option<&str>) {
        self.section("Map");
        match (meta, skipped) {
            (Some(m), _) => {
                let _ = writeln!(
                    self.text,
                    "Kamada-Kawai layout of the science matrix, final stress {} after {} iterations (`{}`). Drawings: `{}`, `{}`, `{}`.",
                    m["stress"].as_f64().map(|s| format!("{s:.6e}")).unwrap_or_default(),
                    m["iterations"],
                    files::MAP_META,
                    files::MAP_SVG,
                    files::MAP_DOT,
                    files::MAP_NET
                );
            }
            (None, reason) => {
                let _ = writeln!(
                    self.text,
                    "Layout skipped: {} (`{}`).",
                    reason.unwrap_or(""),
                    files::MAP_META
                );
            }
        }
    }

    fn dynamics(
        &mut self,
        config: &RunConfig,
        fits: &BTreeMap<String, ExpFit>,
        correlations: &[Vec<String>],
        table: Option<&serde_json::Value>,
        notes: &[String],
        have_papers: bool,
    ) {
        self.section("Growth dynamics");
        let _ = writeln!(
            self.text,
            "Domain fits (`{}`; series in `{}`):\n",
            files::DOMAIN_FITS,
            files::DOMAIN_SERIES
        );
        let _ = writeln!(self.text, "| domain | b | r2 | points |");
        let _ = writeln!(self.text, "|---|---|---|---|");
        for (d, f) in fits {
            let _ = writeln!(
                self.text,
                "| {d} | {:.6} | {} | {} |",
                f.exponent,
                fmt4(f.r_squared),
                f.n_points
            );
        }
        if !have_papers {
            let _ = writeln!(
                self.text,
                "\nNo paper counts supplied; science growth comparisons not computed."
            );
        } else {
            let _ = writeln!(
                self.text,
                "\nDomain growth against top-category paper growth (`{}`):\n",
                files::SERIES_CORRELATIONS
            );
            let _ = writeln!(self.text, "| domain | field | r | p |");
            let _ = writeln!(self.text, "|---|---|---|---|");
            for row in correlations {
                let num = |s: &str, f: fn(f64) -> String| s.parse::<f64>().map(f).unwrap_or_else(|_| s.to_string());
                let _ = writeln!(
                    self.text,
                    "| {} | {} | {} | {} |",
                    row[0],
                    row[1],
                    num(&row[2], fmt4),
                    num(&row[3], format_p)
                );
            }
            if let Some(t) = table {
                match t["r"].as_f64() {
                    Some(r) => {
                        let _ = writeln!(
                            self.text,
                            "\nExponent pairs for {} domains with r2 >= {} (`{}`): r = {} (`{}`).",
                            t["rows"].as_array().map(Vec::len).unwrap_or(0),
                            config.fit_threshold,
                            files::EXPONENT_PAIRS,
                            fmt4(r),
                            files::EXPONENT_TABLE
                        );
                    }
                    None => {
                        let _ = writeln!(
                            self.text,
                            "\nExponent table not computed: {} (`{}`).",
                            t["reason"].as_str().unwrap_or(""),
                            files::EXPONENT_TABLE
                        );
                    }
                }
            }
        }
        if !notes.is_empty() {
            let _ = writeln!(self.text, "\nNot computed:\n");
            for n in notes {
                let _ = writeln!(self.text, "- {n}");
            }
        }
    }

    fn emergence(&mut self, result: Option<&emergence::EmergenceReport>, config: &RunConfig) {
        self.section("Emergence");
        let Some(r) = result else {
            let _ = writeln!(self.text, "No emergence inputs supplied.");
            return;
        };
        let f = files::EMERGENCE;
        if let (Some(t), Some(c)) = (&r.cited_ratio, &r.cited_ratio_test) {
            let _ = writeln!(
                self.text,
                "Cited-ratio test: table ({}, {}, {}, {}), chi-square {}, p {} (`{f}`).\n",
                t.cited_in_group,
                t.not_cited_in_group,
                t.cited_outside,
                t.not_cited_outside,
                fmt4(c.statistic),
                format_p(c.p_value)
            );
        }
        let ll = &r.lead_lag;
        let _ = writeln!(
            self.text,
            "Lead/lag over {} links: after {}, same year {}, before {} (`{f}`).\n",
            ll.total, ll.after, ll.same, ll.before
        );
        let _ = writeln!(
            self.text,
            "Multiple links over {} linked clusters ({} simulations per kind, `{f}`):\n",
            r.multilink.linked_clusters, config.simulations
        );
        let _ = writeln!(
            self.text,
            "| kind | observed | expected | std. error | chi-square | p |"
        );
        let _ = writeln!(self.text, "|---|---|---|---|---|---|");
        for k in &r.kinds {
            let (chi, p) = k
                .chi_square
                .map(|c| (fmt4(c.statistic), format_p(c.p_value)))
                .unwrap_or(("NA".into(), "NA".into()));
            let _ = writeln!(
                self.text,
                "| {} | {} | {} | {} | {chi} | {p} |",
                k.kind,
                k.observed,
                fmt4(k.monte_carlo.expectation),
                fmt4(k.monte_carlo.std_error)
            );
        }
    }

    fn finish(self) -> String {
        self.text
    }
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        fmt4(p)
    }
}
