//! `atlas`: command-line front end for science-technology linkage analysis.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 internal error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atlas_core::com::{com_search, ranking_to_csv, ClassSystem, ComOptions, ScoreRule, TermLogic};
use atlas_core::config::{derive_seed, RunConfig};
use atlas_core::corpus::synthetic::{generate_synthetic_corpus, GeneratorSpec};
use atlas_core::corpus::{
    load_domains, load_emergence, load_patents, write_domains, write_patents, PatentFormat, Strictness,
};
use atlas_core::dynamics::{self, FitMethod, PaperCounts};
use atlas_core::emergence::{
    monte_carlo_expectation, multilink_chi_square, multilink_stats, LinkKind, LinkTable, NullModelSpec,
};
use atlas_core::layout::{self, LayoutFormat, LayoutOptions};
use atlas_core::linkage::{
    self, build_matrix, matrix_correlation, read_vectors_csv, CountingMode, PlainVector, RelatednessMatrix,
    SimilarityKind,
};
use atlas_core::matcher::{match_corpus, Matcher};
use atlas_core::pipeline::{self, load_inputs, run_pipeline};
use atlas_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "atlas", version, about = "Science-technology linkage analysis")]
struct Cli {
    /// Top-level seed; every stochastic stage derives its own sub-seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Flat TOML config whose keys mirror the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize input files, or generate the synthetic fixture.
    Ingest(IngestArgs),
    /// Build a domain patent set by classification overlap.
    Com(ComArgs),
    /// Match citations and write science, super-discipline and tech vectors.
    Vectors(VectorsArgs),
    /// Correlate a science and a tech matrix (or the vectors behind them).
    Correlate(CorrelateArgs),
    /// Lay out a relatedness matrix and draw it.
    Map(MapArgs),
    /// Fit exponential growth to one domain's patent counts.
    Dynamics(DynamicsArgs),
    /// Multiple-link null-model expectations and chi-square tests.
    Emergence(EmergenceArgs),
    /// Run the full pipeline and write the report bundle.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct InputArgs {
    #[arg(long)]
    patents: Option<PathBuf>,
    #[arg(long)]
    journals: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    exclusions: Option<PathBuf>,
    #[arg(long)]
    domains: Option<PathBuf>,
    #[arg(long)]
    paper_counts: Option<PathBuf>,
    #[arg(long)]
    year_start: Option<i32>,
    #[arg(long)]
    year_end: Option<i32>,
    /// per-category or fractional.
    #[arg(long)]
    counting_mode: Option<CountingMode>,
    /// Warn instead of failing on ids that do not resolve.
    #[arg(long)]
    lenient: bool,
}

impl InputArgs {
    fn apply(&self, c: &mut RunConfig) {
        let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
            if src.is_some() {
                dst.clone_from(src);
            }
        };
        set(&mut c.patents, &self.patents);
        set(&mut c.journals, &self.journals);
        set(&mut c.categories, &self.categories);
        set(&mut c.exclusions, &self.exclusions);
        set(&mut c.domains, &self.domains);
        set(&mut c.paper_counts, &self.paper_counts);
        c.year_start = self.year_start.or(c.year_start);
        c.year_end = self.year_end.or(c.year_end);
        if let Some(m) = self.counting_mode {
            c.counting_mode = m;
        }
        if self.lenient {
            c.strict = false;
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Write the bundled synthetic fixture (needs --seed and --out-dir).
    #[arg(long)]
    synthetic: bool,
    /// With --synthetic: generate this many domains instead of the fixture.
    #[arg(long, requires = "synthetic")]
    n_domains: Option<usize>,
    #[arg(long, requires = "n_domains", default_value_t = 24)]
    n_categories: usize,
    #[arg(long, requires = "n_domains", default_value_t = 100)]
    patents_per_domain: usize,
    #[arg(long)]
    emergence: Option<PathBuf>,
    #[command(flatten)]
    inputs: InputArgs,
}

#[derive(Args)]
struct ComArgs {
    /// Pre-search keywords, comma-separated.
    #[arg(long, required = true, value_delimiter = ',')]
    terms: Vec<String>,
    #[arg(long)]
    corpus: PathBuf,
    /// Domain file to write.
    #[arg(long)]
    out: PathBuf,
    /// Domain name; defaults to the joined terms.
    #[arg(long)]
    name: Option<String>,
    /// Class-ranking CSV; defaults to `<out stem>.ranking.csv`.
    #[arg(long)]
    ranking: Option<PathBuf>,
    /// Top classes per system whose pairwise overlaps are united.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// mean or harmonic.
    #[arg(long, default_value = "mean")]
    score: ScoreRule,
    /// Match patents containing any term instead of all terms.
    #[arg(long)]
    any: bool,
}

#[derive(Args)]
struct VectorsArgs {
    #[command(flatten)]
    inputs: InputArgs,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Science matrix CSV, or science vector CSV.
    #[arg(long)]
    science: PathBuf,
    /// Tech matrix CSV, or tech vector CSV.
    #[arg(long)]
    tech: PathBuf,
    #[arg(long)]
    science_kind: Option<SimilarityKind>,
    #[arg(long)]
    tech_kind: Option<SimilarityKind>,
}

#[derive(Args)]
struct MapArgs {
    /// Similarity matrix CSV; distances are 1 - r.
    #[arg(long)]
    matrix: PathBuf,
    /// Output file; format follows the extension (svg, json, dot, net).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DynamicsArgs {
    #[arg(long)]
    domain: String,
    /// Fit this category's paper counts instead of the domain's patents.
    #[arg(long)]
    category: Option<String>,
    /// log-linear or nonlinear.
    #[arg(long)]
    method: Option<FitMethod>,
    #[command(flatten)]
    inputs: InputArgs,
}

#[derive(Args)]
struct EmergenceArgs {
    /// Link table CSV; dimensions and observed counts come from it.
    #[arg(long)]
    links: Option<PathBuf>,
    /// Emergence file to resolve the links against.
    #[arg(long)]
    emergence: Option<PathBuf>,
    #[arg(long)]
    sims: Option<usize>,
    /// 1, 2 or 3; all kinds when omitted.
    #[arg(long)]
    kind: Option<LinkKind>,
    /// Without --links: number of linked clusters.
    #[arg(long, conflicts_with = "links")]
    clusters: Option<usize>,
    #[arg(long, conflicts_with = "links")]
    topics: Option<usize>,
    #[arg(long, conflicts_with = "links")]
    n_links: Option<usize>,
    #[arg(long, conflicts_with = "links")]
    n_patents: Option<usize>,
    #[arg(long, conflicts_with = "links")]
    n_papers: Option<usize>,
    /// Without --links: observed number of clusters with a multiple link.
    #[arg(long, conflicts_with = "links")]
    observed: Option<usize>,
    /// Keep each cluster's observed link count fixed.
    #[arg(long)]
    fixed_marginals: bool,
    #[arg(long)]
    yates: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long)]
    emergence: Option<PathBuf>,
    #[arg(long)]
    links: Option<PathBuf>,
    #[arg(long)]
    sims: Option<usize>,
    #[arg(long)]
    fixed_marginals: bool,
    #[arg(long)]
    yates: bool,
    #[arg(long)]
    no_layout: bool,
    #[arg(long)]
    no_dynamics: bool,
    #[arg(long)]
    no_emergence: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.out_dir.is_some() {
        config.out_dir.clone_from(&cli.out_dir);
    }
    match cli.command {
        Command::Ingest(a) => ingest(config, a),
        Command::Com(a) => com(a),
        Command::Vectors(a) => vectors(config, a),
        Command::Correlate(a) => correlate(config, a),
        Command::Map(a) => map(config, a),
        Command::Dynamics(a) => dynamics_cmd(config, a),
        Command::Emergence(a) => emergence_cmd(config, a),
        Command::Report(a) => report(config, a),
    }
}

fn require<T: Clone>(value: &Option<T>, what: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} is required")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A closed stdout is not an error.
fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn strictness(config: &RunConfig) -> Strictness {
    if config.strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    }
}

fn ingest(mut config: RunConfig, a: IngestArgs) -> Result<()> {
    if a.synthetic {
        let seed = require(&config.seed, "--seed")?;
        let out = require(&config.out_dir, "--out-dir")?;
        let spec = match a.n_domains {
            Some(n) => GeneratorSpec::generic(n, a.n_categories, a.patents_per_domain),
            None => GeneratorSpec::fixture(),
        };
        let bundle = generate_synthetic_corpus(seed, &spec)?;
        bundle.write_to(&out)?;
        return print_json(&json!({
            "out_dir": out,
            "patents": bundle.corpus.len(),
            "domains": bundle.domains.len(),
            "categories": bundle.truth.categories.len(),
            "seed": seed,
        }));
    }
    a.inputs.apply(&mut config);
    let patents = require(&config.patents, "--patents")?;
    let corpus = load_patents(&patents, PatentFormat::from_path(&patents))?;
    let domains = match &config.domains {
        Some(p) => Some(load_domains(p, Some(&corpus), strictness(&config))?),
        None => None,
    };
    let emergence = match a.emergence.as_ref().or(config.emergence.as_ref()) {
        Some(p) => Some(load_emergence(p, Some(&corpus), strictness(&config))?),
        None => None,
    };
    if let Some(out) = &config.out_dir {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("patents.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_patents(std::io::BufWriter::new(file), &corpus, PatentFormat::Jsonl)?;
        if let Some(d) = &domains {
            write_domains(&out.join("domains.json"), d)?;
        }
    }
    print_json(&json!({
        "patents": corpus.len(),
        "years": corpus.year_range(),
        "domains": domains.as_ref().map(|d| d.iter().map(|d| (d.domain_name.clone(), d.patent_ids.len())).collect::<std::collections::BTreeMap<_, _>>()),
        "emergence": emergence.as_ref().map(|e| json!({"clusters": e.clusters.len(), "topics": e.topics.len()})),
    }))
}

fn com(a: ComArgs) -> Result<()> {
    let corpus = load_patents(&a.corpus, PatentFormat::from_path(&a.corpus))?;
    let options = ComOptions {
        score: a.score,
        logic: if a.any { TermLogic::Any } else { TermLogic::All },
        top_k: a.top_k,
    };
    let result = com_search(&a.terms, &corpus, options)?;
    let name = a.name.unwrap_or_else(|| a.terms.join(" "));
    let domain = result.to_domain(&name)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_domains(&a.out, std::slice::from_ref(&domain))?;
    let ranking_path = a.ranking.unwrap_or_else(|| a.out.with_extension("ranking.csv"));
    let mut csv = ranking_to_csv(&result.ipc_ranking, ClassSystem::Ipc)?;
    let upc = ranking_to_csv(&result.upc_ranking, ClassSystem::Upc)?;
    csv.extend(upc.lines().skip(1).map(|l| format!("{l}\n")));
    write(&ranking_path, &csv)?;
    print_json(&json!({
        "domain": name,
        "presearch": result.presearch.len(),
        "patents": domain.patent_ids.len(),
        "top_ipc": result.ipc_ranking.first().map(|s| &s.class_code),
        "top_upc": result.upc_ranking.first().map(|s| &s.class_code),
        "domain_file": a.out,
        "ranking_file": ranking_path,
    }))
}

fn vectors(mut config: RunConfig, a: VectorsArgs) -> Result<()> {
    a.inputs.apply(&mut config);
    config.emergence_tests = false;
    let out = require(&config.out_dir, "--out-dir")?;
    let inputs = load_inputs(&config)?;
    let matcher = Matcher::new(&inputs.taxonomy)?;
    let table = match_corpus(&inputs.corpus, &inputs.domains, &matcher, true);
    let years = match (config.year_start, config.year_end) {
        (None, None) => None,
        (s, e) => {
            let (lo, hi) = inputs.corpus.year_range().unwrap_or((i32::MIN, i32::MAX));
            Some(s.unwrap_or(lo)..=e.unwrap_or(hi))
        }
    };
    let scheme = inputs.taxonomy.scheme();
    let science = inputs
        .domains
        .iter()
        .map(|d| {
            linkage::science_vector(
                &d.domain_name,
                table.for_domain(&d.domain_name),
                years.clone(),
                scheme,
                config.counting_mode,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let supers = science
        .iter()
        .map(|v| linkage::super_vector(v, scheme))
        .collect::<Result<Vec<_>>>()?;
    let tech = linkage::tech_vectors(&inputs.corpus, &inputs.domains);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    fs::write(out.join(pipeline::files::MATCHES), buf).map_err(|e| Error::io(&out, e))?;
    let put = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = out.join(name);
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    };
    put(pipeline::files::SCIENCE_VECTORS, &|w| {
        linkage::write_vectors_csv(w, &science, "category")
    })?;
    put(pipeline::files::SUPER_VECTORS, &|w| {
        linkage::write_vectors_csv(w, &supers, "super_discipline")
    })?;
    put(pipeline::files::TECH_VECTORS, &|w| {
        linkage::write_vectors_csv(w, &tech, "cited_domain")
    })?;
    print_json(&json!({
        "references": table.len(),
        "scientific_fraction": table.scientific_fraction(),
        "domains": science.len(),
        "empty_science_vectors": science.iter().filter(|v| v.empty).map(|v| &v.domain).collect::<Vec<_>>(),
        "out_dir": out,
    }))
}

/// Reads a matrix CSV, or builds one from a vector CSV.
fn read_matrix(path: &Path, kind: SimilarityKind) -> Result<RelatednessMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    if first.starts_with("domain,") && first.split(',').count() == 3 {
        let vectors: Vec<PlainVector> = read_vectors_csv(&text)?;
        build_matrix(&vectors, kind)
    } else {
        RelatednessMatrix::from_csv(&text, kind)
    }
}

fn correlate(config: RunConfig, a: CorrelateArgs) -> Result<()> {
    let science = read_matrix(&a.science, a.science_kind.unwrap_or(config.science_similarity))?;
    let mut tech = read_matrix(&a.tech, a.tech_kind.unwrap_or(config.tech_similarity))?;
    if science.labels != tech.labels {
        let order = science
            .labels
            .iter()
            .map(|l| tech.labels.iter().position(|t| t == l))
            .collect::<Option<Vec<_>>>()
            .filter(|o| o.len() == tech.labels.len())
            .ok_or_else(|| Error::InvalidInput("science and tech matrices cover different domains".into()))?;
        tech = tech.permuted(&order);
    }
    let c = matrix_correlation(&science, &tech)?;
    print_json(&json!({
        "r": c.r,
        "pairs_used": c.pairs_used,
        "pairs_skipped": c.pairs_skipped,
        "triangle": c.triangle,
        "science_kind": science.kind,
        "tech_kind": tech.kind,
    }))
}

fn map(config: RunConfig, a: MapArgs) -> Result<()> {
    let format = LayoutFormat::from_path(&a.out)?;
    let text = fs::read_to_string(&a.matrix).map_err(|e| Error::io(&a.matrix, e))?;
    let matrix = RelatednessMatrix::from_csv(&text, config.science_similarity)?;
    let d = layout::distances_from_similarity(&matrix)?;
    let seed = derive_seed(config.seed.unwrap_or_default(), "layout");
    let result = layout::kamada_kawai(&d, seed, LayoutOptions::default())?;
    write(&a.out, &layout::export_layout(&result, format)?)?;
    print_json(&json!({
        "out": a.out,
        "nodes": result.labels.len(),
        "stress": result.stress,
        "iterations": result.iterations,
        "converged": result.converged,
        "seed": seed,
    }))
}

fn dynamics_cmd(mut config: RunConfig, a: DynamicsArgs) -> Result<()> {
    a.inputs.apply(&mut config);
    let method = a.method.unwrap_or(config.fit_method);
    let patents = require(&config.patents, "--patents")?;
    let corpus = load_patents(&patents, PatentFormat::from_path(&patents))?;
    let (lo, hi) = corpus
        .year_range()
        .ok_or_else(|| Error::InsufficientData("corpus is empty".into()))?;
    let years = config.year_start.unwrap_or(lo)..=config.year_end.unwrap_or(hi);
    let series = match &a.category {
        Some(cat) => {
            let path = require(&config.paper_counts, "--paper-counts")?;
            let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            PaperCounts::read(f, &path.display().to_string())?.category_series(cat, years)?
        }
        None => {
            let domains = load_domains(
                &require(&config.domains, "--domains")?,
                Some(&corpus),
                strictness(&config),
            )?;
            let domain = domains
                .iter()
                .find(|d| d.domain_name == a.domain)
                .ok_or_else(|| Error::InvalidInput(format!("unknown domain `{}`", a.domain)))?;
            dynamics::patent_count_series(&corpus, domain, years)?
        }
    };
    let fit = dynamics::fit_exponential(&series, method)?;
    print_json(&json!({
        "domain": a.domain,
        "category": a.category,
        "exponent": fit.exponent,
        "fit": fit,
        "qualifies": fit.r_squared >= config.fit_threshold,
    }))
}

fn emergence_cmd(config: RunConfig, a: EmergenceArgs) -> Result<()> {
    let n_simulations = a.sims.unwrap_or(config.simulations);
    let seed = require(&config.seed, "--seed")?;
    let fixed = a.fixed_marginals || config.fixed_marginals;
    let yates = a.yates || config.yates;
    let links_path = a.links.clone().or(config.links.clone());
    let (spec, observed): (NullModelSpec, Option<[usize; 3]>) = match links_path {
        Some(path) => {
            let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let links = LinkTable::read(f, &path.display().to_string())?;
            if let Some(ep) = a.emergence.as_ref().or(config.emergence.as_ref()) {
                links.resolve(&load_emergence(ep, None, Strictness::Lenient)?)?;
            }
            let dims = links.observed_dimensions();
            let mut spec = NullModelSpec::from_observed(&dims, n_simulations, seed);
            if fixed {
                spec = spec.with_fixed_marginals(dims.cluster_link_counts.clone());
            }
            let m = multilink_stats(&links);
            (spec, Some([m.kind1, m.kind2, m.kind3]))
        }
        None => {
            if fixed {
                return Err(Error::Config("--fixed-marginals needs --links".into()));
            }
            let mut spec = NullModelSpec::new(
                require(&a.clusters, "--links or --clusters")?,
                require(&a.topics, "--topics")?,
                require(&a.n_links, "--n-links")?,
                n_simulations,
                seed,
            );
            spec.n_patents = a.n_patents;
            spec.n_papers = a.n_papers;
            (spec, a.observed.map(|o| [o; 3]))
        }
    };
    let kinds: Vec<LinkKind> = match a.kind {
        Some(k) => vec![k],
        None => LinkKind::ALL.to_vec(),
    };
    let mut results = Vec::new();
    for kind in kinds {
        let mut s = spec.clone();
        s.seed = seed.wrapping_add(kind.number() as u64 - 1);
        let mc = monte_carlo_expectation(&s, kind)?;
        let observed = observed.map(|o| o[kind.number() as usize - 1]);
        let chi = observed
            .map(|o| multilink_chi_square(o as f64, mc.expectation, spec.n_clusters, yates))
            .transpose()?;
        results.push(json!({
            "kind": kind,
            "model": mc.model,
            "seed": mc.seed,
            "n_simulations": mc.n_simulations,
            "expectation": mc.expectation,
            "std_dev": mc.std_dev,
            "std_error": mc.std_error,
            "observed": observed,
            "chi_square": chi,
        }));
    }
    let value = if results.len() == 1 {
        results.pop().expect("one result")
    } else {
        serde_json::Value::Array(results)
    };
    match &a.out {
        Some(path) => write(path, &(serde_json::to_string_pretty(&value)? + "\n")),
        None => print_json(&value),
    }
}

fn report(mut config: RunConfig, a: ReportArgs) -> Result<()> {
    a.inputs.apply(&mut config);
    if a.emergence.is_some() {
        config.emergence = a.emergence;
    }
    if a.links.is_some() {
        config.links = a.links;
    }
    if let Some(s) = a.sims {
        config.simulations = s;
    }
    config.fixed_marginals |= a.fixed_marginals;
    config.yates |= a.yates;
    config.layout &= !a.no_layout;
    config.dynamics &= !a.no_dynamics;
    config.emergence_tests &= !a.no_emergence;
    let summary = run_pipeline(&config)?;
    print_json(&json!({
        "out_dir": summary.out_dir,
        "config_hash": summary.config_hash,
        "files": summary.files,
    }))
}
