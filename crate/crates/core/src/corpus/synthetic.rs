//! Deterministic synthetic corpora with planted ground truth.
//!
//! Every planted quantity is realized exactly: mixtures become integer
//! citation counts by largest-remainder apportionment and the ground truth is
//! those counts over their total, so a correct pipeline recovers the planted
//! vectors to the last bit. Yearly patent counts are integers whose log-linear
//! slope equals the planted exponent to within 1e-7.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    write_domains, write_emergence, write_patents, CitationTotals, Corpus, DomainDefinition, EmergenceData,
    EmergingCluster, EmergingTopic, PatentFormat, PatentRecord,
};
use crate::config::RunConfig;
use crate::dynamics::PaperCounts;
use crate::emergence::{Link, LinkTable};
use crate::error::{Error, Result};
use crate::stats;
use crate::taxonomy::{journals_to_csv, scheme_to_csv, CategoryScheme, JournalEntry};

/// Tolerance on the realized log-linear slope of planted patent counts.
const SLOPE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    /// Phrases placed in titles and abstracts of the domain's patents.
    pub keywords: Vec<String>,
    pub ipc: String,
    pub upc: String,
    pub n_patents: usize,
    /// Growth exponent of yearly patent counts.
    pub exponent: f64,
    /// Weights over categories; drawn from the seed when absent.
    #[serde(default)]
    pub science_mixture: Option<Vec<f64>>,
    /// Weights over domains (own weight must be zero); drawn when absent.
    #[serde(default)]
    pub tech_mixture: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub domains: Vec<DomainSpec>,
    pub n_categories: usize,
    pub n_super_disciplines: usize,
    pub journals_per_category: usize,
    pub n_background: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Domain patents are granted in the last `growth_years` years.
    pub growth_years: usize,
    pub npl_per_patent: usize,
    pub cites_per_patent: usize,
    /// Share of NPL references that name a journal in the taxonomy.
    pub matchable_fraction: f64,
    /// Weight of a domain's leading category in drawn mixtures.
    pub primary_share: f64,
    /// Papers in the first year for the smallest category series.
    pub paper_base: f64,
    /// Half-width of the uniform noise in `b_category = 0.5·b_domain + noise`.
    pub exponent_noise: f64,
    pub emergence: bool,
}

const FIXTURE_DOMAINS: [(&str, &[&str], &str, &str, f64); 4] = [
    (
        "Solar Photovoltaics",
        &["solar cell", "photovoltaic module"],
        "H01L31",
        "136/244",
        0.05,
    ),
    (
        "Lithium Batteries",
        &["lithium battery", "lithium ion electrode"],
        "H01M10",
        "429/231",
        0.09,
    ),
    (
        "Optical Storage",
        &["optical disc", "optical recording medium"],
        "G11B7",
        "369/275",
        0.07,
    ),
    (
        "Wind Turbines",
        &["wind turbine", "rotor blade"],
        "F03D1",
        "290/55",
        0.08,
    ),
];

impl GeneratorSpec {
    /// The bundled 500-record fixture: four domains of 100 patents and 100
    /// background patents granted 1976–2013.
    pub fn fixture() -> Self {
        let domains = FIXTURE_DOMAINS
            .iter()
            .map(|&(name, keywords, ipc, upc, exponent)| DomainSpec {
                name: name.into(),
                keywords: keywords.iter().map(|k| k.to_string()).collect(),
                ipc: ipc.into(),
                upc: upc.into(),
                n_patents: 100,
                exponent,
                science_mixture: None,
                tech_mixture: None,
            })
            .collect();
        Self {
            domains,
            ..Self::base()
        }
    }

    /// `n_domains` generic domains of `patents_per_domain` patents each, with
    /// exponents spread evenly over [0.03, 0.12].
    pub fn generic(n_domains: usize, n_categories: usize, patents_per_domain: usize) -> Self {
        let domains = (0..n_domains)
            .map(|i| {
                let word = pseudo_word(9000 + i).to_lowercase();
                let step = if n_domains > 1 {
                    0.09 / (n_domains - 1) as f64
                } else {
                    0.0
                };
                DomainSpec {
                    name: format!("Domain {:02}", i + 1),
                    keywords: vec![format!("{word} device"), format!("{word} process")],
                    ipc: format!("D{:02}B{}", i % 100, i / 100 + 1),
                    upc: format!("{}/{}", 500 + i, 10 + i % 7),
                    n_patents: patents_per_domain,
                    exponent: 0.03 + step * i as f64,
                    science_mixture: None,
                    tech_mixture: None,
                }
            })
            .collect();
        Self {
            domains,
            n_categories,
            n_super_disciplines: n_categories.clamp(1, 6),
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            domains: Vec::new(),
            n_categories: 24,
            n_super_disciplines: 6,
            journals_per_category: 2,
            n_background: 100,
            first_year: 1976,
            last_year: 2013,
            growth_years: 30,
            npl_per_patent: 4,
            cites_per_patent: 3,
            matchable_fraction: 0.8,
            primary_share: 0.75,
            paper_base: 1e5,
            exponent_noise: 0.005,
            emergence: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("generator: {m}")));
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        for (name, v) in [
            ("n_categories", self.n_categories),
            ("n_super_disciplines", self.n_super_disciplines),
            ("journals_per_category", self.journals_per_category),
            ("growth_years", self.growth_years),
            ("npl_per_patent", self.npl_per_patent),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_super_disciplines > self.n_categories {
            return bad("more super-disciplines than categories".into());
        }
        if self.n_categories * self.journals_per_category * 2 > 4900 {
            return bad("too many journals for the title vocabulary".into());
        }
        if self.first_year < super::MIN_GRANT_YEAR || self.last_year < self.first_year {
            return bad(format!("invalid year range {}..={}", self.first_year, self.last_year));
        }
        if self.growth_years > (self.last_year - self.first_year + 1) as usize {
            return bad("growth window longer than the year range".into());
        }
        if !(0.0..=1.0).contains(&self.matchable_fraction) || !(0.0..=1.0).contains(&self.primary_share) {
            return bad("fractions must lie in [0, 1]".into());
        }
        if !(self.paper_base >= 1.0 && self.paper_base.is_finite())
            || self.exponent_noise.is_nan()
            || self.exponent_noise < 0.0
        {
            return bad("paper_base must be >= 1 and exponent_noise >= 0".into());
        }
        let n = self.domains.len();
        let drawn = self.domains.iter().filter(|d| d.science_mixture.is_none()).count();
        if drawn > self.n_categories {
            return bad("drawn mixtures need at least one category per domain".into());
        }
        let mut names = BTreeSet::new();
        for (i, d) in self.domains.iter().enumerate() {
            if !names.insert(d.name.as_str()) || d.name.trim().is_empty() {
                return bad(format!("domain name `{}` is empty or repeated", d.name));
            }
            if d.n_patents < self.growth_years {
                return bad(format!(
                    "domain `{}` needs at least {} patents (one per growth year)",
                    d.name, self.growth_years
                ));
            }
            if d.keywords.is_empty() || d.ipc.is_empty() || d.upc.is_empty() {
                return bad(format!("domain `{}` needs keywords and classes", d.name));
            }
            if !d.exponent.is_finite() {
                return bad(format!("domain `{}` exponent is not finite", d.name));
            }
            if let Some(m) = &d.science_mixture {
                check_weights(m, self.n_categories, &d.name)?;
            }
            if let Some(m) = &d.tech_mixture {
                check_weights(m, n, &d.name)?;
                if m[i] != 0.0 {
                    return bad(format!("domain `{}` tech mixture must not cite itself", d.name));
                }
            }
        }
        if self.emergence && self.domains.iter().map(|d| d.n_patents).sum::<usize>() < 15 {
            return bad("emergence fixture needs at least 15 domain patents".into());
        }
        Ok(())
    }
}

fn check_weights(w: &[f64], len: usize, domain: &str) -> Result<()> {
    if w.len() != len || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "generator: mixture of `{domain}` must hold {len} non-negative weights with positive sum"
        )));
    }
    Ok(())
}

/// Planted values, keyed by domain or category name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub categories: Vec<String>,
    pub domains: Vec<String>,
    /// Category fractions over `categories`, per domain.
    pub science_vectors: BTreeMap<String, Vec<f64>>,
    /// Citation fractions over `domains`, per domain.
    pub tech_vectors: BTreeMap<String, Vec<f64>>,
    /// Matched references over all NPL references, per domain.
    pub scientific_fractions: BTreeMap<String, f64>,
    /// Pearson r between the strict upper triangles of the science and tech
    /// relatedness matrices, keyed `<science kind>-<tech kind>`.
    pub matrix_correlation: BTreeMap<String, Option<f64>>,
    pub domain_exponents: BTreeMap<String, f64>,
    pub category_exponents: BTreeMap<String, f64>,
    /// Leading category of each domain.
    pub primary_categories: BTreeMap<String, String>,
    /// Pearson r of domain exponents against their leading-category exponents.
    pub exponent_correlation: Option<f64>,
    pub growth_window: (i32, i32),
    /// Clusters with kind-1, kind-2 and kind-3 multiple links.
    pub multilink: Option<[usize; 3]>,
    /// Links with cluster year after, equal to and before the topic year.
    pub lead_lag: Option<[usize; 3]>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub corpus: Corpus,
    pub domains: Vec<DomainDefinition>,
    pub journals: Vec<JournalEntry>,
    pub scheme: CategoryScheme,
    pub paper_counts: PaperCounts,
    pub emergence: Option<EmergenceData>,
    pub links: Option<LinkTable>,
    pub truth: GroundTruth,
}

/// File names used by [`SyntheticBundle::write_to`].
pub mod files {
    pub const PATENTS: &str = "patents.jsonl";
    pub const DOMAINS: &str = "domains.json";
    pub const JOURNALS: &str = "journals.csv";
    pub const CATEGORIES: &str = "categories.csv";
    pub const PAPER_COUNTS: &str = "paper_counts.csv";
    pub const EMERGENCE: &str = "emergence.json";
    pub const LINKS: &str = "links.csv";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
    pub const CONFIG: &str = "atlas.toml";
}

impl SyntheticBundle {
    /// Run configuration over the files written by [`Self::write_to`], with
    /// paths relative to that directory.
    pub fn run_config(&self) -> RunConfig {
        let name = |n: &str| Some(PathBuf::from(n));
        RunConfig {
            patents: name(files::PATENTS),
            journals: name(files::JOURNALS),
            categories: name(files::CATEGORIES),
            domains: name(files::DOMAINS),
            paper_counts: name(files::PAPER_COUNTS),
            emergence: self.emergence.as_ref().and(name(files::EMERGENCE)),
            links: self.links.as_ref().and(name(files::LINKS)),
            seed: Some(self.truth.seed),
            ..RunConfig::default()
        }
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: &str| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        let path = dir.join(files::PATENTS);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        write_patents(&mut w, &self.corpus, PatentFormat::Jsonl)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_domains(&dir.join(files::DOMAINS), &self.domains)?;
        put(files::JOURNALS, &journals_to_csv(&self.journals)?)?;
        put(files::CATEGORIES, &scheme_to_csv(&self.scheme)?)?;
        put(files::PAPER_COUNTS, &self.paper_counts.to_csv()?)?;
        if let Some(e) = &self.emergence {
            write_emergence(&dir.join(files::EMERGENCE), e)?;
        }
        if let Some(l) = &self.links {
            put(files::LINKS, &l.to_csv()?)?;
        }
        put(files::CONFIG, &self.run_config().to_toml()?)?;
        put(
            files::GROUND_TRUTH,
            &(serde_json::to_string_pretty(&self.truth)? + "\n"),
        )
    }
}

/// Largest-remainder apportionment of `total` units over `weights`; ties go
/// to the lower index.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Positive integer counts summing to `total` over `years` consecutive years
/// whose least-squares slope of ln(count) on year is `exponent`.
pub fn planted_counts(total: usize, years: usize, exponent: f64) -> Result<Vec<u64>> {
    if years < 3 || total < years {
        return Err(Error::InvalidInput(format!(
            "cannot plant {total} patents over {years} years"
        )));
    }
    let n = years as f64;
    let tbar = (n - 1.0) / 2.0;
    let sxx: f64 = (0..years).map(|t| (t as f64 - tbar).powi(2)).sum();
    let w: Vec<f64> = (0..years).map(|t| (t as f64 - tbar) / sxx).collect();
    let growth: Vec<f64> = (0..years).map(|t| (exponent * t as f64).exp()).collect();
    let slope = |c: &[u64]| -> f64 { c.iter().zip(&w).map(|(&v, wi)| wi * (v as f64).ln()).sum() };
    // slope change from moving one unit into year i out of year j
    let delta = |c: &[u64], i: usize, j: usize| -> f64 {
        w[i] * ((c[i] + 1) as f64 / c[i] as f64).ln() + w[j] * ((c[j] - 1) as f64 / c[j] as f64).ln()
    };
    let mut best: Option<(f64, Vec<u64>)> = None;
    // local search can stall; restart from rescaled roundings
    for attempt in 0..24 {
        let jitter = 1.0 + 0.01 * f64::from((attempt + 1) / 2) * if attempt % 2 == 0 { 1.0 } else { -1.0 };
        let scale = jitter * total as f64 / growth.iter().sum::<f64>();
        let mut c: Vec<u64> = growth.iter().map(|g| (scale * g).round().max(1.0) as u64).collect();
        let mut sum: u64 = c.iter().sum();
        while sum != total as u64 {
            let err = slope(&c) - exponent;
            let grow = sum < total as u64;
            let best = (0..years)
                .filter(|&t| grow || c[t] > 1)
                .min_by(|&a, &b| {
                    let step = |t: usize| {
                        let next = if grow { c[t] + 1 } else { c[t] - 1 };
                        (err + w[t] * (next as f64 / c[t] as f64).ln()).abs()
                    };
                    step(a).total_cmp(&step(b)).then(a.cmp(&b))
                })
                .ok_or_else(|| Error::Internal("count adjustment stalled".into()))?;
            if grow {
                c[best] += 1;
                sum += 1;
            } else {
                c[best] -= 1;
                sum -= 1;
            }
        }
        let mut err = slope(&c) - exponent;
        for _ in 0..200 {
            if err.abs() < SLOPE_TOLERANCE {
                break;
            }
            let moves: Vec<(f64, usize, usize)> = (0..years)
                .flat_map(|i| (0..years).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && c[j] > 1)
                .map(|(i, j)| (delta(&c, i, j), i, j))
                .collect();
            let single = moves
                .iter()
                .min_by(|a, b| (err + a.0).abs().total_cmp(&(err + b.0).abs()))
                .copied();
            if let Some((d, i, j)) = single {
                if (err + d).abs() < err.abs() {
                    c[i] += 1;
                    c[j] -= 1;
                    err = slope(&c) - exponent;
                    continue;
                }
            }
            // no single move helps: pair moves, matched by sorted delta
            let mut sorted = moves.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut pair: Option<(f64, [usize; 4])> = None;
            for &(d1, i1, j1) in &moves {
                let target = -err - d1;
                let at = sorted.partition_point(|m| m.0 < target);
                c[i1] += 1;
                c[j1] -= 1;
                for &(_, i2, j2) in &sorted[at.saturating_sub(16)..(at + 16).min(sorted.len())] {
                    if i2 == j2 || c[j2] <= 1 {
                        continue;
                    }
                    let e = err + d1 + delta(&c, i2, j2);
                    if e.abs() < err.abs() && pair.is_none_or(|b| e.abs() < b.0.abs()) {
                        pair = Some((e, [i1, j1, i2, j2]));
                    }
                }
                c[i1] -= 1;
                c[j1] += 1;
            }
            match pair {
                Some((_, [i1, j1, i2, j2])) => {
                    c[i1] += 1;
                    c[j1] -= 1;
                    c[i2] += 1;
                    c[j2] -= 1;
                    err = slope(&c) - exponent;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|b| err.abs() < b.0.abs()) {
            best = Some((err, c));
        }
        if best.as_ref().is_some_and(|b| b.0.abs() < SLOPE_TOLERANCE) {
            break;
        }
    }
    let (err, c) = best.ok_or_else(|| Error::Internal("no planting attempt ran".into()))?;
    if err.abs() > SLOPE_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "cannot plant exponent {exponent} with {total} patents over {years} years (residual {err:.3e})"
        )));
    }
    Ok(c)
}

const CONSONANTS: &[u8] = b"BDFGKLMNPRSTVZ";
const VOWELS: &[u8] = b"AEIOU";
const SUFFIXES: [&str; 5] = ["ICS", "OLOGY", "ETICS", "ONOMY", "ATICS"];

fn syllable(i: usize) -> [u8; 2] {
    let i = i % (CONSONANTS.len() * VOWELS.len());
    [CONSONANTS[i / VOWELS.len()], VOWELS[i % VOWELS.len()]]
}

/// Distinct words for distinct `i < 4900`; the first four letters alone are
/// already distinct.
fn pseudo_word(i: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut s = String::with_capacity(9);
    s.extend(syllable(i / n).iter().map(|&b| b as char));
    s.extend(syllable(i % n).iter().map(|&b| b as char));
    s.push_str(SUFFIXES[i % SUFFIXES.len()]);
    s
}

const FIELDS: [&str; 12] = [
    "Physics, Applied",
    "Materials Science",
    "Chemistry, Physical",
    "Electrochemistry",
    "Optics",
    "Engineering, Electrical",
    "Energy & Fuels",
    "Mechanics",
    "Polymer Science",
    "Computer Science",
    "Biochemistry",
    "Crystallography",
];

const SUPERS: [&str; 8] = [
    "Physics",
    "Materials",
    "Chemistry",
    "Engineering",
    "Computing",
    "Life Sciences",
    "Geosciences",
    "Mathematics",
];

fn category_name(k: usize) -> String {
    let base = FIELDS[k % FIELDS.len()];
    match k / FIELDS.len() {
        0 => base.to_string(),
        r => format!("{base} {}", r + 1),
    }
}

fn super_name(s: usize) -> String {
    let base = SUPERS[s % SUPERS.len()];
    match s / SUPERS.len() {
        0 => base.to_string(),
        r => format!("{base} {}", r + 1),
    }
}

const SURNAMES: [&str; 12] = [
    "Smith",
    "Chen",
    "Wang",
    "Mueller",
    "Schmidt",
    "Brown",
    "Krause",
    "Nguyen",
    "Petrov",
    "Schultz",
    "Johnston",
    "Andersson",
];
const ARTICLE_WORDS: [&str; 14] = [
    "thin",
    "film",
    "growth",
    "effects",
    "strain",
    "transport",
    "spectra",
    "through",
    "high",
    "yield",
    "synthesis",
    "charge",
    "thermal",
    "interfaces",
];
const OTHER_SOURCES: [&str; 6] = [
    "Product data sheet, Acme Corp",
    "Personal communication",
    "Technical brochure, Northwind Systems",
    "Trade show handout",
    "Internet archive snapshot",
    "Standards draft proposal",
];
const GENERIC_TITLE: [&str; 8] = [
    "Method",
    "Apparatus",
    "System",
    "Device",
    "Assembly",
    "Circuit",
    "Process",
    "Structure",
];
const GENERIC_SUBJECT: [&str; 8] = [
    "signal processing",
    "fluid handling",
    "data storage control",
    "vehicle braking",
    "textile finishing",
    "packaging closure",
    "image compression",
    "adhesive bonding",
];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random weights over `len` slots: `primary` takes `primary_share`, the rest
/// is spread over up to three other slots not in `forbidden`.
fn draw_mixture(
    rng: &mut ChaCha8Rng,
    len: usize,
    primary: Option<usize>,
    primary_share: f64,
    forbidden: Option<usize>,
) -> Vec<f64> {
    let mut w = vec![0.0; len];
    let mut pool: Vec<usize> = (0..len)
        .filter(|&k| Some(k) != primary && Some(k) != forbidden)
        .collect();
    pool.shuffle(rng);
    let rest: Vec<usize> = pool.into_iter().take(3).collect();
    let raw: Vec<f64> = rest.iter().map(|_| 0.2 + rng.gen::<f64>()).collect();
    let raw_sum: f64 = raw.iter().sum();
    let rest_share = if primary.is_some() { 1.0 - primary_share } else { 1.0 };
    for (&k, r) in rest.iter().zip(&raw) {
        w[k] = rest_share * r / raw_sum;
    }
    if let Some(p) = primary {
        w[p] = if rest.is_empty() { 1.0 } else { primary_share };
    }
    w
}

fn journal_reference(rng: &mut ChaCha8Rng, journal: &JournalEntry) -> String {
    let form = match rng.gen_range(0..3) {
        0 => &journal.full_title,
        1 => &journal.abbrev_title,
        _ => &journal.abbrev_dotted_title,
    };
    let authors = format!(
        "{} {}., {} {}.",
        pick(rng, &SURNAMES),
        (b'A' + rng.gen_range(0..26u8)) as char,
        pick(rng, &SURNAMES),
        (b'A' + rng.gen_range(0..26u8)) as char
    );
    let words: Vec<&str> = (0..3).map(|_| *pick(rng, &ARTICLE_WORDS)).collect();
    let title = format!("{} {}", capitalize(&words.join(" ")), "study");
    format!(
        "{authors}, \"{title}\", {form}, vol. {}, pp. {}-{}, {}",
        rng.gen_range(1..90),
        rng.gen_range(1..400),
        rng.gen_range(400..900),
        rng.gen_range(1970..2013)
    )
}

fn other_reference(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{}, {} {}, {}",
        pick(rng, &OTHER_SOURCES),
        pick(rng, &SURNAMES),
        pick(rng, &ARTICLE_WORDS),
        rng.gen_range(1980..2013)
    )
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

struct DraftPatent {
    id: String,
    year: i32,
    title: String,
    abstract_text: String,
    ipc: BTreeSet<String>,
    upc: BTreeSet<String>,
    cites: BTreeSet<String>,
    npl: Vec<String>,
}

/// Generates a corpus, taxonomy, domains, paper counts, emergence data and
/// the planted ground truth. A pure function of `(seed, spec)`.
pub fn generate_synthetic_corpus(seed: u64, spec: &GeneratorSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let n_dom = spec.domains.len();
    let n_cat = spec.n_categories;

    let categories: Vec<String> = (0..n_cat).map(category_name).collect();
    let scheme = CategoryScheme::from_pairs(
        categories
            .iter()
            .enumerate()
            .map(|(k, c)| (c.clone(), super_name(k % spec.n_super_disciplines))),
    )?;
    let journals: Vec<JournalEntry> = (0..n_cat * spec.journals_per_category)
        .map(|g| {
            let (w1, w2) = (pseudo_word(2 * g), pseudo_word(2 * g + 1));
            JournalEntry {
                full_title: format!("JOURNAL OF {w1} {w2}"),
                abbrev_title: format!("J {} {}", &w1[..4], &w2[..4]),
                abbrev_dotted_title: format!("J.{}.{}.", &w1[..4], &w2[..4]),
                categories: [categories[g / spec.journals_per_category].clone()].into(),
            }
        })
        .collect();

    // Mixtures
    let mut rng = rng_for(seed, 1);
    let mut free: Vec<usize> = (0..n_cat).collect();
    free.shuffle(&mut rng);
    let mut science_mix = Vec::with_capacity(n_dom);
    let mut tech_mix = Vec::with_capacity(n_dom);
    for (i, d) in spec.domains.iter().enumerate() {
        science_mix.push(match &d.science_mixture {
            Some(m) => m.clone(),
            None => {
                let primary = free.pop();
                draw_mixture(&mut rng, n_cat, primary, spec.primary_share, None)
            }
        });
        tech_mix.push(match &d.tech_mixture {
            Some(m) => m.clone(),
            None => draw_mixture(&mut rng, n_dom, None, 0.0, Some(i)),
        });
    }

    // Patents
    let window_start = spec.last_year - spec.growth_years as i32 + 1;
    let mut patents: Vec<DraftPatent> = Vec::new();
    let mut domain_ranges = Vec::with_capacity(n_dom);
    let mut truth_science = BTreeMap::new();
    let mut truth_fraction = BTreeMap::new();
    let mut next_id = 0usize;
    let mut make_id = || {
        next_id += 1;
        format!("US{:07}", 5_000_000 + next_id)
    };
    let noise_ipc: Vec<String> = (0..12).map(|i| format!("G{:02}X{}", 10 + i, i % 3 + 1)).collect();
    let noise_upc: Vec<String> = (0..12).map(|i| format!("{}/{}", 700 + i, 1 + i % 5)).collect();
    for (i, d) in spec.domains.iter().enumerate() {
        let mut rng = rng_for(seed, 100 + i as u64);
        let counts = planted_counts(d.n_patents, spec.growth_years, d.exponent)?;
        let start = patents.len();
        for (t, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                let keyword = pick(&mut rng, &d.keywords).clone();
                let title = if rng.gen_bool(0.8) {
                    format!("{} for {keyword}", pick(&mut rng, &GENERIC_TITLE))
                } else {
                    format!(
                        "{} for {}",
                        pick(&mut rng, &GENERIC_TITLE),
                        pick(&mut rng, &GENERIC_SUBJECT)
                    )
                };
                let abstract_text = if rng.gen_bool(0.9) {
                    format!("A {keyword} with improved {}.", pick(&mut rng, &ARTICLE_WORDS))
                } else {
                    format!("An arrangement for {}.", pick(&mut rng, &GENERIC_SUBJECT))
                };
                let mut ipc = BTreeSet::new();
                let mut upc = BTreeSet::new();
                if rng.gen_bool(0.9) {
                    ipc.insert(d.ipc.clone());
                }
                if rng.gen_bool(0.85) {
                    upc.insert(d.upc.clone());
                }
                if ipc.is_empty() || rng.gen_bool(0.3) {
                    ipc.insert(pick(&mut rng, &noise_ipc).clone());
                }
                if upc.is_empty() || rng.gen_bool(0.3) {
                    upc.insert(pick(&mut rng, &noise_upc).clone());
                }
                patents.push(DraftPatent {
                    id: make_id(),
                    year: window_start + t as i32,
                    title,
                    abstract_text,
                    ipc,
                    upc,
                    cites: BTreeSet::new(),
                    npl: Vec::new(),
                });
            }
        }
        domain_ranges.push(start..patents.len());

        // NPL references: exact category counts, then unmatched ones
        let n_refs = d.n_patents * spec.npl_per_patent;
        let matchable = (spec.matchable_fraction * n_refs as f64).round() as usize;
        let cat_counts = apportion(&science_mix[i], matchable);
        let mut refs = Vec::with_capacity(n_refs);
        for (k, &m) in cat_counts.iter().enumerate() {
            for _ in 0..m {
                let j = k * spec.journals_per_category + rng.gen_range(0..spec.journals_per_category);
                refs.push(journal_reference(&mut rng, &journals[j]));
            }
        }
        refs.extend((matchable..n_refs).map(|_| other_reference(&mut rng)));
        refs.shuffle(&mut rng);
        let span = start..patents.len();
        for (r, text) in refs.into_iter().enumerate() {
            patents[span.start + r % span.len()].npl.push(text);
        }
        let total = matchable as f64;
        truth_science.insert(
            d.name.clone(),
            cat_counts
                .iter()
                .map(|&c| if total > 0.0 { c as f64 / total } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        truth_fraction.insert(d.name.clone(), matchable as f64 / n_refs as f64);
    }

    // Patent-to-patent citations: exact counts towards each other domain
    let mut truth_tech = BTreeMap::new();
    for (i, d) in spec.domains.iter().enumerate() {
        let mut rng = rng_for(seed, 200 + i as u64);
        let total = if n_dom > 1 {
            d.n_patents * spec.cites_per_patent
        } else {
            0
        };
        let counts = apportion(&tech_mix[i], total);
        let own = domain_ranges[i].clone();
        let mut slot = 0usize;
        for (j, &m) in counts.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let targets = domain_ranges[j].clone();
            let mut pool: Vec<usize> = targets.collect();
            let mut used_by: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for _ in 0..m {
                // a cited id may occur once per citing patent
                let citing = loop {
                    let p = own.start + slot % own.len();
                    slot += 1;
                    if used_by.get(&p).map_or(0, BTreeSet::len) < pool.len() {
                        break p;
                    }
                };
                pool.shuffle(&mut rng);
                let used = used_by.entry(citing).or_default();
                let &target = pool
                    .iter()
                    .find(|t| !used.contains(t))
                    .ok_or_else(|| Error::Internal("citation pool exhausted".into()))?;
                used.insert(target);
                let cited = patents[target].id.clone();
                patents[citing].cites.insert(cited);
            }
        }
        let sum: usize = counts.iter().sum();
        truth_tech.insert(
            d.name.clone(),
            counts
                .iter()
                .map(|&c| if sum > 0 { c as f64 / sum as f64 } else { 0.0 })
                .collect::<Vec<_>>(),
        );
    }

    // Background patents span the full year range, endpoints included
    let mut rng = rng_for(seed, 300);
    for b in 0..spec.n_background {
        let year = match b {
            0 => spec.first_year,
            1 => spec.last_year,
            _ => rng.gen_range(spec.first_year..=spec.last_year),
        };
        let subject = if rng.gen_bool(0.1) {
            let domain = pick(&mut rng, &spec.domains);
            pick(&mut rng, &domain.keywords).clone()
        } else {
            pick(&mut rng, &GENERIC_SUBJECT).to_string()
        };
        let npl = (0..rng.gen_range(0..3)).map(|_| other_reference(&mut rng)).collect();
        patents.push(DraftPatent {
            id: make_id(),
            year,
            title: format!(
                "{} for {}",
                pick(&mut rng, &GENERIC_TITLE),
                pick(&mut rng, &GENERIC_SUBJECT)
            ),
            abstract_text: format!("Relates to {subject}."),
            ipc: [pick(&mut rng, &noise_ipc).clone()].into(),
            upc: [pick(&mut rng, &noise_upc).clone()].into(),
            cites: BTreeSet::new(),
            npl,
        });
    }

    let ids: Vec<String> = patents.iter().map(|p| p.id.clone()).collect();
    let records: Vec<PatentRecord> = patents
        .into_iter()
        .map(|p| PatentRecord {
            patent_id: p.id,
            grant_year: p.year,
            title: p.title,
            abstract_text: p.abstract_text,
            ipc_classes: p.ipc,
            upc_classes: p.upc,
            cited_patent_ids: p.cites,
            npl_citations: p.npl,
        })
        .collect();
    let corpus = Corpus::new(records)?;
    let domains: Vec<DomainDefinition> = spec
        .domains
        .iter()
        .zip(&domain_ranges)
        .map(|(d, r)| DomainDefinition {
            domain_name: d.name.clone(),
            patent_ids: ids[r.clone()].iter().cloned().collect(),
            relevancy: None,
        })
        .collect();

    // Paper counts: pure exponentials; leading categories follow their domain
    let mut rng = rng_for(seed, 400);
    let mut cat_exponent: Vec<Option<f64>> = vec![None; n_cat];
    let mut primary = BTreeMap::new();
    let mut pairs = Vec::new();
    for (i, d) in spec.domains.iter().enumerate() {
        let lead = argmax(&science_mix[i]);
        primary.insert(d.name.clone(), categories[lead].clone());
        if cat_exponent[lead].is_none() {
            let noise = if spec.exponent_noise > 0.0 {
                rng.gen_range(-spec.exponent_noise..=spec.exponent_noise)
            } else {
                0.0
            };
            cat_exponent[lead] = Some(0.5 * d.exponent + noise);
        }
        pairs.push((d.exponent, cat_exponent[lead].unwrap_or_default()));
    }
    let mut paper_counts = PaperCounts::default();
    let mut truth_cat_exp = BTreeMap::new();
    for (k, name) in categories.iter().enumerate() {
        let b = match cat_exponent[k] {
            Some(b) => b,
            None => rng.gen_range(0.01..0.05),
        };
        let base = spec.paper_base * (1.0 + (k % 5) as f64);
        for y in spec.first_year..=spec.last_year {
            let count = (base * (b * f64::from(y - spec.first_year)).exp()).round();
            paper_counts.insert(name, y, count);
        }
        truth_cat_exp.insert(name.clone(), b);
    }

    let (emergence, links, multilink, lead_lag) = if spec.emergence {
        let (e, l, m, ll) = emergence_fixture(seed, &domains)?;
        (Some(e), Some(l), Some(m), Some(ll))
    } else {
        (None, None, None, None)
    };

    let names: Vec<String> = spec.domains.iter().map(|d| d.name.clone()).collect();
    let sci: Vec<&Vec<f64>> = names.iter().map(|n| &truth_science[n]).collect();
    let tech: Vec<&Vec<f64>> = names.iter().map(|n| &truth_tech[n]).collect();
    let kinds = [("pearson", false), ("cosine", true)];
    let matrix_correlation = kinds
        .iter()
        .flat_map(|&(sk, sc)| kinds.iter().map(move |&(tk, tc)| (sk, sc, tk, tc)))
        .map(|(sk, sc, tk, tc)| (format!("{sk}-{tk}"), triangle_correlation(&sci, sc, &tech, tc)))
        .collect();
    let (bd, bc): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let truth = GroundTruth {
        seed,
        categories: categories.clone(),
        domains: names.clone(),
        science_vectors: truth_science,
        tech_vectors: truth_tech,
        scientific_fractions: truth_fraction,
        matrix_correlation,
        domain_exponents: spec.domains.iter().map(|d| (d.name.clone(), d.exponent)).collect(),
        category_exponents: truth_cat_exp,
        primary_categories: primary,
        exponent_correlation: (bd.len() >= 3).then(|| stats::pearson(&bd, &bc).ok()).flatten(),
        growth_window: (window_start, spec.last_year),
        multilink,
        lead_lag,
    };
    Ok(SyntheticBundle {
        corpus,
        domains,
        journals,
        scheme,
        paper_counts,
        emergence,
        links,
        truth,
    })
}

fn argmax(w: &[f64]) -> usize {
    w.iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > w[best] { i } else { best })
}

fn similarity(a: &[f64], b: &[f64], cosine: bool) -> Option<f64> {
    if cosine {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
    } else {
        stats::pearson(a, b).ok()
    }
}

/// Correlation of the strict upper triangles of the two similarity matrices
/// over pairs defined in both.
fn triangle_correlation(sci: &[&Vec<f64>], sci_cosine: bool, tech: &[&Vec<f64>], tech_cosine: bool) -> Option<f64> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..sci.len() {
        for j in i + 1..sci.len() {
            if let (Some(x), Some(y)) = (
                similarity(sci[i], sci[j], sci_cosine),
                similarity(tech[i], tech[j], tech_cosine),
            ) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    (xs.len() >= 3).then(|| stats::pearson(&xs, &ys).ok()).flatten()
}

/// Six clusters and three topics with one planted instance of every link
/// kind and known year relations.
fn emergence_fixture(
    seed: u64,
    domains: &[DomainDefinition],
) -> Result<(EmergenceData, LinkTable, [usize; 3], [usize; 3])> {
    let mut rng = rng_for(seed, 500);
    let mut pool: Vec<&String> = domains.iter().flat_map(|d| &d.patent_ids).collect();
    pool.sort();
    pool.dedup();
    pool.shuffle(&mut rng);
    let cluster_years = [2008, 2009, 2010, 2007, 2008, 2009];
    let topic_years = [2007, 2008, 2009];
    let clusters: Vec<EmergingCluster> = (0..6)
        .map(|c| EmergingCluster {
            cluster_id: format!("EC{}", c + 1),
            subject_year: cluster_years[c],
            patent_ids: pool[c * 2..c * 2 + 2].iter().map(|s| s.to_string()).collect(),
        })
        .collect();
    let topics: Vec<EmergingTopic> = (0..3)
        .map(|t| EmergingTopic {
            topic_id: format!("ET{}", t + 1),
            label: format!("{} topic", capitalize(ARTICLE_WORDS[t])),
            identified_year: topic_years[t],
            paper_ids: (0..4).map(|p| format!("W{:06}", 100 * (t + 1) + p)).collect(),
        })
        .collect();
    // (cluster, patent slot, topic, paper slot)
    let plan: [(usize, usize, usize, usize); 9] = [
        (0, 0, 0, 0),
        (0, 1, 0, 1), // kind-1
        (1, 0, 1, 0),
        (1, 0, 1, 1), // kind-2
        (2, 0, 2, 2),
        (2, 1, 2, 2), // kind-1 and kind-3
        (3, 0, 0, 3),
        (4, 1, 1, 3),
        (5, 0, 2, 0),
    ];
    let links: Vec<Link> = plan
        .iter()
        .map(|&(c, p, t, q)| {
            let patents: Vec<&String> = clusters[c].patent_ids.iter().collect();
            let papers: Vec<&String> = topics[t].paper_ids.iter().collect();
            Link {
                cluster_id: clusters[c].cluster_id.clone(),
                patent_id: patents[p].clone(),
                topic_id: topics[t].topic_id.clone(),
                paper_id: papers[q].clone(),
                cluster_year: clusters[c].subject_year,
                topic_year: topics[t].identified_year,
            }
        })
        .collect();
    let mut lead_lag = [0usize; 3];
    for &(c, _, t, _) in &plan {
        let slot = match cluster_years[c].cmp(&topic_years[t]) {
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Less => 2,
        };
        lead_lag[slot] += 1;
    }
    let data = EmergenceData {
        clusters,
        topics,
        citation_totals: Some(CitationTotals {
            all_papers: 1_000_000,
            all_cited: 20_000,
        }),
    };
    data.validate()?;
    Ok((data, LinkTable::new(links)?, [2, 1, 1], lead_lag))
}
