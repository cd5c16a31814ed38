//! Science vectors, super-discipline vectors and inter-domain (tech) vectors,
//! plus the relatedness matrices and summary metrics built on them.

mod matrix;
mod metrics;

use std::collections::HashMap;
use std::io::Write;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{domain_membership, Corpus, DomainDefinition};
use crate::error::{Error, Result};
use crate::matcher::MatchRow;
use crate::taxonomy::CategoryScheme;

pub use crate::stats::pearson;
pub use matrix::{build_matrix, cosine, matrix_correlation, MatrixCorrelation, RelatednessMatrix, SimilarityKind};
pub use metrics::{breadth_metrics, rank_distribution, top_categories, Breadth, RankRow};

/// How a citation to a journal in k categories is credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingMode {
    /// One contribution to each category; the denominator is the total
    /// number of contributions.
    #[default]
    PerCategory,
    /// 1/k to each category; the denominator is the number of citations.
    Fractional,
}

impl FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-category" => Ok(CountingMode::PerCategory),
            "fractional" => Ok(CountingMode::Fractional),
            other => Err(Error::InvalidInput(format!("unknown counting mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CountingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CountingMode::PerCategory => "per-category",
            CountingMode::Fractional => "fractional",
        })
    }
}

/// A fractional distribution over a fixed, ordered basis.
pub trait Distribution {
    fn label(&self) -> &str;
    fn basis(&self) -> &[String];
    fn components(&self) -> &[f64];

    fn is_empty(&self) -> bool {
        self.components().iter().all(|&c| c == 0.0)
    }

    fn get(&self, key: &str) -> f64 {
        self.basis()
            .iter()
            .position(|b| b == key)
            .map_or(0.0, |i| self.components()[i])
    }

    fn total(&self) -> f64 {
        self.components().iter().sum()
    }
}

macro_rules! impl_distribution {
    ($t:ty) => {
        impl Distribution for $t {
            fn label(&self) -> &str {
                &self.domain
            }
            fn basis(&self) -> &[String] {
                &self.basis
            }
            fn components(&self) -> &[f64] {
                &self.components
            }
        }
    };
}

/// Per-domain distribution of scientific citations over categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScienceVector {
    pub domain: String,
    pub basis: Vec<String>,
    pub components: Vec<f64>,
    /// Category contributions (or citations, in fractional mode).
    pub total_contributions: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperVector {
    pub domain: String,
    pub basis: Vec<String>,
    pub components: Vec<f64>,
    pub empty: bool,
}

/// Distribution of a domain's patent citations over the other domains. The
/// basis holds every domain; the self component is always zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TechVector {
    pub domain: String,
    pub basis: Vec<String>,
    pub components: Vec<f64>,
    pub total_citations: usize,
    pub empty: bool,
}

impl_distribution!(ScienceVector);
impl_distribution!(SuperVector);
impl_distribution!(TechVector);

fn normalized(counts: Vec<f64>, total: f64) -> Vec<f64> {
    if total > 0.0 {
        counts.into_iter().map(|c| c / total).collect()
    } else {
        counts
    }
}

/// Builds the science vector of `domain` from its match rows, restricted to
/// grant years in `years` when given. Only scientific citations contribute.
pub fn science_vector<'a, I>(
    domain: &str,
    rows: I,
    years: Option<RangeInclusive<i32>>,
    scheme: &CategoryScheme,
    mode: CountingMode,
) -> Result<ScienceVector>
where
    I: IntoIterator<Item = &'a MatchRow>,
{
    let basis = scheme.categories().to_vec();
    let mut counts = vec![0.0; basis.len()];
    let mut total = 0.0;
    for row in rows {
        if years.as_ref().is_some_and(|y| !y.contains(&row.year)) {
            continue;
        }
        let cats = &row.citation.categories;
        if cats.is_empty() {
            continue;
        }
        let weight = match mode {
            CountingMode::PerCategory => 1.0,
            CountingMode::Fractional => 1.0 / cats.len() as f64,
        };
        for cat in cats {
            let i = scheme
                .position(cat)
                .ok_or_else(|| Error::Taxonomy(format!("category `{cat}` is outside the vector basis")))?;
            counts[i] += weight;
            total += weight;
        }
    }
    let total = match mode {
        CountingMode::PerCategory => total,
        // avoid drift from summing 1/k pieces
        CountingMode::Fractional => counts.iter().sum(),
    };
    Ok(ScienceVector {
        domain: domain.to_string(),
        basis,
        components: normalized(counts, total),
        total_contributions: total,
        empty: total == 0.0,
    })
}

/// Sums category components into their super-disciplines.
pub fn super_vector(vector: &ScienceVector, scheme: &CategoryScheme) -> Result<SuperVector> {
    let basis = scheme.super_disciplines().to_vec();
    let mut components = vec![0.0; basis.len()];
    for (category, &f) in vector.basis.iter().zip(&vector.components) {
        let i = scheme
            .position(category)
            .ok_or_else(|| Error::Taxonomy(format!("category `{category}` has no super-discipline")))?;
        components[scheme.super_index(i)] += f;
    }
    Ok(SuperVector {
        domain: vector.domain.clone(),
        basis,
        components,
        empty: vector.empty,
    })
}

/// Tech vectors for every domain, in the order of `domains`.
///
/// A citation from a patent of domain D to a patent belonging to D' ≠ D
/// counts once for each such D'. Citations to patents outside every other
/// domain are not counted.
pub fn tech_vectors(corpus: &Corpus, domains: &[DomainDefinition]) -> Vec<TechVector> {
    let membership = domain_membership(domains);
    let basis: Vec<String> = domains.iter().map(|d| d.domain_name.clone()).collect();
    domains
        .iter()
        .enumerate()
        .map(|(di, domain)| {
            let mut counts = vec![0.0; domains.len()];
            let mut total = 0usize;
            for id in &domain.patent_ids {
                let Some(record) = corpus.get(id) else {
                    continue;
                };
                for cited in &record.cited_patent_ids {
                    for &dj in membership.get(cited.as_str()).into_iter().flatten() {
                        if dj != di {
                            counts[dj] += 1.0;
                            total += 1;
                        }
                    }
                }
            }
            TechVector {
                domain: domain.domain_name.clone(),
                basis: basis.clone(),
                components: normalized(counts, total as f64),
                total_citations: total,
                empty: total == 0,
            }
        })
        .collect()
}

pub fn tech_vector(domain: &str, corpus: &Corpus, domains: &[DomainDefinition]) -> Result<TechVector> {
    let i = domains
        .iter()
        .position(|d| d.domain_name == domain)
        .ok_or_else(|| Error::InvalidInput(format!("unknown domain `{domain}`")))?;
    Ok(tech_vectors(corpus, domains).swap_remove(i))
}

/// Writes `domain, category, fraction` rows for every basis entry.
pub fn write_vectors_csv<W: Write, D: Distribution>(writer: W, vectors: &[D], key_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["domain", key_column, "fraction"])?;
    for v in vectors {
        for (key, f) in v.basis().iter().zip(v.components()) {
            w.write_record([v.label(), key.as_str(), &f.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<vector writer>", e))?;
    Ok(())
}

/// A labelled vector read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainVector {
    pub domain: String,
    pub basis: Vec<String>,
    pub components: Vec<f64>,
}

impl Distribution for PlainVector {
    fn label(&self) -> &str {
        &self.domain
    }
    fn basis(&self) -> &[String] {
        &self.basis
    }
    fn components(&self) -> &[f64] {
        &self.components
    }
}

/// Reads a three-column vector CSV. Domains keep first-appearance order and
/// must all share the same basis order.
pub fn read_vectors_csv(text: &str) -> Result<Vec<PlainVector>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut order: Vec<String> = Vec::new();
    let mut by_domain: HashMap<String, PlainVector> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse {
                origin: "vector csv".into(),
                line: i + 2,
                message: format!("expected 3 columns, got {}", rec.len()),
            });
        }
        let fraction: f64 = rec[2].trim().parse().map_err(|e| Error::Parse {
            origin: "vector csv".into(),
            line: i + 2,
            message: format!("fraction: {e}"),
        })?;
        let v = by_domain.entry(rec[0].to_string()).or_insert_with(|| {
            order.push(rec[0].to_string());
            PlainVector {
                domain: rec[0].to_string(),
                basis: Vec::new(),
                components: Vec::new(),
            }
        });
        v.basis.push(rec[1].to_string());
        v.components.push(fraction);
    }
    let vectors: Vec<PlainVector> = order
        .into_iter()
        .map(|d| by_domain.remove(&d).expect("inserted above"))
        .collect();
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.basis != first.basis) {
            return Err(Error::InvalidInput(format!(
                "vector `{}` does not share the basis of `{}`",
                bad.domain, first.domain
            )));
        }
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PatentRecord;
    use crate::matcher::MatchedCitation;
    use std::collections::BTreeSet;

    pub(crate) fn row(domain: &str, year: i32, cats: &[&str]) -> MatchRow {
        MatchRow {
            domain: domain.into(),
            patent_id: "p".into(),
            year,
            reference_index: 0,
            citation: MatchedCitation {
                patent_id: "p".into(),
                raw_reference: String::new(),
                matched_journal: (!cats.is_empty()).then(|| "J".to_string()),
                categories: cats.iter().map(|c| c.to_string()).collect(),
                is_scientific: !cats.is_empty(),
            },
        }
    }

    pub(crate) fn scheme() -> CategoryScheme {
        CategoryScheme::from_pairs([("A", "S1"), ("B", "S1"), ("C", "S2")]).unwrap()
    }

    #[test]
    fn multi_category_citation_inflates_denominator() {
        let rows = [
            row("d", 2000, &["A"]),
            row("d", 2000, &["A"]),
            row("d", 2000, &["A", "B"]),
        ];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        assert_eq!(v.total_contributions, 4.0);
        assert_eq!(v.components, vec![0.75, 0.25, 0.0]);
        let f = science_vector("d", &rows, None, &scheme(), CountingMode::Fractional).unwrap();
        assert_eq!(f.total_contributions, 3.0);
        assert!((f.get("A") - 2.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_category_and_empty_vectors() {
        let rows = [row("d", 2000, &["C"]), row("d", 2001, &["C"]), row("d", 2001, &[])];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        assert_eq!(v.get("C"), 1.0);
        let none = science_vector("d", &rows, Some(1990..=1995), &scheme(), CountingMode::PerCategory).unwrap();
        assert!(none.empty);
        assert_eq!(none.total(), 0.0);
        let bad = [row("d", 2000, &["Z"])];
        assert!(science_vector("d", &bad, None, &scheme(), CountingMode::PerCategory).is_err());
    }

    #[test]
    fn super_vector_sums_categories() {
        let rows = [
            row("d", 2000, &["A"]),
            row("d", 2000, &["A"]),
            row("d", 2000, &["A", "B"]),
        ];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        let s = super_vector(&v, &scheme()).unwrap();
        assert_eq!(s.components, vec![1.0, 0.0]);
        let rows = [
            row("d", 2000, &["A"]),
            row("d", 2000, &["A"]),
            row("d", 2000, &["A", "C"]),
        ];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        let s = super_vector(&v, &scheme()).unwrap();
        assert_eq!(s.components, vec![0.75, 0.25]);
        let other = CategoryScheme::from_pairs([("A", "S1")]).unwrap();
        assert!(super_vector(&v, &other).is_err());
    }

    fn patent(id: &str, cites: &[&str]) -> PatentRecord {
        PatentRecord {
            patent_id: id.into(),
            grant_year: 2000,
            title: String::new(),
            abstract_text: String::new(),
            ipc_classes: BTreeSet::new(),
            upc_classes: BTreeSet::new(),
            cited_patent_ids: cites.iter().map(|c| c.to_string()).collect(),
            npl_citations: Vec::new(),
        }
    }

    fn domain(name: &str, ids: &[&str]) -> DomainDefinition {
        DomainDefinition {
            domain_name: name.into(),
            patent_ids: ids.iter().map(|c| c.to_string()).collect(),
            relevancy: None,
        }
    }

    #[test]
    fn tech_vector_counts_cross_domain_citations() {
        let corpus = Corpus::new(vec![
            patent("d1", &["x1", "x2", "x3"]),
            patent("d2", &["y1", "d1", "z9"]),
            patent("x1", &[]),
            patent("x2", &[]),
            patent("x3", &[]),
            patent("y1", &["x1"]),
            patent("z9", &[]),
        ])
        .unwrap();
        let domains = vec![
            domain("D", &["d1", "d2"]),
            domain("X", &["x1", "x2", "x3"]),
            domain("Y", &["y1"]),
        ];
        let d = tech_vector("D", &corpus, &domains).unwrap();
        assert_eq!(d.total_citations, 4);
        assert_eq!(d.components, vec![0.0, 0.75, 0.25]);
        let y = tech_vector("Y", &corpus, &domains).unwrap();
        assert_eq!(y.components, vec![0.0, 1.0, 0.0]);
        let x = tech_vector("X", &corpus, &domains).unwrap();
        assert!(x.empty);
        assert!(tech_vector("Q", &corpus, &domains).is_err());
    }

    #[test]
    fn vector_csv_round_trip() {
        let rows = [row("d", 2000, &["A"]), row("d", 2000, &["B"])];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        let mut buf = Vec::new();
        write_vectors_csv(&mut buf, &[v.clone()], "category").unwrap();
        let back = read_vectors_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back[0].components, v.components);
        assert_eq!(back[0].basis, v.basis);
    }
}
