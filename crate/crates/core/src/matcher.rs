//! Resolution of raw non-patent-literature reference strings to journal
//! categories.
//!
//! A reference counts as a scientific paper when a taxonomy title form occurs
//! in its normalized text at token boundaries. When several titles occur, the
//! longest wins; ties go to the earliest position, then to lexicographic
//! title order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Corpus, DomainDefinition};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Uppercases, drops punctuation other than `.`, and collapses whitespace
/// runs to single spaces. Idempotent.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if c != '.' && !c.is_alphanumeric() {
            continue;
        }
        for u in c.to_uppercase() {
            if u != '.' && !u.is_alphanumeric() {
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(u);
        }
    }
    out
}

/// True when `text[start..end]` is delimited by the string ends or spaces.
pub fn at_token_boundary(text: &str, start: usize, end: usize) -> bool {
    let bytes = text.as_bytes();
    (start == 0 || bytes[start - 1] == b' ') && (end == bytes.len() || bytes[end] == b' ')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedCitation {
    pub patent_id: String,
    pub raw_reference: String,
    /// Normalized title form that matched.
    pub matched_journal: Option<String>,
    pub categories: BTreeSet<String>,
    pub is_scientific: bool,
}

/// A title occurrence inside a normalized reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TitleHit<'a> {
    pub start: usize,
    pub title: &'a str,
}

impl TitleHit<'_> {
    /// Ordering key: longer first, then earlier, then lexicographic.
    fn beats(&self, other: &TitleHit<'_>) -> bool {
        match self.title.len().cmp(&other.title.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => (self.start, self.title) < (other.start, other.title),
        }
    }
}

/// Single-pass multi-pattern matcher over all resolvable taxonomy titles.
pub struct Matcher<'t> {
    taxonomy: &'t Taxonomy,
    titles: Vec<&'t str>,
    automaton: AhoCorasick,
}

impl<'t> Matcher<'t> {
    pub fn new(taxonomy: &'t Taxonomy) -> Result<Self> {
        let titles: Vec<&str> = taxonomy.title_forms().collect();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&titles)
            .map_err(|e| Error::Internal(format!("building title automaton: {e}")))?;
        Ok(Self {
            taxonomy,
            titles,
            automaton,
        })
    }

    pub fn taxonomy(&self) -> &'t Taxonomy {
        self.taxonomy
    }

    /// Best title hit in an already-normalized reference.
    pub fn find_title(&self, normalized: &str) -> Option<TitleHit<'t>> {
        let mut best: Option<TitleHit<'t>> = None;
        for m in self.automaton.find_overlapping_iter(normalized) {
            if !at_token_boundary(normalized, m.start(), m.end()) {
                continue;
            }
            let hit = TitleHit {
                start: m.start(),
                title: self.titles[m.pattern().as_usize()],
            };
            if best.is_none_or(|b| hit.beats(&b)) {
                best = Some(hit);
            }
        }
        best
    }

    pub fn match_reference(&self, patent_id: &str, raw_reference: &str) -> MatchedCitation {
        let normalized = normalize(raw_reference);
        let hit = self.find_title(&normalized);
        let categories = hit.map(|h| self.taxonomy.categories_of(h.title)).unwrap_or_default();
        MatchedCitation {
            patent_id: patent_id.to_string(),
            raw_reference: raw_reference.to_string(),
            matched_journal: hit.map(|h| h.title.to_string()),
            is_scientific: !categories.is_empty(),
            categories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRow {
    pub domain: String,
    pub patent_id: String,
    pub year: i32,
    pub reference_index: usize,
    pub citation: MatchedCitation,
}

/// Scientific vs other reference counts for one (domain, year).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct YearCounts {
    pub scientific: usize,
    pub other: usize,
}

/// Matched references grouped by domain, in canonical order
/// (domain name, patent id, reference index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchTable {
    rows: Vec<MatchRow>,
}

impl MatchTable {
    pub fn rows(&self) -> &[MatchRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn for_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a MatchRow> + 'a {
        self.rows.iter().filter(move |r| r.domain == domain)
    }

    /// Per (domain, year) counts of scientific and other references.
    pub fn summary(&self) -> BTreeMap<(String, i32), YearCounts> {
        let mut out: BTreeMap<(String, i32), YearCounts> = BTreeMap::new();
        for row in &self.rows {
            let entry = out.entry((row.domain.clone(), row.year)).or_insert(YearCounts {
                scientific: 0,
                other: 0,
            });
            if row.citation.is_scientific {
                entry.scientific += 1;
            } else {
                entry.other += 1;
            }
        }
        out
    }

    /// Fraction of all rows that resolved to a journal.
    pub fn scientific_fraction(&self) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.iter().filter(|r| r.citation.is_scientific).count();
        Some(n as f64 / self.rows.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "domain",
            "patent_id",
            "year",
            "raw_reference",
            "matched_title",
            "categories",
            "is_scientific",
        ])?;
        for row in &self.rows {
            let c = &row.citation;
            w.write_record([
                row.domain.as_str(),
                row.patent_id.as_str(),
                &row.year.to_string(),
                c.raw_reference.as_str(),
                c.matched_journal.as_deref().unwrap_or(""),
                &c.categories.iter().cloned().collect::<Vec<_>>().join(";"),
                if c.is_scientific { "true" } else { "false" },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<match table>", e))?;
        Ok(())
    }
}

/// Matches every NPL reference of every domain patent. Patents shared by two
/// domains appear under both. Ids missing from the corpus are skipped. The
/// result is identical whether or not `parallel` is set.
pub fn match_corpus(
    corpus: &Corpus,
    domains: &[DomainDefinition],
    matcher: &Matcher<'_>,
    parallel: bool,
) -> MatchTable {
    let wanted: BTreeSet<&str> = domains
        .iter()
        .flat_map(|d| d.patent_ids.iter().map(String::as_str))
        .filter(|id| corpus.contains(id))
        .collect();
    let wanted: Vec<&str> = wanted.into_iter().collect();

    let match_one = |id: &'_ str| -> Vec<MatchedCitation> {
        corpus
            .get(id)
            .expect("filtered to known ids")
            .npl_citations
            .iter()
            .map(|r| matcher.match_reference(id, r))
            .collect()
    };
    let per_patent: HashMap<&str, Vec<MatchedCitation>> = if parallel {
        wanted.par_iter().map(|&id| (id, match_one(id))).collect()
    } else {
        wanted.iter().map(|&id| (id, match_one(id))).collect()
    };

    let mut order: Vec<&DomainDefinition> = domains.iter().collect();
    order.sort_by(|a, b| a.domain_name.cmp(&b.domain_name));
    let mut rows = Vec::new();
    for domain in order {
        for id in &domain.patent_ids {
            let Some(matched) = per_patent.get(id.as_str()) else {
                continue;
            };
            let year = corpus.get(id).map(|r| r.grant_year).unwrap_or_default();
            for (i, citation) in matched.iter().enumerate() {
                rows.push(MatchRow {
                    domain: domain.domain_name.clone(),
                    patent_id: id.clone(),
                    year,
                    reference_index: i,
                    citation: citation.clone(),
                });
            }
        }
    }
    MatchTable { rows }
}
