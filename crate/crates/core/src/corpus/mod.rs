//! Patent corpus data model, file ingestion and the synthetic corpus generator.
//!
//! A [`Corpus`] is immutable once built; every downstream stage borrows it.

mod io;
pub mod synthetic;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    domains_to_json, load_domains, load_emergence, load_patents, parse_domains, parse_emergence, read_patents,
    write_domains, write_emergence, write_patents, PatentFormat,
};

pub const MIN_GRANT_YEAR: i32 = 1976;
pub const MAX_GRANT_YEAR: i32 = 2100;

/// Years in which emerging clusters and topics were identified.
pub const EMERGENCE_YEARS: std::ops::RangeInclusive<i32> = 2007..=2010;

/// One granted patent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    #[serde(rename = "id")]
    pub patent_id: String,
    #[serde(rename = "year")]
    pub grant_year: i32,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(rename = "ipc", default)]
    pub ipc_classes: BTreeSet<String>,
    #[serde(rename = "upc", default)]
    pub upc_classes: BTreeSet<String>,
    #[serde(rename = "cites", default)]
    pub cited_patent_ids: BTreeSet<String>,
    /// Raw non-patent-literature reference strings, in citation order.
    #[serde(rename = "npl", default)]
    pub npl_citations: Vec<String>,
}

impl PatentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.patent_id.trim().is_empty() {
            return Err(Error::InvalidRecord {
                id: self.patent_id.clone(),
                message: "empty patent id".into(),
            });
        }
        if !(MIN_GRANT_YEAR..=MAX_GRANT_YEAR).contains(&self.grant_year) {
            return Err(Error::InvalidRecord {
                id: self.patent_id.clone(),
                message: format!(
                    "grant year {} outside [{MIN_GRANT_YEAR}, {MAX_GRANT_YEAR}]",
                    self.grant_year
                ),
            });
        }
        Ok(())
    }
}

/// A validated, immutable set of patents with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<PatentRecord>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates every record and rejects duplicate ids. Record order is kept.
    pub fn new(records: Vec<PatentRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            record.validate()?;
            if index.insert(record.patent_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(record.patent_id.clone()));
            }
        }
        Ok(Self { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PatentRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PatentRecord> {
        self.records.iter()
    }

    pub fn get(&self, patent_id: &str) -> Option<&PatentRecord> {
        self.index.get(patent_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, patent_id: &str) -> bool {
        self.index.contains_key(patent_id)
    }

    /// Inclusive (min, max) grant year, `None` for an empty corpus.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        let min = self.records.iter().map(|r| r.grant_year).min()?;
        let max = self.records.iter().map(|r| r.grant_year).max()?;
        Some((min, max))
    }

    /// Ids from `ids` that are not in the corpus, sorted.
    pub fn unknown_ids<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        let mut missing: Vec<String> = ids.into_iter().filter(|id| !self.contains(id)).cloned().collect();
        missing.sort();
        missing.dedup();
        missing
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a PatentRecord;
    type IntoIter = std::slice::Iter<'a, PatentRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Referential checking mode used when loading files that reference patent ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

/// The patent set of one technological domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDefinition {
    pub domain_name: String,
    pub patent_ids: BTreeSet<String>,
    /// Fraction of sampled patents judged relevant, when measured.
    pub relevancy: Option<f64>,
}

impl DomainDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.domain_name.trim().is_empty() {
            return Err(Error::InvalidInput("domain with empty name".into()));
        }
        if self.patent_ids.is_empty() {
            return Err(Error::InvalidInput(format!(
                "domain `{}` has no patents",
                self.domain_name
            )));
        }
        if let Some(r) = self.relevancy {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "domain `{}` relevancy {r} outside [0, 1]",
                    self.domain_name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergingTopic {
    #[serde(rename = "id")]
    pub topic_id: String,
    #[serde(default)]
    pub label: String,
    #[serde(rename = "year")]
    pub identified_year: i32,
    #[serde(rename = "papers")]
    pub paper_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergingCluster {
    #[serde(rename = "id")]
    pub cluster_id: String,
    #[serde(rename = "year")]
    pub subject_year: i32,
    #[serde(rename = "patents")]
    pub patent_ids: BTreeSet<String>,
}

/// Database-wide paper totals used by the cited-ratio chi-square test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationTotals {
    /// Papers indexed in the bibliographic database over the window.
    pub all_papers: u64,
    /// Of those, papers cited by at least one patent.
    pub all_cited: u64,
}

/// Emerging clusters and topics as produced by external detection tools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmergenceData {
    pub clusters: Vec<EmergingCluster>,
    pub topics: Vec<EmergingTopic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation_totals: Option<CitationTotals>,
}

impl EmergenceData {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if !EMERGENCE_YEARS.contains(&c.subject_year) {
                return Err(Error::InvalidInput(format!(
                    "cluster `{}` subject year {} outside {:?}",
                    c.cluster_id, c.subject_year, EMERGENCE_YEARS
                )));
            }
            if !seen.insert(c.cluster_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate cluster id `{}`", c.cluster_id)));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &self.topics {
            if !EMERGENCE_YEARS.contains(&t.identified_year) {
                return Err(Error::InvalidInput(format!(
                    "topic `{}` identified year {} outside {:?}",
                    t.topic_id, t.identified_year, EMERGENCE_YEARS
                )));
            }
            if t.paper_ids.is_empty() {
                return Err(Error::InvalidInput(format!("topic `{}` has no papers", t.topic_id)));
            }
            if !seen.insert(t.topic_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate topic id `{}`", t.topic_id)));
            }
        }
        Ok(())
    }
}

/// Maps each patent id to the indices of the domains containing it.
pub fn domain_membership(domains: &[DomainDefinition]) -> HashMap<&str, Vec<usize>> {
    let mut membership: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, domain) in domains.iter().enumerate() {
        for id in &domain.patent_ids {
            membership.entry(id.as_str()).or_default().push(i);
        }
    }
    membership
}
