//! Classification Overlap Method: keyword pre-search, IPC/UPC class ranking,
//! and the overlap of the most representative classes.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, DomainDefinition, PatentRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassSystem {
    Ipc,
    Upc,
}

impl ClassSystem {
    fn classes(self, record: &PatentRecord) -> &BTreeSet<String> {
        match self {
            ClassSystem::Ipc => &record.ipc_classes,
            ClassSystem::Upc => &record.upc_classes,
        }
    }
}

/// How precision and recall combine into a class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreRule {
    #[default]
    Mean,
    Harmonic,
}

impl FromStr for ScoreRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ScoreRule::Mean),
            "harmonic" => Ok(ScoreRule::Harmonic),
            other => Err(Error::InvalidInput(format!("unknown score rule `{other}`"))),
        }
    }
}

/// Keyword combination for the pre-search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TermLogic {
    #[default]
    All,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComOptions {
    pub score: ScoreRule,
    pub logic: TermLogic,
    /// Number of top classes per system whose pairwise overlaps are united.
    pub top_k: usize,
}

impl Default for ComOptions {
    fn default() -> Self {
        Self {
            score: ScoreRule::Mean,
            logic: TermLogic::All,
            top_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub class_code: String,
    pub hits: usize,
    pub class_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
}

impl ClassScore {
    pub fn new(class_code: String, hits: usize, class_size: usize, presearch_size: usize, rule: ScoreRule) -> Self {
        let precision = hits as f64 / class_size as f64;
        let recall = hits as f64 / presearch_size as f64;
        let score = match rule {
            ScoreRule::Mean => 0.5 * (precision + recall),
            ScoreRule::Harmonic if precision + recall > 0.0 => 2.0 * precision * recall / (precision + recall),
            ScoreRule::Harmonic => 0.0,
        };
        Self {
            class_code,
            hits,
            class_size,
            precision,
            recall,
            score,
        }
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Patents whose title or abstract contains the terms, case-insensitively and
/// on token boundaries. A multi-word term must appear as a contiguous phrase.
pub fn presearch<S: AsRef<str>>(terms: &[S], corpus: &Corpus, logic: TermLogic) -> Result<BTreeSet<String>> {
    let phrases: Vec<Vec<String>> = terms
        .iter()
        .map(|t| tokenize(t.as_ref()))
        .filter(|p| !p.is_empty())
        .collect();
    if phrases.is_empty() {
        return Err(Error::InvalidInput("empty search term list".into()));
    }
    let mut hits = BTreeSet::new();
    for record in corpus {
        let title = tokenize(&record.title);
        let abstract_tokens = tokenize(&record.abstract_text);
        let found = |p: &Vec<String>| contains_phrase(&title, p) || contains_phrase(&abstract_tokens, p);
        let keep = match logic {
            TermLogic::All => phrases.iter().all(found),
            TermLogic::Any => phrases.iter().any(found),
        };
        if keep {
            hits.insert(record.patent_id.clone());
        }
    }
    Ok(hits)
}

/// Scores every class holding at least one pre-search patent. Sorted by score
/// descending, then hits descending, then class code.
pub fn rank_classes(
    presearch_set: &BTreeSet<String>,
    corpus: &Corpus,
    system: ClassSystem,
    rule: ScoreRule,
) -> Result<Vec<ClassScore>> {
    if presearch_set.is_empty() {
        return Err(Error::InvalidInput("empty pre-search set".into()));
    }
    let mut size: BTreeMap<&str, usize> = BTreeMap::new();
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    for record in corpus {
        let in_set = presearch_set.contains(&record.patent_id);
        for class in system.classes(record) {
            *size.entry(class).or_default() += 1;
            if in_set {
                *hits.entry(class).or_default() += 1;
            }
        }
    }
    let mut scores: Vec<ClassScore> = hits
        .into_iter()
        .map(|(class, h)| ClassScore::new(class.to_string(), h, size[class], presearch_set.len(), rule))
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.hits.cmp(&a.hits))
            .then(a.class_code.cmp(&b.class_code))
    });
    Ok(scores)
}

/// Patents carrying both `ipc_class` and `upc_class`.
pub fn overlap(ipc_class: &str, upc_class: &str, corpus: &Corpus) -> BTreeSet<String> {
    corpus
        .iter()
        .filter(|r| r.ipc_classes.contains(ipc_class) && r.upc_classes.contains(upc_class))
        .map(|r| r.patent_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComResult {
    pub terms: Vec<String>,
    pub options: ComOptions,
    pub presearch: BTreeSet<String>,
    pub ipc_ranking: Vec<ClassScore>,
    pub upc_ranking: Vec<ClassScore>,
    pub patent_ids: BTreeSet<String>,
}

impl ComResult {
    pub fn to_domain(&self, name: &str) -> Result<DomainDefinition> {
        let domain = DomainDefinition {
            domain_name: name.to_string(),
            patent_ids: self.patent_ids.clone(),
            relevancy: None,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Seeded random sample of domain patents for manual relevancy review.
    pub fn sample_sheet<'c>(&self, corpus: &'c Corpus, size: usize, seed: u64) -> Vec<&'c PatentRecord> {
        let ids: Vec<&String> = self.patent_ids.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<&String> = ids.choose_multiple(&mut rng, size).copied().collect();
        chosen.sort();
        chosen.into_iter().filter_map(|id| corpus.get(id)).collect()
    }
}

/// Full search: pre-search, rank both systems, and unite the overlaps of
/// every (IPC, UPC) pair among the top `top_k` of each ranking.
pub fn com_search<S: AsRef<str>>(terms: &[S], corpus: &Corpus, options: ComOptions) -> Result<ComResult> {
    let pre = presearch(terms, corpus, options.logic)?;
    if pre.is_empty() {
        return Err(Error::InsufficientData("pre-search matched no patents".into()));
    }
    let ipc = rank_classes(&pre, corpus, ClassSystem::Ipc, options.score)?;
    let upc = rank_classes(&pre, corpus, ClassSystem::Upc, options.score)?;
    let k = options.top_k.max(1);
    let mut patent_ids = BTreeSet::new();
    for i in ipc.iter().take(k) {
        for u in upc.iter().take(k) {
            patent_ids.extend(overlap(&i.class_code, &u.class_code, corpus));
        }
    }
    Ok(ComResult {
        terms: terms.iter().map(|t| t.as_ref().to_string()).collect(),
        options,
        presearch: pre,
        ipc_ranking: ipc,
        upc_ranking: upc,
        patent_ids,
    })
}

pub fn ranking_to_csv(ranking: &[ClassScore], system: ClassSystem) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["system", "class", "hits", "class_size", "precision", "recall", "score"])?;
    let sys = match system {
        ClassSystem::Ipc => "IPC",
        ClassSystem::Upc => "UPC",
    };
    for s in ranking {
        w.write_record([
            sys,
            &s.class_code,
            &s.hits.to_string(),
            &s.class_size.to_string(),
            &s.precision.to_string(),
            &s.recall.to_string(),
            &s.score.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}
