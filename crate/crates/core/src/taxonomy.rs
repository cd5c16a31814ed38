//! Journal → category → super-discipline mapping and the short-title
//! exclusion list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matcher::normalize;

/// Titles excluded when no exclusion file is supplied.
pub const DEFAULT_EXCLUSIONS: &[&str] = &["AGE"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub full_title: String,
    pub abbrev_title: String,
    pub abbrev_dotted_title: String,
    pub categories: BTreeSet<String>,
}

impl JournalEntry {
    /// The non-empty title forms, normalized and deduplicated.
    pub fn normalized_forms(&self) -> BTreeSet<String> {
        [&self.full_title, &self.abbrev_title, &self.abbrev_dotted_title]
            .into_iter()
            .map(|t| normalize(t))
            .filter(|t| !t.is_empty())
            .collect()
    }
}

/// Ordered categories, each assigned to exactly one super-discipline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryScheme {
    categories: Vec<String>,
    super_disciplines: Vec<String>,
    /// Index into `super_disciplines`, aligned with `categories`.
    super_of: Vec<usize>,
    position: HashMap<String, usize>,
}

impl CategoryScheme {
    /// Builds a scheme from (category, super-discipline) pairs. Category order
    /// is the pair order; super-disciplines are ordered by first appearance.
    pub fn from_pairs<I, C, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, S)>,
        C: Into<String>,
        S: Into<String>,
    {
        let mut categories = Vec::new();
        let mut super_disciplines: Vec<String> = Vec::new();
        let mut super_of = Vec::new();
        let mut position = HashMap::new();
        for (category, sd) in pairs {
            let category = category.into().trim().to_string();
            let sd = sd.into().trim().to_string();
            if category.is_empty() {
                return Err(Error::Taxonomy("empty category name in scheme".into()));
            }
            if sd.is_empty() {
                return Err(Error::Taxonomy(format!(
                    "category `{category}` has no super-discipline"
                )));
            }
            if position.contains_key(&category) {
                return Err(Error::Taxonomy(format!("category `{category}` listed twice in scheme")));
            }
            let sd_index = match super_disciplines.iter().position(|s| *s == sd) {
                Some(i) => i,
                None => {
                    super_disciplines.push(sd);
                    super_disciplines.len() - 1
                }
            };
            position.insert(category.clone(), categories.len());
            categories.push(category);
            super_of.push(sd_index);
        }
        Ok(Self {
            categories,
            super_disciplines,
            super_of,
            position,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn super_disciplines(&self) -> &[String] {
        &self.super_disciplines
    }

    pub fn position(&self, category: &str) -> Option<usize> {
        self.position.get(category).copied()
    }

    pub fn super_discipline_of(&self, category: &str) -> Option<&str> {
        self.position(category)
            .map(|i| self.super_disciplines[self.super_of[i]].as_str())
    }

    /// Super-discipline index for the category at `category_index`.
    pub fn super_index(&self, category_index: usize) -> usize {
        self.super_of[category_index]
    }

    /// Categories grouped by super-discipline, in scheme order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut groups = vec![Vec::new(); self.super_disciplines.len()];
        for (i, c) in self.categories.iter().enumerate() {
            groups[self.super_of[i]].push(c.as_str());
        }
        groups
    }
}

/// Short journal titles that collide with ordinary words in free text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionList {
    keys: BTreeSet<String>,
}

/// Casing, spacing and dotting are all ignored when comparing against the
/// exclusion list.
fn exclusion_key(title: &str) -> String {
    normalize(title).chars().filter(|c| *c != '.' && *c != ' ').collect()
}

impl ExclusionList {
    pub fn new<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            keys: titles
                .into_iter()
                .map(|t| exclusion_key(t.as_ref()))
                .filter(|k| !k.is_empty())
                .collect(),
        }
    }

    pub fn empty() -> Self {
        Self { keys: BTreeSet::new() }
    }

    pub fn contains(&self, title: &str) -> bool {
        self.keys.contains(&exclusion_key(title))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// One title per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }
}

impl Default for ExclusionList {
    fn default() -> Self {
        Self::new(DEFAULT_EXCLUSIONS.iter().copied())
    }
}

/// Loaded journal taxonomy with a lookup from every normalized title form to
/// the journals carrying it.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    journals: Vec<JournalEntry>,
    scheme: CategoryScheme,
    exclusions: ExclusionList,
    /// Normalized form → journal indices. Excluded journals are absent.
    forms: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxonomyCounts {
    pub journals: usize,
    pub categories: usize,
    pub super_disciplines: usize,
}

impl Taxonomy {
    /// Merges journal rows that share all three title forms, checks every
    /// category against the scheme, and indexes title forms.
    pub fn from_parts(journals: Vec<JournalEntry>, scheme: CategoryScheme, exclusions: ExclusionList) -> Result<Self> {
        let mut merged: Vec<JournalEntry> = Vec::new();
        let mut by_key: HashMap<(String, String, String), usize> = HashMap::new();
        for journal in journals {
            if journal.normalized_forms().is_empty() {
                return Err(Error::Taxonomy("journal row with no title".into()));
            }
            if journal.categories.is_empty() {
                return Err(Error::Taxonomy(format!(
                    "journal `{}` has no categories",
                    journal.full_title
                )));
            }
            for category in &journal.categories {
                if scheme.position(category).is_none() {
                    return Err(Error::Taxonomy(format!(
                        "category `{category}` (journal `{}`) has no super-discipline",
                        journal.full_title
                    )));
                }
            }
            let key = (
                normalize(&journal.full_title),
                normalize(&journal.abbrev_title),
                normalize(&journal.abbrev_dotted_title),
            );
            match by_key.get(&key) {
                Some(&i) => merged[i].categories.extend(journal.categories),
                None => {
                    by_key.insert(key, merged.len());
                    merged.push(journal);
                }
            }
        }

        let mut forms: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, journal) in merged.iter().enumerate() {
            let journal_forms = journal.normalized_forms();
            if journal_forms.iter().any(|f| exclusions.contains(f)) {
                continue;
            }
            for form in journal_forms {
                forms.entry(form).or_default().push(i);
            }
        }
        Ok(Self {
            journals: merged,
            scheme,
            exclusions,
            forms,
        })
    }

    pub fn load(journals_path: &Path, scheme_path: &Path, exclusions_path: Option<&Path>) -> Result<Self> {
        let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
        let scheme = parse_scheme(open(scheme_path)?, &scheme_path.display().to_string())?;
        let journals = parse_journals(open(journals_path)?, &journals_path.display().to_string())?;
        let exclusions = match exclusions_path {
            Some(p) => ExclusionList::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => ExclusionList::default(),
        };
        Self::from_parts(journals, scheme, exclusions)
    }

    pub fn journals(&self) -> &[JournalEntry] {
        &self.journals
    }

    pub fn scheme(&self) -> &CategoryScheme {
        &self.scheme
    }

    pub fn exclusions(&self) -> &ExclusionList {
        &self.exclusions
    }

    pub fn counts(&self) -> TaxonomyCounts {
        TaxonomyCounts {
            journals: self.journals.len(),
            categories: self.scheme.categories().len(),
            super_disciplines: self.scheme.super_disciplines().len(),
        }
    }

    /// Every resolvable normalized title form, sorted.
    pub fn title_forms(&self) -> impl Iterator<Item = &str> {
        self.forms.keys().map(String::as_str)
    }

    /// Union of the categories of all journals carrying this title form.
    /// Unknown and excluded titles yield the empty set.
    pub fn categories_of(&self, title: &str) -> BTreeSet<String> {
        let key = normalize(title);
        if self.exclusions.contains(&key) {
            return BTreeSet::new();
        }
        self.forms
            .get(&key)
            .into_iter()
            .flatten()
            .flat_map(|&i| self.journals[i].categories.iter().cloned())
            .collect()
    }
}

#[derive(Deserialize)]
struct JournalRow {
    full_title: String,
    abbrev: String,
    abbrev_dotted: String,
    categories: String,
}

pub fn parse_journals<R: Read>(reader: R, origin: &str) -> Result<Vec<JournalEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut journals = Vec::new();
    for (i, row) in rdr.deserialize::<JournalRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            origin: origin.into(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
            message: e.to_string(),
        })?;
        let entry = JournalEntry {
            full_title: row.full_title.trim().to_string(),
            abbrev_title: row.abbrev.trim().to_string(),
            abbrev_dotted_title: row.abbrev_dotted.trim().to_string(),
            categories: row
                .categories
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from)
                .collect(),
        };
        if entry.normalized_forms().is_empty() {
            return Err(Error::Parse {
                origin: origin.into(),
                line: i + 2,
                message: "empty title row".into(),
            });
        }
        journals.push(entry);
    }
    Ok(journals)
}

#[derive(Deserialize)]
struct SchemeRow {
    category: String,
    super_discipline: String,
}

pub fn parse_scheme<R: Read>(reader: R, origin: &str) -> Result<CategoryScheme> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut pairs = Vec::new();
    for (i, row) in rdr.deserialize::<SchemeRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            origin: origin.into(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
            message: e.to_string(),
        })?;
        pairs.push((row.category, row.super_discipline));
    }
    CategoryScheme::from_pairs(pairs)
}

/// Serializes journals in the taxonomy CSV layout.
pub fn journals_to_csv(journals: &[JournalEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["full_title", "abbrev", "abbrev_dotted", "categories"])?;
    for j in journals {
        let cats = j.categories.iter().cloned().collect::<Vec<_>>().join(";");
        w.write_record([
            j.full_title.as_str(),
            j.abbrev_title.as_str(),
            j.abbrev_dotted_title.as_str(),
            cats.as_str(),
        ])?;
    }
    into_string(w)
}

pub fn scheme_to_csv(scheme: &CategoryScheme) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "super_discipline"])?;
    for c in scheme.categories() {
        w.write_record([c.as_str(), scheme.super_discipline_of(c).unwrap_or_default()])?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}
