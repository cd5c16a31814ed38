use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Corpus, DomainDefinition, EmergenceData, PatentRecord, Strictness};
use crate::error::{Error, Result};

/// On-disk patent formats. JSONL is canonical; CSV is a flat export where
/// class and citation lists are `;`-joined and the NPL column holds a JSON
/// array of strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatentFormat {
    Jsonl,
    Csv,
}

impl PatentFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PatentFormat::Csv,
            _ => PatentFormat::Jsonl,
        }
    }
}

impl FromStr for PatentFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(PatentFormat::Jsonl),
            "csv" => Ok(PatentFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown patent format `{other}`"))),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn load_patents(path: &Path, format: PatentFormat) -> Result<Corpus> {
    let file = open(path)?;
    read_patents(BufReader::new(file), format, &path.display().to_string())
}

/// Parses patents from `reader`. `origin` names the source in error messages.
pub fn read_patents<R: Read>(reader: R, format: PatentFormat, origin: &str) -> Result<Corpus> {
    let records = match format {
        PatentFormat::Jsonl => read_jsonl(BufReader::new(reader), origin)?,
        PatentFormat::Csv => read_csv(reader, origin)?,
    };
    Corpus::new(records)
}

fn read_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Vec<PatentRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            origin: origin.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            origin: origin.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    id: String,
    year: i32,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    ipc: String,
    upc: String,
    cites: String,
    npl: String,
}

fn split_list(cell: &str) -> BTreeSet<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn join_list(items: &BTreeSet<String>) -> String {
    items.iter().map(String::as_str).collect::<Vec<_>>().join(";")
}

fn read_csv<R: Read>(reader: R, origin: &str) -> Result<Vec<PatentRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Parse {
            origin: origin.into(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let npl: Vec<String> = if row.npl.trim().is_empty() {
            Vec::new()
        } else {
            serde_json::from_str(&row.npl).map_err(|e| Error::Parse {
                origin: origin.into(),
                line: records.len() + 2,
                message: format!("npl column: {e}"),
            })?
        };
        records.push(PatentRecord {
            patent_id: row.id,
            grant_year: row.year,
            title: row.title,
            abstract_text: row.abstract_text,
            ipc_classes: split_list(&row.ipc),
            upc_classes: split_list(&row.upc),
            cited_patent_ids: split_list(&row.cites),
            npl_citations: npl,
        });
    }
    Ok(records)
}

/// Writes `corpus` in `format`; reading the result back yields an equal corpus.
pub fn write_patents<W: Write>(writer: W, corpus: &Corpus, format: PatentFormat) -> Result<()> {
    match format {
        PatentFormat::Jsonl => {
            let mut w = BufWriter::new(writer);
            for record in corpus {
                serde_json::to_writer(&mut w, record)?;
                w.write_all(b"\n").map_err(|e| Error::io("<patent writer>", e))?;
            }
            w.flush().map_err(|e| Error::io("<patent writer>", e))?;
        }
        PatentFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for record in corpus {
                w.serialize(CsvRow {
                    id: record.patent_id.clone(),
                    year: record.grant_year,
                    title: record.title.clone(),
                    abstract_text: record.abstract_text.clone(),
                    ipc: join_list(&record.ipc_classes),
                    upc: join_list(&record.upc_classes),
                    cites: join_list(&record.cited_patent_ids),
                    npl: serde_json::to_string(&record.npl_citations)?,
                })?;
            }
            w.flush().map_err(|e| Error::io("<patent writer>", e))?;
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DomainEntry {
    ids: BTreeSet<String>,
    #[serde(default)]
    relevancy: Option<f64>,
}

/// Parses a domain file (`{name: {ids: [...], relevancy}}`). Domains come back
/// sorted by name. With a corpus and [`Strictness::Strict`], any id missing
/// from the corpus is an error listing every offender.
pub fn parse_domains(text: &str, corpus: Option<&Corpus>, strictness: Strictness) -> Result<Vec<DomainDefinition>> {
    let map: BTreeMap<String, DomainEntry> = serde_json::from_str(text)?;
    let mut domains = Vec::with_capacity(map.len());
    let mut unknown = Vec::new();
    for (name, entry) in map {
        let domain = DomainDefinition {
            domain_name: name,
            patent_ids: entry.ids,
            relevancy: entry.relevancy,
        };
        domain.validate()?;
        if let Some(corpus) = corpus {
            unknown.extend(
                corpus
                    .unknown_ids(&domain.patent_ids)
                    .into_iter()
                    .map(|id| format!("{}:{id}", domain.domain_name)),
            );
        }
        domains.push(domain);
    }
    if strictness == Strictness::Strict && !unknown.is_empty() {
        return Err(Error::UnknownIds {
            context: "domain file".into(),
            ids: unknown,
        });
    }
    Ok(domains)
}

pub fn load_domains(path: &Path, corpus: Option<&Corpus>, strictness: Strictness) -> Result<Vec<DomainDefinition>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_domains(&text, corpus, strictness)
}

pub fn domains_to_json(domains: &[DomainDefinition]) -> Result<String> {
    let map: BTreeMap<&str, DomainEntry> = domains
        .iter()
        .map(|d| {
            (
                d.domain_name.as_str(),
                DomainEntry {
                    ids: d.patent_ids.clone(),
                    relevancy: d.relevancy,
                },
            )
        })
        .collect();
    Ok(serde_json::to_string_pretty(&map)?)
}

pub fn write_domains(path: &Path, domains: &[DomainDefinition]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(domains_to_json(domains)?.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_emergence(text: &str, corpus: Option<&Corpus>, strictness: Strictness) -> Result<EmergenceData> {
    let data: EmergenceData = serde_json::from_str(text)?;
    data.validate()?;
    if let (Some(corpus), Strictness::Strict) = (corpus, strictness) {
        let unknown: Vec<String> = data
            .clusters
            .iter()
            .flat_map(|c| {
                corpus
                    .unknown_ids(&c.patent_ids)
                    .into_iter()
                    .map(move |id| format!("{}:{id}", c.cluster_id))
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownIds {
                context: "emergence clusters".into(),
                ids: unknown,
            });
        }
    }
    Ok(data)
}

pub fn load_emergence(path: &Path, corpus: Option<&Corpus>, strictness: Strictness) -> Result<EmergenceData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_emergence(&text, corpus, strictness)
}

pub fn write_emergence(path: &Path, data: &EmergenceData) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, data)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
