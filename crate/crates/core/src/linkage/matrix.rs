use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Distribution;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Pearson,
    Cosine,
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(SimilarityKind::Pearson),
            "cosine" => Ok(SimilarityKind::Cosine),
            other => Err(Error::InvalidInput(format!("unknown similarity kind `{other}`"))),
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Pearson => "pearson",
            SimilarityKind::Cosine => "cosine",
        })
    }
}

/// Cosine similarity. Zero vectors are undefined.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "cosine: length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum();
    let ny: f64 = y.iter().map(|b| b * b).sum();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Undefined("cosine: zero vector".into()));
    }
    Ok((dot / (nx * ny).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric domain × domain similarity matrix. Rows of vectors for which
/// the similarity is undefined (zero variance or zero norm) hold `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelatednessMatrix {
    pub labels: Vec<String>,
    pub kind: SimilarityKind,
    entries: Vec<Option<f64>>,
}

impl RelatednessMatrix {
    /// Builds a matrix from raw entries (row-major), checking shape and
    /// symmetry.
    pub fn from_entries(labels: Vec<String>, kind: SimilarityKind, entries: Vec<Option<f64>>) -> Result<Self> {
        let n = labels.len();
        if entries.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "matrix has {} entries, expected {n}x{n}",
                entries.len()
            )));
        }
        let m = Self { labels, kind, entries };
        for i in 0..n {
            for j in (i + 1)..n {
                let sym = match (m.get(i, j), m.get(j, i)) {
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                    (None, None) => true,
                    _ => false,
                };
                if !sym {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({}, {})",
                        m.labels[i], m.labels[j]
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.labels.len() + j]
    }

    /// Labels whose row is entirely undefined.
    pub fn undefined_labels(&self) -> Vec<&str> {
        (0..self.size())
            .filter(|&i| self.get(i, i).is_none())
            .map(|i| self.labels[i].as_str())
            .collect()
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        let n = self.size();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Same matrix with rows and columns reordered: new position k holds old
    /// index `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.size();
        let mut entries = Vec::with_capacity(n * n);
        for &i in order {
            for &j in order {
                entries.push(self.get(i, j));
            }
        }
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            kind: self.kind,
            entries,
        }
    }

    /// CSV with a header row and a leading label column; undefined cells are
    /// written as `NA`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.size() {
            let mut rec = vec![self.labels[i].clone()];
            rec.extend((0..self.size()).map(|j| match self.get(i, j) {
                Some(v) => v.to_string(),
                None => "NA".to_string(),
            }));
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_csv(text: &str, kind: SimilarityKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::InvalidInput("empty matrix csv".into()))??;
        let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let n = labels.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            let parse_err = |message: String| Error::Parse {
                origin: "matrix csv".into(),
                line: i + 2,
                message,
            };
            if rec.len() != n + 1 {
                return Err(parse_err(format!("expected {} columns, got {}", n + 1, rec.len())));
            }
            if i >= n || rec[0] != labels[i] {
                return Err(parse_err(format!("row label `{}` out of order", &rec[0])));
            }
            for cell in rec.iter().skip(1) {
                let cell = cell.trim();
                entries.push(if cell.eq_ignore_ascii_case("NA") || cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|e| parse_err(e.to_string()))?)
                });
            }
        }
        Self::from_entries(labels, kind, entries)
    }
}

/// Pairwise similarity of all vectors. Vectors must share a basis.
pub fn build_matrix<D: Distribution>(vectors: &[D], kind: SimilarityKind) -> Result<RelatednessMatrix> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.basis() != first.basis()) {
            return Err(Error::InvalidInput(format!(
                "vector `{}` does not share the basis of `{}`",
                bad.label(),
                first.label()
            )));
        }
    }
    let sim = |x: &[f64], y: &[f64]| match kind {
        SimilarityKind::Pearson => stats::pearson(x, y),
        SimilarityKind::Cosine => cosine(x, y),
    };
    let defined: Vec<bool> = vectors
        .iter()
        .map(|v| sim(v.components(), v.components()).is_ok())
        .collect();
    let n = vectors.len();
    let mut entries = vec![None; n * n];
    for i in 0..n {
        if !defined[i] {
            continue;
        }
        entries[i * n + i] = Some(1.0);
        for j in (i + 1)..n {
            if defined[j] {
                let r = sim(vectors[i].components(), vectors[j].components())?;
                entries[i * n + j] = Some(r);
                entries[j * n + i] = Some(r);
            }
        }
    }
    Ok(RelatednessMatrix {
        labels: vectors.iter().map(|v| v.label().to_string()).collect(),
        kind,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixCorrelation {
    pub r: f64,
    pub pairs_used: usize,
    /// Upper-triangle pairs dropped because either matrix is undefined there.
    pub pairs_skipped: usize,
    pub triangle: &'static str,
}

/// Pearson correlation between the strict upper triangles of two matrices
/// over the same labels. Pairs undefined in either matrix are skipped.
pub fn matrix_correlation(first: &RelatednessMatrix, second: &RelatednessMatrix) -> Result<MatrixCorrelation> {
    if first.labels != second.labels {
        return Err(Error::InvalidInput(
            "matrices must have identical labels in identical order".into(),
        ));
    }
    if first.size() < 3 {
        return Err(Error::Undefined(format!(
            "matrix correlation needs at least 3 labels, got {}",
            first.size()
        )));
    }
    let (mut xs, mut ys, mut skipped) = (Vec::new(), Vec::new(), 0);
    for ((_, _, a), (_, _, b)) in first.upper_triangle().zip(second.upper_triangle()) {
        match (a, b) {
            (Some(a), Some(b)) => {
                xs.push(a);
                ys.push(b);
            }
            _ => skipped += 1,
        }
    }
    let r = stats::pearson(&xs, &ys)?;
    Ok(MatrixCorrelation {
        r,
        pairs_used: xs.len(),
        pairs_skipped: skipped,
        triangle: "strict-upper",
    })
}
