use serde::Serialize;

use super::{science_vector, super_vector, CountingMode, Distribution, ScienceVector};
use crate::error::{Error, Result};
use crate::matcher::MatchRow;
use crate::taxonomy::CategoryScheme;

/// How widely a domain cites science in one year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breadth {
    pub domain: String,
    pub year: i32,
    pub n_super_disciplines: usize,
    pub n_categories: usize,
    /// Sum of the three largest category fractions; `None` without citations.
    pub top3_concentration: Option<f64>,
}

pub fn breadth_metrics<'a, I>(
    domain: &str,
    rows: I,
    year: i32,
    scheme: &CategoryScheme,
    mode: CountingMode,
) -> Result<Breadth>
where
    I: IntoIterator<Item = &'a MatchRow>,
{
    let v = science_vector(domain, rows, Some(year..=year), scheme, mode)?;
    let sv = super_vector(&v, scheme)?;
    let positive = |c: &[f64]| c.iter().filter(|&&f| f > 0.0).count();
    let top3 = (!v.empty).then(|| {
        let mut sorted = v.components.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted.iter().take(3).sum()
    });
    Ok(Breadth {
        domain: domain.to_string(),
        year,
        n_super_disciplines: positive(&sv.components),
        n_categories: positive(&v.components),
        top3_concentration: top3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub category: String,
    pub fraction: f64,
}

fn ranked(vector: &ScienceVector) -> Vec<(&str, f64)> {
    let mut entries: Vec<(&str, f64)> = vector
        .basis
        .iter()
        .map(String::as_str)
        .zip(vector.components.iter().copied())
        .filter(|&(_, f)| f > 0.0)
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    entries
}

/// Cited categories ranked by descending fraction, ties by name. Categories
/// with no citations are omitted.
pub fn rank_distribution(vector: &ScienceVector) -> Result<Vec<RankRow>> {
    if vector.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no scientific citations for `{}`",
            vector.domain
        )));
    }
    Ok(ranked(vector)
        .into_iter()
        .enumerate()
        .map(|(i, (category, fraction))| RankRow {
            rank: i + 1,
            category: category.to_string(),
            fraction,
        })
        .collect())
}

/// The most cited categories, taken in rank order until their cumulative
/// share exceeds `share`.
pub fn top_categories(vector: &ScienceVector, share: f64) -> Vec<String> {
    let mut out = Vec::new();
    let mut cumulative = 0.0;
    for (category, f) in ranked(vector) {
        out.push(category.to_string());
        cumulative += f;
        if cumulative > share {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::tests::{row, scheme};

    #[test]
    fn single_category_breadth() {
        let rows = [row("d", 2010, &["A"]), row("d", 2010, &["A"]), row("d", 2009, &["C"])];
        let b = breadth_metrics("d", &rows, 2010, &scheme(), CountingMode::PerCategory).unwrap();
        assert_eq!((b.n_super_disciplines, b.n_categories), (1, 1));
        assert_eq!(b.top3_concentration, Some(1.0));
        let none = breadth_metrics("d", &rows, 2011, &scheme(), CountingMode::PerCategory).unwrap();
        assert_eq!(
            (none.n_super_disciplines, none.n_categories, none.top3_concentration),
            (0, 0, None)
        );
    }

    #[test]
    fn uniform_five_category_mix() {
        let scheme =
            CategoryScheme::from_pairs([("c1", "S1"), ("c2", "S1"), ("c3", "S2"), ("c4", "S3"), ("c5", "S3")]).unwrap();
        let rows: Vec<_> = ["c1", "c2", "c3", "c4", "c5"]
            .iter()
            .map(|c| row("d", 2010, &[c]))
            .collect();
        let b = breadth_metrics("d", &rows, 2010, &scheme, CountingMode::PerCategory).unwrap();
        assert_eq!(b.n_categories, 5);
        assert!(b.n_super_disciplines <= 5);
        assert_eq!(b.n_super_disciplines, 3);
        assert!((b.top3_concentration.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ranking_and_top_share() {
        let rows = [
            row("d", 2010, &["B"]),
            row("d", 2010, &["B"]),
            row("d", 2010, &["A"]),
            row("d", 2010, &["C"]),
        ];
        let v = science_vector("d", &rows, None, &scheme(), CountingMode::PerCategory).unwrap();
        let r = rank_distribution(&v).unwrap();
        assert_eq!(r[0].category, "B");
        assert_eq!((r[1].category.as_str(), r[2].category.as_str()), ("A", "C"));
        assert!((r.iter().map(|x| x.fraction).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(top_categories(&v, 0.70), vec!["B", "A"]);
        assert_eq!(top_categories(&v, 0.40), vec!["B"]);
        let one = [row("d", 2010, &["C"])];
        let v = science_vector("d", &one, None, &scheme(), CountingMode::PerCategory).unwrap();
        assert_eq!(
            rank_distribution(&v).unwrap(),
            vec![RankRow {
                rank: 1,
                category: "C".into(),
                fraction: 1.0
            }]
        );
    }
}
