//! Growth of patent and paper output over time: count series, exponential
//! fits, and correlations between domain growth and science growth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DomainDefinition};
use crate::error::{Error, Result};
use crate::stats;
use crate::taxonomy::CategoryScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesEntity {
    PatentsInDomain,
    PapersInCategory,
    PapersInSuperDiscipline,
}

/// Yearly counts with strictly increasing years.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountSeries {
    pub label: String,
    pub entity: SeriesEntity,
    points: Vec<(i32, f64)>,
}

impl CountSeries {
    pub fn new(label: impl Into<String>, entity: SeriesEntity, points: Vec<(i32, f64)>) -> Result<Self> {
        let label = label.into();
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(format!(
                "series `{label}`: years must be strictly increasing"
            )));
        }
        if let Some(&(year, c)) = points.iter().find(|(_, c)| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "series `{label}`: invalid count {c} in {year}"
            )));
        }
        Ok(Self { label, entity, points })
    }

    pub fn points(&self) -> &[(i32, f64)] {
        &self.points
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        self.points
            .binary_search_by_key(&year, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pointwise sum over the union of years (missing years count as zero).
    pub fn sum(label: impl Into<String>, entity: SeriesEntity, parts: &[&CountSeries]) -> Result<Self> {
        let mut acc: BTreeMap<i32, f64> = BTreeMap::new();
        for s in parts {
            for &(y, c) in &s.points {
                *acc.entry(y).or_default() += c;
            }
        }
        Self::new(label, entity, acc.into_iter().collect())
    }
}

fn check_range(years: &RangeInclusive<i32>) -> Result<()> {
    if years.is_empty() {
        return Err(Error::InvalidInput(format!("empty year range {years:?}")));
    }
    Ok(())
}

/// Patents per grant year for a domain, zero-filled across `years`.
pub fn patent_count_series(
    corpus: &Corpus,
    domain: &DomainDefinition,
    years: RangeInclusive<i32>,
) -> Result<CountSeries> {
    check_range(&years)?;
    let mut counts: BTreeMap<i32, f64> = years.clone().map(|y| (y, 0.0)).collect();
    for id in &domain.patent_ids {
        if let Some(r) = corpus.get(id) {
            if let Some(c) = counts.get_mut(&r.grant_year) {
                *c += 1.0;
            }
        }
    }
    CountSeries::new(
        domain.domain_name.clone(),
        SeriesEntity::PatentsInDomain,
        counts.into_iter().collect(),
    )
}

/// Database-wide yearly paper totals per category, read from a
/// `category, year, count` CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PaperCounts {
    by_category: BTreeMap<String, BTreeMap<i32, f64>>,
}

#[derive(Deserialize, Serialize)]
struct PaperRow {
    category: String,
    year: i32,
    count: f64,
}

impl PaperCounts {
    pub fn insert(&mut self, category: &str, year: i32, count: f64) {
        *self
            .by_category
            .entry(category.to_string())
            .or_default()
            .entry(year)
            .or_default() += count;
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.by_category.keys().map(String::as_str)
    }

    pub fn read<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = Self::default();
        for (i, row) in rdr.deserialize::<PaperRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                origin: origin.into(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
                message: e.to_string(),
            })?;
            if !(row.count.is_finite() && row.count >= 0.0) {
                return Err(Error::Parse {
                    origin: origin.into(),
                    line: i + 2,
                    message: format!("invalid count {}", row.count),
                });
            }
            out.insert(&row.category, row.year, row.count);
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (category, years) in &self.by_category {
            for (&year, &count) in years {
                w.serialize(PaperRow {
                    category: category.clone(),
                    year,
                    count,
                })?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Papers per year in one category, zero-filled across `years`.
    pub fn category_series(&self, category: &str, years: RangeInclusive<i32>) -> Result<CountSeries> {
        check_range(&years)?;
        let data = self.by_category.get(category);
        let points = years
            .map(|y| (y, data.and_then(|m| m.get(&y)).copied().unwrap_or(0.0)))
            .collect();
        CountSeries::new(category, SeriesEntity::PapersInCategory, points)
    }

    /// Papers per year summed over the categories of one super-discipline.
    pub fn super_discipline_series(
        &self,
        scheme: &CategoryScheme,
        super_discipline: &str,
        years: RangeInclusive<i32>,
    ) -> Result<CountSeries> {
        let sd = scheme
            .super_disciplines()
            .iter()
            .position(|s| s == super_discipline)
            .ok_or_else(|| Error::InvalidInput(format!("unknown super-discipline `{super_discipline}`")))?;
        let members = &scheme.members()[sd];
        let parts: Vec<CountSeries> = members
            .iter()
            .map(|c| self.category_series(c, years.clone()))
            .collect::<Result<_>>()?;
        let refs: Vec<&CountSeries> = parts.iter().collect();
        CountSeries::sum(super_discipline, SeriesEntity::PapersInSuperDiscipline, &refs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Least squares on (year, ln count).
    #[default]
    LogLinear,
    /// Least squares on counts directly (Levenberg–Marquardt), started from
    /// the log-linear solution.
    Nonlinear,
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-linear" => Ok(FitMethod::LogLinear),
            "nonlinear" => Ok(FitMethod::Nonlinear),
            other => Err(Error::InvalidInput(format!("unknown fit method `{other}`"))),
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::LogLinear => "log-linear",
            FitMethod::Nonlinear => "nonlinear",
        })
    }
}

/// `count ≈ intercept · exp(exponent · (year − origin_year))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFit {
    pub exponent: f64,
    pub intercept: f64,
    pub origin_year: i32,
    pub r_squared: f64,
    pub n_points: usize,
    /// Zero-count years left out of the fit.
    pub excluded_years: Vec<i32>,
    pub method: FitMethod,
}

impl ExpFit {
    pub fn predict(&self, year: i32) -> f64 {
        self.intercept * (self.exponent * f64::from(year - self.origin_year)).exp()
    }
}

pub fn fit_exponential(series: &CountSeries, method: FitMethod) -> Result<ExpFit> {
    let (positive, zero) = series.points.iter().partition::<Vec<&(i32, f64)>, _>(|(_, c)| *c > 0.0);
    if positive.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "series `{}` has {} positive points, need 3",
            series.label,
            positive.len()
        )));
    }
    let origin = positive[0].0;
    let t: Vec<f64> = positive.iter().map(|(y, _)| f64::from(y - origin)).collect();
    let ln_y: Vec<f64> = positive.iter().map(|(_, c)| c.ln()).collect();
    let line = stats::ols(&t, &ln_y)?;
    let mut fit = ExpFit {
        exponent: line.slope,
        intercept: line.intercept.exp(),
        origin_year: origin,
        r_squared: line.r_squared,
        n_points: positive.len(),
        excluded_years: zero.iter().map(|(y, _)| *y).collect(),
        method,
    };
    if method == FitMethod::Nonlinear {
        let y: Vec<f64> = positive.iter().map(|(_, c)| *c).collect();
        let (a, b) = levenberg_marquardt(&t, &y, fit.intercept, fit.exponent);
        let ybar = stats::mean(&y);
        let ss_tot: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        let ss_res: f64 = t.iter().zip(&y).map(|(ti, yi)| (yi - a * (b * ti).exp()).powi(2)).sum();
        fit.intercept = a;
        fit.exponent = b;
        fit.r_squared = if ss_tot > 0.0 {
            (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
    Ok(fit)
}

fn levenberg_marquardt(t: &[f64], y: &[f64], mut a: f64, mut b: f64) -> (f64, f64) {
    let sse = |a: f64, b: f64| -> f64 { t.iter().zip(y).map(|(ti, yi)| (yi - a * (b * ti).exp()).powi(2)).sum() };
    let mut lambda = 1e-3;
    let mut current = sse(a, b);
    for _ in 0..200 {
        // J^T J and J^T r for residual r = y − a·e^{bt}
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let e = (b * ti).exp();
            let (da, db) = (e, a * ti * e);
            let r = yi - a * e;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = (mbb * ga - jab * gb) / det;
            let step_b = (maa * gb - jab * ga) / det;
            let next = sse(a + step_a, b + step_b);
            if next <= current {
                let done = (current - next) <= 1e-15 * current.max(f64::MIN_POSITIVE);
                a += step_a;
                b += step_b;
                current = next;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesCorrelation {
    pub r: f64,
    pub t: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Pearson r over the overlapping years with a two-sided Student-t p-value
/// on n − 2 degrees of freedom.
pub fn series_correlation(a: &CountSeries, b: &CountSeries) -> Result<SeriesCorrelation> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(year, c) in &a.points {
        if let Some(d) = b.get(year) {
            xs.push(c);
            ys.push(d);
        }
    }
    let n = xs.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "`{}` and `{}` overlap in {n} years, need 4",
            a.label, b.label
        )));
    }
    let r = stats::pearson(&xs, &ys)?;
    let df = (n - 2) as f64;
    let t = if r.abs() >= 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(SeriesCorrelation {
        r,
        t,
        p_value: stats::student_t_two_sided(t, df),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentRow {
    pub domain: String,
    pub b_domain: f64,
    pub b_categories: f64,
    pub r2_domain: f64,
    pub r2_categories: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentTable {
    pub rows: Vec<ExponentRow>,
    /// Domains left out, with the reason.
    pub excluded: Vec<(String, String)>,
    pub threshold: f64,
    pub r: f64,
}

/// Pairs each strongly exponential domain with the growth exponent of its
/// top-cited science. A domain qualifies when both its own fit and its
/// science fit reach `threshold` in r². `science_fits` is keyed by domain.
pub fn exponent_pair_table(
    domain_fits: &BTreeMap<String, ExpFit>,
    science_fits: &BTreeMap<String, ExpFit>,
    threshold: f64,
) -> Result<ExponentTable> {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (domain, fit) in domain_fits {
        if fit.r_squared < threshold {
            excluded.push((domain.clone(), format!("domain r2 {:.4} < {threshold}", fit.r_squared)));
            continue;
        }
        let Some(sci) = science_fits.get(domain) else {
            excluded.push((domain.clone(), "no science series".into()));
            continue;
        };
        if sci.r_squared < threshold {
            excluded.push((domain.clone(), format!("science r2 {:.4} < {threshold}", sci.r_squared)));
            continue;
        }
        rows.push(ExponentRow {
            domain: domain.clone(),
            b_domain: fit.exponent,
            b_categories: sci.exponent,
            r2_domain: fit.r_squared,
            r2_categories: sci.r_squared,
        });
    }
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} domains qualify for the exponent table, need 3",
            rows.len()
        )));
    }
    let bd: Vec<f64> = rows.iter().map(|r| r.b_domain).collect();
    let bc: Vec<f64> = rows.iter().map(|r| r.b_categories).collect();
    Ok(ExponentTable {
        r: stats::pearson(&bd, &bc)?,
        rows,
        excluded,
        threshold,
    })
}
