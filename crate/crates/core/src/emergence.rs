//! Links between emerging patent clusters and emerging scientific topics:
//! cited-ratio chi-square, lead/lag, multiple-link statistics, and Monte Carlo
//! expectations of those statistics under uniform null models.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmergenceData, MAX_GRANT_YEAR, MIN_GRANT_YEAR};
use crate::error::{Error, Result};
use crate::stats;

/// Rows are groups (e.g. emerging papers vs all others), columns are
/// cited/not cited. Cells may hold expectations, hence `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub cited_in_group: f64,
    pub not_cited_in_group: f64,
    pub cited_outside: f64,
    pub not_cited_outside: f64,
}

impl ContingencyTable2x2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let t = Self {
            cited_in_group: a,
            not_cited_in_group: b,
            cited_outside: c,
            not_cited_outside: d,
        };
        if t.cells().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "contingency cells must be finite and non-negative: {:?}",
                t.cells()
            )));
        }
        Ok(t)
    }

    pub fn from_counts(a: u64, b: u64, c: u64, d: u64) -> Result<Self> {
        Self::new(a as f64, b as f64, c as f64, d as f64)
    }

    pub fn cells(&self) -> [f64; 4] {
        [
            self.cited_in_group,
            self.not_cited_in_group,
            self.cited_outside,
            self.not_cited_outside,
        ]
    }

    /// Papers of the emerging topics against every other paper in the
    /// database, split by whether any linked patent cites them.
    pub fn from_emergence(data: &EmergenceData, links: &LinkTable) -> Result<Self> {
        let totals = data
            .citation_totals
            .ok_or_else(|| Error::InvalidInput("emergence data has no citation_totals".into()))?;
        let group: BTreeSet<&str> = data
            .topics
            .iter()
            .flat_map(|t| t.paper_ids.iter().map(String::as_str))
            .collect();
        let cited = links
            .links()
            .iter()
            .map(|l| l.paper_id.as_str())
            .filter(|p| group.contains(p))
            .collect::<BTreeSet<_>>()
            .len() as u64;
        let group = group.len() as u64;
        if totals.all_cited < cited || totals.all_papers < group + totals.all_cited - cited {
            return Err(Error::InvalidInput(format!(
                "citation totals {totals:?} smaller than the emerging-topic counts"
            )));
        }
        Self::from_counts(
            cited,
            group - cited,
            totals.all_cited - cited,
            totals.all_papers - group - (totals.all_cited - cited),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u32,
    /// Upper-tail probability of the statistic.
    #[serde(rename = "exact_sig")]
    pub p_value: f64,
    pub yates: bool,
}

/// Pearson chi-square with one degree of freedom; `yates` subtracts 0.5 from
/// each |O − E| (floored at zero).
pub fn chi_square_2x2(table: &ContingencyTable2x2, yates: bool) -> Result<ChiSquare> {
    let [a, b, c, d] = table.cells();
    let rows = [a + b, c + d];
    let cols = [a + c, b + d];
    if rows.iter().chain(&cols).any(|m| *m <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "contingency table has a zero marginal: {:?}",
            table.cells()
        )));
    }
    let n = rows[0] + rows[1];
    let observed = [[a, b], [c, d]];
    let mut statistic = 0.0;
    for (i, row) in observed.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            let diff = if yates { ((o - e).abs() - 0.5).max(0.0) } else { o - e };
            statistic += diff * diff / e;
        }
    }
    Ok(ChiSquare {
        statistic,
        dof: 1,
        p_value: stats::chi_square_sf(statistic, 1.0),
        yates,
    })
}

/// One citation from a patent of an emerging cluster to a paper of an
/// emerging topic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub cluster_id: String,
    pub patent_id: String,
    pub topic_id: String,
    pub paper_id: String,
    pub cluster_year: i32,
    pub topic_year: i32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTable {
    links: Vec<Link>,
}

impl LinkTable {
    pub fn new(links: Vec<Link>) -> Result<Self> {
        for l in &links {
            for (what, id) in [
                ("cluster", &l.cluster_id),
                ("patent", &l.patent_id),
                ("topic", &l.topic_id),
                ("paper", &l.paper_id),
            ] {
                if id.trim().is_empty() {
                    return Err(Error::InvalidInput(format!("link with empty {what} id: {l:?}")));
                }
            }
            for year in [l.cluster_year, l.topic_year] {
                if !(MIN_GRANT_YEAR..=MAX_GRANT_YEAR).contains(&year) {
                    return Err(Error::InvalidInput(format!("link year {year} out of range: {l:?}")));
                }
            }
        }
        Ok(Self { links })
    }

    /// Checks every link against the loaded clusters and topics: ids resolve,
    /// memberships hold and years agree.
    pub fn resolve(&self, data: &EmergenceData) -> Result<()> {
        let clusters: HashMap<&str, _> = data.clusters.iter().map(|c| (c.cluster_id.as_str(), c)).collect();
        let topics: HashMap<&str, _> = data.topics.iter().map(|t| (t.topic_id.as_str(), t)).collect();
        let mut bad = Vec::new();
        for (i, l) in self.links.iter().enumerate() {
            let ok = clusters
                .get(l.cluster_id.as_str())
                .is_some_and(|c| c.patent_ids.contains(&l.patent_id) && c.subject_year == l.cluster_year)
                && topics
                    .get(l.topic_id.as_str())
                    .is_some_and(|t| t.paper_ids.contains(&l.paper_id) && t.identified_year == l.topic_year);
            if !ok {
                bad.push(format!(
                    "link {}: {}/{} -> {}/{}",
                    i + 1,
                    l.cluster_id,
                    l.patent_id,
                    l.topic_id,
                    l.paper_id
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownIds {
                context: "emergence links".into(),
                ids: bad,
            })
        }
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn read<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut links = Vec::new();
        for (i, row) in rdr.deserialize::<Link>().enumerate() {
            links.push(row.map_err(|e| Error::Parse {
                origin: origin.into(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
                message: e.to_string(),
            })?);
        }
        Self::new(links)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.links.is_empty() {
            w.write_record([
                "cluster_id",
                "patent_id",
                "topic_id",
                "paper_id",
                "cluster_year",
                "topic_year",
            ])?;
        }
        for l in &self.links {
            w.serialize(l)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Internal(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Sizes of the linked subsystem, used to parameterize null models.
    pub fn observed_dimensions(&self) -> ObservedDimensions {
        let mut patents_per_cluster: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut links_per_cluster: BTreeMap<&str, usize> = BTreeMap::new();
        let mut topics = BTreeSet::new();
        let mut papers = BTreeSet::new();
        for l in &self.links {
            patents_per_cluster
                .entry(&l.cluster_id)
                .or_default()
                .insert(&l.patent_id);
            *links_per_cluster.entry(&l.cluster_id).or_default() += 1;
            topics.insert(l.topic_id.as_str());
            papers.insert(l.paper_id.as_str());
        }
        ObservedDimensions {
            n_clusters: patents_per_cluster.len(),
            n_topics: topics.len(),
            n_links: self.links.len(),
            n_patents: patents_per_cluster.values().map(BTreeSet::len).sum(),
            n_papers: papers.len(),
            cluster_sizes: patents_per_cluster.values().map(BTreeSet::len).collect(),
            cluster_link_counts: links_per_cluster.into_values().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObservedDimensions {
    pub n_clusters: usize,
    pub n_topics: usize,
    pub n_links: usize,
    pub n_patents: usize,
    pub n_papers: usize,
    /// Distinct linked patents per cluster, in cluster-id order.
    pub cluster_sizes: Vec<usize>,
    /// Links per cluster, in cluster-id order.
    pub cluster_link_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadLag {
    /// Cluster year later than topic year.
    pub after: usize,
    pub same: usize,
    pub before: usize,
    pub total: usize,
    /// `[after, same, before] / total`; `None` for an empty table.
    pub ratios: Option<[f64; 3]>,
}

pub fn lead_lag(links: &LinkTable) -> LeadLag {
    let (mut after, mut same, mut before) = (0, 0, 0);
    for l in links.links() {
        match l.cluster_year.cmp(&l.topic_year) {
            std::cmp::Ordering::Greater => after += 1,
            std::cmp::Ordering::Equal => same += 1,
            std::cmp::Ordering::Less => before += 1,
        }
    }
    let total = links.len();
    let ratios = (total > 0).then(|| {
        let n = total as f64;
        [after as f64 / n, same as f64 / n, before as f64 / n]
    });
    LeadLag {
        after,
        same,
        before,
        total,
        ratios,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum LinkKind {
    /// Several patents of a cluster cite the same topic.
    SharedTopic = 1,
    /// One patent cites several papers of a topic.
    RepeatedTopic = 2,
    /// Several patents of a cluster cite the identical paper.
    SharedPaper = 3,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [LinkKind::SharedTopic, LinkKind::RepeatedTopic, LinkKind::SharedPaper];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<LinkKind> for u8 {
    fn from(k: LinkKind) -> u8 {
        k as u8
    }
}

impl TryFrom<u8> for LinkKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(LinkKind::SharedTopic),
            2 => Ok(LinkKind::RepeatedTopic),
            3 => Ok(LinkKind::SharedPaper),
            other => Err(Error::InvalidInput(format!("link kind must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("link kind must be 1, 2 or 3, got `{s}`")))?;
        n.try_into()
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind-{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultilinkStats {
    pub linked_clusters: usize,
    pub kind1: usize,
    pub kind2: usize,
    pub kind3: usize,
    /// Clusters showing at least one of the three kinds.
    pub any: usize,
}

impl MultilinkStats {
    pub fn count(&self, kind: LinkKind) -> usize {
        match kind {
            LinkKind::SharedTopic => self.kind1,
            LinkKind::RepeatedTopic => self.kind2,
            LinkKind::SharedPaper => self.kind3,
        }
    }
}

/// Counts clusters exhibiting each kind of multiple link. Duplicate
/// (patent, paper) links count once.
pub fn multilink_stats(links: &LinkTable) -> MultilinkStats {
    #[derive(Default)]
    struct Acc<'a> {
        patents_by_topic: HashMap<&'a str, BTreeSet<&'a str>>,
        papers_by_patent_topic: HashMap<(&'a str, &'a str), BTreeSet<&'a str>>,
        patents_by_paper: HashMap<&'a str, BTreeSet<&'a str>>,
    }
    let mut clusters: BTreeMap<&str, Acc> = BTreeMap::new();
    for l in links.links() {
        let acc = clusters.entry(&l.cluster_id).or_default();
        acc.patents_by_topic
            .entry(&l.topic_id)
            .or_default()
            .insert(&l.patent_id);
        acc.papers_by_patent_topic
            .entry((&l.patent_id, &l.topic_id))
            .or_default()
            .insert(&l.paper_id);
        acc.patents_by_paper
            .entry(&l.paper_id)
            .or_default()
            .insert(&l.patent_id);
    }
    let mut out = MultilinkStats {
        linked_clusters: clusters.len(),
        kind1: 0,
        kind2: 0,
        kind3: 0,
        any: 0,
    };
    for acc in clusters.values() {
        let k1 = acc.patents_by_topic.values().any(|s| s.len() >= 2);
        let k2 = acc.papers_by_patent_topic.values().any(|s| s.len() >= 2);
        let k3 = acc.patents_by_paper.values().any(|s| s.len() >= 2);
        out.kind1 += usize::from(k1);
        out.kind2 += usize::from(k2);
        out.kind3 += usize::from(k3);
        out.any += usize::from(k1 || k2 || k3);
    }
    out
}

/// Parameters of a uniform-assignment null model. Each simulated link lands
/// independently and uniformly on a cell; a cluster scores when one of its
/// cells receives two or more links.
///
/// * kind-1 cells: (cluster, topic)
/// * kind-2 cells: (patent, topic), patents partitioned into clusters by
///   `cluster_sizes` (or as evenly as possible)
/// * kind-3 cells: (cluster, paper)
///
/// With `cluster_link_counts` set, each cluster receives exactly its observed
/// number of links and only the other coordinate is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModelSpec {
    pub n_clusters: usize,
    pub n_topics: usize,
    pub n_links: usize,
    #[serde(default)]
    pub n_patents: Option<usize>,
    #[serde(default)]
    pub n_papers: Option<usize>,
    #[serde(default)]
    pub cluster_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub cluster_link_counts: Option<Vec<usize>>,
    pub n_simulations: usize,
    pub seed: u64,
}

impl NullModelSpec {
    pub fn new(n_clusters: usize, n_topics: usize, n_links: usize, n_simulations: usize, seed: u64) -> Self {
        Self {
            n_clusters,
            n_topics,
            n_links,
            n_patents: None,
            n_papers: None,
            cluster_sizes: None,
            cluster_link_counts: None,
            n_simulations,
            seed,
        }
    }

    /// Null model sized by an observed link table.
    pub fn from_observed(dims: &ObservedDimensions, n_simulations: usize, seed: u64) -> Self {
        Self {
            n_clusters: dims.n_clusters,
            n_topics: dims.n_topics,
            n_links: dims.n_links,
            n_patents: Some(dims.n_patents),
            n_papers: Some(dims.n_papers),
            cluster_sizes: Some(dims.cluster_sizes.clone()),
            cluster_link_counts: None,
            n_simulations,
            seed,
        }
    }

    pub fn with_patents(mut self, n_patents: usize) -> Self {
        self.n_patents = Some(n_patents);
        self
    }

    pub fn with_papers(mut self, n_papers: usize) -> Self {
        self.n_papers = Some(n_papers);
        self
    }

    pub fn with_fixed_marginals(mut self, counts: Vec<usize>) -> Self {
        self.cluster_link_counts = Some(counts);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_clusters", self.n_clusters),
            ("n_topics", self.n_topics),
            ("n_links", self.n_links),
            ("n_simulations", self.n_simulations),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("null model: {name} must be positive")));
        }
        if self.n_patents == Some(0) || self.n_papers == Some(0) {
            return Err(Error::InvalidInput(
                "null model: n_patents and n_papers must be positive".into(),
            ));
        }
        if let Some(sizes) = &self.cluster_sizes {
            if sizes.len() != self.n_clusters || sizes.contains(&0) {
                return Err(Error::InvalidInput(format!(
                    "null model: cluster_sizes must list {} positive sizes",
                    self.n_clusters
                )));
            }
            if let Some(n) = self.n_patents {
                if sizes.iter().sum::<usize>() != n {
                    return Err(Error::InvalidInput(
                        "null model: cluster_sizes must sum to n_patents".into(),
                    ));
                }
            }
        }
        if let Some(counts) = &self.cluster_link_counts {
            if counts.len() != self.n_clusters || counts.iter().sum::<usize>() != self.n_links {
                return Err(Error::InvalidInput(format!(
                    "null model: cluster_link_counts must list {} counts summing to {}",
                    self.n_clusters, self.n_links
                )));
            }
        }
        Ok(())
    }

    /// Cluster of each patent for kind-2.
    fn patent_clusters(&self) -> Result<Vec<usize>> {
        let sizes = match (&self.cluster_sizes, self.n_patents) {
            (Some(sizes), _) => sizes.clone(),
            (None, Some(n)) if n >= self.n_clusters => {
                let (q, r) = (n / self.n_clusters, n % self.n_clusters);
                (0..self.n_clusters).map(|c| q + usize::from(c < r)).collect()
            }
            (None, Some(n)) => {
                return Err(Error::InvalidInput(format!(
                    "null model: {n} patents cannot fill {} clusters",
                    self.n_clusters
                )))
            }
            (None, None) => {
                return Err(Error::InvalidInput(
                    "kind-2 null model needs n_patents or cluster_sizes".into(),
                ))
            }
        };
        Ok(sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect())
    }

    pub fn describe(&self, kind: LinkKind) -> String {
        let placement = match kind {
            LinkKind::SharedTopic => "uniform (cluster, topic) cells",
            LinkKind::RepeatedTopic => "uniform (patent, topic) cells, patents partitioned into clusters",
            LinkKind::SharedPaper => "uniform (cluster, paper) cells",
        };
        let marginals = if self.cluster_link_counts.is_some() {
            "per-cluster link counts fixed at observed values"
        } else {
            "links placed independently"
        };
        format!("{kind}: {placement}; {marginals}; a cluster scores when any of its cells holds >= 2 links")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub kind: LinkKind,
    pub model: String,
    pub seed: u64,
    pub n_simulations: usize,
    pub expectation: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

/// Cell layout of one null model: `cells_per_cluster[c]` consecutive cells
/// starting at `offset[c]`, plus the owning cluster of every cell.
struct Geometry {
    n_cells: usize,
    cell_cluster: Vec<u32>,
    /// Uniform cell draws, or per-cluster (offset, width, links) when marginals are fixed.
    fixed: Option<Vec<(usize, usize, usize)>>,
}

fn geometry(spec: &NullModelSpec, kind: LinkKind) -> Result<Geometry> {
    let (owners, width): (Vec<usize>, usize) = match kind {
        LinkKind::SharedTopic => ((0..spec.n_clusters).collect(), spec.n_topics),
        LinkKind::SharedPaper => {
            let papers = spec
                .n_papers
                .ok_or_else(|| Error::InvalidInput("kind-3 null model needs n_papers".into()))?;
            ((0..spec.n_clusters).collect(), papers)
        }
        LinkKind::RepeatedTopic => (spec.patent_clusters()?, spec.n_topics),
    };
    let n_cells = owners.len() * width;
    if u32::try_from(n_cells).is_err() {
        return Err(Error::InvalidInput(format!("null model too large: {n_cells} cells")));
    }
    let cell_cluster = owners
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c as u32, width))
        .collect();
    let fixed = spec.cluster_link_counts.as_ref().map(|counts| {
        let mut start = vec![0usize; spec.n_clusters + 1];
        for &c in &owners {
            start[c + 1] += width;
        }
        for c in 0..spec.n_clusters {
            start[c + 1] += start[c];
        }
        (0..spec.n_clusters)
            .map(|c| (start[c], start[c + 1] - start[c], counts[c]))
            .collect()
    });
    Ok(Geometry {
        n_cells,
        cell_cluster,
        fixed,
    })
}

struct Scratch {
    counts: Vec<u32>,
    touched: Vec<usize>,
    scored: Vec<bool>,
}

impl Geometry {
    fn simulate(&self, rng: &mut ChaCha8Rng, n_links: usize, s: &mut Scratch) -> u64 {
        let place = |cell: usize, s: &mut Scratch| {
            if s.counts[cell] == 0 {
                s.touched.push(cell);
            }
            s.counts[cell] += 1;
        };
        match &self.fixed {
            None => {
                for _ in 0..n_links {
                    place(rng.gen_range(0..self.n_cells), s);
                }
            }
            Some(blocks) => {
                for &(offset, width, links) in blocks {
                    for _ in 0..links {
                        place(offset + rng.gen_range(0..width), s);
                    }
                }
            }
        }
        let mut hits = 0u64;
        for &cell in &s.touched {
            if s.counts[cell] >= 2 {
                let c = self.cell_cluster[cell] as usize;
                if !s.scored[c] {
                    s.scored[c] = true;
                    hits += 1;
                }
            }
        }
        for &cell in &s.touched {
            s.counts[cell] = 0;
            s.scored[self.cell_cluster[cell] as usize] = false;
        }
        s.touched.clear();
        hits
    }
}

/// Mean and standard error of the multiple-link statistic over independent
/// simulations. Simulation `i` draws from ChaCha8 seeded with `seed` on
/// stream `i`, so the result does not depend on thread scheduling.
pub fn monte_carlo_expectation(spec: &NullModelSpec, kind: LinkKind) -> Result<MonteCarloResult> {
    spec.validate()?;
    let geo = geometry(spec, kind)?;
    let n_clusters = spec.n_clusters;
    let (sum, sum_sq) = (0..spec.n_simulations as u64)
        .into_par_iter()
        .map_init(
            || Scratch {
                counts: vec![0; geo.n_cells],
                touched: Vec::with_capacity(spec.n_links),
                scored: vec![false; n_clusters],
            },
            |scratch, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i);
                let h = geo.simulate(&mut rng, spec.n_links, scratch);
                (h, u128::from(h * h))
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = spec.n_simulations as f64;
    let mean = sum as f64 / n;
    let var = if spec.n_simulations > 1 {
        ((sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MonteCarloResult {
        kind,
        model: spec.describe(kind),
        seed: spec.seed,
        n_simulations: spec.n_simulations,
        expectation: mean,
        std_dev: var.sqrt(),
        std_error: (var / n).sqrt(),
    })
}

/// Observed against expected number of clusters showing a multiple link,
/// each row out of `n_clusters`.
pub fn multilink_chi_square(observed: f64, expected: f64, n_clusters: usize, yates: bool) -> Result<ChiSquare> {
    let n = n_clusters as f64;
    if observed > n || expected > n {
        return Err(Error::InvalidInput(format!(
            "cluster counts {observed}/{expected} exceed {n_clusters} clusters"
        )));
    }
    let table = ContingencyTable2x2::new(observed, n - observed, expected, n - expected)?;
    chi_square_2x2(&table, yates)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindOutcome {
    pub kind: LinkKind,
    pub observed: usize,
    pub monte_carlo: MonteCarloResult,
    pub chi_square: Option<ChiSquare>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmergenceReport {
    pub n_links: usize,
    pub dimensions: ObservedDimensions,
    pub cited_ratio: Option<ContingencyTable2x2>,
    pub cited_ratio_test: Option<ChiSquare>,
    pub lead_lag: LeadLag,
    pub multilink: MultilinkStats,
    pub kinds: Vec<KindOutcome>,
}

/// Runs every emergence test on resolved data. The cited-ratio test needs
/// `citation_totals`; it is skipped when they are absent.
pub fn analyze(
    data: &EmergenceData,
    links: &LinkTable,
    n_simulations: usize,
    seed: u64,
    fixed_marginals: bool,
    yates: bool,
) -> Result<EmergenceReport> {
    links.resolve(data)?;
    let dims = links.observed_dimensions();
    let (cited_ratio, cited_ratio_test) = match data.citation_totals {
        Some(_) => {
            let t = ContingencyTable2x2::from_emergence(data, links)?;
            (Some(t), Some(chi_square_2x2(&t, yates)?))
        }
        None => (None, None),
    };
    let multilink = multilink_stats(links);
    let mut kinds = Vec::new();
    if !links.is_empty() {
        let mut spec = NullModelSpec::from_observed(&dims, n_simulations, seed);
        if fixed_marginals {
            spec.cluster_link_counts = Some(dims.cluster_link_counts.clone());
        }
        for (i, kind) in LinkKind::ALL.into_iter().enumerate() {
            let mut s = spec.clone();
            s.seed = seed.wrapping_add(i as u64);
            let mc = monte_carlo_expectation(&s, kind)?;
            let observed = multilink.count(kind);
            let chi_square = multilink_chi_square(observed as f64, mc.expectation, dims.n_clusters, yates).ok();
            kinds.push(KindOutcome {
                kind,
                observed,
                monte_carlo: mc,
                chi_square,
            });
        }
    }
    Ok(EmergenceReport {
        n_links: links.len(),
        dimensions: dims,
        cited_ratio,
        cited_ratio_test,
        lead_lag: lead_lag(links),
        multilink,
        kinds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmergingCluster, EmergingTopic};
    use statrs::function::erf::erf;

    fn link(c: &str, p: &str, t: &str, q: &str) -> Link {
        Link {
            cluster_id: c.into(),
            patent_id: p.into(),
            topic_id: t.into(),
            paper_id: q.into(),
            cluster_year: 2008,
            topic_year: 2008,
        }
    }

    fn table(links: Vec<Link>) -> LinkTable {
        LinkTable::new(links).unwrap()
    }

    #[test]
    fn proportional_table_is_zero() {
        let t = ContingencyTable2x2::from_counts(10, 90, 20, 180).unwrap();
        let c = chi_square_2x2(&t, false).unwrap();
        assert!(c.statistic.abs() < 1e-12);
        assert!((c.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_example() {
        let t = ContingencyTable2x2::from_counts(10, 90, 20, 80).unwrap();
        let c = chi_square_2x2(&t, false).unwrap();
        let closed = 200.0 * (10.0 * 80.0 - 90.0 * 20.0f64).powi(2) / (100.0 * 100.0 * 30.0 * 170.0);
        assert!((c.statistic - closed).abs() < 1e-12);
        assert!((c.statistic - 3.9216).abs() < 1e-3);
        let y = chi_square_2x2(&t, true).unwrap();
        assert!(y.statistic < c.statistic);
    }

    #[test]
    fn zero_marginal_is_rejected() {
        let t = ContingencyTable2x2::from_counts(0, 0, 3, 4).unwrap();
        assert!(chi_square_2x2(&t, false).is_err());
        assert!(ContingencyTable2x2::new(-1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn chi_square_cdf_matches_erf_closed_form() {
        for i in 1..=200 {
            let x = f64::from(i) * 0.05;
            let closed = erf((x / 2.0).sqrt());
            assert!((stats::chi_square_cdf(x, 1.0) - closed).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn lead_lag_classification() {
        let mut a = link("c", "p", "t", "q");
        let (mut b, mut c) = (a.clone(), a.clone());
        (a.cluster_year, a.topic_year) = (2008, 2007);
        (c.cluster_year, c.topic_year) = (2007, 2008);
        b.paper_id = "q2".into();
        let ll = lead_lag(&table(vec![a, b, c]));
        assert_eq!((ll.after, ll.same, ll.before), (1, 1, 1));
        let empty = lead_lag(&LinkTable::default());
        assert_eq!(empty.total, 0);
        assert!(empty.ratios.is_none());
    }

    #[test]
    fn multilink_definitions() {
        let s = multilink_stats(&table(vec![link("c", "p1", "T", "a"), link("c", "p2", "T", "b")]));
        assert_eq!((s.kind1, s.kind2, s.kind3), (1, 0, 0));
        let s = multilink_stats(&table(vec![link("c", "p1", "T", "a"), link("c", "p1", "T", "b")]));
        assert_eq!((s.kind1, s.kind2, s.kind3), (0, 1, 0));
        let s = multilink_stats(&table(vec![link("c", "p1", "T", "a"), link("c", "p2", "T", "a")]));
        assert_eq!((s.kind1, s.kind2, s.kind3), (1, 0, 1));
        let s = multilink_stats(&table(vec![link("c", "p1", "T", "a"), link("d", "p2", "T", "a")]));
        assert_eq!((s.linked_clusters, s.any), (2, 0));
    }

    #[test]
    fn resolve_checks_membership_and_years() {
        let data = EmergenceData {
            clusters: vec![EmergingCluster {
                cluster_id: "c".into(),
                subject_year: 2008,
                patent_ids: ["p1".to_string()].into(),
            }],
            topics: vec![EmergingTopic {
                topic_id: "T".into(),
                label: String::new(),
                identified_year: 2008,
                paper_ids: ["a".to_string()].into(),
            }],
            citation_totals: None,
        };
        assert!(table(vec![link("c", "p1", "T", "a")]).resolve(&data).is_ok());
        assert!(table(vec![link("c", "p2", "T", "a")]).resolve(&data).is_err());
        let mut wrong_year = link("c", "p1", "T", "a");
        wrong_year.topic_year = 2009;
        assert!(table(vec![wrong_year]).resolve(&data).is_err());
    }

    #[test]
    fn link_csv_round_trip() {
        let t = table(vec![link("c", "p1", "T", "a"), link("d", "p2", "U", "b")]);
        let back = LinkTable::read(t.to_csv().unwrap().as_bytes(), "t").unwrap();
        assert_eq!(back, t);
        let empty = LinkTable::read(LinkTable::default().to_csv().unwrap().as_bytes(), "t").unwrap();
        assert!(empty.is_empty());
        assert!(LinkTable::read("cluster_id,patent_id\nc,p\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn exact_small_models() {
        let spec = NullModelSpec::new(2, 1, 2, 20_000, 7);
        let r = monte_carlo_expectation(&spec, LinkKind::SharedTopic).unwrap();
        assert!((r.expectation - 0.5).abs() < 3.0 * r.std_error, "{r:?}");
        let spec = NullModelSpec::new(2, 2, 2, 20_000, 7);
        let r = monte_carlo_expectation(&spec, LinkKind::SharedTopic).unwrap();
        assert!((r.expectation - 0.25).abs() < 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn fixed_marginals_are_respected() {
        // Each cluster receives its two links; both land on the one topic.
        let spec = NullModelSpec::new(3, 1, 6, 50, 1).with_fixed_marginals(vec![2, 2, 2]);
        let r = monte_carlo_expectation(&spec, LinkKind::SharedTopic).unwrap();
        assert_eq!(r.expectation, 3.0);
        assert_eq!(r.std_dev, 0.0);
        let bad = NullModelSpec::new(3, 1, 6, 50, 1).with_fixed_marginals(vec![2, 2]);
        assert!(monte_carlo_expectation(&bad, LinkKind::SharedTopic).is_err());
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = NullModelSpec::new(20, 5, 40, 2_000, 99);
        let a = monte_carlo_expectation(&spec, LinkKind::SharedTopic).unwrap();
        let b = monte_carlo_expectation(&spec, LinkKind::SharedTopic).unwrap();
        assert_eq!(a.expectation.to_bits(), b.expectation.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn kind_specific_parameters_are_required() {
        let spec = NullModelSpec::new(4, 3, 10, 10, 0);
        assert!(monte_carlo_expectation(&spec, LinkKind::RepeatedTopic).is_err());
        assert!(monte_carlo_expectation(&spec, LinkKind::SharedPaper).is_err());
        assert!("4".parse::<LinkKind>().is_err());
        assert_eq!("2".parse::<LinkKind>().unwrap(), LinkKind::RepeatedTopic);
    }

    #[test]
    fn multilink_table_construction() {
        let c = multilink_chi_square(80.0, 23.7, 142, false).unwrap();
        assert!((c.statistic - 48.1).abs() < 0.1, "{c:?}");
        assert!(multilink_chi_square(150.0, 23.7, 142, false).is_err());
    }
}
