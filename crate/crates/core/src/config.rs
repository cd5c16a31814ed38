//! Run configuration: a flat key/value TOML document whose keys mirror the
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::FitMethod;
use crate::error::{Error, Result};
use crate::linkage::{CountingMode, SimilarityKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub patents: Option<PathBuf>,
    pub journals: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub domains: Option<PathBuf>,
    pub paper_counts: Option<PathBuf>,
    pub emergence: Option<PathBuf>,
    pub links: Option<PathBuf>,
    pub year_start: Option<i32>,
    pub year_end: Option<i32>,
    /// Year for breadth metrics; defaults to the last year of the range.
    pub breadth_year: Option<i32>,
    pub counting_mode: CountingMode,
    pub science_similarity: SimilarityKind,
    pub tech_similarity: SimilarityKind,
    pub fit_method: FitMethod,
    /// Minimum r² for a domain to count as exponentially growing.
    pub fit_threshold: f64,
    /// Top categories are taken until their cumulative share exceeds this.
    pub top_share: f64,
    pub simulations: usize,
    pub fixed_marginals: bool,
    pub yates: bool,
    pub strict: bool,
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub layout: bool,
    pub dynamics: bool,
    pub emergence_tests: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patents: None,
            journals: None,
            categories: None,
            exclusions: None,
            domains: None,
            paper_counts: None,
            emergence: None,
            links: None,
            year_start: None,
            year_end: None,
            breadth_year: None,
            counting_mode: CountingMode::PerCategory,
            science_similarity: SimilarityKind::Pearson,
            tech_similarity: SimilarityKind::Cosine,
            fit_method: FitMethod::LogLinear,
            fit_threshold: 0.90,
            top_share: 0.70,
            simulations: 100_000,
            fixed_marginals: false,
            yates: false,
            strict: true,
            seed: None,
            out_dir: None,
            layout: true,
            dynamics: true,
            emergence_tests: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        for p in self.paths_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = self.out_dir.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn paths_mut(&mut self) -> [Option<&mut PathBuf>; 8] {
        [
            self.patents.as_mut(),
            self.journals.as_mut(),
            self.categories.as_mut(),
            self.exclusions.as_mut(),
            self.domains.as_mut(),
            self.paper_counts.as_mut(),
            self.emergence.as_mut(),
            self.links.as_mut(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let missing: Vec<&str> = [
            ("patents", &self.patents),
            ("journals", &self.journals),
            ("categories", &self.categories),
            ("domains", &self.domains),
        ]
        .into_iter()
        .filter(|(_, p)| p.is_none())
        .map(|(k, _)| k)
        .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing input path(s): {}", missing.join(", "))));
        }
        let all = [
            &self.patents,
            &self.journals,
            &self.categories,
            &self.exclusions,
            &self.domains,
            &self.paper_counts,
            &self.emergence,
            &self.links,
        ];
        if let Some(p) = all.into_iter().flatten().find(|p| !p.is_file()) {
            return Err(Error::Config(format!("input file {} does not exist", p.display())));
        }
        if let (Some(a), Some(b)) = (self.year_start, self.year_end) {
            if a > b {
                return Err(Error::Config(format!("year_start {a} after year_end {b}")));
            }
        }
        if !(0.0..=1.0).contains(&self.fit_threshold) || !(0.0..=1.0).contains(&self.top_share) {
            return Err(Error::Config("fit_threshold and top_share must lie in [0, 1]".into()));
        }
        if self.simulations == 0 {
            return Err(Error::Config("simulations must be positive".into()));
        }
        if self.out_dir.is_none() {
            return Err(Error::Config("out_dir is required".into()));
        }
        if self.seed.is_none() && self.emergence_tests && self.emergence.is_some() {
            return Err(Error::Config(
                "seed is required for the emergence Monte Carlo stage".into(),
            ));
        }
        if self.seed.is_none() && self.layout {
            return Err(Error::Config("seed is required for the layout stage".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form. The output directory is not
    /// part of the hash.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic sub-seed for one pipeline stage.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_toml_round_trip() {
        let text = "patents = \"p.jsonl\"\nseed = 7\ncounting_mode = \"fractional\"\ntech_similarity = \"pearson\"\nlayout = false\n";
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.counting_mode, CountingMode::Fractional);
        assert_eq!(c.tech_similarity, SimilarityKind::Pearson);
        assert!(!c.layout);
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(RunConfig::from_toml("no_such_key = 1").is_err());
    }

    #[test]
    fn hash_ignores_out_dir() {
        let mut a = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        let h = a.hash().unwrap();
        a.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash().unwrap(), h);
        a.seed = Some(2);
        assert_ne!(a.hash().unwrap(), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.toml");
        std::fs::write(&path, "patents = \"p.jsonl\"\nout_dir = \"out\"\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.patents.unwrap(), dir.path().join("p.jsonl"));
        assert_eq!(c.out_dir.unwrap(), dir.path().join("out"));
    }

    #[test]
    fn sub_seeds_differ_by_stage() {
        assert_ne!(derive_seed(1, "layout"), derive_seed(1, "emergence"));
        assert_eq!(derive_seed(1, "layout"), derive_seed(1, "layout"));
    }
}
