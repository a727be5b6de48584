//! Run configuration: a single TOML file with typed keys, overridable from
//! the command line. Defaults match the reported experimental settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distance::Metric;
use crate::entropy::Estimator;
use crate::error::{Error, Result};

fn default_r() -> usize {
    3
}
fn default_metric() -> Metric {
    Metric::JensenShannon
}
fn default_estimator() -> Estimator {
    Estimator::Nsb
}
fn default_min_tokens() -> usize {
    10_000
}
fn default_seed() -> u64 {
    0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory scanned recursively for `.conllu` files.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Language metadata CSV; the bundled registry is used when absent.
    #[serde(default)]
    pub registry_path: Option<PathBuf>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Block size for distance matrices.
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    /// Languages with fewer tokens than this are dropped at ingest.
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    /// Drop one final PUNCT tag per sentence before counting.
    #[serde(default)]
    pub strip_final_punct: bool,
    /// Worker threads; 0 means all available cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub memtest: MemtestConfig,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub geo: GeoConfig,
    #[serde(default)]
    pub samples: SamplesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemtestConfig {
    /// Memory order under test.
    pub m: usize,
    /// Number of surrogate corpora.
    pub k: usize,
}

impl Default for MemtestConfig {
    fn default() -> Self {
        MemtestConfig { m: 2, k: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    pub orders: Vec<usize>,
    /// Held-out sentences per repetition.
    pub k: usize,
    pub repetitions: usize,
    /// Inclusive sentence-length eligibility range.
    pub min_length: usize,
    pub max_length: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            orders: vec![0, 1, 2, 3],
            k: 1000,
            repetitions: 10,
            min_length: 5,
            max_length: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k_min: 2,
            k_max: 45,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeoConfig {
    pub permutations: usize,
    /// Labels excluded from the correlation (geographic outliers).
    pub exclude: Vec<String>,
    /// Run the distance correlation on log10 km instead of raw km.
    pub log_geo: bool,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            permutations: 1000,
            exclude: vec!["af".to_string()],
            log_geo: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplesConfig {
    /// Tokens per whole-sentence sample.
    pub target_tokens: usize,
    /// Cap on samples per language.
    pub max_samples: usize,
}

impl Default for SamplesConfig {
    fn default() -> Self {
        SamplesConfig {
            target_tokens: 10_000,
            max_samples: 20,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if self.cluster.k_min < 2 || self.cluster.k_min > self.cluster.k_max {
            return Err(Error::Config(
                "cluster k range must satisfy 2 <= k_min <= k_max".into(),
            ));
        }
        if self.identify.min_length > self.identify.max_length {
            return Err(Error::Config("identify length range is inverted".into()));
        }
        if self.identify.orders.is_empty() {
            return Err(Error::Config("identify.orders must not be empty".into()));
        }
        if self.geo.permutations < 100 {
            return Err(Error::Config(
                "geo.permutations must be at least 100".into(),
            ));
        }
        if self.samples.target_tokens == 0 || self.samples.max_samples == 0 {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        Ok(())
    }
}
