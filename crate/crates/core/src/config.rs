//! Pipeline configuration file: one TOML or JSON document with the sections
//! `[ingest]`, `[taxonomy]`, `[benchmark]`, `[grids.<family>]` and `[synthgen]`.
//! Relative paths inside `[benchmark]` are resolved against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::{NormalizeScope, TaxonomyConfig};
use crate::ingest::IngestConfig;
use crate::models::Family;
use crate::resample::ParamGrid;
use crate::synthgen::GenConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML in {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Raw incident CSVs.
    pub incidents: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub k: usize,
    pub train_fraction: f64,
    pub stratify_year: bool,
    pub families: Vec<Family>,
    pub normalize: NormalizeScope,
    /// With `train-fit`, clamp scaled test values into `[0, 1]`.
    pub clamp: bool,
    /// Score the tuned models on the tuning folds instead of fresh ones.
    pub reuse_tuning_folds: bool,
    pub threshold: f64,
    pub kde_bandwidth: f64,
    pub kde_points: usize,
    /// Also fit every family on label-shuffled data as a null baseline.
    pub shuffle_control: bool,
    /// Optional CSV `neighborhood,lat,lon` added to the tallies table.
    pub centroids: Option<PathBuf>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            incidents: Vec::new(),
            out_dir: PathBuf::from("artifacts"),
            seed: 0,
            k: 7,
            train_fraction: 0.7,
            stratify_year: true,
            families: Family::ALL.to_vec(),
            normalize: NormalizeScope::Full,
            clamp: true,
            reuse_tuning_folds: false,
            threshold: 0.5,
            kde_bandwidth: crate::metrics::DEFAULT_BANDWIDTH,
            kde_points: crate::metrics::DEFAULT_GRID_POINTS,
            shuffle_control: true,
            centroids: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub taxonomy: TaxonomyConfig,
    pub benchmark: BenchmarkSection,
    /// Keyed by family name or alias. Keys naming no implemented family are
    /// kept so grids for external learners can share the file.
    pub grids: BTreeMap<String, ParamGrid>,
    pub synthgen: GenConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The grid for `family`, looked up by canonical name, then by alias.
    pub fn grid_for(&self, family: Family) -> Option<&ParamGrid> {
        self.grids.iter().find(|(k, _)| k.parse::<Family>().ok() == Some(family)).map(|(_, g)| g)
    }

    /// Grid keys that do not name an implemented family.
    pub fn foreign_grids(&self) -> Vec<String> {
        self.grids.keys().filter(|k| k.parse::<Family>().is_err()).cloned().collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.benchmark;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(b.train_fraction > 0.0 && b.train_fraction < 1.0) {
            return bad(format!("benchmark.train_fraction must lie in (0, 1), got {}", b.train_fraction));
        }
        if b.k < 2 {
            return bad(format!("benchmark.k must be >= 2, got {}", b.k));
        }
        if !(0.0..=1.0).contains(&b.threshold) {
            return bad(format!("benchmark.threshold must lie in [0, 1], got {}", b.threshold));
        }
        if !(b.kde_bandwidth > 0.0) {
            return bad(format!("benchmark.kde_bandwidth must be > 0, got {}", b.kde_bandwidth));
        }
        if b.kde_points < 2 {
            return bad(format!("benchmark.kde_points must be >= 2, got {}", b.kde_points));
        }
        if b.families.is_empty() {
            return bad("benchmark.families is empty".into());
        }
        for (name, grid) in &self.grids {
            grid.validate().map_err(|e| ConfigError::Invalid(format!("grids.{name}: {e}")))?;
        }
        self.taxonomy.build().map_err(|e| ConfigError::Invalid(format!("taxonomy: {e}")))?;
        self.ingest.rules().map_err(|e| ConfigError::Invalid(format!("ingest: {e}")))?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let b = &mut self.benchmark;
        b.incidents.iter_mut().for_each(fix);
        fix(&mut b.out_dir);
        if let Some(c) = b.centroids.as_mut() {
            fix(c);
        }
    }
}

/// Load by extension (`.json` is JSON, anything else TOML), resolve relative
/// benchmark paths and validate.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    let mut config = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        PipelineConfig::from_json(&text).map_err(|source| ConfigError::Json { path: path.into(), source })?
    } else {
        PipelineConfig::from_toml(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })?
    };
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    config.validate()?;
    Ok(config)
}

/// Load a standalone grid file (TOML or JSON), a mapping of parameter names
/// to value lists.
pub fn load_grid(path: &Path) -> Result<ParamGrid, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    let grid: ParamGrid = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.into(), source })?
    } else {
        toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })?
    };
    grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(grid)
}
