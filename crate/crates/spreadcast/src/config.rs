//! Declarative run configuration (TOML). Unknown keys are rejected and
//! relative paths are resolved against the configuration file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use spreadcast_core::deepar::NetworkConfig;
use spreadcast_core::dimreduce::Linkage;
use spreadcast_core::evaluation::BacktestConfig;
use spreadcast_core::features::SelectionConfig;
use spreadcast_core::gbm::GridSearchConfig;
use spreadcast_core::gkg::DEFAULT_TARGET_WB_THEMES;
use spreadcast_core::term_structure::DEFAULT_LAMBDA;

use crate::error::{Error, Result};
use crate::variants::{CovariateSet, Family, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub select: SelectionConfig,
    #[serde(default)]
    pub factors: FactorsConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub deepar: DeepArRunConfig,
    #[serde(default)]
    pub gbm: GbmRunConfig,
    #[serde(default)]
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub shap: ShapConfig,
}

fn default_models() -> Vec<ModelSpec> {
    CovariateSet::ALL.into_iter().map(ModelSpec::deepar).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub ingest: bool,
    pub select: bool,
    pub factors: bool,
    pub reduce: bool,
    pub forecast: bool,
    pub evaluate: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            ingest: true,
            select: true,
            factors: true,
            reduce: true,
            forecast: true,
            evaluate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Directory of GKG files (`*.csv` or `*.zip`).
    pub gkg_dir: PathBuf,
    /// Allowed outlet domains, one per line.
    pub outlets: PathBuf,
    /// Trading days, one per line; defaults to the yield-panel days.
    pub calendar: Option<PathBuf>,
    pub target_wb_themes: BTreeSet<String>,
    pub min_theme_keywords: usize,
    pub min_word_count: u64,
    pub market_open: NaiveTime,
    pub market_close: NaiveTime,
    pub utc_offset_hours: i32,
    /// When set, archives for `[from, to]` are downloaded into `gkg_dir`
    /// before ingestion.
    pub fetch: Option<FetchConfig>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            gkg_dir: PathBuf::from("gkg"),
            outlets: PathBuf::from("outlets.txt"),
            calendar: None,
            target_wb_themes: DEFAULT_TARGET_WB_THEMES.iter().map(|s| s.to_string()).collect(),
            min_theme_keywords: 4,
            min_word_count: 100,
            market_open: NaiveTime::from_hms_opt(9, 0, 0).expect("valid time"),
            market_close: NaiveTime::from_hms_opt(17, 30, 0).expect("valid time"),
            utc_offset_hours: 1,
            fetch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchConfig {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
}

fn default_base_url() -> String {
    crate::fetch::DEFAULT_BASE_URL.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorsConfig {
    /// Long-format yields CSV.
    pub yields: PathBuf,
    pub lambda: f64,
    pub target_maturity: f64,
}

impl Default for FactorsConfig {
    fn default() -> Self {
        Self {
            yields: PathBuf::from("yields.csv"),
            lambda: DEFAULT_LAMBDA,
            target_maturity: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceConfig {
    pub k_min: usize,
    /// Upper end of the silhouette search, capped at the feature count - 1.
    pub k_max: usize,
    pub linkage: Linkage,
    pub pca_components: usize,
    /// Cluster the term-structure factors together with the news features
    /// instead of always keeping them.
    pub joint_clustering: bool,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 54,
            linkage: Linkage::Ward,
            pca_components: 3,
            joint_clustering: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepArRunConfig {
    /// Network and training settings; `seed` is replaced by one derived from
    /// the run seed and the model name.
    pub network: NetworkConfig,
    /// Out-of-sample days between retrainings (1 refits daily).
    pub retrain_stride: usize,
    pub samples: usize,
    /// Covariates for day `t` are taken from day `t - covariate_lag` (0 or 1).
    pub covariate_lag: usize,
}

impl Default for DeepArRunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            retrain_stride: 20,
            samples: spreadcast_core::deepar::DEFAULT_SAMPLES,
            covariate_lag: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmRunConfig {
    pub grid: GridSearchConfig,
    pub retrain_stride: usize,
}

impl Default for GbmRunConfig {
    fn default() -> Self {
        Self {
            grid: GridSearchConfig::default(),
            retrain_stride: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapConfig {
    pub enabled: bool,
    /// DeepAR model to explain; must be in `models`.
    pub model: Option<ModelSpec>,
    pub n_coalitions: usize,
    /// Explain at most this many of the last fit's forecast days.
    pub max_days: usize,
    /// Background rows drawn evenly from the last training window.
    pub background_rows: usize,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            model: None,
            n_coalitions: 2048,
            max_days: 20,
            background_rows: 50,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file and resolve its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.ingest.gkg_dir);
        fix(&mut self.ingest.outlets);
        if let Some(c) = self.ingest.calendar.as_mut() {
            fix(c);
        }
        fix(&mut self.factors.yields);
        if let Some(o) = self.output_dir.as_mut() {
            fix(o);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema-level checks plus existence of the inputs of enabled stages.
    pub fn validate(&self) -> Result<()> {
        if self.run_id.trim().is_empty() {
            return Err(Error::Config("run_id must not be empty".into()));
        }
        if self.stages.ingest {
            let i = &self.ingest;
            if i.fetch.is_none() && !i.gkg_dir.is_dir() {
                return Err(Error::Config(format!("GKG directory {} does not exist", i.gkg_dir.display())));
            }
            if !i.outlets.is_file() {
                return Err(Error::Config(format!("outlet list {} does not exist", i.outlets.display())));
            }
            if let Some(c) = &i.calendar {
                if !c.is_file() {
                    return Err(Error::Config(format!("calendar {} does not exist", c.display())));
                }
            }
            if i.calendar.is_none() && !self.factors.yields.is_file() {
                return Err(Error::Config("ingest needs a calendar file or the yields file".into()));
            }
            if i.min_theme_keywords == 0 {
                return Err(Error::Config("min_theme_keywords must be at least 1".into()));
            }
            if i.market_open >= i.market_close {
                return Err(Error::Config("market_open must precede market_close".into()));
            }
        }
        if self.stages.select {
            self.select.validate()?;
        }
        if self.stages.factors {
            if !self.factors.yields.is_file() {
                return Err(Error::Config(format!(
                    "yields file {} does not exist",
                    self.factors.yields.display()
                )));
            }
            if !(self.factors.lambda > 0.0) {
                return Err(Error::Config("lambda must be positive".into()));
            }
        }
        if self.stages.reduce && (self.reduce.k_min < 2 || self.reduce.k_max < self.reduce.k_min) {
            return Err(Error::Config("reduce needs 2 <= k_min <= k_max".into()));
        }
        if self.stages.forecast {
            if self.models.is_empty() {
                return Err(Error::Config("models must not be empty".into()));
            }
            let unique: BTreeSet<_> = self.models.iter().collect();
            if unique.len() != self.models.len() {
                return Err(Error::Config("models are listed twice".into()));
            }
            self.deepar.network.validate()?;
            self.gbm.grid.validate()?;
            if self.deepar.retrain_stride == 0 || self.gbm.retrain_stride == 0 {
                return Err(Error::Config("retrain strides must be positive".into()));
            }
            if self.deepar.covariate_lag > 1 {
                return Err(Error::Config("covariate_lag must be 0 or 1".into()));
            }
            if self.deepar.samples == 0 {
                return Err(Error::Config("samples must be positive".into()));
            }
        }
        if self.stages.evaluate {
            self.backtest.validate()?;
            for [a, b] in &self.backtest.pairs {
                for m in [a, b] {
                    let spec: ModelSpec = m.parse()?;
                    if !self.models.contains(&spec) {
                        return Err(Error::Config(format!("test pair names {m}, which is not in models")));
                    }
                }
            }
        }
        if self.shap.enabled {
            let m = self
                .shap
                .model
                .ok_or_else(|| Error::Config("shap.model is required when shap is enabled".into()))?;
            if m.family != Family::DeepAR || !self.models.contains(&m) {
                return Err(Error::Config(format!("shap.model {m} must be a DeepAR model listed in models")));
            }
            if m.covariates == CovariateSet::None {
                return Err(Error::Config("shap.model needs covariates to attribute".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("run_id = \"a\"\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("run_id = \"a\"\n[deepar.network]\nhidden = 3\n").is_err());
        let c = RunConfig::from_toml("run_id = \"a\"\nmodels = [\"GB-Factors\", \"DeepAR-NoCov\"]\n").unwrap();
        assert_eq!(c.models.len(), 2);
        assert!(RunConfig::from_toml("run_id = \"a\"\nmodels = [\"DeepAR-Everything\"]\n").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::from_toml("run_id = \"a\"\n").unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(c.backtest.t0, 586);
        assert_eq!(c.models.len(), 8);
    }
}
