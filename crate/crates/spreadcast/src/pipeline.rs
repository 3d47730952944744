//! The staged pipeline. Every stage reads its inputs from files written by
//! the stages before it in the same run directory, so any stage can be
//! re-run on its own.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spreadcast_core::deepar::{fit_and_forecast, rolling_plan, DeepArModel, RollingFit};
use spreadcast_core::dimreduce::{pca_fit, pca_transform, select_k, standardize_columns, ClusterModel, PcaModel};
use spreadcast_core::evaluation::{
    kernel_shap, rolling_backtest, shap_summary, BacktestData, BacktestReport, ForecastProvider, QuantileForecasts,
    ShapExplanation,
};
use spreadcast_core::features::{run_selection_pipeline, SelectionReport};
use spreadcast_core::gbm::{cv_grid_search, gbm_fit_with_loss, GbmLoss, GbmModel, GridSearchResult};
use spreadcast_core::gkg::{ArticleFilterConfig, DailyAggregator, TradingCalendar};
use spreadcast_core::rng::{derive_seed, derive_seed_labeled};
use spreadcast_core::stats::sort_floats;
use spreadcast_core::term_structure::{compute_spreads, fit_ns_factors, SpreadSeries};

use crate::config::{DeepArRunConfig, GbmRunConfig, IngestConfig, ReduceConfig, RunConfig, ShapConfig};
use crate::error::{Error, Result};
use crate::fetch::{fetch_gkg_files, FetchOptions};
use crate::formats::{self, DatedTable, FeatureTable};
use crate::gkg_io::{list_gkg_files, read_gkg_file};
use crate::variants::{CovariateSet, Family, ModelSpec, NewsView};

pub const STAGES: [&str; 6] = ["ingest", "select", "factors", "reduce", "forecast", "evaluate"];

const FACTOR_NAMES: [&str; 3] = ["beta0", "beta1", "beta2"];

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn daily_features(&self) -> PathBuf {
        self.root.join("ingest/daily_features.csv")
    }
    pub fn ingest_summary(&self) -> PathBuf {
        self.root.join("ingest/summary.json")
    }
    pub fn selected_features(&self) -> PathBuf {
        self.root.join("select/features.csv")
    }
    pub fn selection_report(&self) -> PathBuf {
        self.root.join("select/report.json")
    }
    pub fn ns_factors(&self) -> PathBuf {
        self.root.join("factors/ns_factors.csv")
    }
    pub fn target(&self) -> PathBuf {
        self.root.join("factors/target.csv")
    }
    pub fn target_transform(&self) -> PathBuf {
        self.root.join("factors/target_transform.json")
    }
    pub fn hierarc(&self) -> PathBuf {
        self.root.join("reduce/hierarc.csv")
    }
    pub fn cluster_model(&self) -> PathBuf {
        self.root.join("reduce/cluster_model.json")
    }
    pub fn pca(&self) -> PathBuf {
        self.root.join("reduce/pca.csv")
    }
    pub fn pca_model(&self) -> PathBuf {
        self.root.join("reduce/pca_model.json")
    }
    pub fn model_dir(&self, spec: &ModelSpec) -> PathBuf {
        self.root.join("models").join(spec.to_string())
    }
    pub fn forecasts(&self, spec: &ModelSpec) -> PathBuf {
        self.model_dir(spec).join("forecasts.csv")
    }
    pub fn evaluate_dir(&self) -> PathBuf {
        self.root.join("evaluate")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: Vec<FileHash>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub stages: Vec<StageRecord>,
    pub completed: bool,
}

fn hash_files(root: &Path, paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.strip_prefix(root).unwrap_or(p).display().to_string(),
                sha256: formats::sha256_file(p)?,
            })
        })
        .collect()
}

/// Seed for a component: its own configured seed mixed with the run seed.
pub fn component_seed(run_seed: u64, label: &str, own: u64) -> u64 {
    derive_seed(derive_seed_labeled(run_seed, label), own)
}

fn need(path: &Path, stage: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} is missing; enable the {stage} stage or run it first in this run directory",
            path.display()
        )))
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: usize,
    pub records: usize,
    pub parse_errors: usize,
    pub records_with_warnings: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub out_of_calendar: u64,
    pub trading_days: usize,
    pub days_without_articles: usize,
}

/// Trading calendar from the configured file, or the yield-panel days.
pub fn load_calendar(cfg: &IngestConfig, yields: &Path) -> Result<TradingCalendar> {
    let days = match &cfg.calendar {
        Some(p) => formats::read_calendar(p)?,
        None => formats::read_yields(yields)?.days,
    };
    Ok(TradingCalendar::with_session(
        days,
        cfg.market_open,
        cfg.market_close,
        cfg.utc_offset_hours,
    )?)
}

/// Parse, filter and aggregate every GKG file in `cfg.gkg_dir`. Files are
/// processed in parallel and merged in file-name order.
pub fn ingest(cfg: &IngestConfig, calendar: &TradingCalendar) -> Result<(FeatureTable, IngestSummary)> {
    let outlets = formats::read_outlets(&cfg.outlets)?;
    let mut filter = ArticleFilterConfig::new(outlets)?;
    filter.target_wb_themes = cfg.target_wb_themes.clone();
    filter.min_theme_keywords = cfg.min_theme_keywords;
    filter.min_word_count = cfg.min_word_count;
    filter.validate()?;

    let files = list_gkg_files(&cfg.gkg_dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no GKG files in {}", cfg.gkg_dir.display())));
    }
    let parts: Vec<(DailyAggregator, IngestSummary)> = files
        .par_iter()
        .map(|path| {
            let file = read_gkg_file(path)?;
            let mut agg = DailyAggregator::new();
            let mut s = IngestSummary {
                files: 1,
                records: file.records.len(),
                parse_errors: file.errors.len(),
                ..IngestSummary::default()
            };
            for (line, e) in &file.errors {
                log::warn!("{}:{line}: {e}", path.display());
            }
            for parsed in &file.records {
                if !parsed.warnings.is_empty() {
                    s.records_with_warnings += 1;
                }
                if filter.accepts(&parsed.record) {
                    s.accepted += 1;
                    agg.add(&parsed.record, calendar);
                } else {
                    s.rejected += 1;
                }
            }
            Ok((agg, s))
        })
        .collect::<Result<_>>()?;

    let mut total = DailyAggregator::new();
    let mut summary = IngestSummary::default();
    for (agg, s) in parts {
        total = total.merge(agg);
        summary.files += s.files;
        summary.records += s.records;
        summary.parse_errors += s.parse_errors;
        summary.records_with_warnings += s.records_with_warnings;
        summary.accepted += s.accepted;
        summary.rejected += s.rejected;
    }
    summary.out_of_calendar = total.out_of_calendar();
    let daily = total.finish(calendar);
    summary.trading_days = daily.len();
    summary.days_without_articles = daily.iter().filter(|d| d.article_count == 0).count();
    if summary.days_without_articles > 0 {
        log::warn!("{} trading days have no accepted articles", summary.days_without_articles);
    }
    Ok((FeatureTable::from_daily(&daily)?, summary))
}

fn stage_ingest(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    if let Some(f) = &cfg.ingest.fetch {
        let report = fetch_gkg_files(&f.base_url, f.from, f.to, &cfg.ingest.gkg_dir, &FetchOptions::default())?;
        log::info!(
            "fetched {} archives ({} cached, {} not published)",
            report.downloaded,
            report.cached,
            report.not_published.len()
        );
        report.into_result()?;
    }
    let calendar = load_calendar(&cfg.ingest, &cfg.factors.yields)?;
    let (table, summary) = ingest(&cfg.ingest, &calendar)?;
    log::info!(
        "ingested {} records from {} files; {} accepted, {} features",
        summary.records,
        summary.files,
        summary.accepted,
        table.matrix.n_features()
    );
    formats::write_feature_table(&layout.daily_features(), &table)?;
    formats::write_json(&layout.ingest_summary(), &summary)?;
    Ok(vec![
        layout.daily_features(),
        formats::sidecar_path(&layout.daily_features()),
        layout.ingest_summary(),
    ])
}

// ---------------------------------------------------------------- select

pub fn select(table: &FeatureTable, cfg: &spreadcast_core::features::SelectionConfig) -> Result<(FeatureTable, SelectionReport)> {
    let (matrix, report) = run_selection_pipeline(&table.matrix, &table.article_counts, cfg)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok((
        FeatureTable {
            matrix,
            article_counts: table.article_counts.clone(),
        },
        report,
    ))
}

fn stage_select(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    need(&layout.daily_features(), "ingest")?;
    let table = formats::read_feature_table(&layout.daily_features())?;
    let sel_cfg = spreadcast_core::features::SelectionConfig {
        rng_seed: component_seed(cfg.seed, "select", cfg.select.rng_seed),
        ..cfg.select.clone()
    };
    let (selected, report) = select(&table, &sel_cfg)?;
    log::info!(
        "kept {} of {} features",
        selected.matrix.n_features(),
        table.matrix.n_features()
    );
    formats::write_feature_table(&layout.selected_features(), &selected)?;
    formats::write_json(&layout.selection_report(), &report)?;
    Ok(vec![
        layout.selected_features(),
        formats::sidecar_path(&layout.selected_features()),
        layout.selection_report(),
    ])
}

// ---------------------------------------------------------------- factors

/// Nelson-Siegel factors of the spread curve (all panel days) and the
/// forecasting target (from the second day on).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorOutputs {
    pub factors: DatedTable,
    pub target: DatedTable,
    pub transform: TargetTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub maturity_months: f64,
    pub lambda: f64,
    pub median: f64,
    pub iqr: f64,
}

pub fn factors(panel: &spreadcast_core::term_structure::YieldCurvePanel, lambda: f64, maturity: f64) -> Result<FactorOutputs> {
    let spreads = compute_spreads(panel)?;
    let ns = fit_ns_factors(&panel.days, &spreads, &panel.maturities, lambda)?;
    let series = SpreadSeries::from_panel(panel, maturity)?;
    let target = series.to_target()?;
    let factors = DatedTable::from_columns(
        ns.days.clone(),
        vec![
            (FACTOR_NAMES[0].into(), ns.beta0),
            (FACTOR_NAMES[1].into(), ns.beta1),
            (FACTOR_NAMES[2].into(), ns.beta2),
        ],
    )?;
    let target_table = DatedTable::from_columns(
        target.days.clone(),
        vec![
            ("spread".into(), series.values[1..].to_vec()),
            ("log_change".into(), target.log_changes),
            ("target".into(), target.values),
        ],
    )?;
    Ok(FactorOutputs {
        factors,
        target: target_table,
        transform: TargetTransform {
            maturity_months: maturity,
            lambda,
            median: target.transform_state.median,
            iqr: target.transform_state.iqr,
        },
    })
}

fn stage_factors(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    let panel = formats::read_yields(&cfg.factors.yields)?;
    let out = factors(&panel, cfg.factors.lambda, cfg.factors.target_maturity)?;
    formats::write_dated_table(&layout.ns_factors(), &out.factors)?;
    formats::write_dated_table(&layout.target(), &out.target)?;
    formats::write_json(&layout.target_transform(), &out.transform)?;
    Ok(vec![layout.ns_factors(), layout.target(), layout.target_transform()])
}

// ---------------------------------------------------------------- reduce

/// Selected news features with missing cells replaced by the column mean.
pub fn imputed_table(t: &FeatureTable) -> Result<DatedTable> {
    let m = &t.matrix;
    DatedTable::from_columns(
        m.days().to_vec(),
        m.feature_keys().iter().cloned().zip(m.mean_imputed_columns()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOutputs {
    pub hierarc: DatedTable,
    /// `None` when there were too few features to cluster.
    pub cluster: Option<ClusterModel>,
    pub pca: DatedTable,
    pub pca_model: PcaModel,
}

/// Hierarchical clustering with silhouette-chosen `k` (one medoid feature
/// kept per cluster) and PCA scores of the standardised news features.
/// With `joint_clustering`, the factors are clustered alongside the news.
pub fn reduce(news: &DatedTable, factors: Option<&DatedTable>, cfg: &ReduceConfig) -> Result<ReduceOutputs> {
    let p = news.columns.len();
    if p == 0 {
        return Err(Error::Config("no news features survived selection".into()));
    }
    let mut keys = news.columns.clone();
    let mut columns: Vec<Vec<f64>> = (0..p).map(|j| news.rows.iter().map(|r| r[j]).collect()).collect();
    let mut source = news.clone();
    if cfg.joint_clustering {
        let f = factors.ok_or_else(|| Error::Config("joint clustering needs the factors".into()))?;
        let aligned = align_rows(f, &news.days)?;
        for (j, name) in f.columns.iter().enumerate() {
            keys.push(name.clone());
            columns.push(aligned.iter().map(|r| r[j]).collect());
        }
        source = DatedTable::from_columns(news.days.clone(), keys.iter().cloned().zip(columns.clone()).collect())?;
    }
    let points = standardize_columns(&columns);
    let hi = cfg.k_max.min(keys.len().saturating_sub(1));
    let (cluster, retained) = if hi >= cfg.k_min {
        let model = select_k(&keys, &points, cfg.k_min..=hi, cfg.linkage)?;
        log::info!("clustering chose k = {} (silhouette {:.3})", model.k, model.silhouette_avg);
        let retained = model.retained.clone();
        (Some(model), retained)
    } else {
        log::warn!("{} features are too few to cluster; all are kept", keys.len());
        (None, keys.clone())
    };
    let hierarc = DatedTable::from_columns(
        source.days.clone(),
        retained
            .iter()
            .map(|k| (k.clone(), source.column(k).expect("retained key is a column")))
            .collect(),
    )?;

    let rows: Vec<Vec<f64>> = news.rows.clone();
    let pca_model = pca_fit(&rows, cfg.pca_components.min(p), true)?;
    let scores = pca_transform(&pca_model, &rows)?;
    let names: Vec<String> = (1..=pca_model.n_components).map(|i| format!("pca_{i}")).collect();
    let pca = DatedTable::from_columns(
        news.days.clone(),
        names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.clone(), scores.iter().map(|r| r[j]).collect()))
            .collect(),
    )?;
    Ok(ReduceOutputs {
        hierarc,
        cluster,
        pca,
        pca_model,
    })
}

fn stage_reduce(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    need(&layout.selected_features(), "select")?;
    let news = imputed_table(&formats::read_feature_table(&layout.selected_features())?)?;
    let factors = if cfg.reduce.joint_clustering {
        need(&layout.ns_factors(), "factors")?;
        Some(formats::read_dated_table(&layout.ns_factors())?)
    } else {
        None
    };
    let out = reduce(&news, factors.as_ref(), &cfg.reduce)?;
    formats::write_dated_table(&layout.hierarc(), &out.hierarc)?;
    formats::write_json(&layout.cluster_model(), &out.cluster)?;
    formats::write_dated_table(&layout.pca(), &out.pca)?;
    formats::write_json(&layout.pca_model(), &out.pca_model)?;
    Ok(vec![layout.hierarc(), layout.cluster_model(), layout.pca(), layout.pca_model()])
}

// ---------------------------------------------------------------- forecast

/// Covariate tables by trading day, loaded as needed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateSources {
    pub factors: Option<DatedTable>,
    pub selected: Option<DatedTable>,
    pub hierarc: Option<DatedTable>,
    pub pca: Option<DatedTable>,
}

impl CovariateSources {
    /// Load every table the given covariate sets use.
    pub fn load(layout: &RunLayout, sets: &[CovariateSet]) -> Result<Self> {
        let mut s = Self::default();
        if sets.iter().any(|c| c.uses_factors()) {
            need(&layout.ns_factors(), "factors")?;
            s.factors = Some(formats::read_dated_table(&layout.ns_factors())?);
        }
        if sets.iter().any(|c| c.news() == Some(NewsView::Selected)) {
            need(&layout.selected_features(), "select")?;
            s.selected = Some(imputed_table(&formats::read_feature_table(&layout.selected_features())?)?);
        }
        if sets.iter().any(|c| c.news() == Some(NewsView::Hierarc)) {
            need(&layout.hierarc(), "reduce")?;
            s.hierarc = Some(formats::read_dated_table(&layout.hierarc())?);
        }
        if sets.iter().any(|c| c.news() == Some(NewsView::Pca)) {
            need(&layout.pca(), "reduce")?;
            s.pca = Some(formats::read_dated_table(&layout.pca())?);
        }
        Ok(s)
    }
}

fn align_rows(table: &DatedTable, days: &[NaiveDate]) -> Result<Vec<Vec<f64>>> {
    let index: BTreeMap<NaiveDate, usize> = table.days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    days.iter()
        .map(|d| {
            index
                .get(d)
                .map(|&i| table.rows[i].clone())
                .ok_or_else(|| Error::Core(spreadcast_core::Error::Alignment(format!("no covariate row for {d}"))))
        })
        .collect()
}

/// Covariate names and rows for `set`, one row per entry of `days`.
pub fn assemble_covariates(
    set: CovariateSet,
    sources: &CovariateSources,
    days: &[NaiveDate],
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let missing = |what: &str| Error::Config(format!("{what} covariates were not loaded"));
    let mut names: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); days.len()];
    let mut append = |table: &DatedTable, skip_factors: bool| -> Result<()> {
        let aligned = align_rows(table, days)?;
        for (j, name) in table.columns.iter().enumerate() {
            if skip_factors && FACTOR_NAMES.contains(&name.as_str()) {
                continue;
            }
            names.push(name.clone());
            for (row, src) in rows.iter_mut().zip(&aligned) {
                row.push(src[j]);
            }
        }
        Ok(())
    };
    if set.uses_factors() {
        append(sources.factors.as_ref().ok_or_else(|| missing("factor"))?, false)?;
    }
    match set.news() {
        None => {}
        Some(NewsView::Selected) => append(sources.selected.as_ref().ok_or_else(|| missing("news"))?, false)?,
        Some(NewsView::Hierarc) => append(sources.hierarc.as_ref().ok_or_else(|| missing("clustered"))?, true)?,
        Some(NewsView::Pca) => append(sources.pca.as_ref().ok_or_else(|| missing("PCA"))?, false)?,
    }
    if set == CovariateSet::None {
        rows.clear();
    }
    Ok((names, rows))
}

/// Target values and, per target day, the day whose covariates it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastData {
    pub days: Vec<NaiveDate>,
    pub target: Vec<f64>,
    pub covariate_days: Vec<NaiveDate>,
}

impl ForecastData {
    /// `panel_days` are the days of the factor table (the target starts on
    /// the second of them); `lag` shifts covariates back by trading days.
    pub fn new(target: &DatedTable, panel_days: &[NaiveDate], lag: usize) -> Result<Self> {
        let values = target
            .column("target")
            .ok_or_else(|| Error::Config("target table has no `target` column".into()))?;
        if panel_days.len() != target.days.len() + 1 || panel_days[1..] != target.days[..] {
            return Err(Error::Config("target days do not follow the factor days".into()));
        }
        if lag > 1 {
            return Err(Error::Config("covariate_lag must be 0 or 1".into()));
        }
        let covariate_days = (0..target.days.len()).map(|i| panel_days[i + 1 - lag]).collect();
        Ok(Self {
            days: target.days.clone(),
            target: values,
            covariate_days,
        })
    }

    pub fn load(layout: &RunLayout, lag: usize) -> Result<Self> {
        need(&layout.target(), "factors")?;
        need(&layout.ns_factors(), "factors")?;
        let target = formats::read_dated_table(&layout.target())?;
        let factors = formats::read_dated_table(&layout.ns_factors())?;
        Self::new(&target, &factors.days, lag)
    }
}

/// One model's rolling forecasts plus what is needed to inspect it later.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub spec: ModelSpec,
    pub covariate_names: Vec<String>,
    pub forecasts: QuantileForecasts,
    pub fits: Vec<RollingFit>,
    pub artifacts: ModelArtifacts,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelArtifacts {
    /// The network from the last rolling fit.
    DeepAr(Box<DeepArModel>),
    /// The grid search and the per-quantile models of the last fit.
    Gb { grid: GridSearchResult, last: Vec<GbmModel> },
}

/// Seed for one model: the network seed mixed with the run seed and the
/// model's name.
pub fn model_seed(run_seed: u64, spec: &ModelSpec, own: u64) -> u64 {
    component_seed(run_seed, &spec.to_string(), own)
}

/// Rolling DeepAR forecasts for several models at once. Every (model, fit)
/// pair is an independent job; results do not depend on scheduling.
pub fn forecast_deepar(
    specs: &[(ModelSpec, Vec<String>, Vec<Vec<f64>>)],
    data: &ForecastData,
    cfg: &DeepArRunConfig,
    t0: usize,
    quantiles: &[f64],
    run_seed: u64,
) -> Result<Vec<ModelRun>> {
    let plan = rolling_plan(data.target.len(), t0, cfg.retrain_stride)?;
    let jobs: Vec<(usize, RollingFit)> = (0..specs.len())
        .flat_map(|m| plan.iter().map(move |f| (m, *f)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(m, fit)| {
            let (spec, _, covs) = &specs[m];
            let seed = model_seed(run_seed, spec, cfg.network.seed);
            log::debug!("training {spec} for days {}..{}", fit.forecast_start, fit.forecast_end);
            fit_and_forecast(&fit, &data.target, covs, &cfg.network, cfg.samples, seed)
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut per_model: Vec<(Vec<Vec<f64>>, Option<DeepArModel>)> = vec![(Vec::new(), None); specs.len()];
    for (&(m, _), (model, dists)) in jobs.iter().zip(results) {
        let slot = &mut per_model[m];
        slot.0.extend(dists.iter().map(|d| d.quantiles(quantiles)));
        slot.1 = Some(model);
    }
    Ok(specs
        .iter()
        .zip(per_model)
        .map(|((spec, names, _), (values, model))| ModelRun {
            spec: *spec,
            covariate_names: names.clone(),
            forecasts: QuantileForecasts {
                name: spec.to_string(),
                quantiles: quantiles.to_vec(),
                days: data.days[t0..].to_vec(),
                values,
            },
            fits: plan.clone(),
            artifacts: ModelArtifacts::DeepAr(Box::new(model.expect("plan is non-empty"))),
        })
        .collect())
}

/// Rolling gradient-boosting quantile forecasts for one model. Depth and
/// learning rate come from a squared-loss grid search on the first training
/// window; each quantile then gets its own pinball-loss ensemble per fit, and
/// the quantiles of each day are sorted so they never cross.
pub fn forecast_gbm(
    spec: ModelSpec,
    names: Vec<String>,
    covs: &[Vec<f64>],
    data: &ForecastData,
    cfg: &GbmRunConfig,
    t0: usize,
    quantiles: &[f64],
) -> Result<ModelRun> {
    let n = data.target.len();
    let x: Vec<Vec<f64>> = if covs.is_empty() { vec![Vec::new(); n] } else { covs.to_vec() };
    let plan = rolling_plan(n, t0, cfg.retrain_stride)?;
    let grid = cv_grid_search(&x[..t0], &data.target[..t0], &cfg.grid)?;
    log::info!("{spec}: grid search chose depth {} and learning rate {}", grid.best_depth, grid.best_lr);
    let mut values = Vec::with_capacity(n - t0);
    let mut last = Vec::new();
    for fit in &plan {
        let window = fit.train_start..fit.forecast_start;
        let models = quantiles
            .iter()
            .map(|&q| {
                gbm_fit_with_loss(
                    &x[window.clone()],
                    &data.target[window.clone()],
                    grid.best_depth,
                    grid.best_lr,
                    cfg.grid.n_trees,
                    GbmLoss::Quantile(q),
                )
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        for row in &x[fit.forecast_start..fit.forecast_end] {
            let mut qs: Vec<f64> = models.iter().map(|m| m.predict_row(row)).collect();
            sort_floats(&mut qs);
            values.push(qs);
        }
        last = models;
    }
    Ok(ModelRun {
        spec,
        covariate_names: names,
        forecasts: QuantileForecasts {
            name: spec.to_string(),
            quantiles: quantiles.to_vec(),
            days: data.days[t0..].to_vec(),
            values,
        },
        fits: plan,
        artifacts: ModelArtifacts::Gb { grid, last },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelInfo {
    model: String,
    covariates: Vec<String>,
    fits: Vec<RollingFit>,
}

/// Write a model run's forecasts and artifacts under `models/<name>/`.
pub fn write_model_run(layout: &RunLayout, run: &ModelRun, data: &ForecastData) -> Result<Vec<PathBuf>> {
    let dir = layout.model_dir(&run.spec);
    formats::ensure_dir(&dir)?;
    let t0 = data.days.len() - run.forecasts.days.len();
    let mut out = vec![layout.forecasts(&run.spec), dir.join("model.json")];
    formats::write_forecasts(&out[0], &run.forecasts, &data.target[t0..])?;
    formats::write_json(
        &out[1],
        &ModelInfo {
            model: run.spec.to_string(),
            covariates: run.covariate_names.clone(),
            fits: run.fits.clone(),
        },
    )?;
    match &run.artifacts {
        ModelArtifacts::DeepAr(model) => {
            let (cp, trace) = (dir.join("checkpoint.json"), dir.join("loss_trace.csv"));
            formats::write_checkpoint(&cp, model, &run.covariate_names)?;
            formats::write_loss_trace(&trace, model)?;
            out.extend([cp, trace]);
        }
        ModelArtifacts::Gb { grid, last } => {
            let (cv, trees) = (dir.join("cv_grid.json"), dir.join("gbm_models.json"));
            formats::write_json(&cv, grid)?;
            let by_q: BTreeMap<String, &GbmModel> = run
                .forecasts
                .quantiles
                .iter()
                .zip(last)
                .map(|(q, m)| (format!("q{q}"), m))
                .collect();
            formats::write_json(&trees, &by_q)?;
            out.extend([cv, trees]);
        }
    }
    Ok(out)
}

/// Which models a forecast call covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyFilter {
    All,
    Only(Family),
}

/// Train and forecast every configured model of the selected families.
pub fn run_forecasts(cfg: &RunConfig, layout: &RunLayout, which: FamilyFilter) -> Result<Vec<PathBuf>> {
    let specs: Vec<ModelSpec> = cfg
        .models
        .iter()
        .copied()
        .filter(|m| which == FamilyFilter::All || which == FamilyFilter::Only(m.family))
        .collect();
    if specs.is_empty() {
        return Ok(Vec::new());
    }
    let data = ForecastData::load(layout, cfg.deepar.covariate_lag)?;
    let sets: Vec<CovariateSet> = specs.iter().map(|s| s.covariates).collect();
    let sources = CovariateSources::load(layout, &sets)?;
    let t0 = cfg.backtest.t0;
    cfg.backtest.validate_for(data.target.len())?;
    let mut deepar_specs = Vec::new();
    let mut gb_specs = Vec::new();
    for spec in specs {
        let (names, rows) = assemble_covariates(spec.covariates, &sources, &data.covariate_days)?;
        match spec.family {
            Family::DeepAR => deepar_specs.push((spec, names, rows)),
            Family::GB => gb_specs.push((spec, names, rows)),
        }
    }
    let mut runs = Vec::new();
    if !deepar_specs.is_empty() {
        log::info!("training {} DeepAR models", deepar_specs.len());
        runs.extend(forecast_deepar(
            &deepar_specs,
            &data,
            &cfg.deepar,
            t0,
            &cfg.backtest.quantiles,
            cfg.seed,
        )?);
    }
    if !gb_specs.is_empty() {
        log::info!("fitting {} gradient-boosting models", gb_specs.len());
        let gb_runs: Vec<ModelRun> = gb_specs
            .into_par_iter()
            .map(|(spec, names, rows)| forecast_gbm(spec, names, &rows, &data, &cfg.gbm, t0, &cfg.backtest.quantiles))
            .collect::<Result<_>>()?;
        runs.extend(gb_runs);
    }
    let mut written = Vec::new();
    for run in &runs {
        written.extend(write_model_run(layout, run, &data)?);
    }
    Ok(written)
}

/// Train each configured DeepAR model once on the first `t0` days and save
/// its checkpoint and loss trace.
pub fn run_training(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    let data = ForecastData::load(layout, cfg.deepar.covariate_lag)?;
    let specs: Vec<ModelSpec> = cfg.models.iter().copied().filter(|m| m.family == Family::DeepAR).collect();
    let sets: Vec<CovariateSet> = specs.iter().map(|s| s.covariates).collect();
    let sources = CovariateSources::load(layout, &sets)?;
    let t0 = cfg.backtest.t0;
    cfg.backtest.validate_for(data.target.len())?;
    let fit = RollingFit {
        train_start: 0,
        forecast_start: t0,
        forecast_end: t0,
    };
    let models: Vec<(ModelSpec, Vec<String>, DeepArModel)> = specs
        .par_iter()
        .map(|spec| {
            let (names, rows) = assemble_covariates(spec.covariates, &sources, &data.covariate_days)?;
            let seed = model_seed(cfg.seed, spec, cfg.deepar.network.seed);
            let (model, _) = fit_and_forecast(&fit, &data.target, &rows, &cfg.deepar.network, 1, seed)?;
            Ok((*spec, names, model))
        })
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for (spec, names, model) in models {
        let dir = layout.model_dir(&spec);
        let (cp, trace) = (dir.join("checkpoint.json"), dir.join("loss_trace.csv"));
        formats::write_checkpoint(&cp, &model, &names)?;
        formats::write_loss_trace(&trace, &model)?;
        written.extend([cp, trace]);
    }
    Ok(written)
}

// ---------------------------------------------------------------- evaluate

/// Score saved forecasts of every configured model.
pub fn evaluate(cfg: &RunConfig, layout: &RunLayout) -> Result<BacktestReport> {
    need(&layout.target(), "factors")?;
    let target = formats::read_dated_table(&layout.target())?;
    let actual = target
        .column("target")
        .ok_or_else(|| Error::Config("target table has no `target` column".into()))?;
    let mut forecasts = Vec::new();
    for spec in &cfg.models {
        let path = layout.forecasts(spec);
        need(&path, "forecast")?;
        forecasts.push(formats::read_forecasts(&path, &spec.to_string())?.0);
    }
    let providers: Vec<&dyn ForecastProvider> = forecasts.iter().map(|f| f as &dyn ForecastProvider).collect();
    let data = BacktestData {
        days: target.days,
        actual,
    };
    Ok(rolling_backtest(&providers, &data, &cfg.backtest)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub model: String,
    pub features: Vec<String>,
    pub days: Vec<NaiveDate>,
    pub explanations: Vec<ShapExplanation>,
    /// Mean absolute attribution per feature, largest first.
    pub summary: Vec<(String, f64)>,
    /// Largest `|sum(phi) - (prediction - base_value)|` over the explained days.
    pub max_efficiency_gap: f64,
}

/// Kernel SHAP attributions of the forecast mean of `model` to its
/// same-day covariates, over the first days forecast by the last fit.
pub fn explain_deepar(
    model: &DeepArModel,
    names: &[String],
    data: &ForecastData,
    covs: &[Vec<f64>],
    fit: &RollingFit,
    cfg: &ShapConfig,
    seed: u64,
) -> Result<ShapReport> {
    let window = &covs[fit.train_start..fit.forecast_start];
    let rows = cfg.background_rows.clamp(1, window.len());
    let background: Vec<Vec<f64>> = (0..rows).map(|i| window[i * window.len() / rows].clone()).collect();
    let end = fit.forecast_end.min(fit.forecast_start + cfg.max_days);
    let mut explanations = Vec::new();
    for t in fit.forecast_start..end {
        let f = |z: &[f64]| -> f64 {
            model
                .predict_next(&data.target[..t], &covs[..t], z)
                .map(|d| d.mu)
                .unwrap_or(f64::NAN)
        };
        let e = kernel_shap(&f, &background, &covs[t], cfg.n_coalitions, derive_seed(seed, t as u64))?;
        if !e.phi.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("SHAP attributions for day {t} are not finite")));
        }
        explanations.push(e);
    }
    let max_efficiency_gap = explanations
        .iter()
        .map(|e| (e.phi.iter().sum::<f64>() - (e.prediction - e.base_value)).abs())
        .fold(0.0, f64::max);
    Ok(ShapReport {
        model: String::new(),
        features: names.to_vec(),
        days: data.days[fit.forecast_start..end].to_vec(),
        summary: shap_summary(names, &explanations)?,
        explanations,
        max_efficiency_gap,
    })
}

fn run_shap(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    let spec = cfg.shap.model.ok_or_else(|| Error::Config("shap.model is not set".into()))?;
    let dir = layout.model_dir(&spec);
    let cp = dir.join("checkpoint.json");
    need(&cp, "forecast")?;
    let (model, names) = formats::read_checkpoint(&cp)?;
    let info: ModelInfo = formats::read_json(&dir.join("model.json"))?;
    let fit = *info
        .fits
        .last()
        .ok_or_else(|| Error::format(dir.join("model.json"), "no fits recorded"))?;
    let data = ForecastData::load(layout, cfg.deepar.covariate_lag)?;
    let sources = CovariateSources::load(layout, &[spec.covariates])?;
    let (cov_names, covs) = assemble_covariates(spec.covariates, &sources, &data.covariate_days)?;
    if cov_names != names {
        return Err(Error::format(&cp, "checkpoint covariates differ from the current covariate tables"));
    }
    let seed = component_seed(cfg.seed, "shap", 0);
    let mut report = explain_deepar(&model, &names, &data, &covs, &fit, &cfg.shap, seed)?;
    report.model = spec.to_string();
    let json = layout.evaluate_dir().join("shap.json");
    formats::write_json(&json, &report)?;
    let csv = layout.evaluate_dir().join("shap_summary.csv");
    let table: String = std::iter::once("feature,mean_abs_shap\n".to_string())
        .chain(report.summary.iter().map(|(k, v)| format!("{k},{v}\n")))
        .collect();
    formats::write_bytes(&csv, table.as_bytes())?;
    Ok(vec![json, csv])
}

fn stage_evaluate(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    let report = evaluate(cfg, layout)?;
    let mut written = formats::write_backtest_report(&layout.evaluate_dir(), &report)?;
    if cfg.shap.enabled {
        written.extend(run_shap(cfg, layout)?);
    }
    Ok(written)
}

// ---------------------------------------------------------------- run

/// Run a single named stage in `layout`.
pub fn run_stage(name: &str, cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PathBuf>> {
    match name {
        "ingest" => stage_ingest(cfg, layout),
        "select" => stage_select(cfg, layout),
        "factors" => stage_factors(cfg, layout),
        "reduce" => stage_reduce(cfg, layout),
        "forecast" => run_forecasts(cfg, layout, FamilyFilter::All),
        "evaluate" => stage_evaluate(cfg, layout),
        other => Err(Error::Config(format!("unknown stage {other:?}"))),
    }
}

fn stage_enabled(cfg: &RunConfig, name: &str) -> bool {
    let s = &cfg.stages;
    match name {
        "ingest" => s.ingest,
        "select" => s.select,
        "factors" => s.factors,
        "reduce" => s.reduce,
        "forecast" => s.forecast,
        "evaluate" => s.evaluate,
        _ => false,
    }
}

fn input_files(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if cfg.stages.ingest {
        if cfg.ingest.gkg_dir.is_dir() {
            files.extend(list_gkg_files(&cfg.ingest.gkg_dir)?);
        }
        files.push(cfg.ingest.outlets.clone());
        if let Some(c) = &cfg.ingest.calendar {
            files.push(c.clone());
        }
    }
    if cfg.stages.factors || (cfg.stages.ingest && cfg.ingest.calendar.is_none()) {
        files.push(cfg.factors.yields.clone());
    }
    Ok(files)
}

/// Execute the enabled stages in order inside `out`, writing the manifest
/// after every stage. On failure the manifest records how far the run got
/// and the error is returned.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let layout = RunLayout::new(out);
    formats::ensure_dir(out)?;
    formats::write_bytes(&layout.config_snapshot(), cfg.to_toml()?.as_bytes())?;
    let mut manifest = Manifest {
        run_id: cfg.run_id.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: hash_files(out, &input_files(cfg)?)?,
        stages: STAGES
            .iter()
            .map(|s| StageRecord {
                name: s.to_string(),
                status: StageStatus::NotRun,
                seconds: 0.0,
                outputs: Vec::new(),
                error: None,
            })
            .collect(),
        completed: false,
    };
    formats::write_json(&layout.manifest(), &manifest)?;
    for (i, name) in STAGES.iter().enumerate() {
        if !stage_enabled(cfg, name) {
            manifest.stages[i].status = StageStatus::Skipped;
            continue;
        }
        log::info!("stage {name}");
        let start = Instant::now();
        let result = run_stage(name, cfg, &layout);
        let record = &mut manifest.stages[i];
        record.seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(paths) => {
                record.status = StageStatus::Completed;
                record.outputs = hash_files(out, &paths)?;
                formats::write_json(&layout.manifest(), &manifest)?;
            }
            Err(e) => {
                record.status = StageStatus::Failed;
                record.error = Some(e.to_string());
                formats::write_json(&layout.manifest(), &manifest)?;
                return Err(e);
            }
        }
    }
    manifest.completed = true;
    formats::write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}
