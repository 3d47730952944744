//! Daily feature table and the selection funnel that prunes it: dictionary
//! exclusion, availability filters, a variance floor, per-article
//! normalisation and a greedy correlation filter.

#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkg::DailyAggregate;
use crate::rng::{derive_seed_labeled, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureCategory {
    Gcam,
    WbTheme,
    GdeltTheme,
    Location,
    Person,
    Organization,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 6] = [
        FeatureCategory::Gcam,
        FeatureCategory::WbTheme,
        FeatureCategory::GdeltTheme,
        FeatureCategory::Location,
        FeatureCategory::Person,
        FeatureCategory::Organization,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            FeatureCategory::Gcam => "gcam",
            FeatureCategory::WbTheme => "wb",
            FeatureCategory::GdeltTheme => "theme",
            FeatureCategory::Location => "loc",
            FeatureCategory::Person => "person",
            FeatureCategory::Organization => "org",
        }
    }

    /// Category-qualified feature key, e.g. `gcam:c2.168`.
    pub fn key(self, code: &str) -> String {
        format!("{}:{}", self.prefix(), code)
    }

    /// Split a feature key into its category and bare code.
    pub fn parse_key(key: &str) -> Option<(FeatureCategory, &str)> {
        let (prefix, code) = key.split_once(':')?;
        let cat = Self::ALL.into_iter().find(|c| c.prefix() == prefix)?;
        Some((cat, code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub category: FeatureCategory,
    /// GCAM dictionary identifier (the code before the dot, e.g. `c2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<String>,
}

impl FeatureMeta {
    pub fn from_key(key: &str) -> Result<Self> {
        let (category, code) = FeatureCategory::parse_key(key)
            .ok_or_else(|| Error::Parameter(format!("feature key {key:?} has no known category prefix")))?;
        let dictionary = (category == FeatureCategory::Gcam)
            .then(|| code.split('.').next().unwrap_or(code).to_string());
        Ok(Self { category, dictionary })
    }
}

/// Trading-day × feature table. Cells flagged in `missing` carry no
/// information and their stored value is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    days: Vec<NaiveDate>,
    feature_keys: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
    metadata: Vec<FeatureMeta>,
}

impl FeatureMatrix {
    pub fn new(
        days: Vec<NaiveDate>,
        feature_keys: Vec<String>,
        values: Vec<f64>,
        missing: Vec<bool>,
        metadata: Vec<FeatureMeta>,
    ) -> Result<Self> {
        let cells = days.len() * feature_keys.len();
        if values.len() != cells || missing.len() != cells || metadata.len() != feature_keys.len() {
            return Err(Error::Shape(format!(
                "{} days x {} features needs {cells} cells and {} metadata entries",
                days.len(),
                feature_keys.len(),
                feature_keys.len()
            )));
        }
        let unique: BTreeSet<&String> = feature_keys.iter().collect();
        if unique.len() != feature_keys.len() {
            return Err(Error::Parameter("feature keys are not unique".into()));
        }
        if let Some(i) = (0..cells).find(|&i| !missing[i] && !values[i].is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value at day {} feature {}",
                i / feature_keys.len(),
                feature_keys[i % feature_keys.len()]
            )));
        }
        Ok(Self {
            days,
            feature_keys,
            values,
            missing,
            metadata,
        })
    }

    /// Build from column vectors, with `None` marking a missing cell and
    /// metadata inferred from the key prefixes.
    pub fn from_columns(
        days: Vec<NaiveDate>,
        columns: Vec<(String, Vec<Option<f64>>)>,
    ) -> Result<Self> {
        let n = days.len();
        let p = columns.len();
        let mut values = vec![0.0; n * p];
        let mut missing = vec![true; n * p];
        let mut keys = Vec::with_capacity(p);
        let mut metadata = Vec::with_capacity(p);
        for (j, (key, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::Shape(format!("column {key} has {} rows, expected {n}", col.len())));
            }
            for (i, v) in col.into_iter().enumerate() {
                if let Some(v) = v {
                    values[i * p + j] = v;
                    missing[i * p + j] = false;
                }
            }
            metadata.push(FeatureMeta::from_key(&key)?);
            keys.push(key);
        }
        Self::new(days, keys, values, missing, metadata)
    }

    /// One row per aggregate; a key absent from a day's counts is missing.
    pub fn from_daily(aggregates: &[DailyAggregate]) -> Result<Self> {
        let keys: BTreeSet<&String> = aggregates
            .iter()
            .flat_map(|a| a.category_counts.keys())
            .collect();
        let days = aggregates.iter().map(|a| a.trading_day).collect();
        let columns = keys
            .into_iter()
            .map(|k| {
                let col = aggregates
                    .iter()
                    .map(|a| a.category_counts.get(k).copied())
                    .collect();
                (k.clone(), col)
            })
            .collect();
        Self::from_columns(days, columns)
    }

    pub fn empty() -> Self {
        Self {
            days: Vec::new(),
            feature_keys: Vec::new(),
            values: Vec::new(),
            missing: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn feature_keys(&self) -> &[String] {
        &self.feature_keys
    }

    pub fn metadata(&self) -> &[FeatureMeta] {
        &self.metadata
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_keys.len()
    }

    pub fn get(&self, day: usize, feature: usize) -> Option<f64> {
        let i = day * self.n_features() + feature;
        (!self.missing[i]).then(|| self.values[i])
    }

    pub fn column(&self, feature: usize) -> Vec<Option<f64>> {
        (0..self.n_days()).map(|d| self.get(d, feature)).collect()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.feature_keys.iter().position(|k| k == key)
    }

    pub fn missing_count(&self, feature: usize) -> usize {
        (0..self.n_days()).filter(|&d| self.get(d, feature).is_none()).count()
    }

    /// Keep only the given columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let p = self.n_features();
        let mut values = Vec::with_capacity(self.n_days() * keep.len());
        let mut missing = Vec::with_capacity(self.n_days() * keep.len());
        for d in 0..self.n_days() {
            for &j in keep {
                values.push(self.values[d * p + j]);
                missing.push(self.missing[d * p + j]);
            }
        }
        Self {
            days: self.days.clone(),
            feature_keys: keep.iter().map(|&j| self.feature_keys[j].clone()).collect(),
            values,
            missing,
            metadata: keep.iter().map(|&j| self.metadata[j].clone()).collect(),
        }
    }

    pub fn select_keys(&self, keys: &[String]) -> Result<Self> {
        let idx = keys
            .iter()
            .map(|k| self.index_of(k).ok_or_else(|| Error::Parameter(format!("unknown feature {k}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    fn retain_columns(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.n_features()).filter(|&j| keep(j)).collect();
        self.select_columns(&idx)
    }

    /// Columns as dense vectors with missing cells replaced by the column's
    /// observed mean (0 when nothing is observed).
    pub fn mean_imputed_columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features())
            .map(|j| {
                let col = self.column(j);
                let seen: Vec<f64> = col.iter().flatten().copied().collect();
                let fill = if seen.is_empty() { 0.0 } else { crate::stats::mean(&seen) };
                col.into_iter().map(|v| v.unwrap_or(fill)).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// GCAM codes to exclude; a trailing `*` matches any suffix (`c3.*`).
    pub drop_gcam_codes: BTreeSet<String>,
    pub initial_fraction: f64,
    pub availability_fraction: f64,
    pub min_std_words: f64,
    pub corr_threshold: f64,
    pub category_priority: Vec<FeatureCategory>,
    pub rng_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            drop_gcam_codes: BTreeSet::new(),
            initial_fraction: 0.33,
            availability_fraction: 0.90,
            min_std_words: 5.0,
            corr_threshold: 0.70,
            category_priority: FeatureCategory::ALL.to_vec(),
            rng_seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_fraction > 0.0 && self.initial_fraction < 1.0) {
            return Err(Error::Config("initial_fraction must lie in (0, 1)".into()));
        }
        if !(self.availability_fraction > 0.0 && self.availability_fraction <= 1.0) {
            return Err(Error::Config("availability_fraction must lie in (0, 1]".into()));
        }
        if !(self.corr_threshold > 0.0 && self.corr_threshold < 1.0) {
            return Err(Error::Config("corr_threshold must lie in (0, 1)".into()));
        }
        if !self.min_std_words.is_finite() || self.min_std_words < 0.0 {
            return Err(Error::Config("min_std_words must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Check that the priority list ranks every category present in `m`.
    pub fn validate_for(&self, m: &FeatureMatrix) -> Result<()> {
        self.validate()?;
        for meta in m.metadata() {
            if !self.category_priority.contains(&meta.category) {
                return Err(Error::Config(format!(
                    "category_priority does not rank {:?}",
                    meta.category
                )));
            }
        }
        Ok(())
    }

    fn excludes(&self, code: &str) -> bool {
        self.drop_gcam_codes.iter().any(|pat| match pat.strip_suffix('*') {
            Some(prefix) => code.starts_with(prefix),
            None => code == pat,
        })
    }

    fn priority_rank(&self, cat: FeatureCategory) -> usize {
        self.category_priority
            .iter()
            .position(|c| *c == cat)
            .unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    ExcludedDictionary,
    AllMissingInitial,
    LowAvailability,
    LowVariance,
    CorrelatedOut,
}

/// Which rule settled a correlated pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    FewerMissing,
    CategoryPriority,
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDecision {
    pub kept: String,
    pub dropped: String,
    pub rho: f64,
    pub rule: TieRule,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionReport {
    pub stages: Vec<String>,
    pub kept: Vec<String>,
    pub dropped: BTreeMap<String, DropReason>,
    pub decisions: Vec<CorrelationDecision>,
    pub warnings: Vec<String>,
}

pub fn drop_excluded_gcams(m: &FeatureMatrix, cfg: &SelectionConfig) -> FeatureMatrix {
    m.retain_columns(|j| match FeatureCategory::parse_key(&m.feature_keys[j]) {
        Some((FeatureCategory::Gcam, code)) => !cfg.excludes(code),
        _ => true,
    })
}

fn missing_reason(m: &FeatureMatrix, j: usize, cfg: &SelectionConfig) -> Option<DropReason> {
    let n = m.n_days();
    let initial = ((cfg.initial_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let initial = initial.min(n);
    if initial > 0 && (0..initial).all(|d| m.get(d, j).is_none()) {
        return Some(DropReason::AllMissingInitial);
    }
    let present = n - m.missing_count(j);
    if (present as f64) + 1e-9 < cfg.availability_fraction * n as f64 {
        return Some(DropReason::LowAvailability);
    }
    None
}

/// Drops features missing throughout the initial fraction of days, then those
/// observed on fewer than `availability_fraction` of all days.
pub fn missing_value_filter(m: &FeatureMatrix, cfg: &SelectionConfig) -> FeatureMatrix {
    m.retain_columns(|j| missing_reason(m, j, cfg).is_none())
}

fn observed_sd(m: &FeatureMatrix, j: usize) -> Option<f64> {
    let seen: Vec<f64> = m.column(j).into_iter().flatten().collect();
    (seen.len() >= 2).then(|| crate::stats::sd_population(&seen))
}

/// Keeps features whose population standard deviation over observed days is
/// strictly above `min_std_words`.
pub fn variance_filter(m: &FeatureMatrix, cfg: &SelectionConfig) -> FeatureMatrix {
    m.retain_columns(|j| observed_sd(m, j).is_some_and(|sd| sd > cfg.min_std_words))
}

/// Divides each observed cell by that day's article count; zero-article days
/// become missing.
pub fn normalize_by_article_count(m: &FeatureMatrix, daily_articles: &[u64]) -> Result<FeatureMatrix> {
    if daily_articles.len() != m.n_days() {
        return Err(Error::Alignment(format!(
            "{} article counts for {} days",
            daily_articles.len(),
            m.n_days()
        )));
    }
    let p = m.n_features();
    let mut out = m.clone();
    for (d, &articles) in daily_articles.iter().enumerate() {
        for j in 0..p {
            let i = d * p + j;
            if articles == 0 {
                out.missing[i] = true;
                out.values[i] = 0.0;
            } else if !out.missing[i] {
                out.values[i] /= articles as f64;
            }
        }
    }
    Ok(out)
}

/// Pearson correlation on jointly observed days; `None` when fewer than three
/// such days exist.
pub fn joint_correlation(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    Some(crate::stats::pearson(&xs, &ys).unwrap_or(0.0))
}

/// Greedy pruning of pairs with |rho| above the threshold, strongest first.
/// The survivor of each pair has fewer missing days, then higher category
/// priority, then wins a seeded coin flip.
pub fn correlation_filter(m: &FeatureMatrix, cfg: &SelectionConfig) -> (FeatureMatrix, SelectionReport) {
    let p = m.n_features();
    let columns: Vec<Vec<Option<f64>>> = (0..p).map(|j| m.column(j)).collect();
    let missing: Vec<usize> = (0..p).map(|j| m.missing_count(j)).collect();
    let mut report = SelectionReport::default();

    let mut pairs = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            let rho = match joint_correlation(&columns[a], &columns[b]) {
                Some(r) => r,
                None => {
                    report.warnings.push(format!(
                        "fewer than 3 joint days for {} and {}; correlation taken as 0",
                        m.feature_keys[a], m.feature_keys[b]
                    ));
                    0.0
                }
            };
            if rho.abs() > cfg.corr_threshold {
                pairs.push((rho, a, b));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.0.abs()
            .total_cmp(&x.0.abs())
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });

    let mut dropped = vec![false; p];
    for (rho, a, b) in pairs {
        if dropped[a] || dropped[b] {
            continue;
        }
        let (ka, kb) = (&m.feature_keys[a], &m.feature_keys[b]);
        let ra = cfg.priority_rank(m.metadata[a].category);
        let rb = cfg.priority_rank(m.metadata[b].category);
        let (keep_a, rule) = if missing[a] != missing[b] {
            (missing[a] < missing[b], TieRule::FewerMissing)
        } else if ra != rb {
            (ra < rb, TieRule::CategoryPriority)
        } else {
            let mut rng = rng_from_seed(derive_seed_labeled(cfg.rng_seed, &format!("{ka}|{kb}")));
            (rng.random_bool(0.5), TieRule::SeededRandom)
        };
        let (k, d) = if keep_a { (a, b) } else { (b, a) };
        dropped[d] = true;
        report.dropped.insert(m.feature_keys[d].clone(), DropReason::CorrelatedOut);
        report.decisions.push(CorrelationDecision {
            kept: m.feature_keys[k].clone(),
            dropped: m.feature_keys[d].clone(),
            rho,
            rule,
        });
    }
    let out = m.retain_columns(|j| !dropped[j]);
    report.kept = out.feature_keys.clone();
    report.stages.push("correlation_filter".into());
    (out, report)
}

fn record_stage(
    report: &mut SelectionReport,
    stage: &str,
    before: &FeatureMatrix,
    after: &FeatureMatrix,
    reason: impl Fn(usize) -> DropReason,
) {
    let survivors: BTreeSet<&String> = after.feature_keys.iter().collect();
    for (j, key) in before.feature_keys.iter().enumerate() {
        if !survivors.contains(key) {
            report.dropped.insert(key.clone(), reason(j));
        }
    }
    report.stages.push(stage.to_string());
}

/// Runs the funnel stages in order and merges their drop reasons into one
/// report.
pub fn run_selection_pipeline(
    m: &FeatureMatrix,
    daily_articles: &[u64],
    cfg: &SelectionConfig,
) -> Result<(FeatureMatrix, SelectionReport)> {
    cfg.validate_for(m)?;
    let mut report = SelectionReport::default();
    if m.n_features() == 0 {
        return Ok((m.clone(), report));
    }

    let s1 = drop_excluded_gcams(m, cfg);
    record_stage(&mut report, "drop_excluded_gcams", m, &s1, |_| DropReason::ExcludedDictionary);

    let s2 = missing_value_filter(&s1, cfg);
    record_stage(&mut report, "missing_value_filter", &s1, &s2, |j| {
        missing_reason(&s1, j, cfg).unwrap_or(DropReason::LowAvailability)
    });

    let s3 = variance_filter(&s2, cfg);
    record_stage(&mut report, "variance_filter", &s2, &s3, |_| DropReason::LowVariance);

    let s4 = normalize_by_article_count(&s3, daily_articles)?;
    report.stages.push("normalize_by_article_count".into());

    let (s5, corr) = correlation_filter(&s4, cfg);
    report.dropped.extend(corr.dropped);
    report.decisions = corr.decisions;
    report.warnings.extend(corr.warnings);
    report.stages.extend(corr.stages);
    report.kept = s5.feature_keys.clone();
    Ok((s5, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n as u64).map(|i| start + chrono::Days::new(i)).collect()
    }

    fn matrix(cols: Vec<(&str, Vec<Option<f64>>)>) -> FeatureMatrix {
        let n = cols.first().map_or(0, |c| c.1.len());
        FeatureMatrix::from_columns(days(n), cols.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            .unwrap()
    }

    fn dense(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().copied().map(Some).collect()
    }

    #[test]
    fn key_round_trip_and_dictionary() {
        let meta = FeatureMeta::from_key("gcam:c2.168").unwrap();
        assert_eq!(meta.category, FeatureCategory::Gcam);
        assert_eq!(meta.dictionary.as_deref(), Some("c2"));
        assert_eq!(
            FeatureCategory::parse_key("loc:GM"),
            Some((FeatureCategory::Location, "GM"))
        );
        assert!(FeatureMeta::from_key("nonsense").is_err());
    }

    #[test]
    fn exclusion_patterns() {
        let m = matrix(vec![
            ("gcam:c3.1", dense(&[1.0])),
            ("gcam:c3.2", dense(&[1.0])),
            ("gcam:c2.1", dense(&[1.0])),
            ("wb:WB_1", dense(&[1.0])),
        ]);
        let empty = SelectionConfig::default();
        assert_eq!(drop_excluded_gcams(&m, &empty), m);
        let cfg = SelectionConfig {
            drop_gcam_codes: ["c3.*".to_string(), "c2.1".to_string()].into(),
            ..Default::default()
        };
        assert_eq!(drop_excluded_gcams(&m, &cfg).feature_keys(), ["wb:WB_1".to_string()]);
    }

    #[test]
    fn availability_boundary() {
        let col = |present: usize| -> Vec<Option<f64>> {
            (0..100).map(|i| (i < present).then_some(1.0)).collect()
        };
        let m = matrix(vec![("gcam:a", col(89)), ("gcam:b", col(90)), ("gcam:c", col(100))]);
        let out = missing_value_filter(&m, &SelectionConfig::default());
        assert_eq!(out.feature_keys(), ["gcam:b".to_string(), "gcam:c".to_string()]);
    }

    #[test]
    fn all_missing_initial_dropped_despite_later_availability() {
        // missing for the first 33 of 100 days, present afterwards
        let col: Vec<Option<f64>> = (0..100).map(|i| (i >= 33).then_some(1.0)).collect();
        let m = matrix(vec![("gcam:a", col)]);
        let cfg = SelectionConfig {
            availability_fraction: 0.5,
            ..Default::default()
        };
        assert_eq!(missing_value_filter(&m, &cfg).n_features(), 0);
        assert_eq!(missing_reason(&m, 0, &cfg), Some(DropReason::AllMissingInitial));
    }

    #[test]
    fn variance_boundary_is_strict() {
        let alt = |hi: f64| -> Vec<Option<f64>> {
            (0..10).map(|i| Some(if i % 2 == 0 { 0.0 } else { hi })).collect()
        };
        let m = matrix(vec![
            ("gcam:twelve", alt(12.0)),
            ("gcam:ten", alt(10.0)),
            ("gcam:flat", alt(0.0)),
        ]);
        let out = variance_filter(&m, &SelectionConfig::default());
        assert_eq!(out.feature_keys(), ["gcam:twelve".to_string()]);
    }

    #[test]
    fn normalisation_and_zero_guard() {
        let m = matrix(vec![("gcam:a", dense(&[10.0, 4.0, 1.0]))]);
        let out = normalize_by_article_count(&m, &[5, 0, 1]).unwrap();
        assert_eq!(out.column(0), vec![Some(2.0), None, Some(1.0)]);
        assert!(normalize_by_article_count(&m, &[1, 1]).is_err());
    }

    #[test]
    fn correlated_pair_keeps_fewer_missing() {
        let base = [1.0, 5.0, 2.0, 8.0, 3.0, 9.0, 4.0];
        let mut holes = dense(&base);
        holes[0] = None;
        holes[3] = None;
        let m = matrix(vec![("gcam:holes", holes), ("gcam:full", dense(&base))]);
        let (out, rep) = correlation_filter(&m, &SelectionConfig::default());
        assert_eq!(out.feature_keys(), ["gcam:full".to_string()]);
        assert_eq!(rep.decisions[0].rule, TieRule::FewerMissing);
        assert_eq!(rep.dropped["gcam:holes"], DropReason::CorrelatedOut);
    }

    #[test]
    fn correlated_pair_prefers_gcam_then_random() {
        let base = dense(&[1.0, 5.0, 2.0, 8.0, 3.0]);
        let m = matrix(vec![("wb:WB_X", base.clone()), ("gcam:c1.1", base.clone())]);
        let (out, rep) = correlation_filter(&m, &SelectionConfig::default());
        assert_eq!(out.feature_keys(), ["gcam:c1.1".to_string()]);
        assert_eq!(rep.decisions[0].rule, TieRule::CategoryPriority);

        let twin = matrix(vec![("gcam:a", base.clone()), ("gcam:b", base)]);
        let cfg = SelectionConfig::default();
        let (o1, r1) = correlation_filter(&twin, &cfg);
        let (o2, _) = correlation_filter(&twin, &cfg);
        assert_eq!(o1, o2);
        assert_eq!(o1.n_features(), 1);
        assert_eq!(r1.decisions[0].rule, TieRule::SeededRandom);
    }

    #[test]
    fn sparse_overlap_counts_as_uncorrelated() {
        let a = vec![Some(1.0), Some(2.0), None, None];
        let b = vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)];
        let m = matrix(vec![("gcam:a", a), ("gcam:b", b)]);
        let (out, rep) = correlation_filter(&m, &SelectionConfig::default());
        assert_eq!(out.n_features(), 2);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn empty_pipeline() {
        let m = FeatureMatrix::empty();
        let (out, rep) = run_selection_pipeline(&m, &[], &SelectionConfig::default()).unwrap();
        assert_eq!(out.n_features(), 0);
        assert!(rep.kept.is_empty() && rep.dropped.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = SelectionConfig {
            corr_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let narrow = SelectionConfig {
            category_priority: vec![FeatureCategory::Gcam],
            ..Default::default()
        };
        let m = matrix(vec![("loc:IT", dense(&[1.0]))]);
        assert!(narrow.validate_for(&m).is_err());
    }
}
