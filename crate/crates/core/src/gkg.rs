//! GDELT Global Knowledge Graph (2.1) records: parsing, article filtering,
//! trading-day assignment and daily aggregation.
//!
//! Only the columns the pipeline consumes are decoded; the others are
//! validated for count and then ignored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureCategory;

/// Number of tab-separated columns in a GKG 2.1 row.
pub const GKG_COLUMNS: usize = 27;

pub mod col {
    pub const RECORD_ID: usize = 0;
    pub const DATE: usize = 1;
    pub const SOURCE_COMMON_NAME: usize = 3;
    pub const DOCUMENT_ID: usize = 4;
    pub const V1_THEMES: usize = 7;
    pub const V2_ENHANCED_THEMES: usize = 8;
    pub const V1_LOCATIONS: usize = 9;
    pub const V1_PERSONS: usize = 11;
    pub const V1_ORGANIZATIONS: usize = 13;
    pub const V2_GCAM: usize = 17;
}

const GKG_DATE_FORMAT: &str = "%Y%m%d%H%M%S";

/// A GCAM dimension value: `c*` codes carry word counts, `v*` codes carry
/// real-valued scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GcamValue {
    Count(u64),
    Score(f64),
}

impl GcamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            GcamValue::Count(c) => c as f64,
            GcamValue::Score(s) => s,
        }
    }
}

/// A theme mention with its character offset in the article (V2 themes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeMention {
    pub code: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkgRecord {
    pub record_id: String,
    /// UTC, minute precision or finer.
    pub publish_instant: NaiveDateTime,
    pub outlet: String,
    pub document_id: String,
    /// World Bank taxonomy codes (`WB_*`) from the V1 theme list.
    pub wb_themes: Vec<String>,
    /// All other theme codes from the V1 theme list.
    pub gdelt_themes: Vec<String>,
    /// V2 enhanced themes: one entry per in-text mention.
    pub theme_mentions: Vec<ThemeMention>,
    /// Country codes, one per location mention.
    pub locations: Vec<String>,
    pub persons: Vec<String>,
    pub organizations: Vec<String>,
    pub gcam_counts: BTreeMap<String, GcamValue>,
    pub word_count: u64,
}

/// A parsed record plus any recoverable problems met on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub record: GkgRecord,
    pub warnings: Vec<String>,
}

pub fn format_gkg_instant(t: &NaiveDateTime) -> String {
    t.format(GKG_DATE_FORMAT).to_string()
}

pub fn parse_gkg_instant(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), GKG_DATE_FORMAT).ok()
}

fn split_list(field: &str) -> impl Iterator<Item = &str> {
    field.split(';').map(str::trim).filter(|s| !s.is_empty())
}

/// Parse one tab-delimited GKG 2.1 line.
pub fn parse_gkg_record(raw_line: &str) -> Result<ParsedRecord> {
    let line = raw_line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != GKG_COLUMNS {
        return Err(Error::Parse {
            column: fields.len().min(GKG_COLUMNS),
            message: format!("expected {GKG_COLUMNS} columns, found {}", fields.len()),
        });
    }
    let mut warnings = Vec::new();

    let publish_instant = parse_gkg_instant(fields[col::DATE]).ok_or_else(|| Error::Parse {
        column: col::DATE,
        message: format!("bad timestamp {:?}", fields[col::DATE]),
    })?;

    let mut wb_themes = Vec::new();
    let mut gdelt_themes = Vec::new();
    for theme in split_list(fields[col::V1_THEMES]) {
        if theme.starts_with("WB_") {
            wb_themes.push(theme.to_string());
        } else {
            gdelt_themes.push(theme.to_string());
        }
    }

    let mut theme_mentions = Vec::new();
    for item in split_list(fields[col::V2_ENHANCED_THEMES]) {
        match item.rsplit_once(',') {
            Some((code, off)) if !code.is_empty() => match off.parse::<u64>() {
                Ok(offset) => theme_mentions.push(ThemeMention {
                    code: code.to_string(),
                    offset,
                }),
                Err(_) => warnings.push(format!("theme mention {item:?}: bad offset")),
            },
            _ => warnings.push(format!("theme mention {item:?}: missing offset")),
        }
    }

    let mut locations = Vec::new();
    for loc in split_list(fields[col::V1_LOCATIONS]) {
        match loc.split('#').nth(2) {
            Some(cc) if !cc.is_empty() => locations.push(cc.to_string()),
            _ => warnings.push(format!("location {loc:?}: no country code")),
        }
    }

    let persons = split_list(fields[col::V1_PERSONS]).map(String::from).collect();
    let organizations = split_list(fields[col::V1_ORGANIZATIONS])
        .map(String::from)
        .collect();

    let mut gcam_counts = BTreeMap::new();
    let mut word_count = None;
    for pair in fields[col::V2_GCAM]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let Some((code, value)) = pair.split_once(':') else {
            warnings.push(format!("GCAM pair {pair:?}: missing ':'"));
            continue;
        };
        if code == "wc" {
            match value.parse::<u64>() {
                Ok(wc) => word_count = Some(wc),
                Err(_) => warnings.push(format!("GCAM word count {value:?} is not an integer")),
            }
            continue;
        }
        let parsed = if code.starts_with('c') {
            value.parse::<u64>().ok().map(GcamValue::Count)
        } else if code.starts_with('v') {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(GcamValue::Score)
        } else {
            None
        };
        match parsed {
            Some(v) => {
                gcam_counts.insert(code.to_string(), v);
            }
            None => warnings.push(format!("GCAM pair {pair:?}: malformed value")),
        }
    }
    let word_count = word_count.unwrap_or_else(|| {
        warnings.push("GCAM field has no wc entry; word count set to 0".into());
        0
    });

    Ok(ParsedRecord {
        record: GkgRecord {
            record_id: fields[col::RECORD_ID].to_string(),
            publish_instant,
            outlet: fields[col::SOURCE_COMMON_NAME].trim().to_string(),
            document_id: fields[col::DOCUMENT_ID].to_string(),
            wb_themes,
            gdelt_themes,
            theme_mentions,
            locations,
            persons,
            organizations,
            gcam_counts,
            word_count,
        },
        warnings,
    })
}

fn write_score(out: &mut String, v: f64) {
    let _ = write!(out, "{v}");
}

impl GkgRecord {
    /// Serialise the consumed fields back into a 27-column GKG 2.1 line.
    /// Columns the parser ignores are written empty.
    pub fn to_gkg_line(&self) -> String {
        let mut cols: Vec<String> = alloc::vec![String::new(); GKG_COLUMNS];
        cols[col::RECORD_ID] = self.record_id.clone();
        cols[col::DATE] = format_gkg_instant(&self.publish_instant);
        cols[2] = "1".into();
        cols[col::SOURCE_COMMON_NAME] = self.outlet.clone();
        cols[col::DOCUMENT_ID] = self.document_id.clone();
        let mut themes = String::new();
        for t in self.wb_themes.iter().chain(&self.gdelt_themes) {
            themes.push_str(t);
            themes.push(';');
        }
        cols[col::V1_THEMES] = themes;
        let mut mentions = String::new();
        for m in &self.theme_mentions {
            let _ = write!(mentions, "{},{};", m.code, m.offset);
        }
        cols[col::V2_ENHANCED_THEMES] = mentions;
        let mut locs = String::new();
        for cc in &self.locations {
            let _ = write!(locs, "1#{cc}#{cc}#{cc}#0#0#{cc};");
        }
        cols[col::V1_LOCATIONS] = locs;
        cols[col::V1_PERSONS] = self.persons.join(";");
        cols[col::V1_ORGANIZATIONS] = self.organizations.join(";");
        let mut gcam = format!("wc:{}", self.word_count);
        for (code, value) in &self.gcam_counts {
            let _ = write!(gcam, ",{code}:");
            match value {
                GcamValue::Count(c) => {
                    let _ = write!(gcam, "{c}");
                }
                GcamValue::Score(s) => write_score(&mut gcam, *s),
            }
        }
        cols[col::V2_GCAM] = gcam;
        cols.join("\t")
    }

    /// Occurrences of `targets` among the record's theme mentions. Uses the
    /// V2 offsets (one per in-text mention) when present, otherwise the V1
    /// theme list.
    pub fn theme_hits(&self, targets: &BTreeSet<String>) -> usize {
        if self.theme_mentions.is_empty() {
            self.wb_themes
                .iter()
                .chain(&self.gdelt_themes)
                .filter(|t| targets.contains(*t))
                .count()
        } else {
            self.theme_mentions
                .iter()
                .filter(|m| targets.contains(&m.code))
                .count()
        }
    }

    /// Category-qualified feature counts contributed by this record.
    pub fn feature_counts(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        let mut bump = |key: String, by: f64| *out.entry(key).or_insert(0.0) += by;
        for (code, v) in &self.gcam_counts {
            bump(FeatureCategory::Gcam.key(code), v.as_f64());
        }
        if self.theme_mentions.is_empty() {
            for t in &self.wb_themes {
                bump(FeatureCategory::WbTheme.key(t), 1.0);
            }
            for t in &self.gdelt_themes {
                bump(FeatureCategory::GdeltTheme.key(t), 1.0);
            }
        } else {
            for m in &self.theme_mentions {
                let cat = if m.code.starts_with("WB_") {
                    FeatureCategory::WbTheme
                } else {
                    FeatureCategory::GdeltTheme
                };
                bump(cat.key(&m.code), 1.0);
            }
        }
        for l in &self.locations {
            bump(FeatureCategory::Location.key(l), 1.0);
        }
        for p in &self.persons {
            bump(FeatureCategory::Person.key(p), 1.0);
        }
        for o in &self.organizations {
            bump(FeatureCategory::Organization.key(o), 1.0);
        }
        out
    }
}

/// World Bank theme codes used by default to select bond-market news.
pub const DEFAULT_TARGET_WB_THEMES: [&str; 2] = [
    "WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT",
    "WB_439_MACROECONOMIC_AND_STRUCTURAL_POLICIES",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticleFilterConfig {
    /// Outlet domains, compared case-insensitively.
    pub allowed_outlets: BTreeSet<String>,
    pub target_wb_themes: BTreeSet<String>,
    /// Minimum target-theme hits ("more than three" means 4).
    pub min_theme_keywords: usize,
    pub min_word_count: u64,
}

impl ArticleFilterConfig {
    pub fn new(allowed_outlets: impl IntoIterator<Item = String>) -> Result<Self> {
        let cfg = Self {
            allowed_outlets: allowed_outlets
                .into_iter()
                .map(|o| o.trim().to_ascii_lowercase())
                .filter(|o| !o.is_empty())
                .collect(),
            target_wb_themes: DEFAULT_TARGET_WB_THEMES.iter().map(|s| s.to_string()).collect(),
            min_theme_keywords: 4,
            min_word_count: 100,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_theme_keywords < 1 {
            return Err(Error::Config("min_theme_keywords must be at least 1".into()));
        }
        if self.allowed_outlets.is_empty() {
            return Err(Error::Config("allowed_outlets must not be empty".into()));
        }
        if self.target_wb_themes.is_empty() {
            return Err(Error::Config("target_wb_themes must not be empty".into()));
        }
        Ok(())
    }

    pub fn accepts(&self, r: &GkgRecord) -> bool {
        let outlet_ok = self.allowed_outlets.contains(&r.outlet.to_ascii_lowercase());
        outlet_ok
            && r.word_count >= self.min_word_count
            && r.theme_hits(&self.target_wb_themes) >= self.min_theme_keywords
    }
}

pub fn filter_articles<'a, I>(records: I, cfg: &'a ArticleFilterConfig) -> impl Iterator<Item = GkgRecord> + 'a
where
    I: IntoIterator<Item = GkgRecord>,
    I::IntoIter: 'a,
{
    records.into_iter().filter(move |r| cfg.accepts(r))
}

/// Bond-market trading days plus session hours in local time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingCalendar {
    trading_days: Vec<NaiveDate>,
    pub market_open: NaiveTime,
    pub market_close: NaiveTime,
    /// Fixed offset of local time from UTC; no daylight saving.
    pub utc_offset_hours: i32,
}

impl TradingCalendar {
    pub fn new(mut trading_days: Vec<NaiveDate>) -> Result<Self> {
        trading_days.sort();
        trading_days.dedup();
        Self::with_session(
            trading_days,
            NaiveTime::from_hms_opt(9, 0, 0).expect("valid time"),
            NaiveTime::from_hms_opt(17, 30, 0).expect("valid time"),
            1,
        )
    }

    pub fn with_session(
        trading_days: Vec<NaiveDate>,
        market_open: NaiveTime,
        market_close: NaiveTime,
        utc_offset_hours: i32,
    ) -> Result<Self> {
        if trading_days.is_empty() {
            return Err(Error::Config("trading calendar is empty".into()));
        }
        if trading_days.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("trading days must be strictly increasing".into()));
        }
        if let Some(d) = trading_days
            .iter()
            .find(|d| matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        {
            return Err(Error::Config(format!("trading calendar contains weekend day {d}")));
        }
        if market_open >= market_close {
            return Err(Error::Config("market_open must precede market_close".into()));
        }
        Ok(Self {
            trading_days,
            market_open,
            market_close,
            utc_offset_hours,
        })
    }

    /// All weekdays in `[from, to]`; a convenience for synthetic data.
    pub fn weekdays(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        let days = from
            .iter_days()
            .take_while(|d| *d <= to)
            .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .collect();
        Self::new(days)
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn index_of(&self, day: NaiveDate) -> Option<usize> {
        self.trading_days.binary_search(&day).ok()
    }
}

/// Map a UTC publication instant to the trading session it informs: the
/// first session (in local time) whose close is not before the instant.
/// Articles inside a session go to that day, after-close and overnight
/// articles to the next session, weekends and holidays to the next trading day.
pub fn assign_trading_day(publish_instant: NaiveDateTime, cal: &TradingCalendar) -> Result<NaiveDate> {
    let local = publish_instant + Duration::hours(i64::from(cal.utc_offset_hours));
    let (date, time) = (local.date(), local.time());
    let days = &cal.trading_days;
    if date < days[0] {
        return Err(Error::OutOfCalendar(publish_instant));
    }
    let mut idx = days.partition_point(|d| *d < date);
    if idx < days.len() && days[idx] == date && time > cal.market_close {
        idx += 1;
    }
    days.get(idx)
        .copied()
        .ok_or(Error::OutOfCalendar(publish_instant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyAggregate {
    pub trading_day: NaiveDate,
    pub article_count: u64,
    pub category_counts: BTreeMap<String, f64>,
}

/// Accumulates per-day counts. Partial aggregators built from disjoint record
/// sets merge associatively and commutatively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DailyAggregator {
    days: BTreeMap<NaiveDate, (u64, BTreeMap<String, f64>)>,
    out_of_calendar: u64,
}

impl DailyAggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: &GkgRecord, cal: &TradingCalendar) {
        match assign_trading_day(record.publish_instant, cal) {
            Ok(day) => {
                let (count, counts) = self.days.entry(day).or_default();
                *count += 1;
                for (k, v) in record.feature_counts() {
                    *counts.entry(k).or_insert(0.0) += v;
                }
            }
            Err(_) => {
                log::warn!(
                    "record {} at {} is outside the calendar; skipped",
                    record.record_id,
                    record.publish_instant
                );
                self.out_of_calendar += 1;
            }
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (day, (n, counts)) in other.days {
            let (count, acc) = self.days.entry(day).or_default();
            *count += n;
            for (k, v) in counts {
                *acc.entry(k).or_insert(0.0) += v;
            }
        }
        self.out_of_calendar += other.out_of_calendar;
        self
    }

    pub fn out_of_calendar(&self) -> u64 {
        self.out_of_calendar
    }

    /// One aggregate per calendar day, zero-article days included.
    pub fn finish(mut self, cal: &TradingCalendar) -> Vec<DailyAggregate> {
        cal.trading_days
            .iter()
            .map(|day| {
                let (article_count, category_counts) = self.days.remove(day).unwrap_or_default();
                DailyAggregate {
                    trading_day: *day,
                    article_count,
                    category_counts,
                }
            })
            .collect()
    }
}

pub fn aggregate_daily<'a, I>(records: I, cal: &TradingCalendar) -> Vec<DailyAggregate>
where
    I: IntoIterator<Item = &'a GkgRecord>,
{
    let mut agg = DailyAggregator::new();
    for r in records {
        agg.add(r, cal);
    }
    agg.finish(cal)
}
