//! Synthetic inputs with a known data-generating process: a trading calendar
//! with holidays, Italian and German yield curves, raw GKG lines and an
//! outlet list, plus small in-memory series for model checks.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use spreadcast_core::gkg::{GcamValue, GkgRecord, ThemeMention, DEFAULT_TARGET_WB_THEMES};
use spreadcast_core::rng::{derive_seed_labeled, rng_from_seed, ChaCha8Rng};
use spreadcast_core::term_structure::{ns_loadings, YieldCurvePanel, DEFAULT_LAMBDA};

use crate::error::{Error, Result};
use crate::formats;

/// Maturity grid of the synthetic panel, in months.
pub const MATURITIES: [f64; 11] = [3.0, 6.0, 12.0, 24.0, 36.0, 60.0, 84.0, 120.0, 180.0, 240.0, 360.0];

/// Month-day pairs treated as market holidays when they fall on a weekday.
const HOLIDAYS: [(u32, u32); 7] = [(1, 1), (5, 1), (8, 15), (12, 24), (12, 25), (12, 26), (12, 31)];

const ALLOWED_OUTLETS: [&str; 6] = [
    "ilsole24ore.com",
    "corriere.it",
    "repubblica.it",
    "milanofinanza.it",
    "ansa.it",
    "lastampa.it",
];
const OTHER_OUTLETS: [&str; 2] = ["celebritygossip.example", "sportsdaily.example"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub n_days: usize,
    /// Mean relevant articles per trading day.
    pub articles_per_day: f64,
    /// Mean articles per day that the article filter must reject.
    pub rejected_per_day: f64,
    /// Loading of the 10-year log spread change on the news factor.
    pub news_loading: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            start: NaiveDate::from_ymd_opt(2019, 1, 2).expect("valid date"),
            n_days: 520,
            articles_per_day: 10.0,
            rejected_per_day: 3.0,
            news_loading: 0.6,
        }
    }
}

/// Everything the generator produces, before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub calendar: Vec<NaiveDate>,
    pub panel: YieldCurvePanel,
    pub records: Vec<GkgRecord>,
    pub outlets: Vec<String>,
    /// Latent factor that moves both the spread and the news counts.
    pub news_factor: Vec<f64>,
    /// Latent factor that moves news counts only.
    pub attention: Vec<f64>,
}

fn is_holiday(d: NaiveDate) -> bool {
    HOLIDAYS.contains(&(d.month(), d.day()))
}

/// The first `n` weekdays from `start` that are not holidays.
pub fn trading_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !is_holiday(*d))
        .take(n)
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut x = normal(rng);
    (0..n)
        .map(|_| {
            x = phi * x + innov * normal(rng);
            x
        })
        .collect()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Market close in UTC for the default session (17:30 at UTC+1).
fn close_utc(d: NaiveDate) -> NaiveDateTime {
    d.and_time(NaiveTime::from_hms_opt(16, 30, 0).expect("valid time"))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.n_days < 10 {
        return Err(Error::Config("synthetic data needs at least 10 days".into()));
    }
    let calendar = trading_calendar(cfg.start, cfg.n_days);
    let n = calendar.len();
    let mut rng = rng_from_seed(derive_seed_labeled(cfg.seed, "latent"));
    let news_factor = ar1(&mut rng, n, 0.5);
    let attention = ar1(&mut rng, n, 0.8);

    // 10-year spread level from an AR(1) in log changes plus the news loading.
    let mut spread10 = Vec::with_capacity(n);
    let (mut level, mut prev) = (2.0_f64, 0.0_f64);
    for t in 0..n {
        let change = 0.2 * prev + 0.01 * (cfg.news_loading * news_factor[t] + 0.8 * normal(&mut rng));
        if t > 0 {
            level *= change.exp();
            prev = change;
        }
        spread10.push(level);
    }
    let slope = ar1(&mut rng, n, 0.97);
    let curve = ar1(&mut rng, n, 0.95);
    let (_, l1_10, l2_10) = ns_loadings(120.0, DEFAULT_LAMBDA);
    let mut yields_it = Vec::with_capacity(n * MATURITIES.len());
    let mut yields_de = Vec::with_capacity(n * MATURITIES.len());
    let mut de_level = 0.5_f64;
    for t in 0..n {
        de_level += 0.02 * normal(&mut rng);
        let b1 = -1.0 + 0.2 * slope[t];
        let b2 = 0.5 + 0.3 * curve[t];
        let b0 = spread10[t] - b1 * l1_10 - b2 * l2_10;
        for &tau in &MATURITIES {
            let (_, l1, l2) = ns_loadings(tau, DEFAULT_LAMBDA);
            let de = de_level - 1.0 * l1 - 0.4 * l2;
            let noise = if tau == 120.0 { 0.0 } else { 0.01 * normal(&mut rng) };
            let spread = b0 + b1 * l1 + b2 * l2 + noise;
            let round = |x: f64| (x * 1e6).round() / 1e6;
            yields_de.push(round(de));
            // the DE yield is rounded first so the 10-year spread stays exact
            yields_it.push(round(round(de) + spread));
        }
    }
    let panel = YieldCurvePanel {
        days: calendar.clone(),
        maturities: MATURITIES.to_vec(),
        yields_it,
        yields_de,
    };
    panel.validate()?;

    let mut records = Vec::new();
    let mut art_rng = rng_from_seed(derive_seed_labeled(cfg.seed, "articles"));
    for (t, day) in calendar.iter().enumerate() {
        let window_end = close_utc(*day);
        let window_start = if t == 0 {
            window_end - Duration::days(1)
        } else {
            close_utc(calendar[t - 1])
        };
        let span = (window_end - window_start).num_seconds();
        let relevant = poisson(&mut art_rng, cfg.articles_per_day * (1.0 + 0.2 * attention[t]).max(0.2));
        let rejected = poisson(&mut art_rng, cfg.rejected_per_day);
        for i in 0..relevant + rejected {
            let offset = art_rng.random_range(1..=span);
            let instant = window_start + Duration::seconds(offset);
            let kind = if i < relevant {
                ArticleKind::Relevant
            } else {
                [ArticleKind::OtherOutlet, ArticleKind::Short, ArticleKind::OffTopic][art_rng.random_range(0..3)]
            };
            let id = format!("{}-{t}-{i}", day.format("%Y%m%d"));
            records.push(article(&mut art_rng, id, instant, kind, t, n, news_factor[t], attention[t]));
        }
    }
    records.sort_by(|a, b| a.publish_instant.cmp(&b.publish_instant).then(a.record_id.cmp(&b.record_id)));

    Ok(SynthDataset {
        calendar,
        panel,
        records,
        outlets: ALLOWED_OUTLETS.iter().map(|s| s.to_string()).collect(),
        news_factor,
        attention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArticleKind {
    Relevant,
    OtherOutlet,
    Short,
    OffTopic,
}

#[allow(clippy::too_many_arguments)]
fn article(
    rng: &mut ChaCha8Rng,
    record_id: String,
    publish_instant: NaiveDateTime,
    kind: ArticleKind,
    t: usize,
    n: usize,
    news: f64,
    attention: f64,
) -> GkgRecord {
    let outlet = match kind {
        ArticleKind::OtherOutlet => OTHER_OUTLETS[rng.random_range(0..OTHER_OUTLETS.len())],
        _ => ALLOWED_OUTLETS[rng.random_range(0..ALLOWED_OUTLETS.len())],
    };
    let word_count: u64 = match kind {
        ArticleKind::Short => rng.random_range(30..100),
        _ => rng.random_range(300..1500),
    };
    let wc = word_count as f64;
    let debt_mentions = match kind {
        ArticleKind::OffTopic => rng.random_range(0..3),
        _ => rng.random_range(4..8),
    };
    let mut offset = 0u64;
    let mut mention = |code: &str, rng: &mut ChaCha8Rng| {
        offset += rng.random_range(20..400);
        ThemeMention {
            code: code.to_string(),
            offset,
        }
    };
    let mut theme_mentions = Vec::new();
    for _ in 0..debt_mentions {
        theme_mentions.push(mention(DEFAULT_TARGET_WB_THEMES[0], rng));
    }
    for _ in 0..poisson(rng, 1.0 + 0.5 * attention.max(0.0)) {
        theme_mentions.push(mention(DEFAULT_TARGET_WB_THEMES[1], rng));
    }
    for _ in 0..poisson(rng, (2.0 + 0.8 * news).max(0.1)) {
        theme_mentions.push(mention("EPU_POLICY_UNCERTAINTY", rng));
    }
    for _ in 0..poisson(rng, 1.5) {
        theme_mentions.push(mention("TAX_FNCACT_MINISTER", rng));
    }
    let mut wb_themes: Vec<String> = Vec::new();
    let mut gdelt_themes: Vec<String> = Vec::new();
    for m in &theme_mentions {
        let list = if m.code.starts_with("WB_") { &mut wb_themes } else { &mut gdelt_themes };
        if !list.contains(&m.code) {
            list.push(m.code.clone());
        }
    }

    let mut locations = vec!["IT".to_string(); rng.random_range(1..4)];
    locations.extend(vec!["GM".to_string(); poisson(rng, 1.0) as usize]);
    if rng.random_bool(0.3) {
        locations.push("FR".into());
    }
    let mut persons = Vec::new();
    if rng.random_bool(0.5) {
        persons.push("mario draghi".to_string());
    }
    if rng.random_bool(0.2 + 0.15 * (attention + 1.0).clamp(0.0, 2.0)) {
        persons.push("giuseppe conte".to_string());
    }
    let mut organizations = vec!["european central bank".to_string()];
    if rng.random_bool(0.4) {
        organizations.push("european commission".to_string());
    }

    let mut gcam = std::collections::BTreeMap::new();
    let mut count = |code: &str, v: u64| {
        gcam.insert(code.to_string(), GcamValue::Count(v));
    };
    let negative = poisson(rng, wc * 0.02 * (0.35 * news).exp());
    count("c2.168", negative);
    count("c2.14", poisson(rng, wc * 0.015 * (-0.25 * news).exp()));
    // near-copy of the negative-tone count, for the correlation filter
    count("c3.1", (0.8 * negative as f64).round() as u64 + poisson(rng, 0.5));
    count("c1.2", poisson(rng, wc * 0.01));
    count("c5.7", poisson(rng, wc * 0.012 * (0.3 * attention).exp()));
    // tiny counts, for the variance filter
    count("c7.1", u64::from(rng.random_bool(0.3)));
    // rarely present, for the availability filter
    if rng.random_bool(0.03) {
        count("c9.9", poisson(rng, 5.0));
    }
    // only present in the later part of the sample
    if t >= n / 2 {
        count("c12.1", poisson(rng, wc * 0.01));
    }
    let score = 5.0 - 0.5 * news + Normal::new(0.0, 0.5).expect("valid sd").sample(rng);
    gcam.insert("v19.1".into(), GcamValue::Score((score * 1000.0).round() / 1000.0));

    GkgRecord {
        document_id: format!("https://{outlet}/articles/{record_id}"),
        record_id,
        publish_instant,
        outlet: outlet.to_string(),
        wb_themes,
        gdelt_themes,
        theme_mentions,
        locations,
        persons,
        organizations,
        gcam_counts: gcam,
        word_count,
    }
}

/// Write the dataset as `calendar.txt`, `yields.csv`, `outlets.txt`,
/// `latent.csv` and monthly zipped GKG files under `gkg/`.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    formats::ensure_dir(dir)?;
    let gkg_dir = dir.join("gkg");
    formats::ensure_dir(&gkg_dir)?;
    let mut written = Vec::new();

    let cal = dir.join("calendar.txt");
    formats::write_calendar(&cal, &ds.calendar)?;
    written.push(cal);
    let yields = dir.join("yields.csv");
    formats::write_yields(&yields, &ds.panel)?;
    written.push(yields);
    let outlets = dir.join("outlets.txt");
    let mut text = ds.outlets.join("\n");
    text.push('\n');
    formats::write_bytes(&outlets, text.as_bytes())?;
    written.push(outlets);
    let latent = dir.join("latent.csv");
    let table = formats::DatedTable::from_columns(
        ds.calendar.clone(),
        vec![
            ("news_factor".into(), ds.news_factor.clone()),
            ("attention".into(), ds.attention.clone()),
        ],
    )?;
    formats::write_dated_table(&latent, &table)?;
    written.push(latent);

    let mut by_month: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
    for r in &ds.records {
        let text = by_month.entry(r.publish_instant.format("%Y%m").to_string()).or_default();
        text.push_str(&r.to_gkg_line());
        text.push('\n');
    }
    for (month, text) in by_month {
        let path = gkg_dir.join(format!("{month}01000000.gkg.csv.zip"));
        write_zip(&path, &format!("{month}01000000.gkg.csv"), text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn write_zip(path: &Path, entry: &str, bytes: &[u8]) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    {
        let mut zip = zip::ZipWriter::new(&mut buf);
        let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
        zip.start_file(entry, opts)
            .map_err(|e| Error::format(path, e.to_string()))?;
        zip.write_all(bytes).map_err(|e| Error::io(path, e))?;
        zip.finish().map_err(|e| Error::format(path, e.to_string()))?;
    }
    formats::write_bytes(path, &buf.into_inner())
}

/// `y_t = sum_j w_j z_{j,t} + noise` with `k` AR(1) covariates; returns the
/// target and the covariate rows.
pub fn covariate_driven_series(seed: u64, n: usize, weights: &[f64], noise_sd: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = rng_from_seed(derive_seed_labeled(seed, "covariate-driven"));
    let cols: Vec<Vec<f64>> = weights.iter().map(|_| ar1(&mut rng, n, 0.5)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
    let y = rows
        .iter()
        .map(|z| z.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + noise_sd * normal(&mut rng))
        .collect();
    (y, rows)
}

/// `y_t = phi y_{t-1} + sum_j w_j z_{j,t} + noise`: serial dependence that a
/// model without lagged targets cannot see, plus covariates both can use.
pub fn ar1_with_covariates(
    seed: u64,
    n: usize,
    phi: f64,
    weights: &[f64],
    noise_sd: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = rng_from_seed(derive_seed_labeled(seed, "ar1-covariates"));
    let cols: Vec<Vec<f64>> = weights.iter().map(|_| ar1(&mut rng, n, 0.3)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
    let mut y = Vec::with_capacity(n);
    let mut prev = 0.0;
    for z in &rows {
        let v = phi * prev + z.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + noise_sd * normal(&mut rng);
        y.push(v);
        prev = v;
    }
    (y, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_skips_weekends_and_holidays() {
        let cal = trading_calendar(NaiveDate::from_ymd_opt(2019, 12, 23).unwrap(), 5);
        let want: Vec<NaiveDate> = [(12, 23), (12, 27), (12, 30)]
            .iter()
            .map(|&(m, d)| NaiveDate::from_ymd_opt(2019, m, d).unwrap())
            .chain([(1, 2), (1, 3)].iter().map(|&(m, d)| NaiveDate::from_ymd_opt(2020, m, d).unwrap()))
            .collect();
        assert_eq!(cal, want);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = SynthConfig {
            n_days: 40,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.calendar.len(), 40);
        a.panel.validate().unwrap();
        for r in &a.records {
            let parsed = spreadcast_core::gkg::parse_gkg_record(&r.to_gkg_line()).unwrap();
            assert_eq!(&parsed.record, r);
        }
        let other = generate(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.records, other.records);
    }
}
