//! On-disk formats: CSV tables, JSON sidecars and model checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use base64::Engine;
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spreadcast_core::deepar::{DeepArModel, DeepArNetwork, Likelihood, NetworkConfig};
use spreadcast_core::evaluation::{BacktestReport, QuantileForecasts};
use spreadcast_core::features::{FeatureMatrix, FeatureMeta};
use spreadcast_core::gkg::DailyAggregate;
use spreadcast_core::term_structure::YieldCurvePanel;

use crate::error::{Error, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Lower-case hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_date(path: &Path, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::format(path, format!("bad date {s:?}: {e}")))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::format(path, format!("bad number {s:?}")))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Numeric columns indexed by trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedTable {
    pub days: Vec<NaiveDate>,
    pub columns: Vec<String>,
    /// `rows[i][j]`: value of `columns[j]` on `days[i]`.
    pub rows: Vec<Vec<f64>>,
}

impl DatedTable {
    pub fn from_columns(days: Vec<NaiveDate>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if columns.iter().any(|(_, c)| c.len() != days.len()) {
            return Err(Error::Config("table columns differ in length from the day index".into()));
        }
        let rows = (0..days.len()).map(|i| columns.iter().map(|(_, c)| c[i]).collect()).collect();
        Ok(Self {
            days,
            columns: columns.into_iter().map(|(n, _)| n).collect(),
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// `date,<columns...>` with one row per day.
pub fn write_dated_table(path: &Path, t: &DatedTable) -> Result<()> {
    let header: Vec<String> = std::iter::once("date".to_string()).chain(t.columns.iter().cloned()).collect();
    write_rows(
        path,
        &header,
        t.days.iter().zip(&t.rows).map(|(d, r)| {
            std::iter::once(d.to_string()).chain(r.iter().map(|v| num(*v))).collect()
        }),
    )
}

pub fn read_dated_table(path: &Path) -> Result<DatedTable> {
    let mut r = csv_reader(path)?;
    let header = r.headers().map_err(|e| Error::format(path, e))?.clone();
    if header.get(0) != Some("date") {
        return Err(Error::format(path, "first column must be `date`"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut days = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        days.push(parse_date(path, &rec[0])?);
        rows.push(rec.iter().skip(1).map(|s| parse_f64(path, s)).collect::<Result<Vec<_>>>()?);
    }
    Ok(DatedTable { days, columns, rows })
}

/// A feature table together with the per-day article counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub matrix: FeatureMatrix,
    pub article_counts: Vec<u64>,
}

impl FeatureTable {
    pub fn from_daily(aggregates: &[DailyAggregate]) -> Result<Self> {
        Ok(Self {
            matrix: FeatureMatrix::from_daily(aggregates)?,
            article_counts: aggregates.iter().map(|a| a.article_count).collect(),
        })
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// `trading_day,article_count,<feature keys...>`, empty cells for missing
/// values, plus a JSON sidecar mapping each key to its category.
pub fn write_feature_table(path: &Path, t: &FeatureTable) -> Result<()> {
    let m = &t.matrix;
    let header: Vec<String> = ["trading_day", "article_count"]
        .into_iter()
        .map(str::to_string)
        .chain(m.feature_keys().iter().cloned())
        .collect();
    write_rows(
        path,
        &header,
        (0..m.n_days()).map(|i| {
            [m.days()[i].to_string(), t.article_counts[i].to_string()]
                .into_iter()
                .chain((0..m.n_features()).map(|j| m.get(i, j).map(num).unwrap_or_default()))
                .collect()
        }),
    )?;
    let meta: BTreeMap<&String, &FeatureMeta> = m.feature_keys().iter().zip(m.metadata()).collect();
    write_json(&sidecar_path(path), &meta)
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let mut r = csv_reader(path)?;
    let header = r.headers().map_err(|e| Error::format(path, e))?.clone();
    if header.get(0) != Some("trading_day") || header.get(1) != Some("article_count") {
        return Err(Error::format(path, "header must start with trading_day,article_count"));
    }
    let keys: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut days = Vec::new();
    let mut counts = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); keys.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        days.push(parse_date(path, &rec[0])?);
        counts.push(
            rec[1]
                .parse::<u64>()
                .map_err(|e| Error::format(path, format!("bad article count: {e}")))?,
        );
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(j + 2).unwrap_or("");
            col.push(if cell.is_empty() { None } else { Some(parse_f64(path, cell)?) });
        }
    }
    let matrix = FeatureMatrix::from_columns(days, keys.into_iter().zip(cols).collect())?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: BTreeMap<String, FeatureMeta> = read_json(&side)?;
        for (k, m) in matrix.feature_keys().iter().zip(matrix.metadata()) {
            if meta.get(k).is_some_and(|s| s != m) {
                return Err(Error::format(&side, format!("metadata for {k} disagrees with its key")));
            }
        }
    }
    Ok(FeatureTable {
        matrix,
        article_counts: counts,
    })
}

/// Long-format yields `date,maturity_months,yield_it,yield_de`.
pub fn read_yields(path: &Path) -> Result<YieldCurvePanel> {
    let mut r = csv_reader(path)?;
    let mut cells: BTreeMap<NaiveDate, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    let mut maturities: BTreeMap<u64, f64> = BTreeMap::new();
    for rec in r.deserialize::<(String, f64, f64, f64)>() {
        let (d, m, it, de) = rec.map_err(|e| Error::format(path, e))?;
        let day = parse_date(path, &d)?;
        let key = m.to_bits();
        maturities.insert(key, m);
        if cells.entry(day).or_default().insert(key, (it, de)).is_some() {
            return Err(Error::format(path, format!("duplicate row for {day} at {m} months")));
        }
    }
    let mut mats: Vec<f64> = maturities.values().copied().collect();
    mats.sort_by(f64::total_cmp);
    let mut panel = YieldCurvePanel {
        days: Vec::with_capacity(cells.len()),
        maturities: mats.clone(),
        yields_it: Vec::new(),
        yields_de: Vec::new(),
    };
    for (day, row) in cells {
        for m in &mats {
            let (it, de) = row
                .get(&m.to_bits())
                .ok_or_else(|| Error::format(path, format!("{day} has no yield at {m} months")))?;
            panel.yields_it.push(*it);
            panel.yields_de.push(*de);
        }
        panel.days.push(day);
    }
    panel.validate()?;
    Ok(panel)
}

pub fn write_yields(path: &Path, p: &YieldCurvePanel) -> Result<()> {
    let header = ["date", "maturity_months", "yield_it", "yield_de"].map(str::to_string);
    let k = p.maturities.len();
    write_rows(
        path,
        &header,
        p.days.iter().enumerate().flat_map(|(i, d)| {
            p.maturities.iter().enumerate().map(move |(j, m)| {
                vec![d.to_string(), num(*m), num(p.yields_it[i * k + j]), num(p.yields_de[i * k + j])]
            })
        }),
    )
}

/// One trading day per line (`YYYY-MM-DD`); blank lines and `#` comments
/// are ignored.
pub fn read_calendar(path: &Path) -> Result<Vec<NaiveDate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "date")
        .map(|l| parse_date(path, l))
        .collect()
}

pub fn write_calendar(path: &Path, days: &[NaiveDate]) -> Result<()> {
    let mut text = String::new();
    for d in days {
        text.push_str(&d.to_string());
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

/// One outlet domain per line; blank lines and `#` comments are ignored.
pub fn read_outlets(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub const CHECKPOINT_FORMAT: &str = "spreadcast-deepar";
pub const CHECKPOINT_VERSION: u32 = 1;

/// DeepAR parameters and scaling state. The flat parameter vector is stored
/// as base64 of little-endian `f64`s so the file round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub likelihood: Likelihood,
    pub input_size: usize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub n_params: usize,
    pub params: String,
    pub target_shift: f64,
    pub target_scale: f64,
    pub covariate_shift: Vec<f64>,
    pub covariate_scale: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub best_epoch: Option<usize>,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Option<Vec<f64>> {
    let bytes = base64::engine::general_purpose::STANDARD.decode(text).ok()?;
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}

impl Checkpoint {
    pub fn from_model(model: &DeepArModel, covariate_names: &[String]) -> Self {
        let flat = model.network.flatten();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            likelihood: model.network.likelihood,
            input_size: model.network.input_size,
            num_layers: model.network.layers.len(),
            hidden_size: model.network.hidden_size(),
            n_params: flat.len(),
            params: encode_f64s(&flat),
            target_shift: model.target_shift,
            target_scale: model.target_scale,
            covariate_shift: model.covariate_shift.clone(),
            covariate_scale: model.covariate_scale.clone(),
            covariate_names: covariate_names.to_vec(),
            best_epoch: model.best_epoch,
        }
    }

    pub fn to_model(&self) -> std::result::Result<DeepArModel, String> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint {} v{}", self.format, self.version));
        }
        let flat = decode_f64s(&self.params).ok_or("parameters are not base64 f64 data")?;
        if flat.len() != self.n_params {
            return Err(format!("{} parameters stored, header says {}", flat.len(), self.n_params));
        }
        let mut network = DeepArNetwork::zeros(self.likelihood, self.input_size, self.num_layers, self.hidden_size);
        network.assign_flat(&flat).map_err(|e| e.to_string())?;
        Ok(DeepArModel {
            config: self.config.clone(),
            network,
            target_shift: self.target_shift,
            target_scale: self.target_scale,
            covariate_shift: self.covariate_shift.clone(),
            covariate_scale: self.covariate_scale.clone(),
            loss_trace: Vec::new(),
            validation_trace: Vec::new(),
            best_epoch: self.best_epoch,
        })
    }
}

pub fn write_checkpoint(path: &Path, model: &DeepArModel, covariate_names: &[String]) -> Result<()> {
    write_json(path, &Checkpoint::from_model(model, covariate_names))
}

pub fn read_checkpoint(path: &Path) -> Result<(DeepArModel, Vec<String>)> {
    let c: Checkpoint = read_json(path)?;
    let model = c.to_model().map_err(|e| Error::format(path, e))?;
    Ok((model, c.covariate_names))
}

/// `epoch,train_nll,validation_nll` (validation empty between checks).
pub fn write_loss_trace(path: &Path, model: &DeepArModel) -> Result<()> {
    let val: BTreeMap<usize, f64> = model.validation_trace.iter().copied().collect();
    let header = ["epoch", "train_nll", "validation_nll"].map(str::to_string);
    let n = model.loss_trace.len().max(val.keys().next_back().map_or(0, |e| e + 1));
    write_rows(
        path,
        &header,
        (0..n).map(|e| {
            vec![
                e.to_string(),
                model.loss_trace.get(e).map(|v| num(*v)).unwrap_or_default(),
                val.get(&e).map(|v| num(*v)).unwrap_or_default(),
            ]
        }),
    )
}

fn quantile_label(q: f64) -> String {
    format!("q{q}")
}

/// `date,actual,q0.1,...` for one model's out-of-sample forecasts.
pub fn write_forecasts(path: &Path, f: &QuantileForecasts, actual: &[f64]) -> Result<()> {
    let header: Vec<String> = ["date", "actual"]
        .into_iter()
        .map(str::to_string)
        .chain(f.quantiles.iter().map(|q| quantile_label(*q)))
        .collect();
    write_rows(
        path,
        &header,
        f.days.iter().zip(&f.values).zip(actual).map(|((d, v), a)| {
            [d.to_string(), num(*a)].into_iter().chain(v.iter().map(|x| num(*x))).collect()
        }),
    )
}

/// Read forecasts written by [`write_forecasts`]; returns them with the
/// actual values.
pub fn read_forecasts(path: &Path, name: &str) -> Result<(QuantileForecasts, Vec<f64>)> {
    let t = read_dated_table(path)?;
    if t.columns.first().map(String::as_str) != Some("actual") {
        return Err(Error::format(path, "second column must be `actual`"));
    }
    let quantiles = t.columns[1..]
        .iter()
        .map(|c| {
            c.strip_prefix('q')
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::format(path, format!("bad quantile column {c:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let actual = t.rows.iter().map(|r| r[0]).collect();
    let values = t.rows.iter().map(|r| r[1..].to_vec()).collect();
    Ok((
        QuantileForecasts {
            name: name.to_string(),
            quantiles,
            days: t.days,
            values,
        },
        actual,
    ))
}

/// Report JSON plus CSV views of the summed check loss per quantile, the
/// median-forecast metrics, the forecast paths and one fluctuation-path file
/// per tested pair.
pub fn write_backtest_report(dir: &Path, r: &BacktestReport) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let p = dir.join("report.json");
    write_json(&p, r)?;
    written.push(p);

    let p = dir.join("quantile_loss.csv");
    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(r.quantiles.iter().map(|q| format!("summed_check_loss_{}", quantile_label(*q))))
        .collect();
    write_rows(
        &p,
        &header,
        r.quantile_losses
            .iter()
            .map(|row| std::iter::once(row.model.clone()).chain(row.losses.iter().map(|v| num(*v))).collect()),
    )?;
    written.push(p);

    let p = dir.join("point_metrics.csv");
    let header = ["model", "rmse", "smape", "r2"].map(str::to_string);
    write_rows(
        &p,
        &header,
        r.point_metrics.iter().map(|row| {
            vec![row.model.clone(), num(row.rmse), num(row.smape), row.r2.map(num).unwrap_or_default()]
        }),
    )?;
    written.push(p);

    let p = dir.join("forecast_paths.csv");
    let mut header = vec!["date".to_string(), "actual".to_string()];
    for m in &r.models {
        for q in &r.quantiles {
            header.push(format!("{m}_{}", quantile_label(*q)));
        }
    }
    write_rows(
        &p,
        &header,
        r.days.iter().enumerate().map(|(i, d)| {
            let mut row = vec![d.to_string(), num(r.actual[i])];
            for m in &r.models {
                row.extend(r.forecasts[m][i].iter().map(|v| num(*v)));
            }
            row
        }),
    )?;
    written.push(p);

    let mut pairs: Vec<(&str, &str)> = r.tests.iter().map(|t| (t.model_a.as_str(), t.model_b.as_str())).collect();
    pairs.dedup();
    for (a, b) in pairs {
        let tests: Vec<_> = r.tests.iter().filter(|t| t.model_a == a && t.model_b == b).collect();
        let m = tests[0].fluctuation.window;
        let p = dir.join(format!("fluctuation_{a}_vs_{b}.csv"));
        let mut header = vec!["window_end".to_string()];
        header.extend(tests.iter().map(|t| format!("statistic_{}", quantile_label(t.quantile))));
        header.push("critical_value".into());
        write_rows(
            &p,
            &header,
            (0..tests[0].fluctuation.statistic.len()).map(|i| {
                let mut row = vec![r.days[i + m - 1].to_string()];
                row.extend(tests.iter().map(|t| num(t.fluctuation.statistic[i])));
                row.push(num(tests[0].fluctuation.critical_value));
                row
            }),
        )?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_base64_round_trip() {
        let v = vec![0.0, -0.0, 1.5, f64::MIN_POSITIVE, 1e300, -3.25e-7];
        let back = decode_f64s(&encode_f64s(&v)).unwrap();
        assert_eq!(
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(decode_f64s("AAA=").is_none());
    }
}
