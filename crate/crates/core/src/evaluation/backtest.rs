use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::inference::{dm_test, fluctuation_test, DmResult, TestResult};
use super::metrics::{check_loss, r2, rmse, smape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    /// Estimation-window length; observations `t0..` are out of sample.
    pub t0: usize,
    pub quantiles: Vec<f64>,
    /// Fluctuation window as a fraction of the out-of-sample length.
    pub mu: f64,
    pub hac_lags: usize,
    /// Nominal two-sided size of the fluctuation test.
    pub size: f64,
    /// Model pairs `[a, b]` to compare with DM and fluctuation tests.
    pub pairs: Vec<[String; 2]>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            t0: 586,
            quantiles: alloc::vec![0.1, 0.3, 0.5, 0.7, 0.9],
            mu: 0.30,
            hac_lags: 1,
            size: 0.05,
            pairs: Vec::new(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Config(format!("mu = {} must lie in (0, 1)", self.mu)));
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Config("quantiles must lie strictly inside (0, 1)".into()));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("quantiles must be strictly increasing".into()));
        }
        if !self.quantiles.iter().any(|q| (q - 0.5).abs() < 1e-12) {
            return Err(Error::Config("quantiles must include the median 0.5".into()));
        }
        Ok(())
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.t0 >= n {
            return Err(Error::Config(format!("t0 = {} leaves no out-of-sample days in {n}", self.t0)));
        }
        Ok(())
    }

    fn median_index(&self) -> usize {
        self.quantiles
            .iter()
            .position(|q| (q - 0.5).abs() < 1e-12)
            .expect("validated")
    }
}

/// Observed target with its trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestData {
    pub days: Vec<NaiveDate>,
    pub actual: Vec<f64>,
}

/// A model that can issue one-step-ahead quantile forecasts.
pub trait ForecastProvider {
    fn name(&self) -> &str;

    /// Forecasts of observation `t` (trading day `day`) at each level in
    /// `quantiles`, using information up to `t - 1` only.
    fn forecast_quantiles(&self, t: usize, day: NaiveDate, quantiles: &[f64]) -> Result<Vec<f64>>;
}

/// Precomputed quantile forecasts keyed by trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecasts {
    pub name: String,
    pub quantiles: Vec<f64>,
    pub days: Vec<NaiveDate>,
    /// `values[i][k]`: forecast for `days[i]` at `quantiles[k]`.
    pub values: Vec<Vec<f64>>,
}

impl ForecastProvider for QuantileForecasts {
    fn name(&self) -> &str {
        &self.name
    }

    fn forecast_quantiles(&self, _t: usize, day: NaiveDate, quantiles: &[f64]) -> Result<Vec<f64>> {
        let i = self
            .days
            .binary_search(&day)
            .map_err(|_| Error::Alignment(format!("model {} has no forecast for {day}", self.name)))?;
        quantiles
            .iter()
            .map(|q| {
                self.quantiles
                    .iter()
                    .position(|p| (p - q).abs() < 1e-12)
                    .map(|k| self.values[i][k])
                    .ok_or_else(|| Error::Alignment(format!("model {} has no {q} quantile", self.name)))
            })
            .collect()
    }
}

/// Check losses of one model at one quantile level over the out-of-sample
/// days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub model: String,
    pub quantile: f64,
    pub losses: Vec<f64>,
}

/// Check loss summed over the out-of-sample days (mean loss times the
/// number of days), one entry per quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLossRow {
    pub model: String,
    pub losses: Vec<f64>,
}

/// Point metrics of the median forecast. `r2` is absent when the
/// out-of-sample target is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetricsRow {
    pub model: String,
    pub rmse: f64,
    pub smape: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub model_a: String,
    pub model_b: String,
    pub quantile: f64,
    pub dm: DmResult,
    pub fluctuation: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub quantiles: Vec<f64>,
    pub t0: usize,
    pub days: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub models: Vec<String>,
    /// Per model: `forecasts[model][i][k]` for out-of-sample day `i` and
    /// quantile `k`.
    pub forecasts: BTreeMap<String, Vec<Vec<f64>>>,
    pub losses: Vec<LossSeries>,
    pub quantile_losses: Vec<QuantileLossRow>,
    pub point_metrics: Vec<PointMetricsRow>,
    pub tests: Vec<PairTest>,
}

impl BacktestReport {
    pub fn loss_series(&self, model: &str, q: f64) -> Option<&LossSeries> {
        self.losses
            .iter()
            .find(|s| s.model == model && (s.quantile - q).abs() < 1e-12)
    }
}

/// Score every provider on the out-of-sample days `cfg.t0..n`: check losses
/// per quantile, median-forecast point metrics, and the requested pairwise
/// DM and fluctuation tests.
pub fn rolling_backtest(
    providers: &[&dyn ForecastProvider],
    data: &BacktestData,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    if data.days.len() != data.actual.len() {
        return Err(Error::Alignment(format!(
            "{} days for {} observations",
            data.days.len(),
            data.actual.len()
        )));
    }
    let n = data.actual.len();
    cfg.validate_for(n)?;
    let mut names: Vec<String> = Vec::new();
    for p in providers {
        if names.iter().any(|n| n == p.name()) {
            return Err(Error::Config(format!("duplicate model name {}", p.name())));
        }
        names.push(p.name().to_string());
    }
    let qs = &cfg.quantiles;
    let actual = &data.actual[cfg.t0..];
    let mut forecasts = BTreeMap::new();
    let mut losses = Vec::new();
    let mut quantile_losses = Vec::new();
    let mut point_metrics = Vec::new();
    for p in providers {
        let f: Vec<Vec<f64>> = (cfg.t0..n)
            .map(|t| {
                let v = p.forecast_quantiles(t, data.days[t], qs)?;
                if v.len() != qs.len() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Shape(format!("model {} returned an invalid forecast for {}", p.name(), data.days[t])));
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(qs.len());
        for (k, &q) in qs.iter().enumerate() {
            let l: Vec<f64> = actual.iter().zip(&f).map(|(y, fv)| check_loss(y - fv[k], q)).collect();
            row.push(l.iter().sum::<f64>());
            losses.push(LossSeries {
                model: p.name().to_string(),
                quantile: q,
                losses: l,
            });
        }
        quantile_losses.push(QuantileLossRow {
            model: p.name().to_string(),
            losses: row,
        });
        let median: Vec<f64> = f.iter().map(|v| v[cfg.median_index()]).collect();
        point_metrics.push(PointMetricsRow {
            model: p.name().to_string(),
            rmse: rmse(actual, &median)?,
            smape: smape(actual, &median)?,
            r2: r2(actual, &median).ok(),
        });
        forecasts.insert(p.name().to_string(), f);
    }

    let mut tests = Vec::new();
    for [a, b] in &cfg.pairs {
        for name in [a, b] {
            if !names.contains(name) {
                return Err(Error::Config(format!("test pair names unknown model {name}")));
            }
        }
        for &q in qs {
            let la = &losses.iter().find(|s| &s.model == a && s.quantile == q).expect("scored").losses;
            let lb = &losses.iter().find(|s| &s.model == b && s.quantile == q).expect("scored").losses;
            tests.push(PairTest {
                model_a: a.clone(),
                model_b: b.clone(),
                quantile: q,
                dm: dm_test(la, lb, cfg.hac_lags)?,
                fluctuation: fluctuation_test(la, lb, cfg.mu, cfg.hac_lags, cfg.size)?,
            });
        }
    }

    Ok(BacktestReport {
        quantiles: qs.clone(),
        t0: cfg.t0,
        days: data.days[cfg.t0..].to_vec(),
        actual: actual.to_vec(),
        models: names,
        forecasts,
        losses,
        quantile_losses,
        point_metrics,
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Oracle<'a>(&'a [f64]);
    impl ForecastProvider for Oracle<'_> {
        fn name(&self) -> &str {
            "oracle"
        }
        fn forecast_quantiles(&self, t: usize, _: NaiveDate, qs: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![self.0[t]; qs.len()])
        }
    }

    struct Noise(&'static str);
    impl ForecastProvider for Noise {
        fn name(&self) -> &str {
            self.0
        }
        fn forecast_quantiles(&self, t: usize, _: NaiveDate, qs: &[f64]) -> Result<Vec<f64>> {
            Ok(qs.iter().map(|q| (t as f64 * 0.7).sin() + q - 0.5).collect())
        }
    }

    fn data(n: usize) -> BacktestData {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        BacktestData {
            days: (0..n).map(|i| start + chrono::Days::new(i as u64)).collect(),
            actual: (0..n).map(|i| (i as f64 * 0.3).cos()).collect(),
        }
    }

    #[test]
    fn one_out_of_sample_day() {
        let d = data(11);
        let cfg = BacktestConfig {
            t0: 10,
            ..Default::default()
        };
        let r = rolling_backtest(&[&Noise("n")], &d, &cfg).unwrap();
        assert_eq!(r.quantile_losses.len(), 1);
        assert_eq!(r.losses[0].losses.len(), 1);
        assert_eq!(r.point_metrics[0].r2, None);
    }

    #[test]
    fn oracle_beats_noise_and_identical_models_tie() {
        let d = data(80);
        let cfg = BacktestConfig {
            t0: 40,
            pairs: vec![["a".into(), "b".into()], ["oracle".into(), "a".into()]],
            ..Default::default()
        };
        let o = Oracle(&d.actual);
        let r = rolling_backtest(&[&o, &Noise("a"), &Noise("b")], &d, &cfg).unwrap();
        for k in 0..5 {
            assert!(r.quantile_losses[0].losses[k] < r.quantile_losses[1].losses[k]);
        }
        assert!(r.point_metrics[0].rmse < r.point_metrics[1].rmse);
        assert!(r.point_metrics[0].smape < r.point_metrics[1].smape);
        assert!(r.point_metrics[0].r2.unwrap() > r.point_metrics[1].r2.unwrap());
        for t in r.tests.iter().filter(|t| t.model_a == "a") {
            assert_eq!(t.dm.statistic, 0.0);
            assert!(t.dm.degenerate);
        }
        let median = r.loss_series("oracle", 0.5).unwrap();
        assert!(median.losses.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn loss_table_is_summed() {
        let d = data(30);
        let cfg = BacktestConfig {
            t0: 20,
            ..Default::default()
        };
        let r = rolling_backtest(&[&Noise("n")], &d, &cfg).unwrap();
        let s = r.loss_series("n", 0.3).unwrap();
        assert!((r.quantile_losses[0].losses[1] - s.losses.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn misaligned_provider_is_rejected() {
        let d = data(30);
        let f = QuantileForecasts {
            name: "pre".into(),
            quantiles: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            days: d.days[21..].to_vec(),
            values: vec![vec![0.0; 5]; 9],
        };
        let cfg = BacktestConfig {
            t0: 20,
            ..Default::default()
        };
        assert!(matches!(rolling_backtest(&[&f], &d, &cfg), Err(Error::Alignment(_))));
    }
}
