use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::likelihood::DistParams;
use super::network::NetworkConfig;
use super::train::{n_covariates, train, DeepArModel};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derive_seed_labeled, rng_from_seed};

/// Default number of sample paths per forecast.
pub const DEFAULT_SAMPLES: usize = 200;

/// Monte-Carlo one-step predictive distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub params: DistParams,
    /// Draws in generation order.
    pub samples: Vec<f64>,
}

impl ForecastDistribution {
    /// Draw `n` values, each from its own RNG stream derived from `seed`.
    pub fn sample(params: DistParams, n: usize, seed: u64) -> Self {
        let samples = (0..n as u64)
            .map(|i| params.sample(&mut rng_from_seed(derive_seed(seed, i))))
            .collect();
        Self { params, samples }
    }

    /// Sample quantile by linear interpolation between order statistics.
    pub fn quantile(&self, q: f64) -> f64 {
        crate::stats::quantile(&self.samples, q)
    }

    pub fn quantiles(&self, qs: &[f64]) -> Vec<f64> {
        let mut sorted = self.samples.clone();
        crate::stats::sort_floats(&mut sorted);
        qs.iter().map(|&q| crate::stats::quantile_sorted(&sorted, q)).collect()
    }
}

/// Predictive distribution for the value after `history`, as `samples`
/// draws. See [`DeepArModel::predict_next`] for the covariate layout.
pub fn forecast_one_step(
    model: &DeepArModel,
    history: &[f64],
    history_covariates: &[Vec<f64>],
    covariates_next: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ForecastDistribution> {
    let params = model.predict_next(history, history_covariates, covariates_next)?;
    Ok(ForecastDistribution::sample(params, samples, seed))
}

/// One retraining point of a rolling evaluation: train on
/// `train_start..forecast_start`, then forecast each day in
/// `forecast_start..forecast_end` from all data before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingFit {
    pub train_start: usize,
    pub forecast_start: usize,
    pub forecast_end: usize,
}

/// Retraining schedule for `n` observations with estimation window `t0`
/// and a refit every `stride` out-of-sample days.
pub fn rolling_plan(n: usize, t0: usize, stride: usize) -> Result<Vec<RollingFit>> {
    if t0 == 0 || t0 >= n {
        return Err(Error::Parameter(format!("window {t0} must lie in 1..{n}")));
    }
    if stride == 0 {
        return Err(Error::Parameter("retrain stride must be positive".into()));
    }
    Ok((t0..n)
        .step_by(stride)
        .map(|s| RollingFit {
            train_start: s - t0,
            forecast_start: s,
            forecast_end: (s + stride).min(n),
        })
        .collect())
}

/// Seeds for one rolling fit, derived from the run seed and the fit's
/// position so results do not depend on execution order.
pub fn rolling_seeds(seed: u64, fit: &RollingFit) -> (u64, u64) {
    let pos = fit.forecast_start as u64;
    (
        derive_seed(derive_seed_labeled(seed, "train"), pos),
        derive_seed(derive_seed_labeled(seed, "sample"), pos),
    )
}

/// Train for one rolling fit and forecast its block of days.
pub fn run_rolling_fit(
    fit: &RollingFit,
    target: &[f64],
    covariates: &[Vec<f64>],
    cfg: &NetworkConfig,
    samples: usize,
    seed: u64,
) -> Result<Vec<ForecastDistribution>> {
    fit_and_forecast(fit, target, covariates, cfg, samples, seed).map(|(_, d)| d)
}

/// As [`run_rolling_fit`], also returning the trained model.
pub fn fit_and_forecast(
    fit: &RollingFit,
    target: &[f64],
    covariates: &[Vec<f64>],
    cfg: &NetworkConfig,
    samples: usize,
    seed: u64,
) -> Result<(DeepArModel, Vec<ForecastDistribution>)> {
    let k = n_covariates(target.len(), covariates)?;
    let (train_seed, sample_seed) = rolling_seeds(seed, fit);
    let window = fit.train_start..fit.forecast_start;
    let cov_window = if k == 0 { &[][..] } else { &covariates[window.clone()] };
    let fit_cfg = NetworkConfig {
        seed: train_seed,
        ..cfg.clone()
    };
    let wrap = |e: Error| Error::Rolling {
        position: fit.forecast_start,
        source: Box::new(e),
    };
    let model = train(&target[window], cov_window, &fit_cfg).map_err(wrap)?;
    let dists = (fit.forecast_start..fit.forecast_end)
        .map(|t| {
            let (hc, next): (&[Vec<f64>], &[f64]) = if k == 0 {
                (&[], &[])
            } else {
                (&covariates[..t], &covariates[t])
            };
            forecast_one_step(&model, &target[..t], hc, next, samples, derive_seed(sample_seed, t as u64))
                .map_err(wrap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((model, dists))
}

/// One-step-ahead distributions for every day in `t0..n`, retraining every
/// `stride` days on the preceding `t0` observations (`stride = 1` refits
/// daily).
pub fn rolling_forecast(
    target: &[f64],
    covariates: &[Vec<f64>],
    t0: usize,
    stride: usize,
    cfg: &NetworkConfig,
    samples: usize,
    seed: u64,
) -> Result<Vec<ForecastDistribution>> {
    let mut out = Vec::with_capacity(target.len().saturating_sub(t0));
    for fit in rolling_plan(target.len(), t0, stride)? {
        out.extend(run_rolling_fit(&fit, target, covariates, cfg, samples, seed)?);
    }
    Ok(out)
}
