#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;

use crate::error::{Error, Result};

/// Check (pinball) loss `(q - 1{z < 0}) * z` of the error `z = y - forecast`.
pub fn check_loss(z: f64, q: f64) -> f64 {
    debug_assert!(q > 0.0 && q < 1.0, "quantile level {q} outside (0, 1)");
    if z < 0.0 {
        (q - 1.0) * z
    } else {
        q * z
    }
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Alignment(format!("{} observations for {} forecasts", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(Error::Parameter("no observations".into()));
    }
    Ok(())
}

/// Mean check loss of the forecasts `yhat` for observations `y`.
pub fn mean_check_loss(y: &[f64], yhat: &[f64], q: f64) -> Result<f64> {
    check_pair(y, yhat)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("quantile level {q} outside (0, 1)")));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| check_loss(a - b, q)).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Mean of `2|yhat - y| / (|y| + |yhat|)`, with `0/0` cells counted as 0.
/// Values lie in `[0, 2]`.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let den = a.abs() + b.abs();
            if den == 0.0 {
                0.0
            } else {
                2.0 * (b - a).abs() / den
            }
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// `1 - SSE / SST`; undefined for fewer than two or constant observations.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let m = crate::stats::mean(y);
    let sst: f64 = y.iter().map(|a| (a - m) * (a - m)).sum();
    if y.len() < 2 || sst == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}
