//! Spread target construction and Nelson-Siegel factor extraction.
//!
//! Maturities are expressed in months so that the default decay
//! `lambda = 0.0609` matches the Diebold-Li convention. For each day the
//! spread curve is regressed on `[1, L1(tau), L2(tau)]`; the three
//! coefficients are the level, slope and curvature factors.

#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_LAMBDA: f64 = 0.0609;

/// Below this value of `lambda * tau` the loadings use their Taylor expansion.
const SMALL_DECAY: f64 = 1e-6;

/// Daily Italian and German yield curves on a shared maturity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCurvePanel {
    pub days: Vec<NaiveDate>,
    /// Maturities in months, strictly increasing.
    pub maturities: Vec<f64>,
    /// Row-major `days x maturities`, percent.
    pub yields_it: Vec<f64>,
    pub yields_de: Vec<f64>,
}

impl YieldCurvePanel {
    pub fn validate(&self) -> Result<()> {
        let cells = self.days.len() * self.maturities.len();
        if self.yields_it.len() != cells || self.yields_de.len() != cells {
            return Err(Error::Alignment(format!(
                "expected {} x {} yields, got {} (IT) and {} (DE)",
                self.days.len(),
                self.maturities.len(),
                self.yields_it.len(),
                self.yields_de.len()
            )));
        }
        if self.maturities.iter().any(|m| !(*m > 0.0))
            || self.maturities.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Alignment(
                "maturities must be positive and strictly increasing".into(),
            ));
        }
        if self.days.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Alignment("days must be strictly increasing".into()));
        }
        if let Some(d) = self
            .days
            .iter()
            .find(|d| matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        {
            return Err(Error::Alignment(format!("weekend row {d} in yield panel")));
        }
        if self
            .yields_it
            .iter()
            .chain(&self.yields_de)
            .any(|y| !y.is_finite())
        {
            return Err(Error::Parameter("yields must be finite".into()));
        }
        Ok(())
    }
}

/// Element-wise `yields_it - yields_de`, one row per day.
pub fn compute_spreads(panel: &YieldCurvePanel) -> Result<Vec<Vec<f64>>> {
    panel.validate()?;
    let width = panel.maturities.len();
    Ok(panel
        .yields_it
        .chunks(width)
        .zip(panel.yields_de.chunks(width))
        .map(|(it, de)| it.iter().zip(de).map(|(a, b)| a - b).collect())
        .collect())
}

/// `out[t] = ln(x[t + 1]) - ln(x[t])`.
pub fn log_diff(series: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = series.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive {
            index,
            date: None,
            value,
        });
    }
    Ok(series.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
}

/// Median and interquartile range recorded by [`robust_scale`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScaleState {
    pub median: f64,
    pub iqr: f64,
}

impl RobustScaleState {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.median) / self.iqr
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * self.iqr + self.median
    }
}

/// `(x - median) / IQR` with linearly interpolated quartiles.
pub fn robust_scale(series: &[f64]) -> Result<(Vec<f64>, RobustScaleState)> {
    if series.is_empty() {
        return Err(Error::Parameter("cannot scale an empty series".into()));
    }
    let mut sorted = series.to_vec();
    stats::sort_floats(&mut sorted);
    let median = stats::quantile_sorted(&sorted, 0.5);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    if !(iqr > 0.0) {
        return Err(Error::DegenerateScale);
    }
    let state = RobustScaleState { median, iqr };
    Ok((series.iter().map(|x| state.apply(*x)).collect(), state))
}

/// Spread levels at one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadSeries {
    pub days: Vec<NaiveDate>,
    pub maturity_months: f64,
    pub values: Vec<f64>,
}

/// The forecasting target: robust-scaled log changes of the spread, indexed
/// by the day on which each change is realised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub days: Vec<NaiveDate>,
    pub log_changes: Vec<f64>,
    pub values: Vec<f64>,
    pub transform_state: RobustScaleState,
}

impl SpreadSeries {
    /// Extract the spread at `maturity_months` (must be on the panel grid).
    pub fn from_panel(panel: &YieldCurvePanel, maturity_months: f64) -> Result<Self> {
        let spreads = compute_spreads(panel)?;
        let col = panel
            .maturities
            .iter()
            .position(|m| (m - maturity_months).abs() < 1e-9)
            .ok_or_else(|| {
                Error::Parameter(format!("maturity {maturity_months} not on the panel grid"))
            })?;
        Ok(Self {
            days: panel.days.clone(),
            maturity_months,
            values: spreads.iter().map(|row| row[col]).collect(),
        })
    }

    pub fn to_target(&self) -> Result<TargetSeries> {
        if self.values.len() < 3 {
            return Err(Error::Parameter("need at least three spread levels".into()));
        }
        let log_changes = log_diff(&self.values).map_err(|e| match e {
            Error::NonPositive { index, value, .. } => Error::NonPositive {
                index,
                date: self.days.get(index).copied(),
                value,
            },
            other => other,
        })?;
        let (values, transform_state) = robust_scale(&log_changes)?;
        Ok(TargetSeries {
            days: self.days[1..].to_vec(),
            log_changes,
            values,
            transform_state,
        })
    }
}

/// Nelson-Siegel loadings `(1, L1, L2)` for maturity `tau` (months).
pub fn ns_loadings(tau: f64, lambda: f64) -> (f64, f64, f64) {
    let x = lambda * tau;
    if x < SMALL_DECAY {
        let l1 = 1.0 - x / 2.0 + x * x / 6.0;
        let l2 = x / 2.0 - x * x / 3.0;
        return (1.0, l1, l2);
    }
    let decay = (-x).exp();
    let l1 = -(-x).exp_m1() / x;
    (1.0, l1, l1 - decay)
}

/// Per-day level, slope and curvature estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsFactors {
    pub days: Vec<NaiveDate>,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub lambda: f64,
}

impl NsFactors {
    /// Rows of `[beta0, beta1, beta2]`.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        (0..self.beta0.len())
            .map(|i| [self.beta0[i], self.beta1[i], self.beta2[i]])
            .collect()
    }
}

/// Design matrix `[1, L1(tau), L2(tau)]` over the maturity grid.
pub fn ns_design(maturities: &[f64], lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(maturities.len(), 3, |r, c| {
        let (l0, l1, l2) = ns_loadings(maturities[r], lambda);
        [l0, l1, l2][c]
    })
}

/// Per-day OLS of the spread curve on the Nelson-Siegel loadings, solved by a
/// Householder QR of the (shared) design.
pub fn fit_ns_factors(
    days: &[NaiveDate],
    spreads: &[Vec<f64>],
    maturities: &[f64],
    lambda: f64,
) -> Result<NsFactors> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    if maturities.len() < 3 {
        return Err(Error::Parameter("need at least three maturities per day".into()));
    }
    if days.len() != spreads.len() {
        return Err(Error::Alignment(format!(
            "{} days but {} spread rows",
            days.len(),
            spreads.len()
        )));
    }
    let design = ns_design(maturities, lambda);
    let qr = design.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let singular = r
        .diagonal()
        .iter()
        .any(|v| v.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
    let q = qr.q();

    let mut out = NsFactors {
        days: days.to_vec(),
        beta0: Vec::with_capacity(days.len()),
        beta1: Vec::with_capacity(days.len()),
        beta2: Vec::with_capacity(days.len()),
        lambda,
    };
    for (row, curve) in spreads.iter().enumerate() {
        if curve.len() != maturities.len() {
            return Err(Error::Alignment(format!(
                "row {row} has {} values for {} maturities",
                curve.len(),
                maturities.len()
            )));
        }
        if singular {
            return Err(Error::SingularFit { row });
        }
        let y = DVector::from_column_slice(curve);
        let qty = q.transpose() * y;
        let beta = r
            .solve_upper_triangular(&qty)
            .ok_or(Error::SingularFit { row })?;
        out.beta0.push(beta[0]);
        out.beta1.push(beta[1]);
        out.beta2.push(beta[2]);
    }
    Ok(out)
}
