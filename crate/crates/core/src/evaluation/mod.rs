//! Out-of-sample evaluation: check loss and point metrics, Diebold-Mariano
//! and fluctuation tests, rolling backtests and Kernel SHAP attribution.

mod backtest;
mod metrics;
mod shap;
mod inference;

pub use backtest::{
    rolling_backtest, BacktestConfig, BacktestData, BacktestReport, ForecastProvider, LossSeries, PairTest,
    QuantileForecasts, QuantileLossRow, PointMetricsRow,
};
pub use metrics::{check_loss, mean_check_loss, rmse, r2, smape};
pub use shap::{kernel_shap, shap_summary, ShapExplanation};
pub use inference::{
    dm_test, fluctuation_path, fluctuation_test, fluctuation_window, gr_critical_value, DmResult, TestResult, GR_CRITICAL_05,
    GR_CRITICAL_10, GR_MU_GRID,
};
