//! Autoregressive recurrent forecaster: stacked LSTM layers feeding a
//! Gaussian or Student-t head, trained by backpropagation through time on
//! the negative log-likelihood and sampled for quantile forecasts.
//!
//! Step `t` of a sequence receives `[y_{t-1}, z_t]`: the previous target
//! value and the covariates known for day `t`. Targets and covariates are
//! standardised with statistics of the training window only.

mod forecast;
mod likelihood;
mod lstm;
mod network;
mod train;

pub use forecast::{
    fit_and_forecast, forecast_one_step, rolling_forecast, rolling_plan, rolling_seeds, run_rolling_fit, ForecastDistribution,
    RollingFit, DEFAULT_SAMPLES,
};
pub use likelihood::{nll_loss, DistParams, Likelihood, SIGMA_FLOOR};
pub use lstm::{lstm_cell_step, lstm_cell_step_with_gates, GateActivations, LstmCellParams, LstmState};
pub use network::{DeepArNetwork, HeadParams, NetworkConfig, Window};
pub use train::{clip_global_norm, train, Adam, DeepArModel};
