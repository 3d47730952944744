#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{nll_loss, DistParams};
use super::network::{DeepArNetwork, NetworkConfig, Window, Workspace};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Rescale `grads` in place so their Euclidean norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// A trained network together with the standardisation it was trained
/// under and its per-epoch training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepArModel {
    pub config: NetworkConfig,
    pub network: DeepArNetwork,
    pub target_shift: f64,
    pub target_scale: f64,
    pub covariate_shift: Vec<f64>,
    pub covariate_scale: Vec<f64>,
    /// Mean NLL (standardised units) of each epoch's windows before its update.
    pub loss_trace: Vec<f64>,
    /// `(epoch, mean one-step NLL)` on the held-out tail of the window, in
    /// standardised units, at every validation check.
    pub validation_trace: Vec<(usize, f64)>,
    /// Epoch whose parameters were kept (the best validation score), if a
    /// validation split was used.
    pub best_epoch: Option<usize>,
}

pub(crate) fn n_covariates(target_len: usize, covariates: &[Vec<f64>]) -> Result<usize> {
    if covariates.is_empty() {
        return Ok(0);
    }
    if covariates.len() != target_len {
        return Err(Error::Alignment(format!(
            "{} covariate rows for {target_len} target values",
            covariates.len()
        )));
    }
    let k = covariates[0].len();
    if covariates.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("covariate rows have different widths".into()));
    }
    Ok(k)
}

fn shift_scale(xs: &[f64]) -> (f64, f64) {
    let m = crate::stats::mean(xs);
    let sd = crate::stats::sd_population(xs);
    (m, if sd > 1e-12 { sd } else { 1.0 })
}

impl DeepArModel {
    pub fn n_covariates(&self) -> usize {
        self.covariate_shift.len()
    }

    fn scaled_target(&self, y: f64) -> f64 {
        (y - self.target_shift) / self.target_scale
    }

    /// Network inputs for steps `t` in `steps` (each `[y_{t-1}, z_t]`,
    /// standardised), flattened.
    pub(crate) fn inputs_for(
        &self,
        target: &[f64],
        covariates: &[Vec<f64>],
        next_covariates: Option<&[f64]>,
        steps: core::ops::Range<usize>,
    ) -> Vec<f64> {
        let k = self.n_covariates();
        let mut out = Vec::with_capacity(steps.len() * (k + 1));
        for t in steps {
            out.push(self.scaled_target(target[t - 1]));
            let z: &[f64] = if t < covariates.len() {
                &covariates[t]
            } else {
                next_covariates.unwrap_or(&[])
            };
            for j in 0..k {
                out.push((z[j] - self.covariate_shift[j]) / self.covariate_scale[j]);
            }
        }
        out
    }

    /// Predictive distribution, in original units, for the value following
    /// `history`. `history_covariates` (empty when the model has none) is
    /// aligned with `history`; `covariates_next` belongs to the forecast step.
    pub fn predict_next(
        &self,
        history: &[f64],
        history_covariates: &[Vec<f64>],
        covariates_next: &[f64],
    ) -> Result<DistParams> {
        let ctx = self.config.context_length;
        let n = history.len();
        if n < ctx {
            return Err(Error::Parameter(format!("history of {n} values is shorter than the context {ctx}")));
        }
        let k = self.n_covariates();
        if n_covariates(n, history_covariates)? != k {
            return Err(Error::Shape(format!("model expects {k} covariates")));
        }
        if covariates_next.len() != k {
            return Err(Error::Shape(format!(
                "{} next-step covariates for a model with {k}",
                covariates_next.len()
            )));
        }
        // steps n-ctx+1 ..= n, where step n predicts the next value
        let inputs = self.inputs_for(history, history_covariates, Some(covariates_next), n + 1 - ctx..n + 1);
        let mut ws = Workspace::default();
        let params = self.network.forward_flat(&inputs, ctx, &mut ws)?;
        Ok(params[ctx - 1].rescale(self.target_shift, self.target_scale))
    }

    /// Mean one-step NLL, in original units, of the values `target[from..]`,
    /// each predicted from the preceding context.
    pub fn evaluate_nll(&self, target: &[f64], covariates: &[Vec<f64>], from: usize) -> Result<f64> {
        let k = n_covariates(target.len(), covariates)?;
        if k != self.n_covariates() {
            return Err(Error::Shape(format!("model expects {} covariates", self.n_covariates())));
        }
        if from < self.config.context_length || from >= target.len() {
            return Err(Error::Parameter("evaluation start must leave a full context and one value".into()));
        }
        let mut total = 0.0;
        for t in from..target.len() {
            let hist_cov = if k == 0 { &[][..] } else { &covariates[..t] };
            let next: &[f64] = if k == 0 { &[] } else { &covariates[t] };
            let d = self.predict_next(&target[..t], hist_cov, next)?;
            total += nll_loss(target[t], &d);
        }
        Ok(total / (target.len() - from) as f64)
    }
}

/// Training windows over steps `1..n`, each `context_length` long, starting
/// every `stride` steps from `1 + phase`.
pub(crate) fn build_windows(model: &DeepArModel, target: &[f64], covariates: &[Vec<f64>], phase: usize) -> Vec<Window> {
    let ctx = model.config.context_length;
    let stride = model.config.stride();
    let last = target.len() - ctx;
    let first = (1 + phase).min(last);
    (first..=last)
        .step_by(stride)
        .map(|s| Window {
            inputs: model.inputs_for(target, covariates, None, s..s + ctx),
            targets: target[s..s + ctx].iter().map(|&y| model.scaled_target(y)).collect(),
        })
        .collect()
}

/// Fit a network to one series by BPTT with Adam. Each epoch takes one
/// optimiser step on the mean NLL of a grid of windows spaced `stride`
/// apart, whose offset is drawn afresh every epoch so that no fixed window
/// alignment can be memorised. With a validation split, the tail of the
/// window is held out, scored every `validation_interval` epochs, and the
/// best-scoring parameters are returned.
/// `covariates` is either empty or aligned with `target`.
pub fn train(target: &[f64], covariates: &[Vec<f64>], cfg: &NetworkConfig) -> Result<DeepArModel> {
    cfg.validate()?;
    let n = target.len();
    if n < cfg.context_length + 1 {
        return Err(Error::Parameter(format!(
            "training window of {n} values needs at least context_length + 1 = {}",
            cfg.context_length + 1
        )));
    }
    if target.iter().any(|y| !y.is_finite()) {
        return Err(Error::Parameter("training target has non-finite values".into()));
    }
    let k = n_covariates(n, covariates)?;
    let (target_shift, target_scale) = shift_scale(target);
    let mut covariate_shift = Vec::with_capacity(k);
    let mut covariate_scale = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = covariates.iter().map(|r| r[j]).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("covariate {j} has non-finite values")));
        }
        let (m, s) = shift_scale(&col);
        covariate_shift.push(m);
        covariate_scale.push(s);
    }

    let mut rng = rng_from_seed(cfg.seed);
    let network = DeepArNetwork::init(cfg.likelihood, k + 1, cfg.num_layers, cfg.hidden_size, &mut rng);
    let mut model = DeepArModel {
        config: cfg.clone(),
        network,
        target_shift,
        target_scale,
        covariate_shift,
        covariate_scale,
        loss_trace: Vec::with_capacity(cfg.epochs),
        validation_trace: Vec::new(),
        best_epoch: None,
    };

    let ctx = cfg.context_length;
    let mut n_val = ((n - 1) as f64 * cfg.validation_fraction).floor() as usize;
    if n_val > 0 && n - n_val < ctx + 1 {
        log::warn!("training window of {n} values is too short for a validation split; training on all of it");
        n_val = 0;
    }
    let n_fit = n - n_val;
    let fit_target = &target[..n_fit];
    let fit_cov = if k == 0 { covariates } else { &covariates[..n_fit] };
    let validation: Vec<(Vec<f64>, f64)> = (n_fit..n)
        .map(|t| {
            let inputs = model.inputs_for(target, covariates, None, t + 1 - ctx..t + 1);
            (inputs, model.scaled_target(target[t]))
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0usize;

    let stride = cfg.stride().min(n_fit - ctx);
    let mut params = model.network.flatten();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    for epoch in 0..cfg.epochs {
        if !validation.is_empty() && (epoch % cfg.validation_interval == 0) {
            let score = validation_nll(&model.network, &validation)?;
            model.validation_trace.push((epoch, score));
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, params.clone()));
                model.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    log::debug!("early stop at epoch {epoch}");
                    break;
                }
            }
        }
        let phase = rng.random_range(0..stride);
        let windows = build_windows(&model, fit_target, fit_cov, phase);
        let (loss, mut grad) = if cfg.dropout > 0.0 {
            model.network.loss_and_gradient_with_dropout(&windows, cfg.dropout, &mut rng)
        } else {
            model.network.loss_and_gradient(&windows)
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence {
                epoch,
                last_loss: model.loss_trace.last().copied(),
            });
        }
        model.loss_trace.push(loss);
        clip_global_norm(&mut grad, cfg.clip_norm);
        adam.step(&mut params, &grad);
        model.network.assign_flat(&params)?;
    }
    if !validation.is_empty() {
        let score = validation_nll(&model.network, &validation)?;
        let epochs_run = model.loss_trace.len();
        if model.validation_trace.last().is_none_or(|v| v.0 != epochs_run) {
            model.validation_trace.push((epochs_run, score));
        }
        match best {
            Some((b, p)) if b <= score => model.network.assign_flat(&p)?,
            _ => model.best_epoch = Some(epochs_run),
        }
    }
    Ok(model)
}

/// Mean NLL of the final step of each validation window.
fn validation_nll(network: &DeepArNetwork, windows: &[(Vec<f64>, f64)]) -> Result<f64> {
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for (inputs, y) in windows {
        let steps = inputs.len() / network.input_size;
        let d = network.forward_flat(inputs, steps, &mut ws)?;
        total += nll_loss(*y, &d[steps - 1]);
    }
    Ok(total / windows.len() as f64)
}
