#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{nll_with_raw_grad, DistParams, Likelihood};
use super::lstm::{layer_backward, layer_forward, LayerTrace, LstmCellParams};
use crate::error::{Error, Result};
use crate::stats::softplus_inv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    /// Steps of history the network conditions on, in training windows and
    /// when forecasting.
    pub context_length: usize,
    pub likelihood: Likelihood,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Offset between consecutive training windows; defaults to the context
    /// length (non-overlapping windows).
    pub window_stride: Option<usize>,
    /// Dropout rate on the outputs of all but the top LSTM layer during
    /// training.
    pub dropout: f64,
    /// Global gradient-norm clip applied before each Adam step.
    pub clip_norm: f64,
    /// Share of the training window's final steps held out to choose the
    /// epoch whose parameters are kept; 0 trains on everything and keeps the
    /// last epoch.
    pub validation_fraction: f64,
    /// Epochs between validation checks.
    pub validation_interval: usize,
    /// Stop after this many consecutive validation checks without
    /// improvement; 0 always runs every epoch.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_size: 40,
            context_length: 30,
            likelihood: Likelihood::Gaussian,
            epochs: 500,
            learning_rate: 0.001,
            window_stride: None,
            dropout: 0.1,
            clip_norm: 10.0,
            validation_fraction: 0.1,
            validation_interval: 10,
            patience: 10,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_size == 0 || self.context_length == 0 {
            return Err(Error::Config("num_layers, hidden_size and context_length must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.window_stride == Some(0) {
            return Err(Error::Config("window_stride must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 0.5)".into()));
        }
        if self.validation_interval == 0 {
            return Err(Error::Config("validation_interval must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or(self.context_length)
    }
}

/// Affine map from the top layer's output to raw distribution parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub outputs: usize,
    pub hidden: usize,
    /// `outputs x hidden`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(outputs: usize, hidden: usize) -> Self {
        Self {
            outputs,
            hidden,
            weight: vec![0.0; outputs * hidden],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, h: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.outputs) {
            let row = &self.weight[k * self.hidden..(k + 1) * self.hidden];
            *o = self.bias[k] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Stacked LSTM layers plus the distribution head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepArNetwork {
    pub likelihood: Likelihood,
    pub input_size: usize,
    pub layers: Vec<LstmCellParams>,
    pub head: HeadParams,
}

/// Reusable buffers for a forward/backward pass.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    traces: Vec<LayerTrace>,
    raw: Vec<f64>,
    /// Per upper layer: inverted-dropout multipliers and the masked input.
    masks: Vec<Vec<f64>>,
    masked: Vec<Vec<f64>>,
}

impl DeepArNetwork {
    pub fn zeros(likelihood: Likelihood, input_size: usize, num_layers: usize, hidden: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| LstmCellParams::zeros(hidden, if l == 0 { input_size } else { hidden }))
            .collect();
        Self {
            likelihood,
            input_size,
            layers,
            head: HeadParams::zeros(likelihood.arity(), hidden),
        }
    }

    /// Random initialisation: LSTM weights and head weights uniform in
    /// `±1/sqrt(hidden)`, forget bias 1, initial scale 1 and (Student-t)
    /// initial degrees of freedom 5.
    pub fn init<R: Rng + ?Sized>(
        likelihood: Likelihood,
        input_size: usize,
        num_layers: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| LstmCellParams::init(hidden, if l == 0 { input_size } else { hidden }, rng))
            .collect();
        let mut head = HeadParams::zeros(likelihood.arity(), hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in &mut head.weight {
            *w = rng.random_range(-bound..bound);
        }
        head.bias[1] = softplus_inv(1.0);
        if likelihood == Likelihood::StudentT {
            head.bias[2] = softplus_inv(3.0);
        }
        Self {
            likelihood,
            input_size,
            layers,
            head,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.head.hidden
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LstmCellParams::num_params).sum::<usize>()
            + self.head.weight.len()
            + self.head.bias.len()
    }

    /// All parameters as one vector: layers bottom-up (each in
    /// [`LstmCellParams::tensors`] order), then head weight and bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for t in l.tensors() {
                out.extend_from_slice(t);
            }
        }
        out.extend_from_slice(&self.head.weight);
        out.extend_from_slice(&self.head.bias);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let n = dst.len();
            dst.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        };
        for l in &mut self.layers {
            for t in l.tensors_mut() {
                take(t);
            }
        }
        take(&mut self.head.weight);
        take(&mut self.head.bias);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let hidden = self.hidden_size();
        for (idx, l) in self.layers.iter().enumerate() {
            l.validate()?;
            let expect_in = if idx == 0 { self.input_size } else { hidden };
            if l.hidden != hidden || l.input != expect_in {
                return Err(Error::Shape(format!("layer {idx} shape does not chain")));
            }
        }
        if self.layers.is_empty()
            || self.head.outputs != self.likelihood.arity()
            || self.head.weight.len() != self.head.outputs * hidden
            || self.head.bias.len() != self.head.outputs
        {
            return Err(Error::Shape("head shape does not match the network".into()));
        }
        Ok(())
    }

    /// Forward through all layers. When `ws.masks` is populated, layer
    /// `l > 0` sees the output of layer `l - 1` multiplied by `masks[l - 1]`.
    fn run_layers(&self, inputs: &[f64], steps: usize, ws: &mut Workspace, dropout: bool) {
        ws.traces.resize_with(self.layers.len(), LayerTrace::default);
        ws.masked.resize_with(self.layers.len().saturating_sub(1), Vec::new);
        for (l, layer) in self.layers.iter().enumerate() {
            let (below, rest) = ws.traces.split_at_mut(l);
            let x: &[f64] = if l == 0 {
                inputs
            } else if dropout {
                let buf = &mut ws.masked[l - 1];
                buf.clear();
                buf.extend(below[l - 1].outputs.iter().zip(&ws.masks[l - 1]).map(|(h, m)| h * m));
                buf
            } else {
                &below[l - 1].outputs
            };
            layer_forward(layer, x, steps, &mut rest[0]);
        }
    }

    /// Distribution parameters for every step of `inputs` (`T` rows of
    /// `input_size` values: the previous target followed by the current
    /// covariates), starting from the zero state.
    pub fn forward_sequence(&self, inputs: &[Vec<f64>]) -> Result<Vec<DistParams>> {
        let flat = flatten_rows(inputs, self.input_size)?;
        let mut ws = Workspace::default();
        self.forward_flat(&flat, inputs.len(), &mut ws)
    }

    pub(crate) fn forward_flat(&self, inputs: &[f64], steps: usize, ws: &mut Workspace) -> Result<Vec<DistParams>> {
        self.run_layers(inputs, steps, ws, false);
        let hidden = self.hidden_size();
        let top = &ws.traces[self.layers.len() - 1].outputs;
        let mut raw = vec![0.0; self.head.outputs];
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            self.head.apply(&top[t * hidden..(t + 1) * hidden], &mut raw);
            let d = DistParams::from_raw(self.likelihood, &raw);
            if !(d.mu.is_finite() && d.sigma.is_finite() && d.nu.is_none_or(f64::is_finite)) {
                return Err(Error::Divergence { step: t });
            }
            out.push(d);
        }
        Ok(out)
    }

    /// Summed NLL over one window and its gradient, accumulated into `grad`
    /// (a network of the same shape).
    pub(crate) fn window_loss_grad(
        &self,
        inputs: &[f64],
        targets: &[f64],
        ws: &mut Workspace,
        grad: &mut DeepArNetwork,
        weight: f64,
        dropout: bool,
    ) -> f64 {
        let steps = targets.len();
        self.run_layers(inputs, steps, ws, dropout);
        let hidden = self.hidden_size();
        let nl = self.layers.len();
        let arity = self.head.outputs;
        ws.raw.resize(arity, 0.0);
        let mut graw = vec![0.0; arity];
        let mut d_top = vec![0.0; steps * hidden];
        let mut loss = 0.0;
        for t in 0..steps {
            let h = &ws.traces[nl - 1].outputs[t * hidden..(t + 1) * hidden];
            self.head.apply(h, &mut ws.raw);
            loss += nll_with_raw_grad(self.likelihood, targets[t], &ws.raw, &mut graw);
            for k in 0..arity {
                let g = graw[k] * weight;
                grad.head.bias[k] += g;
                let row = k * hidden;
                for j in 0..hidden {
                    grad.head.weight[row + j] += g * h[j];
                    d_top[t * hidden + j] += g * self.head.weight[row + j];
                }
            }
        }
        let mut d_out = d_top;
        for l in (0..nl).rev() {
            d_out = layer_backward(&self.layers[l], &ws.traces[l], &d_out, &mut grad.layers[l]);
            if dropout && l > 0 {
                d_out.iter_mut().zip(&ws.masks[l - 1]).for_each(|(d, m)| *d *= m);
            }
        }
        loss
    }

    /// Mean NLL over a set of windows and its gradient.
    pub fn loss_and_gradient(&self, windows: &[Window]) -> (f64, Vec<f64>) {
        self.loss_and_gradient_impl::<crate::rng::ChaCha8Rng>(windows, 0.0, None)
    }

    /// As [`loss_and_gradient`](Self::loss_and_gradient), with inverted
    /// dropout at `rate` on the outputs of every layer below the top one;
    /// masks are drawn per window and step from `rng`.
    pub fn loss_and_gradient_with_dropout<R: Rng + ?Sized>(
        &self,
        windows: &[Window],
        rate: f64,
        rng: &mut R,
    ) -> (f64, Vec<f64>) {
        self.loss_and_gradient_impl(windows, rate, Some(rng))
    }

    fn loss_and_gradient_impl<R: Rng + ?Sized>(
        &self,
        windows: &[Window],
        rate: f64,
        mut rng: Option<&mut R>,
    ) -> (f64, Vec<f64>) {
        let total: usize = windows.iter().map(|w| w.targets.len()).sum();
        let weight = 1.0 / total.max(1) as f64;
        let mut grad = Self::zeros(self.likelihood, self.input_size, self.layers.len(), self.hidden_size());
        let mut ws = Workspace::default();
        let dropout = rate > 0.0 && self.layers.len() > 1 && rng.is_some();
        let keep = 1.0 / (1.0 - rate);
        let mut loss = 0.0;
        for w in windows {
            if dropout {
                let rng = rng.as_deref_mut().expect("checked above");
                let len = w.targets.len() * self.hidden_size();
                ws.masks.resize_with(self.layers.len() - 1, Vec::new);
                for m in &mut ws.masks {
                    m.clear();
                    m.extend((0..len).map(|_| if rng.random_bool(rate) { 0.0 } else { keep }));
                }
            }
            loss += self.window_loss_grad(&w.inputs, &w.targets, &mut ws, &mut grad, weight, dropout);
        }
        (loss * weight, grad.flatten())
    }

    /// Mean NLL over a set of windows.
    pub fn loss(&self, windows: &[Window]) -> Result<f64> {
        let mut ws = Workspace::default();
        let mut total = 0.0;
        let mut count = 0usize;
        for w in windows {
            let d = self.forward_flat(&w.inputs, w.targets.len(), &mut ws)?;
            for (p, y) in d.iter().zip(&w.targets) {
                total += super::likelihood::nll_loss(*y, p);
                count += 1;
            }
        }
        Ok(total / count.max(1) as f64)
    }
}

/// A training window: `targets.len()` steps of inputs (flattened) and the
/// values each step predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

pub(crate) fn flatten_rows(rows: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for (t, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Shape(format!("input row {t} has {} values, expected {width}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepar::lstm::{lstm_cell_step, LstmState};
    use crate::rng::rng_from_seed;

    #[test]
    fn single_step_is_cell_plus_head() {
        let mut rng = rng_from_seed(5);
        let net = DeepArNetwork::init(Likelihood::Gaussian, 3, 1, 4, &mut rng);
        let x = vec![0.2, -0.5, 1.0];
        let d = net.forward_sequence(&[x.clone()]).unwrap()[0];
        let s = lstm_cell_step(&x, &LstmState::zeros(4), &net.layers[0]).unwrap();
        let mut raw = [0.0; 2];
        net.head.apply(&s.output, &mut raw);
        assert_eq!(d, DistParams::from_raw(Likelihood::Gaussian, &raw));
    }

    #[test]
    fn zero_network_is_constant() {
        let net = DeepArNetwork::zeros(Likelihood::Gaussian, 2, 2, 5);
        let inputs: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, -(t as f64)]).collect();
        let out = net.forward_sequence(&inputs).unwrap();
        assert!(out.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = rng_from_seed(9);
        let net = DeepArNetwork::init(Likelihood::StudentT, 2, 2, 3, &mut rng);
        let mut copy = DeepArNetwork::zeros(Likelihood::StudentT, 2, 2, 3);
        copy.assign_flat(&net.flatten()).unwrap();
        assert_eq!(copy, net);
        assert!(copy.assign_flat(&[0.0]).is_err());
    }
}
