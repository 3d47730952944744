#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// Weights and biases of one LSTM layer. Each gate matrix is
/// `hidden x (hidden + input)`, row-major, acting on the concatenation
/// `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub hidden: usize,
    pub input: usize,
    pub w_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = vec![0.0; hidden * (hidden + input)];
        let b = vec![0.0; hidden];
        Self {
            hidden,
            input,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Weights uniform in `±1/sqrt(hidden)`, biases zero except the forget
    /// gate, which starts at 1.
    pub fn init<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(hidden, input);
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_c, &mut p.w_o] {
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        p.b_f.iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn concat_len(&self) -> usize {
        self.hidden + self.input
    }

    pub fn validate(&self) -> Result<()> {
        let wlen = self.hidden * self.concat_len();
        let ws = [&self.w_f, &self.w_i, &self.w_c, &self.w_o];
        let bs = [&self.b_f, &self.b_i, &self.b_c, &self.b_o];
        if ws.iter().any(|w| w.len() != wlen) || bs.iter().any(|b| b.len() != self.hidden) {
            return Err(Error::Shape(format!(
                "LSTM layer with hidden={} input={} has inconsistent parameter lengths",
                self.hidden, self.input
            )));
        }
        if ws.iter().chain(bs.iter()).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Parameter("LSTM parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.concat_len() + 1)
    }

    /// Parameters in the fixed order w_f, w_i, w_c, w_o, b_f, b_i, b_c, b_o.
    pub fn tensors(&self) -> [&Vec<f64>; 8] {
        [
            &self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            cell: vec![0.0; hidden],
            output: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub o: Vec<f64>,
}

#[inline]
fn dot(w: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(z) {
        acc += a * b;
    }
    acc
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepCache {
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One forward step writing into preallocated buffers.
pub(crate) fn step_into(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmCellParams,
    cache: &mut StepCache,
    h_out: &mut [f64],
    c_out: &mut [f64],
) {
    let hsz = p.hidden;
    let n = p.concat_len();
    cache.z.clear();
    cache.z.extend_from_slice(h_prev);
    cache.z.extend_from_slice(x);
    cache.c_prev.clear();
    cache.c_prev.extend_from_slice(c_prev);
    for v in [&mut cache.f, &mut cache.i, &mut cache.c_hat, &mut cache.o, &mut cache.tanh_c] {
        v.resize(hsz, 0.0);
    }
    for r in 0..hsz {
        let row = r * n..(r + 1) * n;
        let f = sigmoid(dot(&p.w_f[row.clone()], &cache.z) + p.b_f[r]);
        let i = sigmoid(dot(&p.w_i[row.clone()], &cache.z) + p.b_i[r]);
        let c_hat = (dot(&p.w_c[row.clone()], &cache.z) + p.b_c[r]).tanh();
        let o = sigmoid(dot(&p.w_o[row], &cache.z) + p.b_o[r]);
        let c = f * c_prev[r] + i * c_hat;
        let tc = c.tanh();
        cache.f[r] = f;
        cache.i[r] = i;
        cache.c_hat[r] = c_hat;
        cache.o[r] = o;
        cache.tanh_c[r] = tc;
        c_out[r] = c;
        h_out[r] = o * tc;
    }
}

/// One step of the layer recursion:
/// `f = g(W_f [h, x] + b_f)`, `i = g(W_i [h, x] + b_i)`,
/// `C^ = tanh(W_C [h, x] + b_C)`, `C = f*C_prev + i*C^`,
/// `o = g(W_o [h, x] + b_o)`, `h = o*tanh(C)`, with `g` the logistic sigmoid.
pub fn lstm_cell_step(x_t: &[f64], prev: &LstmState, p: &LstmCellParams) -> Result<LstmState> {
    lstm_cell_step_with_gates(x_t, prev, p).map(|(s, _)| s)
}

/// As [`lstm_cell_step`], also returning the gate activations.
pub fn lstm_cell_step_with_gates(
    x_t: &[f64],
    prev: &LstmState,
    p: &LstmCellParams,
) -> Result<(LstmState, GateActivations)> {
    p.validate()?;
    if x_t.len() != p.input || prev.cell.len() != p.hidden || prev.output.len() != p.hidden {
        return Err(Error::Shape(format!(
            "cell expects input {} and state {}, got input {} and state {}/{}",
            p.input,
            p.hidden,
            x_t.len(),
            prev.cell.len(),
            prev.output.len()
        )));
    }
    let mut cache = StepCache::default();
    let mut next = LstmState::zeros(p.hidden);
    step_into(x_t, &prev.output, &prev.cell, p, &mut cache, &mut next.output, &mut next.cell);
    let gates = GateActivations {
        f: cache.f,
        i: cache.i,
        c_hat: cache.c_hat,
        o: cache.o,
    };
    Ok((next, gates))
}

/// Forward activations of one layer over a sequence, kept for BPTT.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerTrace {
    pub caches: Vec<StepCache>,
    /// `h_t` for every step, flattened `T x hidden`.
    pub outputs: Vec<f64>,
}

/// Run a layer from the zero state over `inputs` (flattened `T x input`).
pub(crate) fn layer_forward(p: &LstmCellParams, inputs: &[f64], steps: usize, trace: &mut LayerTrace) {
    let hsz = p.hidden;
    trace.caches.resize_with(steps, StepCache::default);
    trace.outputs.clear();
    trace.outputs.resize(steps * hsz, 0.0);
    let h = vec![0.0; hsz];
    let mut c = vec![0.0; hsz];
    let mut c_next = vec![0.0; hsz];
    for t in 0..steps {
        let x = &inputs[t * p.input..(t + 1) * p.input];
        let (before, rest) = trace.outputs.split_at_mut(t * hsz);
        let h_out = &mut rest[..hsz];
        let h_prev: &[f64] = if t == 0 { &h } else { &before[(t - 1) * hsz..] };
        step_into(x, h_prev, &c, p, &mut trace.caches[t], h_out, &mut c_next);
        core::mem::swap(&mut c, &mut c_next);
    }
}

/// Backpropagate through a layer. `d_outputs` holds dL/dh_t from above
/// (flattened `T x hidden`); gradients are accumulated into `grad` and the
/// returned vector is dL/dx_t (flattened `T x input`).
pub(crate) fn layer_backward(
    p: &LstmCellParams,
    trace: &LayerTrace,
    d_outputs: &[f64],
    grad: &mut LstmCellParams,
) -> Vec<f64> {
    let hsz = p.hidden;
    let n = p.concat_len();
    let steps = trace.caches.len();
    let mut d_inputs = vec![0.0; steps * p.input];
    let mut dh_next = vec![0.0; hsz];
    let mut dc_next = vec![0.0; hsz];
    let mut pre = [vec![0.0; hsz], vec![0.0; hsz], vec![0.0; hsz], vec![0.0; hsz]];
    let mut dz = vec![0.0; n];
    for t in (0..steps).rev() {
        let cache = &trace.caches[t];
        for r in 0..hsz {
            let dh = d_outputs[t * hsz + r] + dh_next[r];
            let (f, i, c_hat, o, tc) = (cache.f[r], cache.i[r], cache.c_hat[r], cache.o[r], cache.tanh_c[r]);
            let d_o = dh * tc;
            let dc = dc_next[r] + dh * o * (1.0 - tc * tc);
            let d_f = dc * cache.c_prev[r];
            let d_i = dc * c_hat;
            let d_chat = dc * i;
            dc_next[r] = dc * f;
            pre[0][r] = d_f * f * (1.0 - f);
            pre[1][r] = d_i * i * (1.0 - i);
            pre[2][r] = d_chat * (1.0 - c_hat * c_hat);
            pre[3][r] = d_o * o * (1.0 - o);
        }
        dz.iter_mut().for_each(|v| *v = 0.0);
        let weights = [&p.w_f, &p.w_i, &p.w_c, &p.w_o];
        let [gw_f, gw_i, gw_c, gw_o, gb_f, gb_i, gb_c, gb_o] = grad.tensors_mut();
        let gws = [gw_f, gw_i, gw_c, gw_o];
        let gbs = [gb_f, gb_i, gb_c, gb_o];
        for ((g, w), (gw, gb)) in pre.iter().zip(weights).zip(gws.into_iter().zip(gbs)) {
            for r in 0..hsz {
                let a = g[r];
                if a == 0.0 {
                    continue;
                }
                gb[r] += a;
                let row = r * n;
                for k in 0..n {
                    gw[row + k] += a * cache.z[k];
                    dz[k] += a * w[row + k];
                }
            }
        }
        dh_next.copy_from_slice(&dz[..hsz]);
        d_inputs[t * p.input..(t + 1) * p.input].copy_from_slice(&dz[hsz..]);
    }
    d_inputs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_half_gates() {
        let p = LstmCellParams::zeros(3, 2);
        let (s, g) = lstm_cell_step_with_gates(&[0.7, -1.2], &LstmState::zeros(3), &p).unwrap();
        assert!(g.f.iter().chain(&g.i).chain(&g.o).all(|&v| v == 0.5));
        assert!(g.c_hat.iter().all(|&v| v == 0.0));
        assert!(s.cell.iter().chain(&s.output).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameters_halve_the_cell() {
        let p = LstmCellParams::zeros(1, 1);
        let prev = LstmState {
            cell: vec![1.0],
            output: vec![0.0],
        };
        let s = lstm_cell_step(&[0.0], &prev, &p).unwrap();
        assert_eq!(s.cell[0], 0.5);
        // 0.5 * tanh(0.5)
        assert!((s.output[0] - 0.231_058_578_630_004_87).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = LstmCellParams::zeros(2, 2);
        assert!(matches!(
            lstm_cell_step(&[1.0], &LstmState::zeros(2), &p),
            Err(Error::Shape(_))
        ));
    }
}
