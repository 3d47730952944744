use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// One attribution per feature; they sum to `prediction - base_value`.
    pub phi: Vec<f64>,
    /// Mean model output over the background rows.
    pub base_value: f64,
    pub prediction: f64,
    /// All coalitions were enumerated rather than sampled.
    pub exact: bool,
    pub coalitions: usize,
}

/// Shapley kernel weight of a coalition of size `s` out of `m` features.
fn kernel_weight(m: usize, s: usize) -> f64 {
    let mut binom = 1.0;
    for i in 0..s {
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    (m - 1) as f64 / (binom * s as f64 * (m - s) as f64)
}

/// Coalitions as masks with regression weights: every proper non-empty
/// subset when `2^m - 2 <= budget`, otherwise `budget` rounded up to an even
/// count of kernel-distributed draws paired with their complements.
fn coalitions(m: usize, budget: usize, seed: u64) -> (Vec<(Vec<bool>, f64)>, bool) {
    if m < 31 && (1usize << m) - 2 <= budget {
        let all = (1..(1usize << m) - 1)
            .map(|bits| {
                let mask: Vec<bool> = (0..m).map(|j| bits >> j & 1 == 1).collect();
                let s = bits.count_ones() as usize;
                (mask, kernel_weight(m, s))
            })
            .collect();
        return (all, true);
    }
    let size_mass: Vec<f64> = (1..m).map(|s| 1.0 / (s * (m - s)) as f64).collect();
    let total: f64 = size_mass.iter().sum();
    let mut out = Vec::with_capacity(budget + 1);
    for pair in 0..budget.div_ceil(2) {
        let mut rng = rng_from_seed(derive_seed(seed, pair as u64));
        let mut u = rng.random::<f64>() * total;
        let mut s = m - 1;
        for (i, w) in size_mass.iter().enumerate() {
            if u < *w {
                s = i + 1;
                break;
            }
            u -= w;
        }
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..s {
            let j = rng.random_range(i..m);
            idx.swap(i, j);
        }
        let mut mask = vec![false; m];
        for &j in &idx[..s] {
            mask[j] = true;
        }
        let complement = mask.iter().map(|b| !b).collect();
        out.push((mask, 1.0));
        out.push((complement, 1.0));
    }
    (out, false)
}

/// Kernel SHAP attributions of `model` at `x`. Features outside a coalition
/// take their background mean; the weighted least-squares fit is constrained
/// so the attributions sum to `f(x)` minus the mean background prediction.
/// A singular system is regularised with a `1e-8` ridge.
pub fn kernel_shap(
    model: &dyn Fn(&[f64]) -> f64,
    background: &[Vec<f64>],
    x: &[f64],
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    let m = x.len();
    if m == 0 {
        return Err(Error::Parameter("instance has no features".into()));
    }
    if background.is_empty() {
        return Err(Error::Parameter("at least one background row is required".into()));
    }
    if background.iter().any(|r| r.len() != m) {
        return Err(Error::Shape(format!("background rows must have {m} features")));
    }
    if n_coalitions < m + 2 {
        return Err(Error::Parameter(format!("{n_coalitions} coalitions for {m} features; need at least {}", m + 2)));
    }
    let means: Vec<f64> = (0..m)
        .map(|j| background.iter().map(|r| r[j]).sum::<f64>() / background.len() as f64)
        .collect();
    let base_value = background.iter().map(|r| model(r)).sum::<f64>() / background.len() as f64;
    let prediction = model(x);
    let delta = prediction - base_value;
    if m == 1 {
        return Ok(ShapExplanation {
            phi: vec![delta],
            base_value,
            prediction,
            exact: true,
            coalitions: 0,
        });
    }

    let (coal, exact) = coalitions(m, n_coalitions, seed);
    // eliminate the last attribution through the efficiency constraint
    let k = m - 1;
    let mut a = DMatrix::<f64>::zeros(coal.len(), k);
    let mut t = DVector::<f64>::zeros(coal.len());
    let mut w = DVector::<f64>::zeros(coal.len());
    let mut point = vec![0.0; m];
    for (row, (mask, weight)) in coal.iter().enumerate() {
        for j in 0..m {
            point[j] = if mask[j] { x[j] } else { means[j] };
        }
        let last = f64::from(u8::from(mask[k]));
        for j in 0..k {
            a[(row, j)] = f64::from(u8::from(mask[j])) - last;
        }
        t[row] = model(&point) - base_value - last * delta;
        w[row] = *weight;
    }
    let aw = DMatrix::from_fn(k, coal.len(), |i, r| a[(r, i)] * w[r]);
    let mut normal = &aw * &a;
    let rhs = &aw * &t;
    let beta = match normal.clone().cholesky() {
        Some(ch) if normal.diagonal().iter().all(|d| *d > 1e-12) => ch.solve(&rhs),
        _ => {
            log::warn!("singular SHAP regression; adding a 1e-8 ridge");
            for i in 0..k {
                normal[(i, i)] += 1e-8;
            }
            normal
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Parameter("SHAP regression is singular".into()))?
        }
    };
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(ShapExplanation {
        phi,
        base_value,
        prediction,
        exact,
        coalitions: coal.len(),
    })
}

/// Mean absolute attribution per feature, largest first (ties by name).
pub fn shap_summary(names: &[String], explanations: &[ShapExplanation]) -> Result<Vec<(String, f64)>> {
    if explanations.iter().any(|e| e.phi.len() != names.len()) {
        return Err(Error::Shape(format!("explanations must have {} attributions", names.len())));
    }
    let n = explanations.len().max(1) as f64;
    let mut out: Vec<(String, f64)> = names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), explanations.iter().map(|e| e.phi[j].abs()).sum::<f64>() / n))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
