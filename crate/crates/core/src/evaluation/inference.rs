#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window ratios covered by the fluctuation-test critical-value table.
pub const GR_MU_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Two-sided fluctuation-test critical values at 5% size, one per entry of
/// [`GR_MU_GRID`] (Giacomini and Rossi, 2010, Table I).
pub const GR_CRITICAL_05: [f64; 9] = [3.393, 3.179, 3.012, 2.890, 2.779, 2.634, 2.560, 2.433, 2.248];

/// Two-sided fluctuation-test critical values at 10% size (same source).
pub const GR_CRITICAL_10: [f64; 9] = [3.170, 2.948, 2.766, 2.626, 2.500, 2.356, 2.252, 2.130, 1.950];

/// Critical value for window ratio `mu` and two-sided `size` (0.05 or 0.10).
/// Returns the value and the grid `mu` it was read at; a `mu` off the grid
/// uses the nearest entry and logs a warning.
pub fn gr_critical_value(mu: f64, size: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!("window ratio {mu} outside (0, 1)")));
    }
    let table = if (size - 0.05).abs() < 1e-12 {
        &GR_CRITICAL_05
    } else if (size - 0.10).abs() < 1e-12 {
        &GR_CRITICAL_10
    } else {
        return Err(Error::Parameter(format!("no critical values for size {size}; use 0.05 or 0.10")));
    };
    let (idx, grid_mu) = GR_MU_GRID
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - mu).abs().total_cmp(&(b.1 - mu).abs()))
        .map(|(i, m)| (i, *m))
        .expect("grid is non-empty");
    if (grid_mu - mu).abs() > 1e-9 {
        log::warn!("window ratio {mu} is off the critical-value grid; using {grid_mu}");
    }
    Ok((table[idx], grid_mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub mean_differential: f64,
    /// Bartlett HAC estimate of the long-run variance of the differential.
    pub long_run_variance: f64,
    /// The long-run variance was zero, so the statistic is reported as 0.
    pub degenerate: bool,
}

fn dm_of(d: &[f64], hac_lags: usize) -> DmResult {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let autocov = |j: usize| d[j..].iter().zip(d).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n;
    let mut lrv = autocov(0);
    for j in 1..=hac_lags.min(d.len() - 1) {
        lrv += 2.0 * (1.0 - j as f64 / (hac_lags as f64 + 1.0)) * autocov(j);
    }
    let scale = d.iter().map(|v| v * v).sum::<f64>() / n;
    if !(lrv > 1e-14 * scale) {
        return DmResult {
            statistic: 0.0,
            mean_differential: mean,
            long_run_variance: lrv.max(0.0),
            degenerate: true,
        };
    }
    DmResult {
        statistic: mean / (lrv / n).sqrt(),
        mean_differential: mean,
        long_run_variance: lrv,
        degenerate: false,
    }
}

fn differentials(loss_a: &[f64], loss_b: &[f64], min_len: usize) -> Result<Vec<f64>> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Alignment(format!("loss series of length {} and {}", loss_a.len(), loss_b.len())));
    }
    if loss_a.len() < min_len {
        return Err(Error::Parameter(format!("{} losses; at least {min_len} required", loss_a.len())));
    }
    Ok(loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect())
}

/// Diebold-Mariano statistic for `d_t = loss_a - loss_b`: the mean
/// differential over its Bartlett-kernel HAC standard error with `hac_lags`
/// lags. Positive values favour model `b`.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], hac_lags: usize) -> Result<DmResult> {
    let d = differentials(loss_a, loss_b, hac_lags + 2)?;
    Ok(dm_of(&d, hac_lags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// DM statistic of each rolling window, indexed by the window's first
    /// position in the out-of-sample period.
    pub statistic: Vec<f64>,
    pub critical_value: f64,
    pub reject_mask: Vec<bool>,
    pub window: usize,
    /// Window ratio at which the critical value was read.
    pub mu: f64,
    pub size: f64,
    pub degenerate_windows: usize,
}

impl TestResult {
    /// Whether the statistic leaves the band anywhere on the path.
    pub fn rejects(&self) -> bool {
        self.reject_mask.iter().any(|&r| r)
    }

    pub fn rejection_fraction(&self) -> f64 {
        self.reject_mask.iter().filter(|&&r| r).count() as f64 / self.reject_mask.len() as f64
    }
}

/// Rolling window length `floor(mu * out_of_sample)`.
pub fn fluctuation_window(mu: f64, out_of_sample: usize) -> usize {
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    (mu * out_of_sample as f64 + 1e-9).floor() as usize
}

/// DM results on every window of `m` consecutive loss differentials.
pub fn fluctuation_path(loss_a: &[f64], loss_b: &[f64], m: usize, hac_lags: usize) -> Result<Vec<DmResult>> {
    if m < hac_lags + 2 {
        return Err(Error::Parameter(format!("window of {m} days is too short for {hac_lags} HAC lags")));
    }
    let d = differentials(loss_a, loss_b, m)?;
    Ok(d.windows(m).map(|w| dm_of(w, hac_lags)).collect())
}

/// Fluctuation test: the DM statistic on every window of `floor(mu * P)`
/// consecutive loss differentials, compared with the two-sided critical
/// value for `mu` at the given size.
pub fn fluctuation_test(loss_a: &[f64], loss_b: &[f64], mu: f64, hac_lags: usize, size: f64) -> Result<TestResult> {
    let (critical_value, grid_mu) = gr_critical_value(mu, size)?;
    let m = fluctuation_window(mu, loss_a.len());
    let runs = fluctuation_path(loss_a, loss_b, m, hac_lags)?;
    let statistic: Vec<f64> = runs.iter().map(|r| r.statistic).collect();
    let reject_mask = statistic.iter().map(|s| s.abs() > critical_value).collect();
    Ok(TestResult {
        statistic,
        critical_value,
        reject_mask,
        window: m,
        mu: grid_mu,
        size,
        degenerate_windows: runs.iter().filter(|r| r.degenerate).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use alloc::vec;

    fn normals(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn identical_losses_are_degenerate() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = dm_test(&a, &a, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn dm_is_antisymmetric_and_detects_shift() {
        let a = normals(1, 1000, 0.5, 0.1);
        let b = vec![0.0; 1000];
        let ab = dm_test(&a, &b, 1).unwrap().statistic;
        let ba = dm_test(&b, &a, 1).unwrap().statistic;
        assert!(ab > 1.96 * 10.0);
        assert_eq!(ab, -ba);
    }

    #[test]
    fn dm_hand_example() {
        // d = [1, 0, 2, 1]: mean 1, gamma0 = 0.5, gamma1 = -0.25, one lag
        // lrv = 0.5 + 2 * 0.5 * (-0.25) = 0.25, statistic = 1 / sqrt(0.25 / 4) = 4
        let r = dm_test(&[1.0, 0.0, 2.0, 1.0], &[0.0; 4], 1).unwrap();
        assert!((r.long_run_variance - 0.25).abs() < 1e-15);
        assert!((r.statistic - 4.0).abs() < 1e-12);
    }

    #[test]
    fn window_length() {
        assert_eq!(fluctuation_window(0.30, 586), 175);
        assert_eq!(fluctuation_window(0.29, 100), 29);
    }

    #[test]
    fn critical_values() {
        assert_eq!(gr_critical_value(0.3, 0.05).unwrap(), (3.012, 0.3));
        assert_eq!(gr_critical_value(0.33, 0.10).unwrap(), (2.766, 0.3));
        assert!(gr_critical_value(0.3, 0.01).is_err());
    }

    #[test]
    fn full_window_collapses_to_dm() {
        let a = normals(2, 50, 0.0, 1.0);
        let b = normals(3, 50, 0.0, 1.0);
        let path = fluctuation_path(&a, &b, 50, 1).unwrap();
        assert_eq!(path, [dm_test(&a, &b, 1).unwrap()]);
    }

    #[test]
    fn shifted_losses_reject_everywhere() {
        let a = normals(4, 586, 0.0, 1.0);
        let b: Vec<f64> = normals(5, 586, 0.0, 1.0).iter().map(|v| v + 1.0).collect();
        let f = fluctuation_test(&a, &b, 0.3, 1, 0.05).unwrap();
        assert_eq!(f.window, 175);
        assert_eq!(f.statistic.len(), 586 - 175 + 1);
        assert!(f.rejection_fraction() > 0.99);
        assert!(f.reject_mask.iter().zip(&f.statistic).all(|(r, s)| *r == (s.abs() > f.critical_value)));
    }
}
