//! Small descriptive-statistics and special-function helpers shared by the
//! modules. Quantiles use linear interpolation between order statistics
//! (position `(n - 1) * q`), the convention used throughout the crate.

#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::vec::Vec;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance_population(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn sd_population(xs: &[f64]) -> f64 {
    variance_population(xs).sqrt()
}

/// Sample variance (divides by `n - 1`).
pub fn variance_sample(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Quantile of already sorted data by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let q = q.clamp(0.0, 1.0);
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn sort_floats(xs: &mut [f64]) {
    xs.sort_by(|a, b| a.total_cmp(b));
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    sort_floats(&mut v);
    quantile_sorted(&v, q)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Pearson correlation. Returns `None` when either side has zero variance
/// or fewer than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = mean(&a[..n]);
    let mb = mean(&b[..n]);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Column means and population standard deviations of a row-major table.
/// Zero-variance columns get a scale of 1 so standardisation is a no-op on them.
pub fn column_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut means = alloc::vec![0.0; p];
    for r in rows {
        for (m, x) in means.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut sds = alloc::vec![0.0; p];
    for r in rows {
        for ((s, x), m) in sds.iter_mut().zip(r).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut sds {
        *s = (*s / n).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (means, sds)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function for `x > 0`: recurrence up to 10, then the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    acc + x.ln() - 0.5 * inv - series
}
