use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal components of standardised data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Per-feature divisor applied after centring (1 when not standardising
    /// or for constant columns).
    pub scale: Vec<f64>,
    /// `n_components` rows of length `n_features`, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Variance of each component's scores (divisor `n - 1`), descending.
    pub explained_variance: Vec<f64>,
    /// Share of total standardised variance per component.
    pub explained_variance_ratio: Vec<f64>,
    pub n_components: usize,
}

/// Fit on a `days x features` table. With `standardize`, each column is
/// centred and divided by its population standard deviation first. Asking for
/// more components than the data rank yields the rank, with a warning.
pub fn pca_fit(data: &[Vec<f64>], n_components: usize, standardize: bool) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Parameter("PCA needs at least two rows".into()));
    }
    let p = data[0].len();
    if p == 0 || data.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("PCA rows must share a non-zero width".into()));
    }
    if n_components == 0 {
        return Err(Error::Parameter("n_components must be positive".into()));
    }
    let (mean, sds) = crate::stats::column_moments(data);
    let scale = if standardize { sds } else { alloc::vec![1.0; p] };

    let x = DMatrix::from_fn(n, p, |i, j| (data[i][j] - mean[j]) / scale[j]);
    let svd = x.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = (n.max(p) as f64) * f64::EPSILON * s_max;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    let keep = n_components.min(rank);
    if keep < n_components {
        log::warn!("requested {n_components} principal components but data rank is {rank}; truncating");
    }
    if keep == 0 {
        return Err(Error::Parameter("data has rank zero".into()));
    }

    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut components = Vec::with_capacity(keep);
    let mut explained_variance = Vec::with_capacity(keep);
    let mut explained_variance_ratio = Vec::with_capacity(keep);
    for &idx in order.iter().take(keep) {
        let mut row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        // sign convention: the entry of largest magnitude is non-negative
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        let s = svd.singular_values[idx];
        components.push(row);
        explained_variance.push(s * s / (n - 1) as f64);
        explained_variance_ratio.push(if total > 0.0 { s * s / total } else { 0.0 });
    }
    Ok(PcaModel {
        mean,
        scale,
        components,
        explained_variance,
        explained_variance_ratio,
        n_components: keep,
    })
}

/// Project rows onto the fitted components.
pub fn pca_transform(model: &PcaModel, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = model.mean.len();
    data.iter()
        .map(|row| {
            if row.len() != p {
                return Err(Error::Shape(format!("row has {} features, model expects {p}", row.len())));
            }
            Ok(model
                .components
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(j, w)| w * (row[j] - model.mean[j]) / model.scale[j])
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// Map scores back to the original feature space.
pub fn pca_inverse_transform(model: &PcaModel, scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = model.mean.len();
    scores
        .iter()
        .map(|s| {
            if s.len() != model.n_components {
                return Err(Error::Shape(format!(
                    "score row has {} entries, model has {} components",
                    s.len(),
                    model.n_components
                )));
            }
            Ok((0..p)
                .map(|j| {
                    let z: f64 = s.iter().zip(&model.components).map(|(a, c)| a * c[j]).sum();
                    z * model.scale[j] + model.mean[j]
                })
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn line_data_is_rank_one() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let m = pca_fit(&data, 3, true).unwrap();
        assert_eq!(m.n_components, 1);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(m.components[0][0], h, epsilon = 1e-12);
        assert_relative_eq!(m.components[0][1], h, epsilon = 1e-12);
        assert_relative_eq!(m.explained_variance_ratio[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_sample_has_similar_variances() {
        let mut rng = crate::rng::rng_from_seed(11);
        let data: Vec<Vec<f64>> = (0..20_000)
            .map(|_| {
                vec![
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        let m = pca_fit(&data, 2, false).unwrap();
        let ratio = m.explained_variance[1] / m.explained_variance[0];
        // sampling error of each variance is about sqrt(2/n) = 1%
        assert!(ratio > 0.95, "ratio {ratio}");
    }

    #[test]
    fn full_reconstruction() {
        let data = vec![
            vec![1.0, 4.0, -2.0],
            vec![2.5, 0.0, 3.0],
            vec![-1.0, 2.0, 0.5],
            vec![0.0, -3.0, 1.0],
            vec![4.0, 1.0, -1.0],
        ];
        let m = pca_fit(&data, 3, true).unwrap();
        let back = pca_inverse_transform(&m, &pca_transform(&m, &data).unwrap()).unwrap();
        for (a, b) in data.iter().flatten().zip(back.iter().flatten()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }
}
