#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Single,
    Complete,
    Average,
}

/// Centre each column and scale it to unit population variance. Constant
/// columns are only centred.
pub fn standardize_columns(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|c| {
            let m = crate::stats::mean(c);
            let sd = crate::stats::sd_population(c);
            let scale = if sd > 1e-12 { sd } else { 1.0 };
            c.iter().map(|x| (x - m) / scale).collect()
        })
        .collect()
}

/// Dense symmetric Euclidean distance matrix (row-major, `n x n`).
pub fn distance_matrix(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = s.sqrt();
            d[j * n + i] = d[i * n + j];
        }
    }
    d
}

/// One agglomeration step: clusters `a` and `b` (by their smallest member
/// index) joined at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_points: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Agglomerate all points with Lance-Williams updates. Ward works on
    /// squared distances and reports heights on the distance scale. Exact
    /// ties go to the pair with the smallest indices.
    pub fn build(distances: &[f64], n: usize, linkage: Linkage) -> Result<Self> {
        if distances.len() != n * n {
            return Err(Error::Shape(format!("distance matrix must be {n}x{n}")));
        }
        let squared = linkage == Linkage::Ward;
        let mut d: Vec<f64> = distances
            .iter()
            .map(|x| if squared { x * x } else { *x })
            .collect();
        let mut size = vec![1usize; n];
        let mut active = vec![true; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                for j in i + 1..n {
                    if active[j] && d[i * n + j] < best.0 {
                        best = (d[i * n + j], i, j);
                    }
                }
            }
            let (dij, i, j) = best;
            let (ni, nj) = (size[i] as f64, size[j] as f64);
            for k in 0..n {
                if !active[k] || k == i || k == j {
                    continue;
                }
                let (dik, djk) = (d[i * n + k], d[j * n + k]);
                let nk = size[k] as f64;
                let updated = match linkage {
                    Linkage::Ward => ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk),
                    Linkage::Single => dik.min(djk),
                    Linkage::Complete => dik.max(djk),
                    Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
                };
                d[i * n + k] = updated;
                d[k * n + i] = updated;
            }
            active[j] = false;
            size[i] += size[j];
            merges.push(Merge {
                a: i,
                b: j,
                height: if squared { dij.max(0.0).sqrt() } else { dij },
                size: size[i],
            });
        }
        Ok(Self {
            n_points: n,
            linkage,
            merges,
        })
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Cluster labels after stopping the agglomeration at `k` clusters. Labels
/// are numbered by first appearance in point order.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n_points;
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("cannot cut {n} points into {k} clusters")));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for m in &dendrogram.merges[..n - k] {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[rb] = ra;
    }
    let mut labels = BTreeMap::new();
    Ok((0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = labels.len();
            *labels.entry(root).or_insert(next)
        })
        .collect())
}

/// Agglomerative clustering of `points` cut at `k` clusters.
pub fn hierarchical_cluster(points: &[Vec<f64>], k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    let n = points.len();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("k = {k} outside 2..={n}")));
    }
    let d = distance_matrix(points);
    cut_dendrogram(&Dendrogram::build(&d, n, linkage)?, k)
}

/// Per-point silhouette widths and their average. Points in singleton
/// clusters score 0.
pub fn silhouette_width(assignments: &[usize], distances: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = assignments.len();
    if distances.len() != n * n {
        return Err(Error::Shape(format!("distance matrix must be {n}x{n}")));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::UndefinedSilhouette);
    }
    let widths: Vec<f64> = (0..n)
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                sums[assignments[j]] += distances[i * n + j];
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                ((b - a) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let avg = crate::stats::mean(&widths);
    Ok((widths, avg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub linkage: Linkage,
    pub feature_keys: Vec<String>,
    /// Cluster id per feature, aligned with `feature_keys`.
    pub assignments: Vec<usize>,
    pub silhouette_avg: f64,
    /// Average silhouette for every candidate `k` that was evaluated.
    pub silhouette_by_k: Vec<(usize, f64)>,
    /// One representative feature per cluster, in cluster-id order.
    pub retained: Vec<String>,
}

/// For each cluster, the member closest to the cluster mean; exact ties go to
/// the lexicographically smallest key.
pub fn retain_medoid_features(assignments: &[usize], keys: &[String], points: &[Vec<f64>]) -> Vec<String> {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let dim = points.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> = (0..assignments.len()).filter(|&i| assignments[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; dim];
        for &i in &members {
            for (acc, x) in centroid.iter_mut().zip(&points[i]) {
                *acc += x;
            }
        }
        for v in &mut centroid {
            *v /= members.len() as f64;
        }
        let dist = |i: usize| -> f64 {
            points[i]
                .iter()
                .zip(&centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let best = members
            .iter()
            .copied()
            .min_by(|&x, &y| dist(x).total_cmp(&dist(y)).then_with(|| keys[x].cmp(&keys[y])))
            .expect("cluster is non-empty");
        out.push(keys[best].clone());
    }
    out
}

/// Fit every `k` in `k_range` and keep the one with the highest average
/// silhouette (smallest `k` on ties).
pub fn select_k(
    keys: &[String],
    points: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    linkage: Linkage,
) -> Result<ClusterModel> {
    let n = points.len();
    if keys.len() != n {
        return Err(Error::Shape(format!("{} keys for {n} points", keys.len())));
    }
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > n || lo > hi {
        return Err(Error::Parameter(format!("k range {lo}..={hi} invalid for {n} features")));
    }
    let d = distance_matrix(points);
    let tree = Dendrogram::build(&d, n, linkage)?;
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    let mut silhouette_by_k = Vec::new();
    for k in lo..=hi {
        let labels = cut_dendrogram(&tree, k)?;
        let (_, avg) = silhouette_width(&labels, &d)?;
        silhouette_by_k.push((k, avg));
        if best.as_ref().is_none_or(|b| avg > b.1) {
            best = Some((k, avg, labels));
        }
    }
    let (k, silhouette_avg, assignments) = best.expect("range is non-empty");
    let retained = retain_medoid_features(&assignments, keys, points);
    Ok(ClusterModel {
        k,
        linkage,
        feature_keys: keys.to_vec(),
        assignments,
        silhouette_avg,
        silhouette_by_k,
        retained,
    })
}
