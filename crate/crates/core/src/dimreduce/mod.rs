//! Variable reduction: agglomerative clustering of feature columns with
//! silhouette-based choice of the cluster count, and principal components.
//!
//! Both paths expect features as columns over trading days. Missing cells
//! must be imputed beforehand (see
//! [`FeatureMatrix::mean_imputed_columns`](crate::features::FeatureMatrix::mean_imputed_columns)).

mod cluster;
mod pca;

pub use cluster::{
    cut_dendrogram, distance_matrix, hierarchical_cluster, retain_medoid_features, select_k,
    silhouette_width, standardize_columns, ClusterModel, Dendrogram, Linkage, Merge,
};
pub use pca::{pca_fit, pca_inverse_transform, pca_transform, PcaModel};
