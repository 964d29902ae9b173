//! Feature compression: PCA to `M` dimensions, then k-means inside equal
//! score buckets, yielding `K` basis vectors `μ_i` with representative
//! scores `f_i` (the mean score of each cluster's members).

mod buckets;
mod kmeans;
mod pca;

pub use buckets::{allocate, bucket_index, make_buckets, make_buckets_for_scores, BucketSpec};
pub use kmeans::{
    bucketed_kmeans, kmeans, kmeans_restarts, nearest, plain_kmeans, BasisSet, BucketedKMeans, KMeansConfig, KMeansFit,
};
pub use pca::{fit_pca, fit_pca_points, project, PcaModel};
