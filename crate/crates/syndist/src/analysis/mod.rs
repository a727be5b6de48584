//! Clustering and geographic correlation on distance matrices: complete
//! linkage with dendrogram export, PAM k-medoids with a silhouette sweep,
//! minimum spanning trees, and geodesic / distance-correlation statistics.

mod geo;
mod linkage;
mod mst;
mod pam;

pub use geo::{
    correlate, distance_correlation, geodesic_km, pearson, per_language_correlation,
    write_scatter_csv, GeoCorrelation, PerLanguageCorrelation,
};
pub use linkage::{complete_linkage, Dendrogram, MergeStep};
pub use mst::{minimum_spanning_tree, write_mst_csv, write_mst_dot, SpanningTree};
pub use pam::{pam, silhouette_score, silhouette_sweep, ClusterAssignment, SilhouetteSweep};
