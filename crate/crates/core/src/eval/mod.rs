//! Evaluation protocols and their metrics.

pub mod cluster;
pub mod counterfactual;
pub mod metrics;
pub mod protocols;
pub mod report;
pub mod retrain;

pub use cluster::{kmeans, subgroup_mse, KMeans, SubgroupMse};
pub use counterfactual::{knn_counterfactual, CounterfactualMatch};
pub use metrics::{auroc, group_ranks, signal_auroc_rows, signal_identification};
pub use protocols::{
    cluster_protocol, correlation_protocol, counterfactual_protocol, selection_protocol, signal_benchmark,
    stability_protocol, ProtocolConfig,
};
pub use report::{EvalReport, Record, SummaryRow};
pub use retrain::{forest_score, mask_and_retrain, mask_features, stability, top_k_count, top_k_sets, union_fraction};
