//! Pool-based active learning over clustered embedding spaces.
//!
//! The main strategy, SUPClust, clusters the pool, keeps the most typical
//! samples of each target cluster and queries the one closest to the
//! softmax-weighted boundary with the other clusters. Ablations, the usual
//! baselines and a simulation harness built on a linear probe sit alongside.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod pool;
pub mod scoring;
pub mod strategies;

pub use clustering::{kmeans, select_target_clusters, Clustering, KMeansParams};
pub use dataset::{load_embeddings, make_blobs, BlobParams, EmbeddingSet, Format, ImbalanceProfile};
pub use error::{Error, Result};
pub use harness::{
    run_al_loop, summarize_runs, train_linear_probe, ALRunRecord, BudgetSchedule, LinearProbe, ProbeHyper,
    RunOptions, SummaryRow,
};
pub use numeric::Matrix;
pub use pool::LabeledPool;
pub use scoring::{cluster_weights, sup_score, typicality, ClusterWeights, ScoreVector};
pub use strategies::{query, QueryResult, StrategyConfig, StrategyKind};
