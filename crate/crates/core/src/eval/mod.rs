//! Geo-partitioned retrieval evaluation: embedders, exact and IVF-style
//! search, Recall/NDCG, repeated-trial reports, and paired t-tests.

pub mod embedder;
pub mod index;
pub mod metrics;
pub mod report;
pub mod stats;

pub use embedder::{FusedEmbedder, ItemEmbedder, QueryEmbedder, SidEmbedder};
pub use index::{
    build_index, search_topk, GeoPartitionedIndex, SearchMode, DEFAULT_COARSE_CLUSTERS,
    DEFAULT_N_PROBE,
};
pub use metrics::{ndcg_at_k, recall_at_k};
pub use report::{build_report, evaluate, evaluate_queries, EvalReport, MetricBlock, SeedMetrics, EVAL_KS};
pub use stats::{paired_t_test, pearson, TTest, ALPHA};
