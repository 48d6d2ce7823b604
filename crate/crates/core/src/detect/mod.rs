//! Supervised edge classification and unsupervised baselines.

pub mod baselines;
pub mod gbdt;
pub mod metrics;

pub use baselines::{fit_hbos, fit_iforest, fit_pca_detector, AnomalyDetector, Hbos, IsolationForest, PcaDetector};
pub use gbdt::{fit_gbdt, fit_gbdt_embeddings, GbdtModel, GbdtParams, ObliviousTree};
pub use metrics::{confusion, evaluate, Confusion, DetectionMetrics, Metric};
