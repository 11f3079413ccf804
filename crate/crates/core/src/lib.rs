//! Clustering-guided curriculum contrastive learning for attributed graphs.
//!
//! A two-layer GCN embeds the nodes. Each epoch k-means over the embedding
//! supplies pseudo-labels and per-node clustering entropy, which shape a
//! graph augmentation and decide which nodes train on the clustering task
//! versus the node discrimination task. The share of clustering nodes grows
//! over training, easiest (lowest-entropy) nodes first.
//!
//! Entry points are [`load_bundle`], [`TrainConfig`] and [`train`].

pub mod augment;
pub mod config;
pub mod contrast;
pub mod curriculum;
pub mod diff;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod guidance;
pub mod metrics;
pub mod report;
pub mod synthetic;
pub mod trainer;

pub use config::{Ablation, TrainConfig};
pub use error::{BundleError, DiffError, Error, Result};
pub use graph::{load_bundle, save_bundle, FeaturesFormat, GraphBundle};
pub use metrics::{evaluate, Scores};
pub use trainer::{run_ablations, train, TrainReport, Trainer};
