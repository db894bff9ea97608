//! Locality-aware machine-learning kernels.
//!
//! The crate is organised around the data traffic of common learners:
//!
//! - [`data`]: datasets, CSV ingestion, synthetic blobs, folds, bootstrap
//!   samples and mini-batch streams.
//! - [`optim`]: GD / SGD / mini-batch GD and sliding-window SGD with
//!   vanilla, momentum, Adagrad and Adam update rules.
//! - [`linear`]: logistic regression and linear SVM gradients, including a
//!   fused pass that trains several linear models from one traversal.
//! - [`instance`]: k-NN and Parzen-window classifiers and their joint,
//!   distance-sharing execution.
//! - [`bayes`]: single-epoch Gaussian naive Bayes.
//! - [`nn`]: a sequential MLP with back-propagation and blocked GEMM.
//! - [`ensemble`]: cross-validation (naive and fold-streamed), bootstrap
//!   variance, bagging and three-classifier boosting.
//! - [`trace`]: access traces, stack distances and an LRU cache simulator.
//!
//! All randomness flows through [`rng::Rng`] (ChaCha8 seeded from a `u64`),
//! so every driver is a pure function of its arguments and seed.

pub mod bayes;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod instance;
pub mod linear;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod trace;

pub use data::{Dataset, FoldPartition, LabelKind, Labels};
pub use ensemble::{CvReport, Learner, LearnerFactory};
pub use error::{Error, Result};
pub use instance::{InstanceReport, KernelSpec};
pub use linear::{LinearModel, LossKind};
pub use nn::{Matrix, Mlp};
pub use optim::{OptimizerConfig, TrainReport, UpdateRule};
pub use trace::{AccessEvent, AccessKind, AccessTrace, CacheConfig, ObjectId, ReuseStats};

/// Library version embedded in CLI outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
