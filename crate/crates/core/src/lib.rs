//! Transferability estimation for ranking pre-trained models.
//!
//! Every score consumes a [`FeatureSet`]: a `K × ĥ` matrix of features a
//! candidate model extracted from the target dataset, with per-sample class
//! labels and, for detection, normalized box targets.
//!
//! * [`energy`] label-free free-energy score
//! * [`lda`] LDA projection + Gaussian Bayes posterior of the true class
//! * [`svd_reg`] truncated-SVD least-squares reconstruction of box targets
//! * [`logme`] evidence-maximization baseline
//! * [`fusion`] min-max normalization and summation into one score per model
//! * [`metrics`] Kendall tau, weighted tau and Pr(top-k) against ground truth
//!
//! Features are stored on disk by [`feature_store`] and built for detection
//! from per-image spatial maps by [`roi_pool`].

pub mod energy;
pub mod error;
pub mod feature_store;
pub mod fusion;
pub mod lda;
pub mod logme;
pub mod metrics;
pub mod roi_pool;
pub mod svd_reg;
pub mod synthetic;

mod linalg;

pub use error::{Error, Result};
pub use feature_store::{FeatureSet, Manifest, Violation};
pub use fusion::{Ranking, ScoreKind, ScoreReport};
pub use metrics::{BenchmarkTable, RankingEvaluation};
