//! Local feature importance for tree ensembles.
//!
//! Every split of a fitted CART tree is re-expressed as a three-valued stump
//! column, the stump columns of each feature are augmented with the raw
//! feature, and a cross-validated elastic-net GLM is fit per tree on the
//! augmented basis. A sample's importance for feature `k` is the inner
//! product of its basis values owned by `k` with the fitted coefficients,
//! averaged over trees.
//!
//! The crate also ships the baselines (MDI, Local MDI), the synthetic data
//! generators used to benchmark them, and the evaluation protocols.

pub mod basis;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod glm;
pub mod importance;
pub mod linalg;
pub mod rng;
pub mod synth;
pub mod tree;

pub use basis::NodeBasis;
pub use data::{Dataset, SplitPair, Task};
pub use error::{Error, Result};
pub use forest::{ForestModel, ForestParams};
pub use glm::{FittedGlm, GlmConfig, Link};
pub use importance::{FittedExplainer, LfiMatrix, Method};
pub use tree::{MaxFeatures, Split, TreeModel, TreeParams};
