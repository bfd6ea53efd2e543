//! Decision tree learning with tunable algorithm families.
//!
//! The crate covers the full pipeline for data-driven selection of decision
//! tree learning algorithms over collections of related datasets:
//!
//! - [`data`]: dataset ingestion (CSV), cross-validation folds, synthetic
//!   generators for property tests.
//! - [`criteria`]: parameterized splitting criteria: the two-parameter
//!   Tsallis family, the gamma-product family, Tweedie deviance for
//!   regression, and the classic presets (Gini, entropy, KM96) as exact
//!   special cases.
//! - [`tree`]: the top-down greedy learner over a finite node function
//!   class, prediction, and 0-1/MSE losses.
//! - [`prune`]: minimum cost-complexity pruning with the exact breakpoint
//!   path, pessimistic pruning, and reduced-error pruning.
//! - [`bayes`]: Bayesian tree priors with explicit randomness, the
//!   Dirichlet-multinomial marginal likelihood, and Metropolis-Hastings
//!   stochastic search.
//! - [`tune`]: empirical risk minimization over hyperparameter grids and the
//!   exact piecewise tuner for the cost-complexity parameter, including the
//!   regularized accuracy/size objective.
//!
//! Everything is deterministic given explicit 64-bit seeds; all values are
//! immutable after construction and safe to share across threads.

pub mod bayes;
pub mod criteria;
pub mod data;
pub mod prune;
pub mod tree;
pub mod tune;

pub use criteria::{CriterionParams, Preset};
pub use data::{Dataset, FoldPlan, InstanceCollection, Task};
pub use tree::{DecisionTree, NodeFunction, NodeFunctionClass, StopRule};
