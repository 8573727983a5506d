//! Shapley, Banzhaf and pairwise interaction values for weighted DNF/CNF
//! formulas and decision-tree ensembles.
//!
//! Formula metrics run in one pass over the terms. For tree ensembles every
//! root-to-leaf path is turned into a dictionary of cubes keyed by decision
//! patterns, so background, baseline and path-dependent attributions all
//! reduce to histograms, sparse products and table lookups
//! (see [`engine`]).

pub mod cube_map;
pub mod engine;
pub mod error;
pub mod formula;
pub mod oracle;
pub mod patterns;
pub mod selftest;
pub mod synth;
pub mod tree;

pub use engine::{
    attribute, baseline_attributions, Attributions, Baseline, Explainer, Metric, Order,
    StageTimings, Subset,
};
pub use error::{Error, Result};
pub use formula::{
    AttributionResult, Cube, Form, MetricKind, PairMatrix, Values, VarId, WeightedFormula,
};
pub use tree::{
    load_model, DataMatrix, FeatureId, LoadOptions, ModelFormat, Tree, TreeEnsemble, TreeNode,
};
