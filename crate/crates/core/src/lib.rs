//! Adaptive split balancing forests: honest regression forests whose trees
//! cycle through coordinates and keep every cut away from the node edges,
//! with optional local polynomial leaves and an AIPW treatment-effect
//! estimator built on top.

pub mod ate;
pub mod basis;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod io;
pub mod leaf;
pub mod rng;
pub mod sim;
pub mod split;
pub mod tree;

pub use ate::{estimate_ate, estimate_ate_with, AteConfig, AteResult, ForestLearner, NuisanceSpec, TuningGrid};
pub use basis::{basis_dim, BasisLadder, Kappa, PolyBasis};
pub use data::{validate_dataset, Dataset, DirectionRule, ForestConfig, Record};
pub use error::{Error, Result};
pub use forest::{DiameterReport, Forest, WeightVector};
pub use leaf::LeafModel;
pub use tree::{grow_tree, honest_split, locate_leaf, tree_predict, HonestPartition, Tree};
