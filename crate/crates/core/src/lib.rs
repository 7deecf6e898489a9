//! Layered graph traversal on trees with an entropy-regularized fractional
//! policy, baseline policies, adversarial instance generators, a simulation
//! harness and numeric verification of the analysis.

pub mod adversaries;
pub mod baselines;
pub mod config;
pub mod entropic;
pub mod error;
pub mod harness;
pub mod rng;
pub mod tree;
pub mod verify;

pub use adversaries::{AdaptiveAdversary, AdversaryKind, Instance};
pub use baselines::{make_policy, DfsAgent, Policy, PolicyKind, RandomDfsWalker};
pub use config::{ot_cost, ot_coupling, Configuration, TransportPlan};
pub use entropic::{explicit_argmin, EntropicPolicy, GammaVector, PotentialBreakdown};
pub use harness::{run, run_fractional, run_randomized, InstanceSource, Mode, RunConfig, Trace};
pub use error::{LgtError, Result};
pub use tree::{HeightProfile, LayerUpdate, LayeredTree, NodeId};
