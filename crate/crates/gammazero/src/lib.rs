//! Belief-space planning for POMDPs with learned graph heuristics.
//!
//! The pipeline has two phases. Offline, expert demonstrations collected on
//! small problem instances are converted into action-centric belief graphs
//! and used to train a message-passing network that predicts expert values
//! and actions. Online, the trained network guides Monte Carlo tree search
//! in belief space. Because the graph encoding grows with the instance
//! rather than being fixed-size, one trained network transfers to instances
//! larger than anything seen in training.
//!
//! Module map:
//! - [`pomdp`]: generative models for the LightDark and RockSample domains.
//! - [`belief`]: weighted particle filtering plus an exact discrete filter
//!   used as a correctness oracle.
//! - [`graph`]: belief-to-graph encoding with threshold-gated predicate
//!   nodes and typed edges.
//! - [`nn`]: the message-passing network, reverse-mode gradients, and
//!   Adam training.
//! - [`oracle`]: expectimax and high-budget search experts for labeling.
//! - [`mcts`]: progressive-widening tree search with pluggable leaf
//!   evaluators.
//! - [`harness`]: configuration, episode rollouts, and the collect / train /
//!   eval / generalize workflows behind the CLI.

pub mod belief;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mcts;
pub mod nn;
pub mod oracle;
pub mod pomdp;
pub mod rng;

#[cfg(doctest)]
mod guide;

pub use error::GammaError;
