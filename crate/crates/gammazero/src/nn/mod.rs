//! Message-passing network over belief graphs.
//!
//! Three rounds of edge, node, and global updates with attention-weighted
//! aggregation feed a value head on the global embedding and a policy head
//! scoring each action node. Parameter shapes depend only on the feature
//! widths and hidden size, never on instance size, which is what makes the
//! network transfer across problem scales.

pub mod model;
pub mod params_io;
pub mod tape;
pub mod train;

pub use model::{forward, gradient, loss, GnnParameters, LossBreakdown, NetworkOutput};
pub use params_io::{load_params, save_params};
pub use tape::{Mat, ParamStore, Tape};
pub use train::{train, EpochLog, TrainOutcome, TrainingConfig};

use crate::error::{GammaError, Result};
use crate::graph::{BeliefGraph, NodeType, D_EDGE, D_NODE};

/// A belief graph flattened into matrices for the network: non-global nodes,
/// non-global edges, and the action-slot row map.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    pub node_feats: Mat,
    pub edge_feats: Mat,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Node row per policy slot.
    pub action_rows: Vec<usize>,
    pub legal: Vec<bool>,
}

impl GraphTensors {
    pub fn from_graph(graph: &BeliefGraph) -> Result<Self> {
        // The global node's role is played by the network's global embedding,
        // so its rows and edges are not materialized here.
        let mut row_of = vec![usize::MAX; graph.nodes.len()];
        let mut rows = Vec::new();
        for (i, node) in graph.nodes.iter().enumerate() {
            if node.node_type == NodeType::Global {
                continue;
            }
            if node.features.len() != D_NODE {
                return Err(GammaError::ShapeMismatch {
                    role: format!("node {i} features"),
                    expected: D_NODE.to_string(),
                    actual: node.features.len().to_string(),
                });
            }
            row_of[i] = rows.len();
            rows.push(node.features.clone());
        }
        if rows.is_empty() {
            return Err(GammaError::InvalidArgument("graph has no non-global nodes".into()));
        }
        let node_feats = Mat::from_rows(rows);

        let mut edge_rows = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (i, e) in graph.edges.iter().enumerate() {
            if row_of[e.src] == usize::MAX || row_of[e.dst] == usize::MAX {
                continue; // global edge
            }
            if e.features.len() != D_EDGE {
                return Err(GammaError::ShapeMismatch {
                    role: format!("edge {i} features"),
                    expected: D_EDGE.to_string(),
                    actual: e.features.len().to_string(),
                });
            }
            edge_rows.push(e.features.clone());
            src.push(row_of[e.src]);
            dst.push(row_of[e.dst]);
        }
        if edge_rows.is_empty() {
            return Err(GammaError::InvalidArgument("graph has no non-global edges".into()));
        }
        let edge_feats = Mat::from_rows(edge_rows);

        let mut action_rows = Vec::with_capacity(graph.action_nodes.len());
        for &id in &graph.action_nodes {
            if row_of[id] == usize::MAX {
                return Err(GammaError::InvalidArgument(
                    "action node missing from tensor rows".into(),
                ));
            }
            action_rows.push(row_of[id]);
        }
        if action_rows.is_empty() {
            return Err(GammaError::NoAction);
        }
        if !graph.legal_mask.iter().any(|&l| l) {
            return Err(GammaError::NoAction);
        }
        Ok(GraphTensors {
            node_feats,
            edge_feats,
            src,
            dst,
            action_rows,
            legal: graph.legal_mask.clone(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_feats.rows
    }

    pub fn action_count(&self) -> usize {
        self.action_rows.len()
    }
}

/// One labeled expert decision, ready for the network.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub graph: GraphTensors,
    pub target_action: usize,
    pub target_value: f64,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        if self.target_action >= self.graph.action_count() {
            return Err(GammaError::Dataset(format!(
                "target action {} out of range for {} slots",
                self.target_action,
                self.graph.action_count()
            )));
        }
        if !self.graph.legal[self.target_action] {
            return Err(GammaError::Dataset(format!(
                "target action {} is masked illegal",
                self.target_action
            )));
        }
        if !self.target_value.is_finite() {
            return Err(GammaError::Dataset("non-finite target value".into()));
        }
        Ok(())
    }
}
