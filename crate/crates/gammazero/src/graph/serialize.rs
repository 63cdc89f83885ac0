//! JSONL interchange format for belief graphs.
//!
//! One JSON object per line; field order is fixed by struct declaration so
//! identical graphs serialize to identical bytes.

use crate::error::{GammaError, Result};
use crate::graph::{BeliefGraph, GraphEdge, GraphNode, NodeType, D_EDGE, D_NODE};
use crate::pomdp::PomdpModel;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
}

/// One softmax slot of the policy head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub slot: usize,
    pub label: String,
    /// Graph node carrying this action.
    pub node: usize,
    pub legal: bool,
}

/// Serialized belief graph; the dataset interchange record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub schema_version: u32,
    pub domain: String,
    pub instance_params: serde_json::Value,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub action_map: Vec<ActionDescriptor>,
}

impl GraphRecord {
    pub fn from_graph(graph: &BeliefGraph, model: &PomdpModel) -> Self {
        GraphRecord {
            schema_version: SCHEMA_VERSION,
            domain: graph.domain.clone(),
            instance_params: serde_json::to_value(&model.domain).unwrap_or_default(),
            nodes: graph
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    node_type: n.node_type,
                    features: n.features.clone(),
                })
                .collect(),
            edges: graph
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    src: e.src,
                    dst: e.dst,
                    features: e.features.clone(),
                })
                .collect(),
            action_map: graph
                .action_nodes
                .iter()
                .enumerate()
                .map(|(slot, &node)| ActionDescriptor {
                    slot,
                    label: graph.action_labels[slot].clone(),
                    node,
                    legal: graph.legal_mask[slot],
                })
                .collect(),
        }
    }

    pub fn to_graph(&self) -> Result<BeliefGraph> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(GammaError::Dataset(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.features.len() != D_NODE {
                return Err(GammaError::Dataset(format!(
                    "node {i} has {} features, expected {D_NODE}",
                    n.features.len()
                )));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.features.len() != D_EDGE {
                return Err(GammaError::Dataset(format!(
                    "edge {i} has {} features, expected {D_EDGE}",
                    e.features.len()
                )));
            }
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(GammaError::Dataset(format!("edge {i} references a missing node")));
            }
        }
        let mut action_nodes = Vec::with_capacity(self.action_map.len());
        let mut action_labels = Vec::with_capacity(self.action_map.len());
        let mut legal_mask = Vec::with_capacity(self.action_map.len());
        for (slot, d) in self.action_map.iter().enumerate() {
            if d.slot != slot {
                return Err(GammaError::Dataset("action_map slots out of order".into()));
            }
            if d.node >= self.nodes.len() {
                return Err(GammaError::Dataset(format!(
                    "action slot {slot} references a missing node"
                )));
            }
            action_nodes.push(d.node);
            action_labels.push(d.label.clone());
            legal_mask.push(d.legal);
        }
        Ok(BeliefGraph {
            nodes: self
                .nodes
                .iter()
                .map(|n| GraphNode {
                    node_type: n.node_type,
                    features: n.features.clone(),
                    label: String::new(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| GraphEdge {
                    src: e.src,
                    dst: e.dst,
                    features: e.features.clone(),
                })
                .collect(),
            action_nodes,
            action_labels,
            legal_mask,
            domain: self.domain.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::init_belief;
    use crate::graph::build_graph;
    use crate::pomdp::{DomainParams, RockRewards, RockSampleParams};
    use crate::rng::rng_from_seed;

    #[test]
    fn record_round_trips_losslessly() {
        let params = RockSampleParams::new(4, vec![(1, 2), (3, 0)], 20.0, RockRewards::default())
            .unwrap();
        let m = PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap();
        let mut rng = rng_from_seed(7);
        let b = init_belief(&m, 100, &mut rng).unwrap();
        let g = build_graph(&b, &m, 0.05).unwrap();
        let record = GraphRecord::from_graph(&g, &m);
        let line = serde_json::to_string(&record).unwrap();
        let parsed: GraphRecord = serde_json::from_str(&line).unwrap();
        let g2 = parsed.to_graph().unwrap();
        assert_eq!(g.nodes.len(), g2.nodes.len());
        assert_eq!(g.edges.len(), g2.edges.len());
        assert_eq!(g.action_nodes, g2.action_nodes);
        assert_eq!(g.legal_mask, g2.legal_mask);
        for (a, b) in g.nodes.iter().zip(&g2.nodes) {
            assert_eq!(a.features, b.features);
        }
        for (a, b) in g.edges.iter().zip(&g2.edges) {
            assert_eq!((a.src, a.dst), (b.src, b.dst));
            assert_eq!(a.features, b.features);
        }
        // byte-stable second pass
        let line2 = serde_json::to_string(&GraphRecord::from_graph(&g, &m)).unwrap();
        assert_eq!(line, line2);
    }

    #[test]
    fn malformed_records_are_rejected() {
        let params =
            RockSampleParams::new(3, vec![(1, 1)], 20.0, RockRewards::default()).unwrap();
        let m = PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap();
        let mut rng = rng_from_seed(3);
        let b = init_belief(&m, 50, &mut rng).unwrap();
        let g = build_graph(&b, &m, 0.05).unwrap();
        let mut record = GraphRecord::from_graph(&g, &m);
        record.nodes[0].features.pop();
        assert!(record.to_graph().is_err());

        let mut record = GraphRecord::from_graph(&g, &m);
        record.schema_version = 99;
        assert!(record.to_graph().is_err());

        let mut record = GraphRecord::from_graph(&g, &m);
        record.edges[0].dst = 10_000;
        assert!(record.to_graph().is_err());
    }
}
