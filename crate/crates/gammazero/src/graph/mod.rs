//! Action-centric belief graphs.
//!
//! A particle belief becomes a typed graph: object, location, predicate,
//! action, and one global node. Predicate nodes exist only when their
//! particle support clears a threshold, so the topology itself encodes which
//! hypotheses are plausible. Actions are first-class grounded nodes; the
//! policy head scores exactly these nodes, which is what lets one network
//! serve instances of any size.

pub mod serialize;

pub use serialize::{ActionDescriptor, EdgeRecord, GraphRecord, NodeRecord};

use crate::belief::ParticleBelief;
use crate::error::{GammaError, Result};
use crate::pomdp::{DomainAction, DomainParams, DomainState, PomdpModel};
use std::collections::BTreeMap;

/// Node taxonomy. The one-hot prefix of every node feature vector follows
/// this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Object,
    Location,
    Predicate,
    Action,
    Global,
}

impl NodeType {
    pub fn index(self) -> usize {
        match self {
            NodeType::Object => 0,
            NodeType::Location => 1,
            NodeType::Predicate => 2,
            NodeType::Action => 3,
            NodeType::Global => 4,
        }
    }
}

/// Predicate vocabulary shared by both domains. The schema one-hot in node
/// features follows this order, so feature dimensions never depend on the
/// instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateSchema {
    /// AtLocation(agent, cell) — agent occupies a grid cell.
    AtLocation,
    /// RockAt(rock, cell) — static rock placement.
    RockAt,
    /// RockGood(rock) — rock quality hypothesis.
    RockGood,
    /// RockSampled(rock) — rock already sampled.
    RockSampled,
    /// AtBin(agent, bin) — discretized LightDark position.
    AtBin,
}

impl PredicateSchema {
    pub fn index(self) -> usize {
        match self {
            PredicateSchema::AtLocation => 0,
            PredicateSchema::RockAt => 1,
            PredicateSchema::RockGood => 2,
            PredicateSchema::RockSampled => 3,
            PredicateSchema::AtBin => 4,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            PredicateSchema::AtLocation | PredicateSchema::RockAt | PredicateSchema::AtBin => 2,
            PredicateSchema::RockGood | PredicateSchema::RockSampled => 1,
        }
    }
}

/// Action vocabulary; the schema one-hot on action nodes follows this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSchema {
    Up,
    Down,
    Stop,
    North,
    South,
    East,
    West,
    Sample,
    Check,
}

impl ActionSchema {
    pub fn index(self) -> usize {
        match self {
            ActionSchema::Up => 0,
            ActionSchema::Down => 1,
            ActionSchema::Stop => 2,
            ActionSchema::North => 3,
            ActionSchema::South => 4,
            ActionSchema::East => 5,
            ActionSchema::West => 6,
            ActionSchema::Sample => 7,
            ActionSchema::Check => 8,
        }
    }

    pub fn of(action: DomainAction) -> Self {
        match action {
            DomainAction::Up => ActionSchema::Up,
            DomainAction::Down => ActionSchema::Down,
            DomainAction::Stop => ActionSchema::Stop,
            DomainAction::North => ActionSchema::North,
            DomainAction::South => ActionSchema::South,
            DomainAction::East => ActionSchema::East,
            DomainAction::West => ActionSchema::West,
            DomainAction::Sample => ActionSchema::Sample,
            DomainAction::Check(_) => ActionSchema::Check,
        }
    }
}

const NUM_NODE_TYPES: usize = 5;
const NUM_OBJECT_KINDS: usize = 2; // agent, rock
const NUM_PRED_SCHEMAS: usize = 5;
const NUM_ACT_SCHEMAS: usize = 9;

/// Node feature width: type one-hot, object kind, location coords,
/// predicate schema + support, action schema. Constant across instances.
pub const D_NODE: usize =
    NUM_NODE_TYPES + NUM_OBJECT_KINDS + 2 + NUM_PRED_SCHEMAS + 1 + NUM_ACT_SCHEMAS;

const OBJ_KIND_OFF: usize = NUM_NODE_TYPES;
const LOC_COORD_OFF: usize = OBJ_KIND_OFF + NUM_OBJECT_KINDS;
const PRED_SCHEMA_OFF: usize = LOC_COORD_OFF + 2;
const PRED_SUPPORT_OFF: usize = PRED_SCHEMA_OFF + NUM_PRED_SCHEMAS;
const ACT_SCHEMA_OFF: usize = PRED_SUPPORT_OFF + 1;

/// Directed edge types; bidirectional relations get mirrored entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeType {
    PredToObj,
    ObjToPred,
    PredToLoc,
    LocToPred,
    ActToObj,
    ObjToAct,
    PredToAct,
    ActToPred,
    GlobalToNode,
    NodeToGlobal,
}

impl EdgeType {
    pub fn index(self) -> usize {
        match self {
            EdgeType::PredToObj => 0,
            EdgeType::ObjToPred => 1,
            EdgeType::PredToLoc => 2,
            EdgeType::LocToPred => 3,
            EdgeType::ActToObj => 4,
            EdgeType::ObjToAct => 5,
            EdgeType::PredToAct => 6,
            EdgeType::ActToPred => 7,
            EdgeType::GlobalToNode => 8,
            EdgeType::NodeToGlobal => 9,
        }
    }
}

const NUM_EDGE_TYPES: usize = 10;

/// Edge feature width: type one-hot, argument slot, belief strength,
/// support band, distance and sensor-accuracy scalars.
pub const D_EDGE: usize = NUM_EDGE_TYPES + 2 + 1 + 4 + 2;

pub(crate) const EDGE_ARG_OFF: usize = NUM_EDGE_TYPES;
pub(crate) const EDGE_BELIEF_OFF: usize = EDGE_ARG_OFF + 2;
pub(crate) const EDGE_BAND_OFF: usize = EDGE_BELIEF_OFF + 1;
pub(crate) const EDGE_DIST_OFF: usize = EDGE_BAND_OFF + 4;
pub(crate) const EDGE_ACC_OFF: usize = EDGE_DIST_OFF + 1;

/// Particle-consensus band of a belief strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportBand {
    Unanimous,
    Strong,
    Weak,
    Split,
}

impl SupportBand {
    /// unanimous > 0.95, strong 0.70-0.95, weak 0.30-0.70, split < 0.30.
    pub fn of(support: f64) -> Self {
        if support > 0.95 {
            SupportBand::Unanimous
        } else if support >= 0.70 {
            SupportBand::Strong
        } else if support >= 0.30 {
            SupportBand::Weak
        } else {
            SupportBand::Split
        }
    }

    pub fn index(self) -> usize {
        match self {
            SupportBand::Unanimous => 0,
            SupportBand::Strong => 1,
            SupportBand::Weak => 2,
            SupportBand::Split => 3,
        }
    }
}

/// Argument of a grounded predicate: an object index or a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PredArg {
    Agent,
    Rock(usize),
    Cell(i32, i32),
    Bin(usize),
}

/// A predicate schema applied to concrete arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundedPredicate {
    pub schema: PredicateSchema,
    pub args: Vec<PredArg>,
}

impl GroundedPredicate {
    pub fn label(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| match a {
                PredArg::Agent => "agent".to_string(),
                PredArg::Rock(i) => format!("rock_{i}"),
                PredArg::Cell(x, y) => format!("({x},{y})"),
                PredArg::Bin(b) => format!("bin_{b}"),
            })
            .collect();
        format!("{:?}({})", self.schema, args.join(","))
    }

    /// Whether this predicate holds in a concrete state.
    pub fn holds_in(&self, state: &DomainState, model: &PomdpModel) -> bool {
        match (self.schema, state) {
            (PredicateSchema::AtLocation, DomainState::RockSample { agent, .. }) => {
                matches!(self.args[1], PredArg::Cell(x, y) if (x, y) == *agent)
            }
            (PredicateSchema::RockAt, DomainState::RockSample { .. }) => {
                let (PredArg::Rock(i), PredArg::Cell(x, y)) = (self.args[0], self.args[1]) else {
                    return false;
                };
                match &model.domain {
                    DomainParams::RockSample(p) => p.rock_positions[i] == (x, y),
                    _ => false,
                }
            }
            (PredicateSchema::RockGood, DomainState::RockSample { rock_good, .. }) => {
                matches!(self.args[0], PredArg::Rock(i) if rock_good[i])
            }
            (PredicateSchema::RockSampled, DomainState::RockSample { rock_sampled, .. }) => {
                matches!(self.args[0], PredArg::Rock(i) if rock_sampled[i])
            }
            (PredicateSchema::AtBin, DomainState::LightDark { y, .. }) => {
                let DomainParams::LightDark(p) = &model.domain else {
                    return false;
                };
                matches!(self.args[1], PredArg::Bin(b) if p.bin_of(*y) == b)
            }
            _ => false,
        }
    }
}

/// Weighted particle support of every grounding that appears in at least one
/// particle. Values lie in (0, 1].
pub fn aggregate_predicates(
    b: &ParticleBelief,
    model: &PomdpModel,
) -> BTreeMap<GroundedPredicate, f64> {
    let mut supports: BTreeMap<GroundedPredicate, f64> = BTreeMap::new();
    match &model.domain {
        DomainParams::RockSample(params) => {
            for (s, &w) in b.particles.iter().zip(&b.weights) {
                if w == 0.0 {
                    continue;
                }
                let DomainState::RockSample {
                    agent,
                    rock_good,
                    rock_sampled,
                    ..
                } = s
                else {
                    continue;
                };
                *supports
                    .entry(GroundedPredicate {
                        schema: PredicateSchema::AtLocation,
                        args: vec![PredArg::Agent, PredArg::Cell(agent.0, agent.1)],
                    })
                    .or_insert(0.0) += w;
                for i in 0..params.rock_count() {
                    if rock_good[i] {
                        *supports
                            .entry(GroundedPredicate {
                                schema: PredicateSchema::RockGood,
                                args: vec![PredArg::Rock(i)],
                            })
                            .or_insert(0.0) += w;
                    }
                    if rock_sampled[i] {
                        *supports
                            .entry(GroundedPredicate {
                                schema: PredicateSchema::RockSampled,
                                args: vec![PredArg::Rock(i)],
                            })
                            .or_insert(0.0) += w;
                    }
                }
            }
            // static placement facts hold in every particle
            for (i, &(x, y)) in params.rock_positions.iter().enumerate() {
                supports.insert(
                    GroundedPredicate {
                        schema: PredicateSchema::RockAt,
                        args: vec![PredArg::Rock(i), PredArg::Cell(x, y)],
                    },
                    1.0,
                );
            }
        }
        DomainParams::LightDark(params) => {
            for (s, &w) in b.particles.iter().zip(&b.weights) {
                if w == 0.0 {
                    continue;
                }
                let DomainState::LightDark { y, .. } = s else {
                    continue;
                };
                *supports
                    .entry(GroundedPredicate {
                        schema: PredicateSchema::AtBin,
                        args: vec![PredArg::Agent, PredArg::Bin(params.bin_of(*y))],
                    })
                    .or_insert(0.0) += w;
            }
        }
    }
    // accumulated weights may drift a hair past 1
    for s in supports.values_mut() {
        *s = s.min(1.0);
    }
    supports
}

/// A node of the belief graph.
#[derive(Debug, Clone)]
pub struct GraphNode {
    pub node_type: NodeType,
    pub features: Vec<f64>,
    pub label: String,
}

/// A directed edge with features.
#[derive(Debug, Clone)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
}

/// Belief graph with a canonical node order: global, objects, locations,
/// predicates, actions.
#[derive(Debug, Clone)]
pub struct BeliefGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Node index per softmax slot, ordered by action enumeration index.
    pub action_nodes: Vec<usize>,
    /// Action labels per slot.
    pub action_labels: Vec<String>,
    /// Executability per slot under the encoded belief.
    pub legal_mask: Vec<bool>,
    pub domain: String,
}

struct GraphBuilder {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

impl GraphBuilder {
    fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn add_node(&mut self, node_type: NodeType, label: String) -> usize {
        let mut features = vec![0.0; D_NODE];
        features[node_type.index()] = 1.0;
        self.nodes.push(GraphNode {
            node_type,
            features,
            label,
        });
        self.nodes.len() - 1
    }

    /// Adds the directed edge and its mirror.
    #[allow(clippy::too_many_arguments)]
    fn add_pair(
        &mut self,
        a: usize,
        b: usize,
        fwd: EdgeType,
        rev: EdgeType,
        arg_slot: Option<usize>,
        belief: f64,
        dist: f64,
        acc: f64,
    ) {
        for (src, dst, ty) in [(a, b, fwd), (b, a, rev)] {
            let mut f = vec![0.0; D_EDGE];
            f[ty.index()] = 1.0;
            if let Some(slot) = arg_slot {
                f[EDGE_ARG_OFF + slot] = 1.0;
            }
            f[EDGE_BELIEF_OFF] = belief;
            f[EDGE_BAND_OFF + SupportBand::of(belief).index()] = 1.0;
            f[EDGE_DIST_OFF] = dist;
            f[EDGE_ACC_OFF] = acc;
            self.edges.push(GraphEdge {
                src,
                dst,
                features: f,
            });
        }
    }
}

/// Builds the action-centric graph of a belief. Predicate nodes appear only
/// when their support reaches `tau`.
pub fn build_graph(b: &ParticleBelief, model: &PomdpModel, tau: f64) -> Result<BeliefGraph> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(GammaError::InvalidArgument(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    if b.is_empty() {
        return Err(GammaError::InvalidArgument("empty belief".into()));
    }

    let supports = aggregate_predicates(b, model);
    let kept: Vec<(&GroundedPredicate, f64)> = supports
        .iter()
        .filter(|(_, &s)| s >= tau)
        .map(|(p, &s)| (p, s))
        .collect();

    let mut builder = GraphBuilder::new();
    let global = builder.add_node(NodeType::Global, "global".into());

    match &model.domain {
        DomainParams::RockSample(params) => {
            let n = params.grid_n as f64;
            let k = params.rock_count();

            // objects: agent then rocks
            let agent_obj = builder.add_node(NodeType::Object, "agent".into());
            builder.nodes[agent_obj].features[OBJ_KIND_OFF] = 1.0;
            let rock_objs: Vec<usize> = (0..k)
                .map(|i| {
                    let id = builder.add_node(NodeType::Object, format!("rock_{i}"));
                    builder.nodes[id].features[OBJ_KIND_OFF + 1] = 1.0;
                    id
                })
                .collect();

            // locations: agent cells with their move destinations, exit cells
            // (one per occupied row), rock cells; sorted row-major
            let mut agent_cells: Vec<((i32, i32), f64)> = Vec::new();
            for (s, &w) in b.particles.iter().zip(&b.weights) {
                if w == 0.0 {
                    continue;
                }
                if let DomainState::RockSample { agent, .. } = s {
                    match agent_cells.iter_mut().find(|(c, _)| c == agent) {
                        Some((_, mass)) => *mass += w,
                        None => agent_cells.push((*agent, w)),
                    }
                }
            }
            let mut cells: Vec<(i32, i32)> = Vec::new();
            let push_cell = |cells: &mut Vec<(i32, i32)>, c: (i32, i32)| {
                if !cells.contains(&c) {
                    cells.push(c);
                }
            };
            for &(agent, _) in &agent_cells {
                push_cell(&mut cells, agent);
                push_cell(&mut cells, (params.grid_n as i32, agent.1));
                for m in 0..4 {
                    push_cell(&mut cells, move_destination(params, agent, m));
                }
            }
            for &c in &params.rock_positions {
                push_cell(&mut cells, c);
            }
            cells.sort_by_key(|&(x, y)| (y, x));
            let mut cell_nodes: BTreeMap<(i32, i32), usize> = BTreeMap::new();
            for &(x, y) in &cells {
                let id = builder.add_node(NodeType::Location, format!("loc({x},{y})"));
                builder.nodes[id].features[LOC_COORD_OFF] = x as f64 / n;
                builder.nodes[id].features[LOC_COORD_OFF + 1] = y as f64 / n;
                cell_nodes.insert((x, y), id);
            }

            // predicate nodes in lexicographic order (BTreeMap order)
            let mut pred_nodes: Vec<(usize, &GroundedPredicate, f64)> = Vec::new();
            for (pred, support) in &kept {
                let id = builder.add_node(NodeType::Predicate, pred.label());
                builder.nodes[id].features[PRED_SCHEMA_OFF + pred.schema.index()] = 1.0;
                builder.nodes[id].features[PRED_SUPPORT_OFF] = *support;
                pred_nodes.push((id, pred, *support));
            }

            // action nodes in enumeration order
            let mut action_nodes = Vec::new();
            let mut action_labels = Vec::new();
            for idx in 0..model.action_count() {
                let action = model.action(idx)?;
                let id = builder.add_node(NodeType::Action, action.label());
                builder.nodes[id].features[ACT_SCHEMA_OFF + ActionSchema::of(action).index()] = 1.0;
                action_nodes.push(id);
                action_labels.push(action.label());
            }

            // predicate-argument edges
            for (id, pred, support) in &pred_nodes {
                for (slot, arg) in pred.args.iter().enumerate() {
                    match arg {
                        PredArg::Agent => builder.add_pair(
                            *id,
                            agent_obj,
                            EdgeType::PredToObj,
                            EdgeType::ObjToPred,
                            Some(slot),
                            *support,
                            0.0,
                            0.0,
                        ),
                        PredArg::Rock(i) => builder.add_pair(
                            *id,
                            rock_objs[*i],
                            EdgeType::PredToObj,
                            EdgeType::ObjToPred,
                            Some(slot),
                            *support,
                            0.0,
                            0.0,
                        ),
                        PredArg::Cell(x, y) => builder.add_pair(
                            *id,
                            cell_nodes[&(*x, *y)],
                            EdgeType::PredToLoc,
                            EdgeType::LocToPred,
                            Some(slot),
                            *support,
                            0.0,
                            0.0,
                        ),
                        PredArg::Bin(_) => {}
                    }
                }
            }

            // expected agent-rock distances and co-location mass in one pass
            let diag = n * std::f64::consts::SQRT_2;
            let mut expected_dist = vec![0.0f64; k];
            let mut coloc_mass = vec![0.0f64; k];
            for (s, &w) in b.particles.iter().zip(&b.weights) {
                if w == 0.0 {
                    continue;
                }
                if let DomainState::RockSample { agent, .. } = s {
                    for i in 0..k {
                        expected_dist[i] += w * params.agent_rock_distance(*agent, i);
                        if *agent == params.rock_positions[i] {
                            coloc_mass[i] += w;
                        }
                    }
                }
            }

            // action-object edges: checks to their rocks, sample to co-located rocks
            for i in 0..k {
                let d = expected_dist[i];
                builder.add_pair(
                    action_nodes[5 + i],
                    rock_objs[i],
                    EdgeType::ActToObj,
                    EdgeType::ObjToAct,
                    None,
                    1.0,
                    d / diag,
                    params.sensor_accuracy(d),
                );
            }
            for i in 0..k {
                let coloc = coloc_mass[i].min(1.0);
                if coloc > 0.0 {
                    builder.add_pair(
                        action_nodes[4],
                        rock_objs[i],
                        EdgeType::ActToObj,
                        EdgeType::ObjToAct,
                        None,
                        coloc,
                        expected_dist[i] / diag,
                        params.sensor_accuracy(expected_dist[i]),
                    );
                }
            }

            // move-destination edges: each move links to the cell it reaches,
            // carrying how much closer that cell is to believed-good rocks
            // and to the exit
            let good_support: Vec<f64> = (0..k)
                .map(|i| {
                    supports
                        .get(&GroundedPredicate {
                            schema: PredicateSchema::RockGood,
                            args: vec![PredArg::Rock(i)],
                        })
                        .copied()
                        .unwrap_or(0.0)
                })
                .collect();
            let target_dist = |cell: (i32, i32)| -> f64 {
                let mut best: f64 = 1.0;
                for i in 0..k {
                    let (rx, ry) = params.rock_positions[i];
                    let d = (((cell.0 - rx).pow(2) + (cell.1 - ry).pow(2)) as f64).sqrt() / diag;
                    best = best.min(0.5 * (d + (1.0 - good_support[i])));
                }
                best
            };
            for (move_idx, action_node) in action_nodes.iter().take(4).enumerate() {
                for &(agent, mass) in &agent_cells {
                    let dest = move_destination(params, agent, move_idx);
                    let exit_dist = ((params.grid_n as i32 - dest.0).max(0) as f64) / n;
                    builder.add_pair(
                        *action_node,
                        cell_nodes[&dest],
                        EdgeType::ActToObj,
                        EdgeType::ObjToAct,
                        None,
                        mass.min(1.0),
                        target_dist(dest),
                        exit_dist,
                    );
                }
            }

            // predicate-action edges: position predicates condition moves,
            // rock predicates condition sample and the matching check
            for (id, pred, support) in &pred_nodes {
                match pred.schema {
                    PredicateSchema::AtLocation => {
                        for move_idx in 0..4 {
                            builder.add_pair(
                                *id,
                                action_nodes[move_idx],
                                EdgeType::PredToAct,
                                EdgeType::ActToPred,
                                None,
                                *support,
                                0.0,
                                0.0,
                            );
                        }
                    }
                    PredicateSchema::RockGood => {
                        let PredArg::Rock(i) = pred.args[0] else {
                            continue;
                        };
                        // the distance scalar tells Sample which rock is
                        // underfoot, not merely that some rock looks good
                        builder.add_pair(
                            *id,
                            action_nodes[4],
                            EdgeType::PredToAct,
                            EdgeType::ActToPred,
                            None,
                            *support,
                            expected_dist[i] / diag,
                            params.sensor_accuracy(expected_dist[i]),
                        );
                        builder.add_pair(
                            *id,
                            action_nodes[5 + i],
                            EdgeType::PredToAct,
                            EdgeType::ActToPred,
                            None,
                            *support,
                            expected_dist[i] / diag,
                            params.sensor_accuracy(expected_dist[i]),
                        );
                    }
                    PredicateSchema::RockSampled => {
                        let PredArg::Rock(i) = pred.args[0] else {
                            continue;
                        };
                        builder.add_pair(
                            *id,
                            action_nodes[4],
                            EdgeType::PredToAct,
                            EdgeType::ActToPred,
                            None,
                            *support,
                            expected_dist[i] / diag,
                            params.sensor_accuracy(expected_dist[i]),
                        );
                    }
                    _ => {}
                }
            }

            finish(
                builder,
                global,
                action_nodes,
                action_labels,
                legal_mask(b, model),
                model.instance_tag(),
            )
        }
        DomainParams::LightDark(params) => {
            let agent_obj = builder.add_node(NodeType::Object, "agent".into());
            builder.nodes[agent_obj].features[OBJ_KIND_OFF] = 1.0;

            // every bin of the window is a location node
            let (lo, hi) = params.bin_window();
            let span = hi - lo;
            let bins = params.bin_count();
            let bin_nodes: Vec<usize> = (0..bins)
                .map(|bin| {
                    let id = builder.add_node(NodeType::Location, format!("bin_{bin}"));
                    builder.nodes[id].features[LOC_COORD_OFF] =
                        (params.bin_center(bin) - lo) / span;
                    id
                })
                .collect();

            let mut pred_nodes: Vec<(usize, &GroundedPredicate, f64)> = Vec::new();
            for (pred, support) in &kept {
                let id = builder.add_node(NodeType::Predicate, pred.label());
                builder.nodes[id].features[PRED_SCHEMA_OFF + pred.schema.index()] = 1.0;
                builder.nodes[id].features[PRED_SUPPORT_OFF] = *support;
                pred_nodes.push((id, pred, *support));
            }

            let mut action_nodes = Vec::new();
            let mut action_labels = Vec::new();
            for idx in 0..model.action_count() {
                let action = model.action(idx)?;
                let id = builder.add_node(NodeType::Action, action.label());
                builder.nodes[id].features[ACT_SCHEMA_OFF + ActionSchema::of(action).index()] = 1.0;
                action_nodes.push(id);
                action_labels.push(action.label());
            }

            for (id, pred, support) in &pred_nodes {
                let PredArg::Bin(bin) = pred.args[1] else {
                    continue;
                };
                builder.add_pair(
                    *id,
                    agent_obj,
                    EdgeType::PredToObj,
                    EdgeType::ObjToPred,
                    Some(0),
                    *support,
                    0.0,
                    0.0,
                );
                builder.add_pair(
                    *id,
                    bin_nodes[bin],
                    EdgeType::PredToLoc,
                    EdgeType::LocToPred,
                    Some(1),
                    *support,
                    0.0,
                    0.0,
                );
                for &a in &action_nodes {
                    builder.add_pair(
                        *id,
                        a,
                        EdgeType::PredToAct,
                        EdgeType::ActToPred,
                        None,
                        *support,
                        0.0,
                        0.0,
                    );
                }
            }

            finish(
                builder,
                global,
                action_nodes,
                action_labels,
                legal_mask(b, model),
                model.instance_tag(),
            )
        }
    }
}

/// Cell a move lands on: clamped at walls, the exit column east off-grid.
fn move_destination(
    params: &crate::pomdp::RockSampleParams,
    agent: (i32, i32),
    move_idx: usize,
) -> (i32, i32) {
    let n = params.grid_n as i32;
    match move_idx {
        0 => {
            if agent.1 + 1 < n {
                (agent.0, agent.1 + 1)
            } else {
                agent
            }
        }
        1 => {
            if agent.1 > 0 {
                (agent.0, agent.1 - 1)
            } else {
                agent
            }
        }
        2 => {
            if agent.0 + 1 < n {
                (agent.0 + 1, agent.1)
            } else {
                (n, agent.1)
            }
        }
        _ => {
            if agent.0 > 0 {
                (agent.0 - 1, agent.1)
            } else {
                agent
            }
        }
    }
}

fn finish(
    mut builder: GraphBuilder,
    global: usize,
    action_nodes: Vec<usize>,
    action_labels: Vec<String>,
    legal_mask: Vec<bool>,
    domain: String,
) -> Result<BeliefGraph> {
    // the global node links to every other node
    for id in 0..builder.nodes.len() {
        if id != global {
            builder.add_pair(
                global,
                id,
                EdgeType::GlobalToNode,
                EdgeType::NodeToGlobal,
                None,
                1.0,
                0.0,
                0.0,
            );
        }
    }
    Ok(BeliefGraph {
        nodes: builder.nodes,
        edges: builder.edges,
        action_nodes,
        action_labels,
        legal_mask,
        domain,
    })
}

/// Executability per action slot under the belief: union over particles of
/// the per-state useful-action sets.
pub fn legal_mask(b: &ParticleBelief, model: &PomdpModel) -> Vec<bool> {
    let mut mask = vec![false; model.action_count()];
    for (s, &w) in b.particles.iter().zip(&b.weights) {
        if w == 0.0 || s.is_done() {
            continue;
        }
        for idx in model.useful_actions(s) {
            mask[idx] = true;
        }
    }
    if !mask.iter().any(|&m| m) {
        // terminal or degenerate belief: keep every slot available
        mask.fill(true);
    }
    mask
}
