//! The graph network: parameters, forward pass, loss, and gradients.

use crate::error::{GammaError, Result};
use crate::nn::tape::{Mat, ParamStore, Tape};
use crate::nn::{GraphTensors, TrainingSample};
use rand::Rng;

/// Per-round parameter slots. The first layer of each update perceptron is
/// stored as one weight block per concatenated input, which multiplies each
/// input once instead of materializing the concatenation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoundSlots {
    pub edge_w_self: usize,
    pub edge_w_src: usize,
    pub edge_w_dst: usize,
    pub edge_w_glob: usize,
    pub edge_b1: usize,
    pub edge_w2: usize,
    pub edge_b2: usize,
    pub node_w_self: usize,
    pub node_w_agg: usize,
    pub node_w_glob: usize,
    pub node_b1: usize,
    pub node_w2: usize,
    pub node_b2: usize,
    pub glob_w_self: usize,
    pub glob_w_nodes: usize,
    pub glob_w_edges: usize,
    pub glob_b1: usize,
    pub glob_w2: usize,
    pub glob_b2: usize,
    pub attn_node: usize,
    pub attn_glob_nodes: usize,
    pub attn_glob_edges: usize,
}

/// Slot indices into the parameter store.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub enc_node_w: usize,
    pub enc_node_b: usize,
    pub enc_edge_w: usize,
    pub enc_edge_b: usize,
    pub global_init: usize,
    pub rounds: Vec<RoundSlots>,
    pub value_w1: usize,
    pub value_b1: usize,
    pub value_w2: usize,
    pub value_b2: usize,
    pub policy_w_glob: usize,
    pub policy_w_act: usize,
    pub policy_b1: usize,
    pub policy_w2: usize,
    pub policy_b2: usize,
    pub shapes: Vec<(usize, usize)>,
}

impl Layout {
    pub fn new(d_node: usize, d_edge: usize, hidden: usize, rounds: usize) -> Layout {
        let h = hidden;
        let mut shapes: Vec<(usize, usize)> = Vec::new();
        let slot = |shapes: &mut Vec<(usize, usize)>, r: usize, c: usize| {
            shapes.push((r, c));
            shapes.len() - 1
        };
        let enc_node_w = slot(&mut shapes, d_node, h);
        let enc_node_b = slot(&mut shapes, 1, h);
        let enc_edge_w = slot(&mut shapes, d_edge, h);
        let enc_edge_b = slot(&mut shapes, 1, h);
        let global_init = slot(&mut shapes, 1, h);
        let mut round_slots = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            round_slots.push(RoundSlots {
                edge_w_self: slot(&mut shapes, h, h),
                edge_w_src: slot(&mut shapes, h, h),
                edge_w_dst: slot(&mut shapes, h, h),
                edge_w_glob: slot(&mut shapes, h, h),
                edge_b1: slot(&mut shapes, 1, h),
                edge_w2: slot(&mut shapes, h, h),
                edge_b2: slot(&mut shapes, 1, h),
                node_w_self: slot(&mut shapes, h, h),
                node_w_agg: slot(&mut shapes, h, h),
                node_w_glob: slot(&mut shapes, h, h),
                node_b1: slot(&mut shapes, 1, h),
                node_w2: slot(&mut shapes, h, h),
                node_b2: slot(&mut shapes, 1, h),
                glob_w_self: slot(&mut shapes, h, h),
                glob_w_nodes: slot(&mut shapes, h, h),
                glob_w_edges: slot(&mut shapes, h, h),
                glob_b1: slot(&mut shapes, 1, h),
                glob_w2: slot(&mut shapes, h, h),
                glob_b2: slot(&mut shapes, 1, h),
                attn_node: slot(&mut shapes, h, 1),
                attn_glob_nodes: slot(&mut shapes, h, 1),
                attn_glob_edges: slot(&mut shapes, h, 1),
            });
        }
        let value_w1 = slot(&mut shapes, h, h);
        let value_b1 = slot(&mut shapes, 1, h);
        let value_w2 = slot(&mut shapes, h, 1);
        let value_b2 = slot(&mut shapes, 1, 1);
        let policy_w_glob = slot(&mut shapes, h, h);
        let policy_w_act = slot(&mut shapes, h, h);
        let policy_b1 = slot(&mut shapes, 1, h);
        let policy_w2 = slot(&mut shapes, h, 1);
        let policy_b2 = slot(&mut shapes, 1, 1);
        Layout {
            enc_node_w,
            enc_node_b,
            enc_edge_w,
            enc_edge_b,
            global_init,
            rounds: round_slots,
            value_w1,
            value_b1,
            value_w2,
            value_b2,
            policy_w_glob,
            policy_w_act,
            policy_b1,
            policy_w2,
            policy_b2,
            shapes,
        }
    }
}

/// Network weights plus the hyperparameters that fix their shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParameters {
    pub d_node: usize,
    pub d_edge: usize,
    pub hidden: usize,
    pub rounds: usize,
    pub store: ParamStore,
}

impl GnnParameters {
    /// Fan-in scaled uniform initialization; biases and the value head's
    /// final layer start at zero so an untrained network predicts value 0.
    pub fn init<R: Rng>(
        d_node: usize,
        d_edge: usize,
        hidden: usize,
        rounds: usize,
        rng: &mut R,
    ) -> GnnParameters {
        let layout = Layout::new(d_node, d_edge, hidden, rounds);
        // first-layer blocks that sum into one preactivation share a fan-in:
        // scale each by the number of summed inputs
        let mut fan_blocks = vec![1usize; layout.shapes.len()];
        for r in &layout.rounds {
            for slot in [r.edge_w_self, r.edge_w_src, r.edge_w_dst, r.edge_w_glob] {
                fan_blocks[slot] = 4;
            }
            for slot in [r.node_w_self, r.node_w_agg, r.node_w_glob] {
                fan_blocks[slot] = 3;
            }
            for slot in [r.glob_w_self, r.glob_w_nodes, r.glob_w_edges] {
                fan_blocks[slot] = 3;
            }
        }
        fan_blocks[layout.policy_w_glob] = 2;
        fan_blocks[layout.policy_w_act] = 2;

        let mut mats = Vec::with_capacity(layout.shapes.len());
        for (slot, &(r, c)) in layout.shapes.iter().enumerate() {
            let is_bias = r == 1 && slot != layout.global_init;
            let zeroed = is_bias
                || slot == layout.global_init
                || slot == layout.value_w2
                || slot == layout.value_b2;
            let mut m = Mat::zeros(r, c);
            if !zeroed {
                let bound = 1.0 / ((r * fan_blocks[slot]) as f64).sqrt();
                for v in &mut m.data {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            mats.push(m);
        }
        GnnParameters {
            d_node,
            d_edge,
            hidden,
            rounds,
            store: ParamStore { mats },
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.d_node, self.d_edge, self.hidden, self.rounds)
    }

    pub fn all_finite(&self) -> bool {
        self.store.mats.iter().all(|m| m.is_finite())
    }
}

/// Value and policy of one graph.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    pub value: f64,
    /// Probability per action slot; illegal slots carry exactly zero.
    pub policy: Vec<f64>,
    pub logits: Vec<f64>,
}

struct ForwardNodes {
    value: usize,
    logp: usize,
    logits: usize,
}

fn check_dims(params: &GnnParameters, graph: &GraphTensors) -> Result<()> {
    if graph.node_feats.cols != params.d_node {
        return Err(GammaError::ShapeMismatch {
            role: "node features".into(),
            expected: params.d_node.to_string(),
            actual: graph.node_feats.cols.to_string(),
        });
    }
    if graph.edge_feats.cols != params.d_edge {
        return Err(GammaError::ShapeMismatch {
            role: "edge features".into(),
            expected: params.d_edge.to_string(),
            actual: graph.edge_feats.cols.to_string(),
        });
    }
    Ok(())
}

/// Two-layer perceptron with a squashing hidden layer and linear output.
fn mlp2_linear(
    tape: &mut Tape,
    x: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
) -> usize {
    let h = tape.matmul(x, w1);
    let h = tape.add_bias(h, b1);
    let h = tape.tanh(h);
    let o = tape.matmul(h, w2);
    tape.add_bias(o, b2)
}

fn build_forward(
    tape: &mut Tape,
    params: &GnnParameters,
    graph: &GraphTensors,
) -> ForwardNodes {
    let layout = params.layout();
    let n = graph.node_count();
    let e = graph.edge_feats.rows;

    // encode raw features into the hidden width
    let node_in = tape.constant(graph.node_feats.clone());
    let edge_in = tape.constant(graph.edge_feats.clone());
    let (enc_nw, enc_nb) = (tape.param(layout.enc_node_w), tape.param(layout.enc_node_b));
    let h0 = tape.matmul(node_in, enc_nw);
    let h0 = tape.add_bias(h0, enc_nb);
    let mut nodes = tape.tanh(h0);
    let (enc_ew, enc_eb) = (tape.param(layout.enc_edge_w), tape.param(layout.enc_edge_b));
    let e0 = tape.matmul(edge_in, enc_ew);
    let e0 = tape.add_bias(e0, enc_eb);
    let mut edges = tape.tanh(e0);
    let mut global = tape.param(layout.global_init);

    let all_nodes_seg = vec![0usize; n];
    let all_edges_seg = vec![0usize; e];

    for round in &layout.rounds {
        // edge update from [edge, source, destination, global]; each input
        // is projected by its own weight block, which is the concatenated
        // perceptron evaluated without building the concatenation
        let w = tape.param(round.edge_w_self);
        let e_self = tape.matmul(edges, w);
        let w = tape.param(round.edge_w_src);
        let v_proj_src = tape.matmul(nodes, w);
        let e_src = tape.gather_rows(v_proj_src, graph.src.clone());
        let w = tape.param(round.edge_w_dst);
        let v_proj_dst = tape.matmul(nodes, w);
        let e_dst = tape.gather_rows(v_proj_dst, graph.dst.clone());
        let w = tape.param(round.edge_w_glob);
        let e_glob = tape.matmul(global, w);
        let sum = tape.add(e_self, e_src);
        let sum = tape.add(sum, e_dst);
        let sum = tape.add_bias(sum, e_glob);
        let b1 = tape.param(round.edge_b1);
        let sum = tape.add_bias(sum, b1);
        let hidden = tape.tanh(sum);
        let w2 = tape.param(round.edge_w2);
        let out = tape.matmul(hidden, w2);
        let b2 = tape.param(round.edge_b2);
        let out = tape.add_bias(out, b2);
        edges = tape.tanh(out);

        // node update from attention-weighted incident messages
        let attn = tape.param(round.attn_node);
        let scores = tape.matmul(edges, attn);
        let alpha = tape.segment_softmax(scores, graph.dst.clone(), n);
        let agg = tape.segment_weighted_sum(edges, alpha, graph.dst.clone(), n);
        let w = tape.param(round.node_w_self);
        let n_self = tape.matmul(nodes, w);
        let w = tape.param(round.node_w_agg);
        let n_agg = tape.matmul(agg, w);
        let w = tape.param(round.node_w_glob);
        let n_glob = tape.matmul(global, w);
        let sum = tape.add(n_self, n_agg);
        let sum = tape.add_bias(sum, n_glob);
        let b1 = tape.param(round.node_b1);
        let sum = tape.add_bias(sum, b1);
        let hidden = tape.tanh(sum);
        let w2 = tape.param(round.node_w2);
        let out = tape.matmul(hidden, w2);
        let b2 = tape.param(round.node_b2);
        let out = tape.add_bias(out, b2);
        nodes = tape.tanh(out);

        // global update from attention-aggregated nodes and edges
        let attn_n = tape.param(round.attn_glob_nodes);
        let nsc = tape.matmul(nodes, attn_n);
        let nal = tape.segment_softmax(nsc, all_nodes_seg.clone(), 1);
        let nagg = tape.segment_weighted_sum(nodes, nal, all_nodes_seg.clone(), 1);
        let attn_e = tape.param(round.attn_glob_edges);
        let esc = tape.matmul(edges, attn_e);
        let eal = tape.segment_softmax(esc, all_edges_seg.clone(), 1);
        let eagg = tape.segment_weighted_sum(edges, eal, all_edges_seg.clone(), 1);
        let w = tape.param(round.glob_w_self);
        let g_self = tape.matmul(global, w);
        let w = tape.param(round.glob_w_nodes);
        let g_nodes = tape.matmul(nagg, w);
        let w = tape.param(round.glob_w_edges);
        let g_edges = tape.matmul(eagg, w);
        let sum = tape.add(g_self, g_nodes);
        let sum = tape.add(sum, g_edges);
        let b1 = tape.param(round.glob_b1);
        let sum = tape.add_bias(sum, b1);
        let hidden = tape.tanh(sum);
        let w2 = tape.param(round.glob_w2);
        let out = tape.matmul(hidden, w2);
        let b2 = tape.param(round.glob_b2);
        let out = tape.add_bias(out, b2);
        global = tape.tanh(out);
    }

    // value head on the final global embedding
    let (vw1, vb1, vw2, vb2) = (
        tape.param(layout.value_w1),
        tape.param(layout.value_b1),
        tape.param(layout.value_w2),
        tape.param(layout.value_b2),
    );
    let value = mlp2_linear(tape, global, vw1, vb1, vw2, vb2);

    // policy head on [global, action embedding] per action node
    let act_emb = tape.gather_rows(nodes, graph.action_rows.clone());
    let w = tape.param(layout.policy_w_act);
    let p_act = tape.matmul(act_emb, w);
    let w = tape.param(layout.policy_w_glob);
    let p_glob = tape.matmul(global, w);
    let sum = tape.add_bias(p_act, p_glob);
    let pb1 = tape.param(layout.policy_b1);
    let sum = tape.add_bias(sum, pb1);
    let hidden = tape.tanh(sum);
    let pw2 = tape.param(layout.policy_w2);
    let out = tape.matmul(hidden, pw2);
    let pb2 = tape.param(layout.policy_b2);
    let logits = tape.add_bias(out, pb2);
    let logp = tape.masked_log_softmax(logits, graph.legal.clone());

    ForwardNodes {
        value,
        logp,
        logits,
    }
}

/// Runs the network on one graph.
pub fn forward(params: &GnnParameters, graph: &GraphTensors) -> Result<NetworkOutput> {
    check_dims(params, graph)?;
    let mut tape = Tape::new(&params.store);
    let out = build_forward(&mut tape, params, graph);
    let value = tape.value(out.value).data[0];
    let logits = tape.value(out.logits).data.clone();
    let policy: Vec<f64> = tape
        .value(out.logp)
        .data
        .iter()
        .zip(&graph.legal)
        .map(|(&lp, &legal)| if legal { lp.exp() } else { 0.0 })
        .collect();
    if !value.is_finite() || policy.iter().any(|p| !p.is_finite()) {
        return Err(GammaError::NonFinite("network output".into()));
    }
    Ok(NetworkOutput {
        value,
        policy,
        logits,
    })
}

/// Per-term loss values, averaged over the batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub value_mse: f64,
    pub cross_entropy: f64,
}

fn sample_loss_nodes(
    tape: &mut Tape,
    params: &GnnParameters,
    sample: &TrainingSample,
    lambda_v: f64,
    lambda_p: f64,
) -> (usize, f64, f64) {
    let out = build_forward(tape, params, &sample.graph);
    let vloss = tape.squared_diff(out.value, sample.target_value);
    let picked = tape.pick_row(out.logp, sample.target_action);
    let ce = tape.scale(picked, -1.0);
    let v_term = tape.scale(vloss, lambda_v);
    let p_term = tape.scale(ce, lambda_p);
    let total = tape.add(v_term, p_term);
    (total, tape.scalar(vloss), tape.scalar(ce))
}

/// Mean combined loss over a batch: lambda_v * squared value error plus
/// lambda_p * cross-entropy of the expert action.
pub fn loss(
    params: &GnnParameters,
    batch: &[TrainingSample],
    lambda_v: f64,
    lambda_p: f64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(GammaError::InvalidArgument("empty batch".into()));
    }
    let mut sum = LossBreakdown::default();
    for (i, sample) in batch.iter().enumerate() {
        sample.validate()?;
        check_dims(params, &sample.graph)?;
        let mut tape = Tape::new(&params.store);
        let (total, vmse, ce) = sample_loss_nodes(&mut tape, params, sample, lambda_v, lambda_p);
        let t = tape.scalar(total);
        if !t.is_finite() {
            return Err(GammaError::NonFinite(format!("loss of sample {i}")));
        }
        sum.total += t;
        sum.value_mse += vmse;
        sum.cross_entropy += ce;
    }
    let n = batch.len() as f64;
    Ok(LossBreakdown {
        total: sum.total / n,
        value_mse: sum.value_mse / n,
        cross_entropy: sum.cross_entropy / n,
    })
}

/// Mean loss and its exact reverse-mode gradient over a batch.
pub fn gradient(
    params: &GnnParameters,
    batch: &[TrainingSample],
    lambda_v: f64,
    lambda_p: f64,
) -> Result<(LossBreakdown, ParamStore)> {
    if batch.is_empty() {
        return Err(GammaError::InvalidArgument("empty batch".into()));
    }
    let mut grads = params.store.zeros_like();
    let mut sum = LossBreakdown::default();
    for (i, sample) in batch.iter().enumerate() {
        sample.validate()?;
        check_dims(params, &sample.graph)?;
        let mut tape = Tape::new(&params.store);
        let (total, vmse, ce) = sample_loss_nodes(&mut tape, params, sample, lambda_v, lambda_p);
        let t = tape.scalar(total);
        if !t.is_finite() {
            return Err(GammaError::NonFinite(format!("loss of sample {i}")));
        }
        sum.total += t;
        sum.value_mse += vmse;
        sum.cross_entropy += ce;
        tape.backward(total, &mut grads)?;
    }
    let n = batch.len() as f64;
    for m in &mut grads.mats {
        m.scale_assign(1.0 / n);
    }
    Ok((
        LossBreakdown {
            total: sum.total / n,
            value_mse: sum.value_mse / n,
            cross_entropy: sum.cross_entropy / n,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ParticleBelief;
    use crate::graph::build_graph;
    use crate::pomdp::{DomainParams, DomainState, PomdpModel, RockRewards, RockSampleParams};
    use crate::rng::rng_from_seed;

    fn rock_model(n: usize, rocks: Vec<(i32, i32)>) -> PomdpModel {
        let params = RockSampleParams::new(n, rocks, 20.0, RockRewards::default()).unwrap();
        PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap()
    }

    fn fixture_tensors() -> GraphTensors {
        let m = rock_model(4, vec![(1, 2), (3, 0)]);
        let mk = |g0, g1| DomainState::RockSample {
            agent: (0, 2),
            rock_good: vec![g0, g1],
            rock_sampled: vec![false, false],
            done: false,
        };
        let b = ParticleBelief {
            particles: vec![
                mk(true, true),
                mk(true, false),
                mk(false, true),
                mk(false, false),
            ],
            weights: vec![0.25; 4],
            domain_ref: m.instance_tag(),
        };
        let g = build_graph(&b, &m, 0.05).unwrap();
        GraphTensors::from_graph(&g).unwrap()
    }

    fn small_params(seed: u64) -> GnnParameters {
        let mut rng = rng_from_seed(seed);
        GnnParameters::init(
            crate::graph::D_NODE,
            crate::graph::D_EDGE,
            16,
            2,
            &mut rng,
        )
    }

    #[test]
    fn untrained_value_is_zero() {
        let params = small_params(1);
        let g = fixture_tensors();
        let out = forward(&params, &g).unwrap();
        assert_eq!(out.value, 0.0, "zero-initialized value head");
    }

    #[test]
    fn policy_is_normalized_and_masked() {
        let params = small_params(2);
        let g = fixture_tensors();
        let out = forward(&params, &g).unwrap();
        let total: f64 = out.policy.iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "sum {total}");
        // fixture masks west (wall) and sample (no rock underfoot)
        assert_eq!(out.policy[3], 0.0);
        assert_eq!(out.policy[4], 0.0);
        assert_eq!(out.policy.len(), 7);
    }

    #[test]
    fn identical_logits_give_uniform_policy() {
        let mut params = small_params(3);
        let layout = params.layout();
        // zero the policy head output layer: every action scores the same
        let w2 = layout.policy_w2;
        let b2 = layout.policy_b2;
        for v in &mut params.store.mats[w2].data {
            *v = 0.0;
        }
        for v in &mut params.store.mats[b2].data {
            *v = 0.0;
        }
        let g = fixture_tensors();
        let out = forward(&params, &g).unwrap();
        let legal_count = g.legal.iter().filter(|&&l| l).count();
        for (i, &legal) in g.legal.iter().enumerate() {
            if legal {
                assert!((out.policy[i] - 1.0 / legal_count as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_terms() {
        // Build a sample whose target matches the network output exactly.
        let params = small_params(4);
        let g = fixture_tensors();
        let out = forward(&params, &g).unwrap();
        let best = out
            .policy
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let sample = TrainingSample {
            graph: g,
            target_action: best,
            target_value: out.value,
        };
        let b = loss(&params, &[sample], 1.0, 0.0).unwrap();
        assert!(b.value_mse < 1e-20);
        assert!((b.total - 0.0).abs() < 1e-20, "lambda_p 0 isolates the value term");
    }

    #[test]
    fn uniform_policy_cross_entropy_is_log_m() {
        let mut params = small_params(5);
        let layout = params.layout();
        for slot in [layout.policy_w2, layout.policy_b2] {
            for v in &mut params.store.mats[slot].data {
                *v = 0.0;
            }
        }
        let g = fixture_tensors();
        let legal_count = g.legal.iter().filter(|&&l| l).count();
        let sample = TrainingSample {
            graph: g,
            target_action: 0,
            target_value: 0.0,
        };
        let b = loss(&params, &[sample], 0.0, 1.0).unwrap();
        assert!(
            (b.cross_entropy - (legal_count as f64).ln()).abs() < 1e-12,
            "ce {} vs ln({legal_count})",
            b.cross_entropy
        );
        assert!((b.total - b.cross_entropy).abs() < 1e-15, "lambda_v 0 isolates CE");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let params = small_params(6);
        let g = fixture_tensors();
        let sample = TrainingSample {
            graph: g,
            target_action: 2,
            target_value: 5.0,
        };
        let batch = vec![sample];
        let (_, grads) = gradient(&params, &batch, 1.0, 1.0).unwrap();

        // probe 25 coordinates spread across slots
        let mut rng = rng_from_seed(99);
        let h = 1e-4;
        let mut max_rel = 0.0f64;
        for _ in 0..25 {
            let slot = rng.gen_range(0..params.store.mats.len());
            if params.store.mats[slot].data.is_empty() {
                continue;
            }
            let idx = rng.gen_range(0..params.store.mats[slot].data.len());
            let mut plus = params.clone();
            plus.store.mats[slot].data[idx] += h;
            let mut minus = params.clone();
            minus.store.mats[slot].data[idx] -= h;
            let lp = loss(&plus, &batch, 1.0, 1.0).unwrap().total;
            let lm = loss(&minus, &batch, 1.0, 1.0).unwrap().total;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.mats[slot].data[idx];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            let rel = (fd - an).abs() / denom;
            max_rel = max_rel.max(rel);
            assert!(rel < 1e-4, "slot {slot} idx {idx}: fd {fd} vs tape {an} (rel {rel})");
        }
        assert!(max_rel.is_finite());
    }

    #[test]
    fn zero_weights_leave_weight_gradients_zero() {
        let mut params = small_params(7);
        for m in &mut params.store.mats {
            for v in &mut m.data {
                *v = 0.0;
            }
        }
        let g = fixture_tensors();
        let sample = TrainingSample {
            graph: g,
            target_action: 0,
            target_value: 1.0,
        };
        let (_, grads) = gradient(&params, &[sample], 1.0, 1.0).unwrap();
        let layout = params.layout();
        // weight matrices have no gradient path through the all-zero network;
        // only the final biases see the loss
        let mut weight_slots = vec![
            layout.enc_node_w,
            layout.enc_edge_w,
            layout.value_w1,
            layout.value_w2,
            layout.policy_w_glob,
            layout.policy_w_act,
            layout.policy_w2,
        ];
        for r in &layout.rounds {
            weight_slots.extend([
                r.edge_w_self,
                r.edge_w_src,
                r.edge_w_dst,
                r.edge_w_glob,
                r.edge_w2,
                r.node_w_self,
                r.node_w_agg,
                r.node_w_glob,
                r.node_w2,
                r.glob_w_self,
                r.glob_w_nodes,
                r.glob_w_edges,
                r.glob_w2,
            ]);
        }
        for slot in weight_slots {
            assert!(
                grads.mats[slot].data.iter().all(|&g| g == 0.0),
                "slot {slot} expected zero gradient"
            );
        }
        // the value bias does feel the error
        assert!(grads.mats[layout.value_b2].data[0] != 0.0);
    }

    #[test]
    fn duplicated_batch_gradient_equals_single_sample() {
        let params = small_params(8);
        let g = fixture_tensors();
        let sample = TrainingSample {
            graph: g,
            target_action: 1,
            target_value: -2.0,
        };
        let (_, g1) = gradient(&params, &[sample.clone()], 1.0, 1.0).unwrap();
        let (_, g3) = gradient(
            &params,
            &[sample.clone(), sample.clone(), sample],
            1.0,
            1.0,
        )
        .unwrap();
        for (a, b) in g1.mats.iter().zip(&g3.mats) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let params = small_params(9);
        let mut g = fixture_tensors();
        g.node_feats = Mat::zeros(g.node_feats.rows, 7);
        let err = forward(&params, &g);
        assert!(matches!(err, Err(GammaError::ShapeMismatch { .. })));
    }

    #[test]
    fn policy_length_tracks_action_count() {
        // same parameters serve a bigger instance without change
        let params = small_params(10);
        let m = rock_model(8, vec![(1, 2), (3, 0), (5, 5), (7, 1), (2, 6)]);
        let mut rng = rng_from_seed(30);
        let b = crate::belief::init_belief(&m, 200, &mut rng).unwrap();
        let graph = build_graph(&b, &m, 0.05).unwrap();
        let t = GraphTensors::from_graph(&graph).unwrap();
        let out = forward(&params, &t).unwrap();
        assert_eq!(out.policy.len(), 10);
        let total: f64 = out.policy.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}
