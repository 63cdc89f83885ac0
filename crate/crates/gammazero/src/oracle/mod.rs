//! Expert policies for training-data generation.
//!
//! Small instances get depth-limited belief expectimax: exhaustive max over
//! actions, expectation over observations under their predictive
//! probability, recursing on posterior beliefs with leaf value zero.
//! RockSample runs it on the exact discrete filter, which keeps the work per
//! node tiny; LightDark discretizes its Gaussian observation with a 5-point
//! Gauss-Hermite rule. Medium instances fall back to a high-budget
//! uniform-rollout tree search.

use crate::belief::{exact::exact_init, ExactBelief, ParticleBelief};
use crate::error::{GammaError, Result};
use crate::graph::{build_graph, GraphRecord};
use crate::mcts::{plan, SearchConfig, UniformRolloutEvaluator};
use crate::pomdp::{DomainAction, DomainObservation, DomainParams, DomainState, PomdpModel, RockObs};
use crate::rng::{stream_rng, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Expert decision at a belief: the chosen action and its value-to-go.
#[derive(Debug, Clone)]
pub struct ExpertResult {
    pub best_action: DomainAction,
    pub action_index: usize,
    pub value: f64,
}

/// Belief handed to the expert.
pub enum BeliefView<'a> {
    Particles(&'a ParticleBelief),
    Exact(&'a ExactBelief),
}

/// Five-point Gauss-Hermite abscissas and normalized weights for
/// integration against a standard normal.
pub(crate) const GH_POINTS: [(f64, f64); 5] = [
    (-2.020182870456086, 0.011257411327720688),
    (-0.9585724646138185, 0.2220759220056126),
    (0.0, 0.5333333333333333),
    (0.9585724646138185, 0.2220759220056126),
    (2.020182870456086, 0.011257411327720688),
];

/// Depth-limited belief expectimax. Returns `None` on a terminal belief.
/// Ties break toward the lowest action index; a configurable node budget
/// guards against branching explosions.
pub fn expectimax(
    belief: BeliefView,
    model: &PomdpModel,
    depth: usize,
    node_budget: usize,
) -> Result<Option<ExpertResult>> {
    if depth == 0 {
        return Err(GammaError::InvalidArgument("depth must be at least 1".into()));
    }
    let mut ctx = Expectimax {
        model,
        budget: node_budget,
        expanded: 0,
    };
    match belief {
        BeliefView::Exact(b) => ctx.best_exact(b, depth),
        BeliefView::Particles(b) => {
            let view = PView {
                states: b.particles.clone(),
                weights: b.weights.clone(),
            };
            ctx.best_particles(&view, depth)
        }
    }
}

struct Expectimax<'a> {
    model: &'a PomdpModel,
    budget: usize,
    expanded: usize,
}

/// Observation set of an action: checks branch on {Good, Bad}, everything
/// else is a single deterministic-or-continuous branch.
enum ObsSet {
    Discrete(Vec<DomainObservation>),
    Gaussian,
}

fn obs_set(model: &PomdpModel, action: DomainAction) -> ObsSet {
    match (&model.domain, action) {
        (DomainParams::RockSample(_), DomainAction::Check(_)) => ObsSet::Discrete(vec![
            DomainObservation::Rock(RockObs::Good),
            DomainObservation::Rock(RockObs::Bad),
        ]),
        (DomainParams::RockSample(_), _) => {
            ObsSet::Discrete(vec![DomainObservation::Rock(RockObs::None)])
        }
        (DomainParams::LightDark(_), _) => ObsSet::Gaussian,
    }
}

impl Expectimax<'_> {
    fn charge(&mut self) -> Result<()> {
        self.expanded += 1;
        if self.expanded > self.budget {
            return Err(GammaError::NodeBudgetExceeded {
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn legal_of(&self, states: &[DomainState], weights: &[f64]) -> Vec<usize> {
        let mut mask = vec![false; self.model.action_count()];
        for (s, &w) in states.iter().zip(weights) {
            if w == 0.0 || s.is_done() {
                continue;
            }
            for a in self.model.useful_actions(s) {
                mask[a] = true;
            }
        }
        (0..mask.len()).filter(|&a| mask[a]).collect()
    }

    // --- exact filter variant -------------------------------------------

    fn best_exact(&mut self, b: &ExactBelief, depth: usize) -> Result<Option<ExpertResult>> {
        if b.is_terminal() {
            return Ok(None);
        }
        let mut best: Option<(usize, f64)> = None;
        for a in self.legal_of(&b.support, &b.probs) {
            let q = self.q_exact(b, a, depth)?;
            if best.map_or(true, |(_, bq)| q > bq) {
                best = Some((a, q));
            }
        }
        let Some((a, q)) = best else { return Ok(None) };
        Ok(Some(ExpertResult {
            best_action: self.model.action(a)?,
            action_index: a,
            value: q,
        }))
    }

    fn value_exact(&mut self, b: &ExactBelief, depth: usize) -> Result<f64> {
        if depth == 0 || b.is_terminal() {
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for a in self.legal_of(&b.support, &b.probs) {
            best = best.max(self.q_exact(b, a, depth)?);
        }
        Ok(if best.is_finite() { best } else { 0.0 })
    }

    fn q_exact(&mut self, b: &ExactBelief, action_index: usize, depth: usize) -> Result<f64> {
        self.charge()?;
        let action = self.model.action(action_index)?;
        let mut rng = crate::rng::rng_from_seed(0); // dynamics are deterministic
        let mut next_states = Vec::with_capacity(b.support.len());
        let mut reward = 0.0;
        for (s, &p) in b.support.iter().zip(&b.probs) {
            let next = self.model.transition(s, action, &mut rng)?;
            reward += p * self.model.reward(s, action, &next);
            next_states.push(next);
        }
        let ObsSet::Discrete(observations) = obs_set(self.model, action) else {
            return Err(GammaError::UnsupportedDomain);
        };
        let mut future = 0.0;
        for obs in &observations {
            let mut posterior_states: Vec<DomainState> = Vec::new();
            let mut posterior_probs: Vec<f64> = Vec::new();
            let mut p_obs = 0.0;
            for (next, &p) in next_states.iter().zip(&b.probs) {
                let lik = self.model.observation_likelihood(obs, next, action)?;
                let mass = p * lik;
                if mass == 0.0 {
                    continue;
                }
                p_obs += mass;
                match posterior_states.iter().position(|t| t == next) {
                    Some(i) => posterior_probs[i] += mass,
                    None => {
                        posterior_states.push(next.clone());
                        posterior_probs.push(mass);
                    }
                }
            }
            if p_obs == 0.0 {
                continue;
            }
            for p in &mut posterior_probs {
                *p /= p_obs;
            }
            let child = ExactBelief {
                support: posterior_states,
                probs: posterior_probs,
            };
            future += p_obs * self.value_exact(&child, depth - 1)?;
        }
        Ok(reward + self.model.discount * future)
    }

    // --- particle variant -----------------------------------------------

    fn best_particles(&mut self, b: &PView, depth: usize) -> Result<Option<ExpertResult>> {
        if b.is_terminal() {
            return Ok(None);
        }
        let mut best: Option<(usize, f64)> = None;
        for a in self.legal_of(&b.states, &b.weights) {
            let q = self.q_particles(b, a, depth)?;
            if best.map_or(true, |(_, bq)| q > bq) {
                best = Some((a, q));
            }
        }
        let Some((a, q)) = best else { return Ok(None) };
        Ok(Some(ExpertResult {
            best_action: self.model.action(a)?,
            action_index: a,
            value: q,
        }))
    }

    fn value_particles(&mut self, b: &PView, depth: usize) -> Result<f64> {
        if depth == 0 || b.is_terminal() {
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for a in self.legal_of(&b.states, &b.weights) {
            best = best.max(self.q_particles(b, a, depth)?);
        }
        Ok(if best.is_finite() { best } else { 0.0 })
    }

    fn q_particles(&mut self, b: &PView, action_index: usize, depth: usize) -> Result<f64> {
        self.charge()?;
        let action = self.model.action(action_index)?;
        let mut rng = crate::rng::rng_from_seed(0);
        let mut next_states = Vec::with_capacity(b.states.len());
        let mut reward = 0.0;
        for (s, &w) in b.states.iter().zip(&b.weights) {
            let next = if s.is_done() {
                s.clone()
            } else {
                self.model.transition(s, action, &mut rng)?
            };
            if !s.is_done() {
                reward += w * self.model.reward(s, action, &next);
            }
            next_states.push(next);
        }

        let future = match obs_set(self.model, action) {
            ObsSet::Discrete(observations) => {
                let mut acc = 0.0;
                for obs in &observations {
                    let (child, p_obs) = reweight(self.model, &next_states, &b.weights, obs, action)?;
                    if p_obs == 0.0 {
                        continue;
                    }
                    acc += p_obs * self.value_particles(&child, depth - 1)?;
                }
                acc
            }
            ObsSet::Gaussian => {
                // predictive moments of the observation under the propagated belief
                let DomainParams::LightDark(params) = &self.model.domain else {
                    return Err(GammaError::UnsupportedDomain);
                };
                let mut mean = 0.0;
                for (s, &w) in next_states.iter().zip(&b.weights) {
                    if let DomainState::LightDark { y, .. } = s {
                        mean += w * y;
                    }
                }
                let mut var = 0.0;
                for (s, &w) in next_states.iter().zip(&b.weights) {
                    if let DomainState::LightDark { y, .. } = s {
                        let sigma = params.sigma(*y);
                        var += w * ((y - mean) * (y - mean) + sigma * sigma);
                    }
                }
                let std = var.max(1e-12).sqrt();
                let mut acc = 0.0;
                for &(xi, wq) in &GH_POINTS {
                    let obs = DomainObservation::Real(mean + std::f64::consts::SQRT_2 * std * xi);
                    let (child, p_obs) = reweight(self.model, &next_states, &b.weights, &obs, action)?;
                    if p_obs == 0.0 {
                        continue;
                    }
                    acc += wq * self.value_particles(&child, depth - 1)?;
                }
                acc
            }
        };
        Ok(reward + self.model.discount * future)
    }
}

/// Particle set inside the expectimax recursion; no resampling, so the
/// computation stays deterministic.
struct PView {
    states: Vec<DomainState>,
    weights: Vec<f64>,
}

impl PView {
    fn is_terminal(&self) -> bool {
        self.states
            .iter()
            .zip(&self.weights)
            .all(|(s, &w)| w == 0.0 || s.is_done())
    }
}

fn reweight(
    model: &PomdpModel,
    next_states: &[DomainState],
    weights: &[f64],
    obs: &DomainObservation,
    action: DomainAction,
) -> Result<(PView, f64)> {
    let mut new_weights = Vec::with_capacity(weights.len());
    let mut p_obs = 0.0;
    for (next, &w) in next_states.iter().zip(weights) {
        let lik = if w == 0.0 {
            0.0
        } else {
            model.observation_likelihood(obs, next, action)?
        };
        let mass = w * lik;
        p_obs += mass;
        new_weights.push(mass);
    }
    if p_obs > 0.0 {
        for w in &mut new_weights {
            *w /= p_obs;
        }
    }
    Ok((
        PView {
            states: next_states.to_vec(),
            weights: new_weights,
        },
        p_obs,
    ))
}

/// Exact expectimax values behind a quantized cache, usable as a plug-in
/// value function for tree search on enumerable toys. Particle beliefs are
/// merged into exact supports and probabilities snapped to a 1/64 grid, so
/// repeated lookups hit the cache.
pub struct CachedExactValue {
    model: PomdpModel,
    depth: usize,
    node_budget: usize,
    cache: std::sync::Mutex<std::collections::HashMap<ExactKey, f64>>,
}

type ExactKey = Vec<(i32, i32, u64, u64, bool, u32)>;

impl CachedExactValue {
    pub fn new(model: PomdpModel, depth: usize, node_budget: usize) -> Self {
        CachedExactValue {
            model,
            depth,
            node_budget,
            cache: std::sync::Mutex::new(std::collections::HashMap::new()),
        }
    }

    fn key(belief: &ExactBelief) -> Result<ExactKey> {
        let mut key: ExactKey = Vec::with_capacity(belief.support.len());
        for (s, &p) in belief.support.iter().zip(&belief.probs) {
            let DomainState::RockSample {
                agent,
                rock_good,
                rock_sampled,
                done,
            } = s
            else {
                return Err(GammaError::UnsupportedDomain);
            };
            let good_bits = rock_good
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &g)| acc | ((g as u64) << i));
            let sampled_bits = rock_sampled
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &g)| acc | ((g as u64) << i));
            key.push((
                agent.0,
                agent.1,
                good_bits,
                sampled_bits,
                *done,
                (p * 64.0).round() as u32,
            ));
        }
        key.sort();
        Ok(key)
    }

    /// Exact value of a particle belief after merging duplicates and
    /// quantizing probabilities.
    pub fn value(&self, belief: &ParticleBelief) -> Result<f64> {
        let mut support: Vec<DomainState> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (s, &w) in belief.particles.iter().zip(&belief.weights) {
            if w == 0.0 {
                continue;
            }
            match support.iter().position(|t| t == s) {
                Some(i) => probs[i] += w,
                None => {
                    support.push(s.clone());
                    probs.push(w);
                }
            }
        }
        let mut probs: Vec<f64> = probs.iter().map(|p| (p * 64.0).round() / 64.0).collect();
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            for p in &mut probs {
                *p /= total;
            }
        }
        let exact = ExactBelief { support, probs };
        let key = Self::key(&exact)?;
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = if exact.is_terminal() {
            0.0
        } else {
            match expectimax(BeliefView::Exact(&exact), &self.model, self.depth, self.node_budget)? {
                Some(r) => r.value,
                None => 0.0,
            }
        };
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

/// High-budget uniform-prior, random-rollout tree search expert. Returns the
/// argmax-visit root action with its Q value.
pub fn expert_mcts(
    belief: &ParticleBelief,
    model: &PomdpModel,
    n_sims: usize,
    seed: u64,
) -> Result<Option<ExpertResult>> {
    if belief.is_terminal() {
        return Ok(None);
    }
    let cfg = SearchConfig {
        n_sims,
        max_depth: model.horizon.min(30),
        ..SearchConfig::default()
    };
    let evaluator = UniformRolloutEvaluator {
        rollout_depth: model.horizon,
    };
    let mut rng = stream_rng(seed, Stream::Expert, 0);
    let (_, stats) = plan(belief, model, &evaluator, &cfg, &mut rng)?;
    let best = stats
        .actions
        .iter()
        .max_by(|a, b| {
            a.visits
                .cmp(&b.visits)
                .then(b.action_index.cmp(&a.action_index))
        })
        .ok_or(GammaError::NoAction)?;
    Ok(Some(ExpertResult {
        best_action: model.action(best.action_index)?,
        action_index: best.action_index,
        value: best.q,
    }))
}

/// Which expert labels the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpertKind {
    /// Exact-filter expectimax; RockSample only.
    ExactExpectimax { depth: usize, node_budget: usize },
    /// Particle expectimax with observation discretization.
    ParticleExpectimax { depth: usize, node_budget: usize },
    /// Uniform-rollout tree search with a large simulation budget.
    Mcts { n_sims: usize },
}

impl ExpertKind {
    pub fn label(&self) -> String {
        match self {
            ExpertKind::ExactExpectimax { depth, .. } => format!("exact_expectimax(d={depth})"),
            ExpertKind::ParticleExpectimax { depth, .. } => {
                format!("particle_expectimax(d={depth})")
            }
            ExpertKind::Mcts { n_sims } => format!("uniform_mcts({n_sims})"),
        }
    }
}

/// One labeled decision in the dataset interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(flatten)]
    pub graph: GraphRecord,
    pub target_action: usize,
    pub target_value: f64,
}

/// Header line of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub schema_version: u32,
    pub domain: String,
    pub instances: Vec<serde_json::Value>,
    pub expert: String,
    pub episodes: usize,
    pub discarded_episodes: usize,
    pub seed: u64,
    /// Set from configuration, not the wall clock, so reruns hash identically.
    pub date: Option<String>,
}

/// Labeled dataset plus its provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub provenance: Provenance,
    pub samples: Vec<SampleRecord>,
}

impl Dataset {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, &self.provenance)?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| GammaError::Dataset("empty dataset file".into()))??;
        let provenance: Provenance = serde_json::from_str(&header)?;
        if provenance.kind != "provenance" {
            return Err(GammaError::Dataset("missing provenance header".into()));
        }
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str::<SampleRecord>(&line)?);
        }
        Ok(Dataset {
            provenance,
            samples,
        })
    }
}

/// Statistics of one collection run.
#[derive(Debug, Clone, Default)]
pub struct CollectStats {
    pub episodes: usize,
    pub discarded: usize,
    pub steps: usize,
}

/// Rolls expert episodes and records `(graph(b_t), a_t, v_t)` at every step.
/// The belief is updated with the sampled observation; episodes end at a
/// terminal state or the horizon. Episodes whose expert fails are discarded.
pub fn collect_expert_data(
    model: &PomdpModel,
    expert: &ExpertKind,
    episodes: usize,
    particle_count: usize,
    tau: f64,
    master_seed: u64,
) -> Result<(Vec<SampleRecord>, CollectStats)> {
    if episodes == 0 {
        return Err(GammaError::InvalidArgument("episodes must be positive".into()));
    }
    // episodes are seeded independently, run on a worker pool, and merged in
    // episode order, so the result does not depend on scheduling
    let results: Vec<Result<Vec<SampleRecord>>> = (0..episodes)
        .into_par_iter()
        .map(|ep| collect_episode(model, expert, particle_count, tau, master_seed, ep as u64))
        .collect();
    let mut samples = Vec::new();
    let mut stats = CollectStats::default();
    for r in results {
        match r {
            Ok(mut ep_samples) => {
                stats.episodes += 1;
                stats.steps += ep_samples.len();
                samples.append(&mut ep_samples);
            }
            Err(GammaError::NodeBudgetExceeded { .. })
            | Err(GammaError::BeliefDepleted { .. })
            | Err(GammaError::ZeroPosterior) => {
                stats.discarded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(GammaError::Dataset(
            "expert produced no samples; all episodes failed".into(),
        ));
    }
    Ok((samples, stats))
}

fn collect_episode(
    model: &PomdpModel,
    expert: &ExpertKind,
    particle_count: usize,
    tau: f64,
    master_seed: u64,
    episode: u64,
) -> Result<Vec<SampleRecord>> {
    let mut rng = stream_rng(master_seed, Stream::Episode, episode);
    let mut state = model.initial_state(&mut rng);
    let mut belief = crate::belief::init_belief(model, particle_count, &mut rng)?;
    let mut exact = match expert {
        ExpertKind::ExactExpectimax { .. } => Some(exact_init(model)?),
        _ => None,
    };
    let mut samples = Vec::new();

    for _t in 0..model.horizon {
        if model.is_terminal(&state) {
            break;
        }
        let decision = match expert {
            ExpertKind::ExactExpectimax { depth, node_budget } => expectimax(
                BeliefView::Exact(exact.as_ref().expect("exact belief present")),
                model,
                *depth,
                *node_budget,
            )?,
            ExpertKind::ParticleExpectimax { depth, node_budget } => {
                expectimax(BeliefView::Particles(&belief), model, *depth, *node_budget)?
            }
            ExpertKind::Mcts { n_sims } => expert_mcts(
                &belief,
                model,
                *n_sims,
                crate::rng::derive_seed(master_seed, Stream::Expert, episode),
            )?,
        };
        let Some(decision) = decision else { break };

        let graph = build_graph(&belief, model, tau)?;
        samples.push(SampleRecord {
            graph: GraphRecord::from_graph(&graph, model),
            target_action: decision.action_index,
            target_value: decision.value,
        });

        let action = decision.best_action;
        let next = model.transition(&state, action, &mut rng)?;
        let obs = model.sample_observation(&next, action, &mut rng)?;
        belief = crate::belief::update_belief(&belief, model, action, &obs, &mut rng)?;
        if let Some(e) = exact.as_mut() {
            *e = crate::belief::exact::exact_update(e, model, action, &obs)?;
        }
        state = next;
    }
    Ok(samples)
}
