//! Run configuration, episode rollouts, and the collect / train / eval /
//! generalize workflows behind the CLI.

pub mod checks;

use crate::belief::{init_belief, update_belief, ParticleBelief};
use crate::error::{GammaError, Result};
use crate::graph::{build_graph, legal_mask, D_EDGE, D_NODE};
use crate::mcts::{plan, NetworkEvaluator, SearchConfig, UniformRolloutEvaluator};
use crate::nn::{
    forward, load_params, save_params, train, GnnParameters, GraphTensors, TrainingConfig,
    TrainingSample,
};
use crate::oracle::{
    collect_expert_data, expectimax, expert_mcts, BeliefView, Dataset, ExpertKind, Provenance,
    SampleRecord,
};
use crate::pomdp::{
    DomainObservation, DomainParams, DomainState, LightDarkParams, PomdpModel, RockObs,
    RockRewards, RockSampleParams,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Domain instance description as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    RockSample {
        grid_n: usize,
        k: usize,
        /// Explicit placements; drawn from `placement_seed` when absent.
        #[serde(default)]
        rock_positions: Option<Vec<(i32, i32)>>,
        #[serde(default)]
        placement_seed: u64,
        #[serde(default = "default_halflife")]
        sensor_halflife: f64,
        #[serde(default)]
        rewards: RockRewards,
        #[serde(default = "default_discount")]
        discount: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    LightDark {
        #[serde(default)]
        params: LightDarkParams,
        #[serde(default = "default_discount")]
        discount: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
}

fn default_halflife() -> f64 {
    20.0
}
fn default_discount() -> f64 {
    0.95
}
fn default_horizon() -> usize {
    50
}

impl DomainConfig {
    pub fn build(&self) -> Result<PomdpModel> {
        match self {
            DomainConfig::RockSample {
                grid_n,
                k,
                rock_positions,
                placement_seed,
                sensor_halflife,
                rewards,
                discount,
                horizon,
            } => {
                let positions = match rock_positions {
                    Some(p) => {
                        if p.len() != *k {
                            return Err(GammaError::Config(format!(
                                "rock_positions lists {} cells but k = {k}",
                                p.len()
                            )));
                        }
                        p.clone()
                    }
                    None => {
                        let mut rng = stream_rng(*placement_seed, Stream::Belief, 7);
                        RockSampleParams::random_positions(*grid_n, *k, &mut rng)
                    }
                };
                let params =
                    RockSampleParams::new(*grid_n, positions, *sensor_halflife, rewards.clone())?;
                PomdpModel::new(*discount, *horizon, DomainParams::RockSample(params))
            }
            DomainConfig::LightDark {
                params,
                discount,
                horizon,
            } => PomdpModel::new(*discount, *horizon, DomainParams::LightDark(params.clone())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeliefConfig {
    pub particles: usize,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self { particles: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub tau: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { tau: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnConfig {
    pub hidden: usize,
    pub rounds: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            rounds: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Emit per-decision trace records (root visit tables, planning times)
    /// for search modes.
    pub traces: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0,
            traces: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    /// Episodes per instance.
    pub episodes: usize,
    pub expert: ExpertKind,
    /// Instances to collect from; falls back to the main domain when empty.
    pub instances: Vec<DomainConfig>,
    pub seed: u64,
    /// Recorded verbatim in provenance; keep it fixed for reproducible files.
    pub date: Option<String>,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            expert: ExpertKind::ExactExpectimax {
                depth: 6,
                node_budget: 20_000_000,
            },
            instances: Vec::new(),
            seed: 0,
            date: None,
        }
    }
}

/// Top-level run configuration; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub belief: BeliefConfig,
    pub graph: GraphConfig,
    pub gnn: GnnConfig,
    pub training: TrainingConfig,
    pub search: SearchConfig,
    pub evaluation: EvalConfig,
    pub collect: CollectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::RockSample {
                grid_n: 4,
                k: 2,
                rock_positions: None,
                placement_seed: 0,
                sensor_halflife: 20.0,
                rewards: RockRewards::default(),
                discount: 0.95,
                horizon: 50,
            },
            belief: BeliefConfig::default(),
            graph: GraphConfig::default(),
            gnn: GnnConfig::default(),
            training: TrainingConfig::default(),
            search: SearchConfig::default(),
            evaluation: EvalConfig::default(),
            collect: CollectConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.build()?;
        self.training.validate()?;
        self.search.validate()?;
        if self.belief.particles == 0 {
            return Err(GammaError::Config("belief.particles must be positive".into()));
        }
        if !(self.graph.tau > 0.0 && self.graph.tau < 1.0) {
            return Err(GammaError::Config("graph.tau must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Random,
    RawPolicy,
    RawValue,
    Mcts,
    /// Uniform-prior random-rollout search at the same budget; the baseline
    /// arm for search comparisons.
    UniformMcts,
    Expert,
}

impl std::str::FromStr for EvalMode {
    type Err = GammaError;
    fn from_str(s: &str) -> Result<EvalMode> {
        Ok(match s {
            "random" => EvalMode::Random,
            "raw_policy" => EvalMode::RawPolicy,
            "raw_value" => EvalMode::RawValue,
            "mcts" => EvalMode::Mcts,
            "uniform_mcts" => EvalMode::UniformMcts,
            "expert" => EvalMode::Expert,
            other => {
                return Err(GammaError::Config(format!(
                    "unknown eval mode '{other}' (expected random, raw_policy, raw_value, mcts, uniform_mcts, expert)"
                )))
            }
        })
    }
}

/// Everything an episode needs to pick actions.
pub enum PolicySpec<'a> {
    Random,
    RawPolicy {
        params: &'a GnnParameters,
        tau: f64,
    },
    RawValue {
        params: &'a GnnParameters,
        tau: f64,
    },
    Mcts {
        params: &'a GnnParameters,
        search: SearchConfig,
    },
    UniformMcts {
        search: SearchConfig,
        rollout_depth: usize,
    },
    Expert {
        kind: ExpertKind,
    },
}

/// Result of one evaluated episode.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeOutcome {
    pub episode: usize,
    pub seed: u64,
    pub discounted_return: f64,
    pub steps: usize,
    pub mean_plan_seconds: f64,
    /// Per-decision search traces; populated only when requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<crate::mcts::DecisionTrace>,
}

/// Aggregate over an evaluation battery.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub episodes: usize,
    pub mean_return: f64,
    /// Sample standard deviation divided by sqrt(episodes).
    pub stderr: f64,
    pub mean_plan_seconds: f64,
    pub mean_steps: f64,
    pub outcomes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    fn from_outcomes(mode: String, outcomes: Vec<EpisodeOutcome>) -> EvalReport {
        let n = outcomes.len().max(1) as f64;
        let mean = outcomes.iter().map(|o| o.discounted_return).sum::<f64>() / n;
        let var = if outcomes.len() > 1 {
            outcomes
                .iter()
                .map(|o| (o.discounted_return - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        EvalReport {
            mode,
            episodes: outcomes.len(),
            mean_return: mean,
            stderr: var.sqrt() / n.sqrt(),
            mean_plan_seconds: outcomes.iter().map(|o| o.mean_plan_seconds).sum::<f64>() / n,
            mean_steps: outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / n,
            outcomes,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("episode,seed,discounted_return,steps,mean_plan_seconds\n");
        for o in &self.outcomes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                o.episode, o.seed, o.discounted_return, o.steps, o.mean_plan_seconds
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Greedy one-step lookahead: Q(b, a) = E[r] + gamma * E_o[V(b')] with the
/// network value on successor beliefs; observation expectation enumerates
/// the discrete set or uses the 5-point Gauss-Hermite rule.
fn raw_value_action(
    belief: &ParticleBelief,
    model: &PomdpModel,
    params: &GnnParameters,
    tau: f64,
) -> Result<usize> {
    let legal = legal_mask(belief, model);
    let mut rng = crate::rng::rng_from_seed(0); // deterministic dynamics
    let mut best: Option<(usize, f64)> = None;

    for a_idx in (0..legal.len()).filter(|&a| legal[a]) {
        let action = model.action(a_idx)?;
        let mut next_states = Vec::with_capacity(belief.len());
        let mut reward = 0.0;
        for (s, &w) in belief.particles.iter().zip(&belief.weights) {
            let next = if s.is_done() {
                s.clone()
            } else {
                model.transition(s, action, &mut rng)?
            };
            if !s.is_done() {
                reward += w * model.reward(s, action, &next);
            }
            next_states.push(next);
        }

        let observations: Vec<DomainObservation> = match (&model.domain, action) {
            (DomainParams::RockSample(_), crate::pomdp::DomainAction::Check(_)) => vec![
                DomainObservation::Rock(RockObs::Good),
                DomainObservation::Rock(RockObs::Bad),
            ],
            (DomainParams::RockSample(_), _) => vec![DomainObservation::Rock(RockObs::None)],
            (DomainParams::LightDark(p), _) => {
                let mut mean = 0.0;
                for (s, &w) in next_states.iter().zip(&belief.weights) {
                    if let DomainState::LightDark { y, .. } = s {
                        mean += w * y;
                    }
                }
                let mut var = 0.0;
                for (s, &w) in next_states.iter().zip(&belief.weights) {
                    if let DomainState::LightDark { y, .. } = s {
                        let sigma = p.sigma(*y);
                        var += w * ((y - mean) * (y - mean) + sigma * sigma);
                    }
                }
                let std = var.max(1e-12).sqrt();
                crate::oracle::GH_POINTS
                    .iter()
                    .map(|&(xi, _)| {
                        DomainObservation::Real(mean + std::f64::consts::SQRT_2 * std * xi)
                    })
                    .collect()
            }
        };
        let gh_weights: Option<Vec<f64>> = match (&model.domain, action) {
            (DomainParams::LightDark(_), _) => {
                Some(crate::oracle::GH_POINTS.iter().map(|&(_, w)| w).collect())
            }
            _ => None,
        };

        let mut future = 0.0;
        for (oi, obs) in observations.iter().enumerate() {
            let mut weights = Vec::with_capacity(next_states.len());
            let mut p_obs = 0.0;
            for (next, &w) in next_states.iter().zip(&belief.weights) {
                // particles already terminal stop emitting observations
                let lik = if w == 0.0 || next.is_done() {
                    0.0
                } else {
                    model.observation_likelihood(obs, next, action)?
                };
                let mass = w * lik;
                p_obs += mass;
                weights.push(mass);
            }
            if p_obs <= 0.0 {
                continue;
            }
            for w in &mut weights {
                *w /= p_obs;
            }
            let child = ParticleBelief {
                particles: next_states.clone(),
                weights,
                domain_ref: belief.domain_ref.clone(),
            };
            let v = if child.is_terminal() {
                0.0
            } else {
                let graph = build_graph(&child, model, tau)?;
                forward(params, &GraphTensors::from_graph(&graph)?)?.value
            };
            let branch_weight = match &gh_weights {
                Some(ws) => ws[oi],
                None => p_obs,
            };
            future += branch_weight * v;
        }

        let q = reward + model.discount * future;
        if best.map_or(true, |(_, bq)| q > bq) {
            best = Some((a_idx, q));
        }
    }
    best.map(|(a, _)| a).ok_or(GammaError::NoAction)
}

fn argmax_policy(policy: &[f64], legal: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&p, &l)) in policy.iter().zip(legal).enumerate() {
        if !l {
            continue;
        }
        if best.map_or(true, |b| p > policy[b]) {
            best = Some(i);
        }
    }
    best.ok_or(GammaError::NoAction)
}

/// Plays one seeded episode; returns the discounted return and per-decision
/// planning time (environment stepping excluded).
pub fn run_episode(
    model: &PomdpModel,
    policy: &PolicySpec,
    particles: usize,
    seed: u64,
    episode: usize,
    collect_traces: bool,
) -> Result<EpisodeOutcome> {
    let mut env_rng = stream_rng(seed, Stream::Episode, episode as u64);
    let mut search_rng = stream_rng(seed, Stream::Search, episode as u64);
    let mut state = model.initial_state(&mut env_rng);
    let mut belief = init_belief(model, particles, &mut env_rng)?;
    let mut exact = match policy {
        PolicySpec::Expert {
            kind: ExpertKind::ExactExpectimax { .. },
        } => Some(crate::belief::exact::exact_init(model)?),
        _ => None,
    };

    let mut discounted_return = 0.0;
    let mut discount = 1.0;
    let mut steps = 0usize;
    let mut plan_seconds = 0.0;
    let mut traces = Vec::new();

    for t in 0..model.horizon {
        if model.is_terminal(&state) {
            break;
        }
        let t0 = Instant::now();
        let (action_idx, root) = decide(&belief, exact.as_ref(), model, policy, &mut search_rng)?;
        let decision_seconds = t0.elapsed().as_secs_f64();
        plan_seconds += decision_seconds;
        if collect_traces {
            if let Some(root) = root {
                traces.push(crate::mcts::DecisionTrace {
                    step: t,
                    chosen_action: model.action(action_idx)?.label(),
                    planning_seconds: decision_seconds,
                    root,
                });
            }
        }

        let action = model.action(action_idx)?;
        let next = model.transition(&state, action, &mut env_rng)?;
        discounted_return += discount * model.reward(&state, action, &next);
        discount *= model.discount;
        let obs = model.sample_observation(&next, action, &mut env_rng)?;
        belief = update_belief(&belief, model, action, &obs, &mut env_rng)?;
        if let Some(e) = exact.as_mut() {
            *e = crate::belief::exact::exact_update(e, model, action, &obs)?;
        }
        state = next;
        steps += 1;
    }

    Ok(EpisodeOutcome {
        episode,
        seed: derive_seed(seed, Stream::Episode, episode as u64),
        discounted_return,
        steps,
        mean_plan_seconds: if steps > 0 {
            plan_seconds / steps as f64
        } else {
            0.0
        },
        traces,
    })
}

fn decide(
    belief: &ParticleBelief,
    exact: Option<&crate::belief::ExactBelief>,
    model: &PomdpModel,
    policy: &PolicySpec,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Option<crate::mcts::RootStats>)> {
    match policy {
        PolicySpec::Random => {
            let legal = legal_mask(belief, model);
            let options: Vec<usize> = (0..legal.len()).filter(|&a| legal[a]).collect();
            if options.is_empty() {
                return Err(GammaError::NoAction);
            }
            Ok((options[rng.gen_range(0..options.len())], None))
        }
        PolicySpec::RawPolicy { params, tau } => {
            let graph = build_graph(belief, model, *tau)?;
            let tensors = GraphTensors::from_graph(&graph)?;
            let out = forward(params, &tensors)?;
            Ok((argmax_policy(&out.policy, &graph.legal_mask)?, None))
        }
        PolicySpec::RawValue { params, tau } => {
            Ok((raw_value_action(belief, model, params, *tau)?, None))
        }
        PolicySpec::Mcts { params, search } => {
            let evaluator = NetworkEvaluator {
                params,
                tau: search.tau,
            };
            let (action, root) = plan(belief, model, &evaluator, search, rng)?;
            Ok((action, Some(root)))
        }
        PolicySpec::UniformMcts {
            search,
            rollout_depth,
        } => {
            let evaluator = UniformRolloutEvaluator {
                rollout_depth: *rollout_depth,
            };
            let (action, root) = plan(belief, model, &evaluator, search, rng)?;
            Ok((action, Some(root)))
        }
        PolicySpec::Expert { kind } => {
            let decision = match kind {
                ExpertKind::ExactExpectimax { depth, node_budget } => expectimax(
                    BeliefView::Exact(exact.ok_or(GammaError::UnsupportedDomain)?),
                    model,
                    *depth,
                    *node_budget,
                )?,
                ExpertKind::ParticleExpectimax { depth, node_budget } => {
                    expectimax(BeliefView::Particles(belief), model, *depth, *node_budget)?
                }
                ExpertKind::Mcts { n_sims } => {
                    expert_mcts(belief, model, *n_sims, rng.gen::<u64>())?
                }
            };
            decision
                .map(|d| (d.action_index, None))
                .ok_or(GammaError::NoAction)
        }
    }
}

/// Runs a seeded evaluation battery; episodes execute in a worker pool and
/// aggregate by index, so results are order-independent.
pub fn evaluate_policy(
    model: &PomdpModel,
    policy: &PolicySpec,
    episodes: usize,
    particles: usize,
    master_seed: u64,
    mode_label: &str,
) -> Result<EvalReport> {
    evaluate_policy_traced(model, policy, episodes, particles, master_seed, mode_label, false)
}

/// [`evaluate_policy`] with optional per-decision trace collection.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy_traced(
    model: &PomdpModel,
    policy: &PolicySpec,
    episodes: usize,
    particles: usize,
    master_seed: u64,
    mode_label: &str,
    traces: bool,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(GammaError::Config("episodes must be positive".into()));
    }
    let results: Vec<Result<EpisodeOutcome>> = (0..episodes)
        .into_par_iter()
        .map(|ep| run_episode(model, policy, particles, master_seed, ep, traces))
        .collect();
    let mut outcomes = Vec::with_capacity(episodes);
    for r in results {
        outcomes.push(r?);
    }
    Ok(EvalReport::from_outcomes(mode_label.to_string(), outcomes))
}

/// Collects expert data over the configured instances and writes the
/// dataset file.
pub fn cmd_collect(config: &RunConfig, out_path: &Path) -> Result<Dataset> {
    if config.collect.episodes == 0 {
        return Err(GammaError::Config("collect.episodes must be positive".into()));
    }
    let instances: Vec<DomainConfig> = if config.collect.instances.is_empty() {
        vec![config.domain.clone()]
    } else {
        config.collect.instances.clone()
    };
    let mut samples: Vec<SampleRecord> = Vec::new();
    let mut discarded = 0usize;
    let mut instance_values = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let model = inst.build()?;
        instance_values.push(serde_json::to_value(&model.domain)?);
        let seed = derive_seed(config.collect.seed, Stream::Expert, i as u64);
        let (mut s, stats) = collect_expert_data(
            &model,
            &config.collect.expert,
            config.collect.episodes,
            config.belief.particles,
            config.graph.tau,
            seed,
        )?;
        discarded += stats.discarded;
        samples.append(&mut s);
    }
    let dataset = Dataset {
        provenance: Provenance {
            kind: "provenance".into(),
            schema_version: crate::graph::serialize::SCHEMA_VERSION,
            domain: instances
                .first()
                .map(|i| i.build().map(|m| m.instance_tag()))
                .transpose()?
                .unwrap_or_default(),
            instances: instance_values,
            expert: config.collect.expert.label(),
            episodes: config.collect.episodes * instances.len(),
            discarded_episodes: discarded,
            seed: config.collect.seed,
            date: config.collect.date.clone(),
        },
        samples,
    };
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    dataset.write_jsonl(out_path)?;
    Ok(dataset)
}

/// Converts dataset records into network-ready samples, validating feature
/// dimensions and target legality.
pub fn dataset_to_samples(dataset: &Dataset) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::with_capacity(dataset.samples.len());
    for record in &dataset.samples {
        let graph = record.graph.to_graph()?;
        let tensors = GraphTensors::from_graph(&graph)?;
        let sample = TrainingSample {
            graph: tensors,
            target_action: record.target_action,
            target_value: record.target_value,
        };
        sample.validate()?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Summary returned by [`cmd_train`].
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_val_accuracy: f64,
    pub final_val_value_mse: f64,
    pub diverged: bool,
}

/// Trains on a dataset file and writes the parameter file plus a CSV log
/// next to it.
pub fn cmd_train(dataset_path: &Path, config: &RunConfig, out_params: &Path) -> Result<TrainSummary> {
    let dataset = Dataset::read_jsonl(dataset_path)?;
    let samples = dataset_to_samples(&dataset)?;
    if samples.is_empty() {
        return Err(GammaError::Dataset("dataset holds no samples".into()));
    }
    let mut rng = stream_rng(config.training.seed, Stream::Training, 99);
    let init = GnnParameters::init(
        D_NODE,
        D_EDGE,
        config.gnn.hidden,
        config.gnn.rounds,
        &mut rng,
    );
    let outcome = train(init, &samples, &config.training)?;
    if let Some(parent) = out_params.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_params(&outcome.params, out_params)?;
    let log_path = out_params.with_extension("log.csv");
    crate::nn::train::write_log_csv(&outcome.log, &log_path)?;
    let last = outcome.log.last();
    Ok(TrainSummary {
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        final_val_accuracy: last.map(|l| l.val_accuracy).unwrap_or(0.0),
        final_val_value_mse: last.map(|l| l.val_value_mse).unwrap_or(0.0),
        diverged: outcome.diverged,
    })
}

/// Loads parameters saved by [`cmd_train`].
pub fn load_trained(path: &Path) -> Result<GnnParameters> {
    load_params(path, D_NODE, D_EDGE)
}

/// Evaluates one mode on the configured domain.
pub fn cmd_eval(
    params: Option<&GnnParameters>,
    config: &RunConfig,
    mode: EvalMode,
) -> Result<EvalReport> {
    let model = config.domain.build()?;
    let label = format!("{mode:?}").to_lowercase();
    let spec = build_policy(params, config, mode)?;
    evaluate_policy_traced(
        &model,
        &spec,
        config.evaluation.episodes,
        config.belief.particles,
        config.evaluation.seed,
        &label,
        config.evaluation.traces,
    )
}

fn build_policy<'a>(
    params: Option<&'a GnnParameters>,
    config: &RunConfig,
    mode: EvalMode,
) -> Result<PolicySpec<'a>> {
    let need = |p: Option<&'a GnnParameters>| -> Result<&'a GnnParameters> {
        p.ok_or_else(|| GammaError::Config(format!("mode {mode:?} needs a parameter file")))
    };
    Ok(match mode {
        EvalMode::Random => PolicySpec::Random,
        EvalMode::RawPolicy => PolicySpec::RawPolicy {
            params: need(params)?,
            tau: config.graph.tau,
        },
        EvalMode::RawValue => PolicySpec::RawValue {
            params: need(params)?,
            tau: config.graph.tau,
        },
        EvalMode::Mcts => PolicySpec::Mcts {
            params: need(params)?,
            search: config.search.clone(),
        },
        EvalMode::UniformMcts => PolicySpec::UniformMcts {
            search: config.search.clone(),
            rollout_depth: config.search.max_depth,
        },
        EvalMode::Expert => PolicySpec::Expert {
            kind: config.collect.expert.clone(),
        },
    })
}

/// One row of a generalization sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GeneralizeRow {
    pub grid_n: usize,
    pub k: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub stderr: f64,
    pub mean_plan_seconds: f64,
}

/// Evaluates one parameter file across an instance ladder; every size is
/// reported, including degradations.
pub fn cmd_generalize(
    params: &GnnParameters,
    config: &RunConfig,
    ladder: &[DomainConfig],
    mode: EvalMode,
) -> Result<Vec<GeneralizeRow>> {
    let mut rows = Vec::new();
    for inst in ladder {
        let model = inst.build()?;
        let spec = build_policy(Some(params), config, mode)?;
        let report = evaluate_policy(
            &model,
            &spec,
            config.evaluation.episodes,
            config.belief.particles,
            config.evaluation.seed,
            &format!("{mode:?}").to_lowercase(),
        )?;
        let (grid_n, k) = match &model.domain {
            DomainParams::RockSample(p) => (p.grid_n, p.rock_count()),
            DomainParams::LightDark(_) => (0, 0),
        };
        rows.push(GeneralizeRow {
            grid_n,
            k,
            episodes: report.episodes,
            mean_return: report.mean_return,
            stderr: report.stderr,
            mean_plan_seconds: report.mean_plan_seconds,
        });
    }
    Ok(rows)
}

pub fn write_generalize_csv(rows: &[GeneralizeRow], path: &Path) -> Result<()> {
    let mut out = String::from("grid_n,k,episodes,mean_return,stderr,mean_plan_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.grid_n, r.k, r.episodes, r.mean_return, r.stderr, r.mean_plan_seconds
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn small_config() -> RunConfig {
        RunConfig {
            domain: DomainConfig::RockSample {
                grid_n: 3,
                k: 1,
                rock_positions: Some(vec![(1, 1)]),
                placement_seed: 0,
                sensor_halflife: 20.0,
                rewards: RockRewards::default(),
                discount: 0.95,
                horizon: 20,
            },
            belief: BeliefConfig { particles: 100 },
            evaluation: EvalConfig {
                episodes: 4,
                seed: 5,
                traces: false,
            },
            collect: CollectConfig {
                episodes: 2,
                expert: ExpertKind::ExactExpectimax {
                    depth: 4,
                    node_budget: 5_000_000,
                },
                instances: vec![],
                seed: 1,
                date: None,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"domain": {"kind": "rock_sample", "grid_n": 3, "k": 1}, "bogus": 1}"#;
        assert!(RunConfig::from_json(text).is_err());
        let ok = r#"{"domain": {"kind": "rock_sample", "grid_n": 3, "k": 1}}"#;
        assert!(RunConfig::from_json(ok).is_ok());
    }

    #[test]
    fn rock_positions_length_is_checked() {
        let text = r#"{"domain": {"kind": "rock_sample", "grid_n": 3, "k": 2, "rock_positions": [[1, 1]]}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn random_episodes_are_reproducible() {
        let cfg = small_config();
        let model = cfg.domain.build().unwrap();
        let a = evaluate_policy(&model, &PolicySpec::Random, 4, 100, 5, "random").unwrap();
        let b = evaluate_policy(&model, &PolicySpec::Random, 4, 100, 5, "random").unwrap();
        // wall-clock timings differ; everything else must match exactly
        assert_eq!(a.mean_return, b.mean_return);
        assert_eq!(a.stderr, b.stderr);
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.discounted_return, y.discounted_return);
            assert_eq!(x.steps, y.steps);
            assert_eq!(x.seed, y.seed);
        }
    }

    #[test]
    fn report_has_one_row_per_episode() {
        let cfg = small_config();
        let model = cfg.domain.build().unwrap();
        let report = evaluate_policy(&model, &PolicySpec::Random, 7, 50, 2, "random").unwrap();
        assert_eq!(report.outcomes.len(), 7);
        let dir = std::env::temp_dir().join("gz_harness_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("report.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 8, "header plus one row per episode");
    }

    #[test]
    fn expert_mode_beats_random_on_small_instance() {
        let cfg = small_config();
        let model = cfg.domain.build().unwrap();
        let random = evaluate_policy(&model, &PolicySpec::Random, 20, 100, 9, "random").unwrap();
        let expert = evaluate_policy(
            &model,
            &PolicySpec::Expert {
                kind: ExpertKind::ExactExpectimax {
                    depth: 5,
                    node_budget: 5_000_000,
                },
            },
            20,
            100,
            9,
            "expert",
        )
        .unwrap();
        assert!(
            expert.mean_return > random.mean_return,
            "expert {} vs random {}",
            expert.mean_return,
            random.mean_return
        );
    }

    #[test]
    fn collect_then_train_round_trip() {
        let cfg = {
            let mut c = small_config();
            c.training = TrainingConfig {
                epochs: 3,
                batch_size: 8,
                learning_rate: 1e-3,
                holdout_fraction: 0.2,
                ..TrainingConfig::default()
            };
            c.gnn = GnnConfig {
                hidden: 8,
                rounds: 2,
            };
            c
        };
        let dir = std::env::temp_dir().join("gz_harness_train");
        std::fs::create_dir_all(&dir).unwrap();
        let data_path = dir.join("data.jsonl");
        let dataset = cmd_collect(&cfg, &data_path).unwrap();
        assert!(!dataset.samples.is_empty());
        assert_eq!(dataset.provenance.instances.len(), 1);

        // identical seeds produce identical files
        let data_path2 = dir.join("data2.jsonl");
        cmd_collect(&cfg, &data_path2).unwrap();
        assert_eq!(
            std::fs::read(&data_path).unwrap(),
            std::fs::read(&data_path2).unwrap()
        );

        let params_path = dir.join("params.gznn");
        let summary = cmd_train(&data_path, &cfg, &params_path).unwrap();
        assert!(summary.epochs_run == 3);
        let params = load_trained(&params_path).unwrap();

        // every eval mode runs end to end on the trained parameters
        for mode in [EvalMode::RawPolicy, EvalMode::RawValue, EvalMode::Mcts] {
            let mut eval_cfg = cfg.clone();
            eval_cfg.evaluation.episodes = 2;
            eval_cfg.search.n_sims = 30;
            let report = cmd_eval(Some(&params), &eval_cfg, mode).unwrap();
            assert_eq!(report.episodes, 2);
        }

        // missing dataset path surfaces as an error
        assert!(cmd_train(&dir.join("missing.jsonl"), &cfg, &params_path).is_err());
    }

    #[test]
    fn generalize_reports_each_ladder_size() {
        let cfg = {
            let mut c = small_config();
            c.evaluation.episodes = 2;
            c.gnn = GnnConfig {
                hidden: 8,
                rounds: 2,
            };
            c
        };
        let mut rng = rng_from_seed(3);
        let params = GnnParameters::init(D_NODE, D_EDGE, 8, 2, &mut rng);
        let ladder = vec![
            DomainConfig::RockSample {
                grid_n: 3,
                k: 1,
                rock_positions: None,
                placement_seed: 3,
                sensor_halflife: 20.0,
                rewards: RockRewards::default(),
                discount: 0.95,
                horizon: 15,
            },
            DomainConfig::RockSample {
                grid_n: 4,
                k: 2,
                rock_positions: None,
                placement_seed: 4,
                sensor_halflife: 20.0,
                rewards: RockRewards::default(),
                discount: 0.95,
                horizon: 15,
            },
        ];
        let rows = cmd_generalize(&params, &cfg, &ladder, EvalMode::RawPolicy).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].grid_n, 3);
        assert_eq!(rows[1].grid_n, 4);
        let dir = std::env::temp_dir().join("gz_harness_gen");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gen.csv");
        write_generalize_csv(&rows, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }
}
