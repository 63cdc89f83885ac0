//! Particle-filter belief tracking.
//!
//! Beliefs are immutable weighted particle sets; every update returns a fresh
//! belief. An exact discrete filter for enumerable instances lives in
//! [`exact`] and serves as the correctness oracle for this module.

pub mod exact;

pub use exact::ExactBelief;

use crate::error::{GammaError, Result};
use crate::pomdp::{DomainAction, DomainObservation, DomainParams, DomainState, PomdpModel};
use rand::Rng;

/// Weighted particle approximation of a belief state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief {
    pub particles: Vec<DomainState>,
    pub weights: Vec<f64>,
    /// Identifier of the owning model instance, for diagnostics.
    pub domain_ref: String,
}

impl PomdpModel {
    /// Short identifier of this instance, stored on beliefs derived from it.
    pub fn instance_tag(&self) -> String {
        match &self.domain {
            DomainParams::LightDark(p) => format!("light_dark(light_y={})", p.light_y),
            DomainParams::RockSample(p) => {
                format!("rock_sample({},{})", p.grid_n, p.rock_count())
            }
        }
    }
}

impl ParticleBelief {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted fraction of particles satisfying `predicate`.
    pub fn marginal(&self, predicate: impl Fn(&DomainState) -> bool) -> f64 {
        self.particles
            .iter()
            .zip(&self.weights)
            .filter(|(s, _)| predicate(s))
            .map(|(_, w)| *w)
            .sum()
    }

    /// True when the belief has fully entered a terminal state.
    pub fn is_terminal(&self) -> bool {
        self.marginal(|s| s.is_done()) >= 1.0 - 1e-12
    }

    /// Effective sample size 1 / sum(w_i^2).
    pub fn effective_sample_size(&self) -> f64 {
        let ss: f64 = self.weights.iter().map(|w| w * w).sum();
        if ss > 0.0 {
            1.0 / ss
        } else {
            0.0
        }
    }

    /// Draws one state by weight.
    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> &DomainState {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, w) in self.particles.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return s;
            }
        }
        self.particles.last().expect("nonempty belief")
    }

    /// Systematic resample down (or up) to `count` particles, uniform weights.
    pub fn downsample<R: Rng>(&self, count: usize, rng: &mut R) -> ParticleBelief {
        let particles = systematic_resample(&self.particles, &self.weights, count, rng);
        ParticleBelief {
            weights: vec![1.0 / count as f64; count],
            particles,
            domain_ref: self.domain_ref.clone(),
        }
    }

    fn normalized(mut self) -> Self {
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            for w in &mut self.weights {
                *w /= total;
            }
        }
        self
    }
}

/// Draws `count` particles with the low-variance systematic scheme.
fn systematic_resample<R: Rng>(
    particles: &[DomainState],
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<DomainState> {
    let step = 1.0 / count as f64;
    let start: f64 = rng.gen::<f64>() * step;
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    let mut cum = weights[0];
    for j in 0..count {
        let target = start + j as f64 * step;
        while i + 1 < particles.len() && cum < target {
            i += 1;
            cum += weights[i];
        }
        out.push(particles[i].clone());
    }
    out
}

/// `n` i.i.d. draws from the domain prior with uniform weights.
pub fn init_belief<R: Rng>(model: &PomdpModel, n: usize, rng: &mut R) -> Result<ParticleBelief> {
    if n == 0 {
        return Err(GammaError::InvalidArgument(
            "particle count must be at least 1".into(),
        ));
    }
    let particles = (0..n).map(|_| model.initial_state(rng)).collect();
    Ok(ParticleBelief {
        particles,
        weights: vec![1.0 / n as f64; n],
        domain_ref: model.instance_tag(),
    })
}

/// Result of propagating a belief through an action and observation.
pub struct BeliefStep {
    pub belief: ParticleBelief,
    /// Expected immediate reward under the prior belief and the transition.
    pub expected_reward: f64,
}

/// Bayes update: propagate, reweight by observation likelihood, renormalize;
/// systematic resampling fires when the effective sample size drops below
/// n/2. On total weight collapse the belief is rebuilt from the prior
/// conditioned on deterministic knowns and retried once.
pub fn update_belief<R: Rng>(
    b: &ParticleBelief,
    model: &PomdpModel,
    action: DomainAction,
    obs: &DomainObservation,
    rng: &mut R,
) -> Result<ParticleBelief> {
    Ok(step_belief(b, model, action, obs, rng)?.belief)
}

/// Like [`update_belief`] but also reports the belief-expected reward of the
/// transition, which tree search needs for backups.
pub fn step_belief<R: Rng>(
    b: &ParticleBelief,
    model: &PomdpModel,
    action: DomainAction,
    obs: &DomainObservation,
    rng: &mut R,
) -> Result<BeliefStep> {
    let n = b.len();
    let mut next_particles = Vec::with_capacity(n);
    let mut next_weights = Vec::with_capacity(n);
    let mut expected_reward = 0.0;
    let mut zero_weight = 0usize;
    for (s, &w) in b.particles.iter().zip(&b.weights) {
        let s_next = if s.is_done() {
            s.clone()
        } else {
            model.transition(s, action, rng)?
        };
        if !s.is_done() {
            expected_reward += w * model.reward(s, action, &s_next);
        }
        let lik = if s.is_done() {
            0.0
        } else {
            model.observation_likelihood(obs, &s_next, action)?
        };
        if lik <= 0.0 {
            zero_weight += 1;
        }
        next_weights.push(w * lik);
        next_particles.push(s_next);
    }

    let total: f64 = next_weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        // Depletion fallback: rebuild from the prior keeping deterministic
        // knowns (RockSample agent cell and sampled flags), then retry once.
        let rebuilt = reinit_from_knowns(model, &next_particles, n, rng);
        let mut any = false;
        let mut weights = Vec::with_capacity(n);
        for s in &rebuilt {
            let lik = model.observation_likelihood(obs, s, action)?;
            if lik > 0.0 {
                any = true;
            }
            weights.push(lik / n as f64);
        }
        if !any {
            return Err(GammaError::BeliefDepleted {
                tried: 1,
                zero_weight,
            });
        }
        next_particles = rebuilt;
        next_weights = weights;
    }

    let mut belief = ParticleBelief {
        particles: next_particles,
        weights: next_weights,
        domain_ref: b.domain_ref.clone(),
    }
    .normalized();

    if belief.effective_sample_size() < n as f64 / 2.0 {
        belief = belief.downsample(n, rng);
    }

    Ok(BeliefStep {
        belief,
        expected_reward,
    })
}

/// Fresh prior draws that keep the deterministic components of the collapsed
/// particle set (agent position and sampled flags for RockSample).
fn reinit_from_knowns<R: Rng>(
    model: &PomdpModel,
    collapsed: &[DomainState],
    n: usize,
    rng: &mut R,
) -> Vec<DomainState> {
    let template = collapsed.first().cloned();
    (0..n)
        .map(|_| {
            let fresh = model.initial_state(rng);
            match (&template, fresh) {
                (
                    Some(DomainState::RockSample {
                        agent,
                        rock_sampled,
                        done,
                        ..
                    }),
                    DomainState::RockSample { mut rock_good, .. },
                ) => {
                    for (g, sampled) in rock_good.iter_mut().zip(rock_sampled) {
                        if *sampled {
                            *g = false;
                        }
                    }
                    DomainState::RockSample {
                        agent: *agent,
                        rock_good,
                        rock_sampled: rock_sampled.clone(),
                        done: *done,
                    }
                }
                (_, fresh) => fresh,
            }
        })
        .collect()
}
