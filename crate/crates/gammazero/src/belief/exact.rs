//! Exact discrete Bayes filter for enumerable instances.
//!
//! RockSample hides only the rock qualities, so a belief is a distribution
//! over at most 2^k states given the known agent cell. This filter is the
//! oracle against which the particle filter is validated.

use crate::error::{GammaError, Result};
use crate::pomdp::{DomainAction, DomainObservation, DomainParams, DomainState, PomdpModel};

/// Exact belief over an enumerated support.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBelief {
    pub support: Vec<DomainState>,
    pub probs: Vec<f64>,
}

impl ExactBelief {
    /// Weighted fraction of support satisfying `predicate`.
    pub fn marginal(&self, predicate: impl Fn(&DomainState) -> bool) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(s, _)| predicate(s))
            .map(|(_, p)| *p)
            .sum()
    }

    pub fn is_terminal(&self) -> bool {
        self.marginal(|s| s.is_done()) >= 1.0 - 1e-12
    }

    fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.probs.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(GammaError::ZeroPosterior);
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(self)
    }
}

/// Initial exact belief: every rock-quality configuration equally likely,
/// agent at the fixed start cell.
pub fn exact_init(model: &PomdpModel) -> Result<ExactBelief> {
    let DomainParams::RockSample(params) = &model.domain else {
        return Err(GammaError::UnsupportedDomain);
    };
    let k = params.rock_count();
    let configs = 1usize << k;
    let prob = 1.0 / configs as f64;
    let support = (0..configs)
        .map(|bits| DomainState::RockSample {
            agent: params.start_cell(),
            rock_good: (0..k).map(|i| bits >> i & 1 == 1).collect(),
            rock_sampled: vec![false; k],
            done: false,
        })
        .collect();
    Ok(ExactBelief {
        support,
        probs: vec![prob; configs],
    })
}

/// Exact Bayes posterior after `(action, obs)`. Zero posterior mass over the
/// whole support is an error.
pub fn exact_update(
    b: &ExactBelief,
    model: &PomdpModel,
    action: DomainAction,
    obs: &DomainObservation,
) -> Result<ExactBelief> {
    if !matches!(model.domain, DomainParams::RockSample(_)) {
        return Err(GammaError::UnsupportedDomain);
    }
    let mut support: Vec<DomainState> = Vec::with_capacity(b.support.len());
    let mut probs: Vec<f64> = Vec::with_capacity(b.support.len());
    // rng is unused by the deterministic dynamics; keep one for the signature
    let mut rng = crate::rng::rng_from_seed(0);
    for (s, &p) in b.support.iter().zip(&b.probs) {
        if p == 0.0 {
            continue;
        }
        let s_next = if s.is_done() {
            s.clone()
        } else {
            model.transition(s, action, &mut rng)?
        };
        let lik = if s.is_done() {
            0.0
        } else {
            model.observation_likelihood(obs, &s_next, action)?
        };
        let mass = p * lik;
        if mass == 0.0 {
            continue;
        }
        // merge duplicate successors
        match support.iter().position(|t| *t == s_next) {
            Some(i) => probs[i] += mass,
            None => {
                support.push(s_next);
                probs.push(mass);
            }
        }
    }
    if support.is_empty() {
        return Err(GammaError::ZeroPosterior);
    }
    ExactBelief { support, probs }.normalized()
}
