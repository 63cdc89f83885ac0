//! Generative POMDP models for the benchmark domains.
//!
//! Both domains expose the same surface: sample a successor state, sample an
//! observation, score an observation's likelihood, and compute rewards. All
//! operations are pure given an explicit RNG, so episode workers can share a
//! model freely.

mod lightdark;
mod rocksample;

pub use lightdark::LightDarkParams;
pub use rocksample::{RockObs, RockRewards, RockSampleParams};

use crate::error::{GammaError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Domain-specific parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DomainParams {
    LightDark(LightDarkParams),
    RockSample(RockSampleParams),
}

/// A POMDP instance: discount, horizon, and the domain descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpModel {
    pub discount: f64,
    pub horizon: usize,
    pub domain: DomainParams,
}

/// Hidden state of either domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainState {
    LightDark {
        y: f64,
        done: bool,
    },
    RockSample {
        agent: (i32, i32),
        rock_good: Vec<bool>,
        rock_sampled: Vec<bool>,
        done: bool,
    },
}

impl DomainState {
    pub fn is_done(&self) -> bool {
        match self {
            DomainState::LightDark { done, .. } => *done,
            DomainState::RockSample { done, .. } => *done,
        }
    }
}

/// Executable action of either domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainAction {
    Up,
    Down,
    Stop,
    North,
    South,
    East,
    West,
    Sample,
    Check(usize),
}

impl DomainAction {
    /// Short stable name used in serialized action maps.
    pub fn label(&self) -> String {
        match self {
            DomainAction::Up => "up".into(),
            DomainAction::Down => "down".into(),
            DomainAction::Stop => "stop".into(),
            DomainAction::North => "north".into(),
            DomainAction::South => "south".into(),
            DomainAction::East => "east".into(),
            DomainAction::West => "west".into(),
            DomainAction::Sample => "sample".into(),
            DomainAction::Check(i) => format!("check_{i}"),
        }
    }
}

/// Observation emitted after an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainObservation {
    /// LightDark position reading.
    Real(f64),
    /// RockSample sensor reading.
    Rock(RockObs),
}

impl PomdpModel {
    pub fn new(discount: f64, horizon: usize, domain: DomainParams) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(GammaError::InvalidArgument(format!(
                "discount must lie in (0, 1], got {discount}"
            )));
        }
        if horizon == 0 {
            return Err(GammaError::InvalidArgument("horizon must be positive".into()));
        }
        if let DomainParams::RockSample(p) = &domain {
            p.validate()?;
        }
        if let DomainParams::LightDark(p) = &domain {
            p.validate()?;
        }
        Ok(Self {
            discount,
            horizon,
            domain,
        })
    }

    /// Number of executable actions; the enumeration index is stable.
    pub fn action_count(&self) -> usize {
        match &self.domain {
            DomainParams::LightDark(_) => 3,
            DomainParams::RockSample(p) => 5 + p.rock_count(),
        }
    }

    /// Action for a stable index. Index `i` always maps to the same action.
    pub fn action(&self, index: usize) -> Result<DomainAction> {
        let count = self.action_count();
        if index >= count {
            return Err(GammaError::InvalidAction { index, count });
        }
        Ok(match &self.domain {
            DomainParams::LightDark(_) => match index {
                0 => DomainAction::Up,
                1 => DomainAction::Down,
                _ => DomainAction::Stop,
            },
            DomainParams::RockSample(_) => match index {
                0 => DomainAction::North,
                1 => DomainAction::South,
                2 => DomainAction::East,
                3 => DomainAction::West,
                4 => DomainAction::Sample,
                i => DomainAction::Check(i - 5),
            },
        })
    }

    /// Stable index of an action; inverse of [`PomdpModel::action`].
    pub fn action_index(&self, action: DomainAction) -> Result<usize> {
        let idx = match (&self.domain, action) {
            (DomainParams::LightDark(_), DomainAction::Up) => 0,
            (DomainParams::LightDark(_), DomainAction::Down) => 1,
            (DomainParams::LightDark(_), DomainAction::Stop) => 2,
            (DomainParams::RockSample(_), DomainAction::North) => 0,
            (DomainParams::RockSample(_), DomainAction::South) => 1,
            (DomainParams::RockSample(_), DomainAction::East) => 2,
            (DomainParams::RockSample(_), DomainAction::West) => 3,
            (DomainParams::RockSample(_), DomainAction::Sample) => 4,
            (DomainParams::RockSample(p), DomainAction::Check(i)) => {
                if i >= p.rock_count() {
                    return Err(GammaError::InvalidAction {
                        index: 5 + i,
                        count: self.action_count(),
                    });
                }
                5 + i
            }
            _ => {
                return Err(GammaError::InvalidAction {
                    index: usize::MAX,
                    count: self.action_count(),
                })
            }
        };
        Ok(idx)
    }

    /// Successor state. Both domains are deterministic; `rng` is reserved for
    /// future stochastic domains.
    pub fn transition<R: Rng>(
        &self,
        state: &DomainState,
        action: DomainAction,
        rng: &mut R,
    ) -> Result<DomainState> {
        let _ = rng;
        self.action_index(action)?;
        match (&self.domain, state) {
            (DomainParams::LightDark(p), DomainState::LightDark { y, .. }) => {
                Ok(p.transition(*y, action))
            }
            (DomainParams::RockSample(p), DomainState::RockSample { .. }) => {
                p.transition(state, action)
            }
            _ => Err(GammaError::InvalidArgument(
                "state does not belong to this domain".into(),
            )),
        }
    }

    /// Samples an observation for the `(next_state, action)` pair produced by
    /// [`PomdpModel::transition`].
    pub fn sample_observation<R: Rng>(
        &self,
        next_state: &DomainState,
        action: DomainAction,
        rng: &mut R,
    ) -> Result<DomainObservation> {
        self.action_index(action)?;
        match (&self.domain, next_state) {
            (DomainParams::LightDark(p), DomainState::LightDark { y, .. }) => {
                Ok(DomainObservation::Real(p.sample_observation(*y, rng)))
            }
            (DomainParams::RockSample(p), DomainState::RockSample { .. }) => {
                Ok(DomainObservation::Rock(p.sample_observation(next_state, action, rng)))
            }
            _ => Err(GammaError::InvalidArgument(
                "state does not belong to this domain".into(),
            )),
        }
    }

    /// Density (LightDark) or probability mass (RockSample) of `obs` given
    /// `(next_state, action)`. Consistent with [`PomdpModel::sample_observation`].
    pub fn observation_likelihood(
        &self,
        obs: &DomainObservation,
        next_state: &DomainState,
        action: DomainAction,
    ) -> Result<f64> {
        self.action_index(action)?;
        match (&self.domain, next_state, obs) {
            (DomainParams::LightDark(p), DomainState::LightDark { y, .. }, DomainObservation::Real(o)) => {
                Ok(p.observation_likelihood(*o, *y))
            }
            (DomainParams::RockSample(p), DomainState::RockSample { .. }, DomainObservation::Rock(o)) => {
                p.observation_likelihood(*o, next_state, action)
            }
            _ => Err(GammaError::InvalidObservationPair(format!(
                "{obs:?} under action {action:?}"
            ))),
        }
    }

    /// Reward of the `(state, action, next_state)` triple.
    pub fn reward(
        &self,
        state: &DomainState,
        action: DomainAction,
        next_state: &DomainState,
    ) -> f64 {
        match (&self.domain, state, next_state) {
            (DomainParams::LightDark(p), DomainState::LightDark { y, .. }, _) => {
                p.reward(*y, action)
            }
            (DomainParams::RockSample(p), DomainState::RockSample { .. }, DomainState::RockSample { .. }) => {
                p.reward(state, action, next_state)
            }
            _ => 0.0,
        }
    }

    /// Draws an initial state from the domain prior.
    pub fn initial_state<R: Rng>(&self, rng: &mut R) -> DomainState {
        match &self.domain {
            DomainParams::LightDark(p) => p.initial_state(rng),
            DomainParams::RockSample(p) => p.initial_state(rng),
        }
    }

    pub fn is_terminal(&self, state: &DomainState) -> bool {
        state.is_done()
    }

    /// Actions worth considering in `state`: excludes moves that provably do
    /// nothing and `Sample` away from every rock cell. Never empty.
    pub fn useful_actions(&self, state: &DomainState) -> Vec<usize> {
        match (&self.domain, state) {
            (DomainParams::RockSample(p), DomainState::RockSample { agent, .. }) => {
                let mut out = Vec::new();
                let n = p.grid_n as i32;
                if agent.1 + 1 < n {
                    out.push(0); // north
                }
                if agent.1 > 0 {
                    out.push(1); // south
                }
                out.push(2); // east always useful (moves toward exit or exits)
                if agent.0 > 0 {
                    out.push(3); // west
                }
                if p.rock_at_cell(*agent).is_some() {
                    out.push(4); // sample
                }
                for i in 0..p.rock_count() {
                    out.push(5 + i);
                }
                out
            }
            _ => (0..self.action_count()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn rock_model(n: usize, rocks: Vec<(i32, i32)>) -> PomdpModel {
        let params = RockSampleParams::new(n, rocks, 20.0, RockRewards::default()).unwrap();
        PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap()
    }

    fn light_model() -> PomdpModel {
        PomdpModel::new(0.95, 50, DomainParams::LightDark(LightDarkParams::default())).unwrap()
    }

    #[test]
    fn rocksample_east_moves_one_cell() {
        let m = rock_model(4, vec![(2, 2)]);
        let s = DomainState::RockSample {
            agent: (0, 0),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let mut rng = rng_from_seed(0);
        let next = m.transition(&s, DomainAction::East, &mut rng).unwrap();
        match next {
            DomainState::RockSample { agent, .. } => assert_eq!(agent, (1, 0)),
            _ => panic!("wrong domain"),
        }
    }

    #[test]
    fn rocksample_east_off_right_edge_exits() {
        let m = rock_model(4, vec![(2, 2)]);
        let s = DomainState::RockSample {
            agent: (3, 2),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let mut rng = rng_from_seed(0);
        let next = m.transition(&s, DomainAction::East, &mut rng).unwrap();
        assert!(m.is_terminal(&next));
    }

    #[test]
    fn lightdark_up_increments_position() {
        let m = light_model();
        let s = DomainState::LightDark { y: 3.0, done: false };
        let mut rng = rng_from_seed(0);
        let next = m.transition(&s, DomainAction::Up, &mut rng).unwrap();
        match next {
            DomainState::LightDark { y, .. } => assert!((y - 4.0).abs() < 1e-12),
            _ => panic!("wrong domain"),
        }
    }

    #[test]
    fn moves_never_leave_grid_except_exit() {
        let m = rock_model(3, vec![(1, 1)]);
        let mut rng = rng_from_seed(3);
        for x in 0..3 {
            for y in 0..3 {
                let s = DomainState::RockSample {
                    agent: (x, y),
                    rock_good: vec![true],
                    rock_sampled: vec![false],
                    done: false,
                };
                for idx in 0..m.action_count() {
                    let a = m.action(idx).unwrap();
                    let next = m.transition(&s, a, &mut rng).unwrap();
                    if let DomainState::RockSample { agent, done, .. } = next {
                        if !done {
                            assert!(agent.0 >= 0 && agent.0 < 3 && agent.1 >= 0 && agent.1 < 3);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn check_accuracy_at_zero_distance_is_perfect() {
        let m = rock_model(4, vec![(1, 1)]);
        let s = DomainState::RockSample {
            agent: (1, 1),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            let o = m.sample_observation(&s, DomainAction::Check(0), &mut rng).unwrap();
            assert_eq!(o, DomainObservation::Rock(RockObs::Good));
        }
    }

    #[test]
    fn check_accuracy_at_halflife_is_three_quarters() {
        // Distance d0 => accuracy 0.5 * (1 + 0.5) = 0.75.
        let params = RockSampleParams::new(25, vec![(21, 1)], 20.0, RockRewards::default()).unwrap();
        let m = PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap();
        let s = DomainState::RockSample {
            agent: (1, 1),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let lik = m
            .observation_likelihood(
                &DomainObservation::Rock(RockObs::Good),
                &s,
                DomainAction::Check(0),
            )
            .unwrap();
        assert!((lik - 0.75).abs() < 1e-12);
    }

    #[test]
    fn lightdark_likelihood_peaks_at_noise_floor() {
        let m = light_model();
        let p = match &m.domain {
            DomainParams::LightDark(p) => p.clone(),
            _ => unreachable!(),
        };
        let s = DomainState::LightDark { y: p.light_y, done: false };
        let lik = m
            .observation_likelihood(&DomainObservation::Real(p.light_y), &s, DomainAction::Up)
            .unwrap();
        let expected = 1.0 / (p.sigma_min * (2.0 * std::f64::consts::PI).sqrt());
        assert!((lik - expected).abs() < 1e-9);
    }

    #[test]
    fn sampling_matches_likelihood_frequency() {
        // Monte Carlo consistency: Good frequency over 1e5 draws stays within
        // three binomial standard errors of the stated mass.
        let params = RockSampleParams::new(25, vec![(21, 1)], 20.0, RockRewards::default()).unwrap();
        let m = PomdpModel::new(0.95, 50, DomainParams::RockSample(params)).unwrap();
        let s = DomainState::RockSample {
            agent: (1, 1),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let p_good = m
            .observation_likelihood(
                &DomainObservation::Rock(RockObs::Good),
                &s,
                DomainAction::Check(0),
            )
            .unwrap();
        let trials = 100_000usize;
        let mut rng = rng_from_seed(11);
        let mut hits = 0usize;
        for _ in 0..trials {
            if m.sample_observation(&s, DomainAction::Check(0), &mut rng).unwrap()
                == DomainObservation::Rock(RockObs::Good)
            {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let se = (p_good * (1.0 - p_good) / trials as f64).sqrt();
        assert!(
            (freq - p_good).abs() < 3.0 * se,
            "freq {freq} vs mass {p_good} (se {se})"
        );
    }

    #[test]
    fn discrete_likelihoods_sum_to_one() {
        let m = rock_model(4, vec![(2, 1)]);
        let s = DomainState::RockSample {
            agent: (0, 0),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        // A check's observation set is {Good, Bad}; every other action's is {None}.
        let total: f64 = [RockObs::Good, RockObs::Bad]
            .iter()
            .map(|o| {
                m.observation_likelihood(
                    &DomainObservation::Rock(*o),
                    &s,
                    DomainAction::Check(0),
                )
                .unwrap()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        let none = m
            .observation_likelihood(&DomainObservation::Rock(RockObs::None), &s, DomainAction::North)
            .unwrap();
        assert_eq!(none, 1.0);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        // Trapezoid quadrature over +-8 sigma at the noise floor.
        let m = light_model();
        let p = match &m.domain {
            DomainParams::LightDark(p) => p.clone(),
            _ => unreachable!(),
        };
        let y = 1.3;
        let sigma = (y - p.light_y).abs() + p.sigma_min;
        let s = DomainState::LightDark { y, done: false };
        let lo = y - 8.0 * sigma;
        let hi = y + 8.0 * sigma;
        let steps = 400_000;
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for i in 0..=steps {
            let o = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            total += w
                * m.observation_likelihood(&DomainObservation::Real(o), &s, DomainAction::Up)
                    .unwrap();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn sample_rewards_follow_rock_state() {
        let m = rock_model(4, vec![(1, 1)]);
        let good = DomainState::RockSample {
            agent: (1, 1),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let mut rng = rng_from_seed(0);
        let next = m.transition(&good, DomainAction::Sample, &mut rng).unwrap();
        assert_eq!(m.reward(&good, DomainAction::Sample, &next), 10.0);
        if let DomainState::RockSample { rock_good, rock_sampled, .. } = &next {
            assert!(!rock_good[0], "sampling a good rock depletes it");
            assert!(rock_sampled[0]);
        }

        let empty = DomainState::RockSample {
            agent: (0, 0),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let next = m.transition(&empty, DomainAction::Sample, &mut rng).unwrap();
        assert_eq!(m.reward(&empty, DomainAction::Sample, &next), -10.0);
    }

    #[test]
    fn stop_at_goal_pays_full_reward() {
        let m = light_model();
        let s = DomainState::LightDark { y: 0.0, done: false };
        let mut rng = rng_from_seed(0);
        let next = m.transition(&s, DomainAction::Stop, &mut rng).unwrap();
        assert_eq!(m.reward(&s, DomainAction::Stop, &next), 100.0);
        assert!(m.is_terminal(&next));
    }

    #[test]
    fn initial_states_follow_prior() {
        let m = rock_model(5, vec![(2, 2)]);
        let mut rng = rng_from_seed(9);
        let s = m.initial_state(&mut rng);
        if let DomainState::RockSample { agent, .. } = &s {
            assert_eq!(*agent, (0, 2));
        }
        assert!(!m.is_terminal(&s));

        let mut good = 0usize;
        let trials = 10_000usize;
        for _ in 0..trials {
            if let DomainState::RockSample { rock_good, .. } = m.initial_state(&mut rng) {
                if rock_good[0] {
                    good += 1;
                }
            }
        }
        let frac = good as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 0.015, "good fraction {frac}");
    }

    #[test]
    fn transitions_are_deterministic_given_seed() {
        let m = rock_model(4, vec![(2, 1), (3, 3)]);
        let s = DomainState::RockSample {
            agent: (1, 1),
            rock_good: vec![true, false],
            rock_sampled: vec![false, false],
            done: false,
        };
        for idx in 0..m.action_count() {
            let a = m.action(idx).unwrap();
            let mut r1 = rng_from_seed(77);
            let mut r2 = rng_from_seed(77);
            let n1 = m.transition(&s, a, &mut r1).unwrap();
            let n2 = m.transition(&s, a, &mut r2).unwrap();
            assert_eq!(n1, n2);
            let o1 = m.sample_observation(&n1, a, &mut r1).unwrap();
            let o2 = m.sample_observation(&n2, a, &mut r2).unwrap();
            assert_eq!(o1, o2);
        }
    }

    #[test]
    fn invalid_action_index_is_rejected() {
        let m = rock_model(4, vec![(2, 1)]);
        assert!(m.action(6).is_err());
        assert!(m.action_index(DomainAction::Check(5)).is_err());
        assert!(m.action_index(DomainAction::Up).is_err());
    }

    #[test]
    fn mismatched_observation_kind_is_rejected() {
        let m = rock_model(4, vec![(2, 1)]);
        let s = DomainState::RockSample {
            agent: (0, 0),
            rock_good: vec![true],
            rock_sampled: vec![false],
            done: false,
        };
        let err = m.observation_likelihood(&DomainObservation::Real(0.4), &s, DomainAction::Check(0));
        assert!(err.is_err());
    }
}
