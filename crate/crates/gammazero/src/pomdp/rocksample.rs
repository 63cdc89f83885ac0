//! RockSample(n, k) information-gathering domain.
//!
//! The agent knows its own grid position, senses rock quality through a
//! distance-degraded sensor, and earns reward for sampling good rocks and
//! exiting east.

use crate::error::{GammaError, Result};
use crate::pomdp::{DomainAction, DomainState};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sensor reading after a `Check`; `None` for every other action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RockObs {
    Good,
    Bad,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RockRewards {
    pub good_sample: f64,
    pub bad_sample: f64,
    pub exit: f64,
    pub illegal: f64,
}

impl Default for RockRewards {
    fn default() -> Self {
        Self {
            good_sample: 10.0,
            bad_sample: -10.0,
            exit: 10.0,
            illegal: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RockSampleParams {
    pub grid_n: usize,
    pub rock_positions: Vec<(i32, i32)>,
    /// Sensor half-life distance d0: accuracy(d) = 0.5 * (1 + 2^(-d/d0)).
    pub sensor_halflife: f64,
    pub rewards: RockRewards,
}

impl RockSampleParams {
    pub fn new(
        grid_n: usize,
        rock_positions: Vec<(i32, i32)>,
        sensor_halflife: f64,
        rewards: RockRewards,
    ) -> Result<Self> {
        let p = Self {
            grid_n,
            rock_positions,
            sensor_halflife,
            rewards,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 {
            return Err(GammaError::InvalidArgument("grid_n must be positive".into()));
        }
        if self.rock_positions.is_empty() {
            return Err(GammaError::InvalidArgument("need at least one rock".into()));
        }
        if self.rock_positions.len() > self.grid_n * self.grid_n {
            return Err(GammaError::InvalidArgument(
                "more rocks than grid cells".into(),
            ));
        }
        if self.sensor_halflife <= 0.0 {
            return Err(GammaError::InvalidArgument("sensor_halflife must be > 0".into()));
        }
        let n = self.grid_n as i32;
        for (i, &(x, y)) in self.rock_positions.iter().enumerate() {
            if x < 0 || x >= n || y < 0 || y >= n {
                return Err(GammaError::InvalidArgument(format!(
                    "rock {i} at ({x}, {y}) is outside the {n}x{n} grid"
                )));
            }
            for &(x2, y2) in &self.rock_positions[..i] {
                if (x, y) == (x2, y2) {
                    return Err(GammaError::InvalidArgument(format!(
                        "duplicate rock position ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws `k` distinct rock cells from a seeded stream.
    pub fn random_positions<R: Rng>(grid_n: usize, k: usize, rng: &mut R) -> Vec<(i32, i32)> {
        let mut cells: Vec<(i32, i32)> = (0..grid_n as i32)
            .flat_map(|x| (0..grid_n as i32).map(move |y| (x, y)))
            .collect();
        // partial Fisher-Yates
        for i in 0..k.min(cells.len()) {
            let j = rng.gen_range(i..cells.len());
            cells.swap(i, j);
        }
        cells.truncate(k);
        cells
    }

    pub fn rock_count(&self) -> usize {
        self.rock_positions.len()
    }

    pub fn start_cell(&self) -> (i32, i32) {
        (0, (self.grid_n / 2) as i32)
    }

    pub fn rock_at_cell(&self, cell: (i32, i32)) -> Option<usize> {
        self.rock_positions.iter().position(|&p| p == cell)
    }

    /// Sensor accuracy at Euclidean distance `d`.
    pub fn sensor_accuracy(&self, d: f64) -> f64 {
        0.5 * (1.0 + (2.0f64).powf(-d / self.sensor_halflife))
    }

    pub fn agent_rock_distance(&self, agent: (i32, i32), rock: usize) -> f64 {
        let (rx, ry) = self.rock_positions[rock];
        let dx = (agent.0 - rx) as f64;
        let dy = (agent.1 - ry) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn transition(&self, state: &DomainState, action: DomainAction) -> Result<DomainState> {
        let (agent, rock_good, rock_sampled) = match state {
            DomainState::RockSample {
                agent,
                rock_good,
                rock_sampled,
                ..
            } => (*agent, rock_good.clone(), rock_sampled.clone()),
            _ => {
                return Err(GammaError::InvalidArgument(
                    "state does not belong to this domain".into(),
                ))
            }
        };
        let n = self.grid_n as i32;
        let mut next_agent = agent;
        let mut next_good = rock_good;
        let mut next_sampled = rock_sampled;
        let mut done = false;
        match action {
            DomainAction::North => {
                if agent.1 + 1 < n {
                    next_agent.1 += 1;
                }
            }
            DomainAction::South => {
                if agent.1 > 0 {
                    next_agent.1 -= 1;
                }
            }
            DomainAction::East => {
                if agent.0 + 1 < n {
                    next_agent.0 += 1;
                } else {
                    // east off the right edge is the terminal exit
                    next_agent.0 = n;
                    done = true;
                }
            }
            DomainAction::West => {
                if agent.0 > 0 {
                    next_agent.0 -= 1;
                }
            }
            DomainAction::Sample => {
                if let Some(i) = self.rock_at_cell(agent) {
                    next_good[i] = false; // sampling depletes the rock
                    next_sampled[i] = true;
                }
            }
            DomainAction::Check(i) => {
                if i >= self.rock_count() {
                    return Err(GammaError::InvalidAction {
                        index: 5 + i,
                        count: 5 + self.rock_count(),
                    });
                }
            }
            _ => {
                return Err(GammaError::InvalidAction {
                    index: usize::MAX,
                    count: 5 + self.rock_count(),
                })
            }
        }
        Ok(DomainState::RockSample {
            agent: next_agent,
            rock_good: next_good,
            rock_sampled: next_sampled,
            done,
        })
    }

    pub fn sample_observation<R: Rng>(
        &self,
        next_state: &DomainState,
        action: DomainAction,
        rng: &mut R,
    ) -> RockObs {
        let DomainState::RockSample { agent, rock_good, .. } = next_state else {
            return RockObs::None;
        };
        match action {
            DomainAction::Check(i) => {
                let d = self.agent_rock_distance(*agent, i);
                let acc = self.sensor_accuracy(d);
                let truth = rock_good[i];
                let correct = rng.gen_bool(acc);
                let reading = if correct { truth } else { !truth };
                if reading {
                    RockObs::Good
                } else {
                    RockObs::Bad
                }
            }
            _ => RockObs::None,
        }
    }

    pub fn observation_likelihood(
        &self,
        obs: RockObs,
        next_state: &DomainState,
        action: DomainAction,
    ) -> Result<f64> {
        let DomainState::RockSample { agent, rock_good, .. } = next_state else {
            return Err(GammaError::InvalidArgument(
                "state does not belong to this domain".into(),
            ));
        };
        match action {
            DomainAction::Check(i) => {
                if obs == RockObs::None {
                    return Err(GammaError::InvalidObservationPair(
                        "None reading after a check".into(),
                    ));
                }
                let d = self.agent_rock_distance(*agent, i);
                let acc = self.sensor_accuracy(d);
                let says_good = obs == RockObs::Good;
                Ok(if says_good == rock_good[i] { acc } else { 1.0 - acc })
            }
            _ => {
                if obs == RockObs::None {
                    Ok(1.0)
                } else {
                    Err(GammaError::InvalidObservationPair(
                        "sensor reading without a check".into(),
                    ))
                }
            }
        }
    }

    pub fn reward(
        &self,
        state: &DomainState,
        action: DomainAction,
        next_state: &DomainState,
    ) -> f64 {
        let DomainState::RockSample { agent, rock_good, .. } = state else {
            return 0.0;
        };
        match action {
            DomainAction::Sample => match self.rock_at_cell(*agent) {
                Some(i) if rock_good[i] => self.rewards.good_sample,
                _ => self.rewards.bad_sample,
            },
            DomainAction::East => {
                if next_state.is_done() {
                    self.rewards.exit
                } else {
                    0.0
                }
            }
            DomainAction::North | DomainAction::South | DomainAction::West => {
                let moved = match next_state {
                    DomainState::RockSample { agent: next, .. } => next != agent,
                    _ => true,
                };
                if moved {
                    0.0
                } else {
                    self.rewards.illegal
                }
            }
            _ => 0.0,
        }
    }

    pub fn initial_state<R: Rng>(&self, rng: &mut R) -> DomainState {
        let k = self.rock_count();
        let rock_good = (0..k).map(|_| rng.gen_bool(0.5)).collect();
        DomainState::RockSample {
            agent: self.start_cell(),
            rock_good,
            rock_sampled: vec![false; k],
            done: false,
        }
    }
}
