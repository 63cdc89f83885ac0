//! One-dimensional LightDark localization domain.
//!
//! The agent moves along a line and receives position readings whose noise
//! grows with distance from a light region; it must stop near the goal.

use crate::error::{GammaError, Result};
use crate::pomdp::{DomainAction, DomainState};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightDarkParams {
    /// Center of the light region, where observation noise bottoms out.
    pub light_y: f64,
    /// Noise floor; sigma(y) = |y - light_y| + sigma_min.
    pub sigma_min: f64,
    pub goal_y: f64,
    pub goal_tolerance: f64,
    pub step_size: f64,
    /// Gaussian prior over the initial position.
    pub prior_mean: f64,
    pub prior_std: f64,
    pub move_cost: f64,
    pub stop_goal_reward: f64,
    pub stop_miss_penalty: f64,
}

impl Default for LightDarkParams {
    fn default() -> Self {
        Self {
            light_y: 5.0,
            sigma_min: 0.1,
            goal_y: 0.0,
            goal_tolerance: 1.0,
            step_size: 1.0,
            prior_mean: 2.0,
            prior_std: 2.0,
            move_cost: -1.0,
            stop_goal_reward: 100.0,
            stop_miss_penalty: -100.0,
        }
    }
}

impl LightDarkParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_min <= 0.0 {
            return Err(GammaError::InvalidArgument("sigma_min must be > 0".into()));
        }
        if self.goal_tolerance <= 0.0 {
            return Err(GammaError::InvalidArgument("goal_tolerance must be > 0".into()));
        }
        if self.prior_std <= 0.0 {
            return Err(GammaError::InvalidArgument("prior_std must be > 0".into()));
        }
        Ok(())
    }

    /// Observation noise at position `y`; strictly positive everywhere.
    pub fn sigma(&self, y: f64) -> f64 {
        (y - self.light_y).abs() + self.sigma_min
    }

    pub fn transition(&self, y: f64, action: DomainAction) -> DomainState {
        match action {
            DomainAction::Up => DomainState::LightDark { y: y + self.step_size, done: false },
            DomainAction::Down => DomainState::LightDark { y: y - self.step_size, done: false },
            _ => DomainState::LightDark { y, done: true },
        }
    }

    pub fn sample_observation<R: Rng>(&self, y: f64, rng: &mut R) -> f64 {
        let normal = Normal::new(y, self.sigma(y)).expect("sigma > 0");
        normal.sample(rng)
    }

    pub fn observation_likelihood(&self, obs: f64, y: f64) -> f64 {
        let sigma = self.sigma(y);
        let z = (obs - y) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn reward(&self, y: f64, action: DomainAction) -> f64 {
        match action {
            DomainAction::Stop => {
                if (y - self.goal_y).abs() <= self.goal_tolerance {
                    self.stop_goal_reward
                } else {
                    self.stop_miss_penalty
                }
            }
            _ => self.move_cost,
        }
    }

    pub fn initial_state<R: Rng>(&self, rng: &mut R) -> DomainState {
        let normal = Normal::new(self.prior_mean, self.prior_std).expect("prior_std > 0");
        DomainState::LightDark { y: normal.sample(rng), done: false }
    }

    /// Window used to discretize positions into unit-width bins for the
    /// graph encoding: [-1, light_y + 5].
    pub fn bin_window(&self) -> (f64, f64) {
        (-1.0, self.light_y + 5.0)
    }

    pub fn bin_count(&self) -> usize {
        let (lo, hi) = self.bin_window();
        (hi - lo).ceil() as usize
    }

    /// Bin index for a position, clamped to the window.
    pub fn bin_of(&self, y: f64) -> usize {
        let (lo, _) = self.bin_window();
        let idx = (y - lo).floor();
        idx.clamp(0.0, (self.bin_count() - 1) as f64) as usize
    }

    /// Center position of a bin.
    pub fn bin_center(&self, bin: usize) -> f64 {
        let (lo, _) = self.bin_window();
        lo + bin as f64 + 0.5
    }
}
