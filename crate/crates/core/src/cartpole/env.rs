//! Cart-pole physics with the classic benchmark constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl CartPoleState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.phi, self.phi_dot]
    }

    pub fn observation(self) -> [f32; 4] {
        [self.x as f32, self.x_dot as f32, self.phi as f32, self.phi_dot as f32]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub phi_threshold: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            phi_threshold: 0.2095,
        }
    }
}

impl Physics {
    pub fn failed(&self, s: &CartPoleState) -> bool {
        !(s.x.abs() <= self.x_threshold && s.phi.abs() <= self.phi_threshold)
    }
}

/// One semi-implicit Euler step. Returns the next state, the reward (always
/// 1, including on the failing step) and whether the episode failed.
/// A state that already violates the thresholds fails immediately.
pub fn env_step(state: &CartPoleState, action: usize, p: &Physics) -> Result<(CartPoleState, f64, bool)> {
    let force = match action {
        0 => -p.force_mag,
        1 => p.force_mag,
        _ => return Err(invalid("action", format!("must be 0 or 1, got {action}"))),
    };
    let total = p.mass_cart + p.mass_pole;
    let pole_ml = p.mass_pole * p.half_length;
    let (sin, cos) = state.phi.sin_cos();
    let temp = (force + pole_ml * state.phi_dot * state.phi_dot * sin) / total;
    let phi_acc = (p.gravity * sin - cos * temp)
        / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total));
    let x_acc = temp - pole_ml * phi_acc * cos / total;
    let x_dot = state.x_dot + p.dt * x_acc;
    let phi_dot = state.phi_dot + p.dt * phi_acc;
    let next = CartPoleState {
        x: state.x + p.dt * x_dot,
        x_dot,
        phi: state.phi + p.dt * phi_dot,
        phi_dot,
    };
    let done = p.failed(state) || p.failed(&next);
    Ok((next, 1.0, done))
}

/// What happened on one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// The pole fell or the cart left the track.
    pub terminal: bool,
    /// The step cap was reached without failure.
    pub truncated: bool,
}

/// An episode runner with a reward (step) cap.
#[derive(Clone, Debug, PartialEq)]
pub struct CartPole {
    pub physics: Physics,
    pub max_steps: usize,
    state: CartPoleState,
    steps: usize,
}

impl CartPole {
    pub fn new(physics: Physics, max_steps: usize, rng: &mut StreamRng) -> Self {
        let mut env = Self {
            physics,
            max_steps,
            state: CartPoleState::default(),
            steps: 0,
        };
        env.reset(rng);
        env
    }

    /// Every state component uniform in `(-0.05, 0.05)`.
    pub fn reset(&mut self, rng: &mut StreamRng) {
        let mut u = || rng.random_range(-0.05..0.05);
        self.state = CartPoleState {
            x: u(),
            x_dot: u(),
            phi: u(),
            phi_dot: u(),
        };
        self.steps = 0;
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let (next, reward, terminal) = env_step(&self.state, action, &self.physics)?;
        self.state = next;
        self.steps += 1;
        Ok(StepOutcome {
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        })
    }
}
