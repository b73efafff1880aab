//! Inner-loop parameter training: explicit Euler–Maruyama steps of
//! `d theta = -grad L(theta, h) dt + c dB`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::Objective;
use crate::rng::{normal, StreamRng};
use crate::types::Agent;

/// How the diffusion coefficient `c` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseMode {
    /// `c = h[index]`: a hyperparameter is the diffusion coefficient itself.
    Direct { index: usize },
    /// `c = sqrt(2 / beta)`: isotropic noise at inverse temperature `beta`.
    Temperature { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub dt: f64,
    pub noise: NoiseMode,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            noise: NoiseMode::Direct { index: 1 },
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt >= 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be finite and >= 0, got {}", self.dt)));
        }
        if let NoiseMode::Temperature { beta } = self.noise {
            if !(beta > 0.0) {
                return Err(invalid("beta", format!("must be > 0, got {beta}")));
            }
        }
        Ok(())
    }

    /// Diffusion coefficient for an agent with hyperparameters `h`.
    pub fn diffusion(&self, h: &[f64]) -> f64 {
        match self.noise {
            NoiseMode::Direct { index } => h[index],
            NoiseMode::Temperature { beta } => (2.0 / beta).sqrt(),
        }
    }
}

/// One Euler–Maruyama step; `h` is left untouched.
pub fn langevin_step(
    agent: &mut Agent,
    obj: &dyn Objective,
    cfg: &LangevinConfig,
    rng: &mut StreamRng,
) -> Result<()> {
    let mut grad = vec![0.0; agent.theta.len()];
    step_with_buffer(agent, obj, cfg, rng, &mut grad)
}

fn step_with_buffer(
    agent: &mut Agent,
    obj: &dyn Objective,
    cfg: &LangevinConfig,
    rng: &mut StreamRng,
    grad: &mut [f64],
) -> Result<()> {
    obj.loss_grad(&agent.theta, &agent.h, grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            id: agent.id,
            theta: agent.theta.clone(),
        });
    }
    let scale = cfg.diffusion(&agent.h) * cfg.dt.sqrt();
    for (t, g) in agent.theta.iter_mut().zip(grad.iter()) {
        *t -= cfg.dt * g;
        if scale != 0.0 {
            let xi = normal(rng);
            *t += scale * xi;
        }
    }
    if agent.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!(
            "theta of agent {} after a Langevin step",
            agent.id
        )));
    }
    Ok(())
}

/// Applies [`langevin_step`] `steps` times.
pub fn train_inner(
    agent: &mut Agent,
    obj: &dyn Objective,
    cfg: &LangevinConfig,
    steps: usize,
    rng: &mut StreamRng,
) -> Result<()> {
    let mut grad = vec![0.0; agent.theta.len()];
    for _ in 0..steps {
        step_with_buffer(agent, obj, cfg, rng, &mut grad)?;
    }
    Ok(())
}
