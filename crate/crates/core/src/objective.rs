//! Benchmark objectives: fitness, training loss, and (when available) the
//! closed-form equilibrium of the training dynamics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{normal, StreamRng};

/// A bilevel objective: the loss drives parameter training, the fitness
/// drives selection.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;
    fn theta_dim(&self) -> usize;
    fn hyper_dim(&self) -> usize;

    /// The fitness as reported in logs.
    fn fitness(&self, theta: &[f64], h: &[f64]) -> f64;

    /// The value maximized by selection. Defaults to [`Objective::fitness`].
    fn selection_fitness(&self, theta: &[f64], h: &[f64]) -> f64 {
        self.fitness(theta, h)
    }

    fn loss(&self, theta: &[f64], h: &[f64]) -> f64;

    /// Writes the gradient of the loss with respect to `theta` into `grad`.
    fn loss_grad(&self, theta: &[f64], h: &[f64], grad: &mut [f64]);

    /// `inf_theta loss(theta, h)`, when known.
    fn loss_min(&self, _h: &[f64]) -> Option<f64> {
        None
    }

    /// The unique loss minimizer `theta*(h)`, when known.
    fn minimizer(&self, _h: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_equilibrium_sampler(&self) -> bool {
        false
    }

    /// Draw from the stationary law of the training dynamics at fixed `h`.
    fn sample_equilibrium(&self, _h: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Err(self.missing("an equilibrium sampler"))
    }

    fn has_closed_effective_fitness(&self) -> bool {
        false
    }

    /// Closed-form effective fitness `log E_eq[exp(F)]`.
    fn effective_fitness_closed(&self, _h: &[f64]) -> Result<f64> {
        Err(self.missing("a closed-form effective fitness"))
    }

    /// Closed-form effective fitness under the Gibbs law `exp(-beta * loss)`.
    fn gibbs_effective_fitness(&self, _h: &[f64], _beta: f64) -> Result<f64> {
        Err(self.missing("a closed-form Gibbs effective fitness"))
    }

    /// Direct sampler for the Gibbs law `exp(-beta * loss)`.
    fn sample_gibbs(&self, _h: &[f64], _beta: f64, _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Err(self.missing("a Gibbs sampler"))
    }

    #[doc(hidden)]
    fn missing(&self, capability: &'static str) -> Error {
        Error::MissingCapability {
            objective: self.name(),
            capability,
        }
    }
}

/// Names of the built-in objectives, as used in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveId {
    Quadratic,
    Himmelblau,
}

impl ObjectiveId {
    pub fn build(self) -> Arc<dyn Objective> {
        match self {
            ObjectiveId::Quadratic => Arc::new(Quadratic),
            ObjectiveId::Himmelblau => Arc::new(Himmelblau),
        }
    }
}

/// Peak value of the quadratic fitness.
pub const QUADRATIC_PEAK: f64 = 1.2;

/// `F(theta) = 1.2 - |theta|^2` trained on the biased loss
/// `L(theta, h0) = -1.2 + |theta - (h0, h0)|^2`, with `h1` the diffusion
/// coefficient of the training SDE. The equilibrium is
/// `N((h0, h0), h1^2/4 * I)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Quadratic;

pub fn quadratic_objective() -> Quadratic {
    Quadratic
}

fn noise_strength(h: &[f64]) -> Result<f64> {
    let h1 = h[1];
    if h1 < 0.0 {
        return Err(invalid("h1", format!("diffusion strength must be >= 0, got {h1}")));
    }
    Ok(h1)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 {
        Ok(())
    } else {
        Err(invalid("beta", format!("must be > 0, got {beta}")))
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn theta_dim(&self) -> usize {
        2
    }
    fn hyper_dim(&self) -> usize {
        2
    }

    fn fitness(&self, theta: &[f64], _h: &[f64]) -> f64 {
        QUADRATIC_PEAK - (theta[0] * theta[0] + theta[1] * theta[1])
    }

    fn loss(&self, theta: &[f64], h: &[f64]) -> f64 {
        let (a, b) = (theta[0] - h[0], theta[1] - h[0]);
        -QUADRATIC_PEAK + a * a + b * b
    }

    fn loss_grad(&self, theta: &[f64], h: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * (theta[0] - h[0]);
        grad[1] = 2.0 * (theta[1] - h[0]);
    }

    fn loss_min(&self, _h: &[f64]) -> Option<f64> {
        Some(-QUADRATIC_PEAK)
    }

    fn minimizer(&self, h: &[f64]) -> Option<Vec<f64>> {
        Some(vec![h[0], h[0]])
    }

    fn has_equilibrium_sampler(&self) -> bool {
        true
    }

    fn sample_equilibrium(&self, h: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let sd = noise_strength(h)? / 2.0;
        Ok((0..2)
            .map(|_| h[0] + sd * normal(rng))
            .collect())
    }

    fn has_closed_effective_fitness(&self) -> bool {
        true
    }

    fn effective_fitness_closed(&self, h: &[f64]) -> Result<f64> {
        let h1 = noise_strength(h)?;
        // 2 s^2 with s^2 = h1^2 / 4
        let k = 1.0 + 0.5 * h1 * h1;
        Ok(QUADRATIC_PEAK - 2.0 * h[0] * h[0] / k - k.ln())
    }

    fn gibbs_effective_fitness(&self, h: &[f64], beta: f64) -> Result<f64> {
        check_beta(beta)?;
        // exp(-beta L) is N((h0, h0), I / (2 beta)); 2 s^2 = 1 / beta
        let k = 1.0 + 1.0 / beta;
        Ok(QUADRATIC_PEAK - 2.0 * h[0] * h[0] / k - k.ln())
    }

    fn sample_gibbs(&self, h: &[f64], beta: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
        check_beta(beta)?;
        let sd = (0.5 / beta).sqrt();
        Ok((0..2)
            .map(|_| h[0] + sd * normal(rng))
            .collect())
    }
}

/// The four global minima of the Himmelblau function.
pub const HIMMELBLAU_MINIMA: [[f64; 2]; 4] = [
    [3.0, 2.0],
    [-2.805_118_086_952_745, 3.131_312_518_250_573],
    [-3.779_310_253_377_747, -3.283_185_991_286_170],
    [3.584_428_340_330_492, -1.848_126_526_964_404],
];

/// Himmelblau fitness with a biased loss. Selection maximizes `-F`; the
/// reported fitness is `F` itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct Himmelblau;

pub fn himmelblau_objective() -> Himmelblau {
    Himmelblau
}

fn himmelblau(x: f64, y: f64) -> f64 {
    let a = x * x + y - 11.0;
    let b = x + y * y - 7.0;
    a * a + b * b
}

impl Objective for Himmelblau {
    fn name(&self) -> &'static str {
        "himmelblau"
    }
    fn theta_dim(&self) -> usize {
        2
    }
    fn hyper_dim(&self) -> usize {
        2
    }

    fn fitness(&self, theta: &[f64], _h: &[f64]) -> f64 {
        himmelblau(theta[0], theta[1])
    }

    fn selection_fitness(&self, theta: &[f64], h: &[f64]) -> f64 {
        -self.fitness(theta, h)
    }

    fn loss(&self, theta: &[f64], h: &[f64]) -> f64 {
        let u = theta[0] - h[0];
        let v = theta[1] - h[0];
        let a = u * u + theta[1] - 11.0;
        let b = theta[0] + v * v - 7.0;
        a * a + b * b
    }

    fn loss_grad(&self, theta: &[f64], h: &[f64], grad: &mut [f64]) {
        let u = theta[0] - h[0];
        let v = theta[1] - h[0];
        let a = u * u + theta[1] - 11.0;
        let b = theta[0] + v * v - 7.0;
        grad[0] = 4.0 * a * u + 2.0 * b;
        grad[1] = 2.0 * a + 4.0 * b * v;
    }

    fn loss_min(&self, _h: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}
