//! Effective-fitness estimators, the penalized fitness and the quantitative
//! Laplace bound.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::EmpiricalMeasure;
use crate::numeric::{max_of, pairwise_sum};
use crate::objective::Objective;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Closed,
    MonteCarlo { n_samples: usize },
    TimeAverage { window: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveFitnessEstimate {
    pub value: f64,
    /// Zero for closed forms.
    pub std_error: f64,
    pub method: EstimateMethod,
}

/// The last `window` fitness evaluations of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessHistory {
    window: usize,
    entries: VecDeque<(usize, f64)>,
}

impl FitnessHistory {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid("window", "must be >= 1"));
        }
        Ok(Self {
            window,
            entries: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, generation: usize, value: f64) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back((generation, value));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    /// `(generation, value)` pairs, oldest first.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }
}

/// Mean of the buffered values (fewer than `window` while filling up).
pub fn time_avg_fitness(history: &FitnessHistory) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("fitness history: agent needs at least one evaluation"));
    }
    let vals: Vec<f64> = history.values().collect();
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}

pub fn time_avg_estimate(history: &FitnessHistory) -> Result<EffectiveFitnessEstimate> {
    Ok(EffectiveFitnessEstimate {
        value: time_avg_fitness(history)?,
        std_error: 0.0,
        method: EstimateMethod::TimeAverage {
            window: history.window(),
        },
    })
}

/// `log mean exp(values)` with its delta-method standard error.
pub fn log_mean_exp(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("log-mean-exp of no values"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("fitness value {v}")));
    }
    let n = values.len() as f64;
    let mx = max_of(values);
    let w: Vec<f64> = values.iter().map(|v| (v - mx).exp()).collect();
    let mean = pairwise_sum(&w) / n;
    let se = if values.len() > 1 {
        let dev: Vec<f64> = w.iter().map(|x| (x - mean).powi(2)).collect();
        let sd = (pairwise_sum(&dev) / (n - 1.0)).sqrt();
        sd / (n.sqrt() * mean)
    } else {
        0.0
    };
    Ok((mx + mean.ln(), se))
}

fn monte_carlo(
    n: usize,
    mut draw: impl FnMut() -> Result<f64>,
) -> Result<EffectiveFitnessEstimate> {
    if n < 1 {
        return Err(invalid("n", "need at least one sample"));
    }
    let values = (0..n).map(|_| draw()).collect::<Result<Vec<f64>>>()?;
    let (value, std_error) = log_mean_exp(&values)?;
    Ok(EffectiveFitnessEstimate {
        value,
        std_error,
        method: EstimateMethod::MonteCarlo { n_samples: n },
    })
}

/// Monte Carlo effective fitness `log E[exp F(theta, h)]` over the training
/// equilibrium at `h`. Uses the selection fitness, i.e. the value selection
/// maximizes.
pub fn fbar_monte_carlo(
    obj: &dyn Objective,
    h: &[f64],
    n: usize,
    rng: &mut StreamRng,
) -> Result<EffectiveFitnessEstimate> {
    if !obj.has_equilibrium_sampler() {
        return Err(obj.missing("an equilibrium sampler"));
    }
    monte_carlo(n, || {
        let theta = obj.sample_equilibrium(h, rng)?;
        Ok(obj.selection_fitness(&theta, h))
    })
}

/// Closed-form effective fitness as an estimate with zero error.
pub fn fbar_closed(obj: &dyn Objective, h: &[f64]) -> Result<EffectiveFitnessEstimate> {
    Ok(EffectiveFitnessEstimate {
        value: obj.effective_fitness_closed(h)?,
        std_error: 0.0,
        method: EstimateMethod::Closed,
    })
}

/// Effective fitness under the Gibbs law `exp(-beta * loss(., h))`,
/// closed-form path.
pub fn fbar_gibbs_beta(obj: &dyn Objective, h: &[f64], beta: f64) -> Result<f64> {
    obj.gibbs_effective_fitness(h, beta)
}

/// Same quantity by direct sampling of the Gibbs law.
pub fn fbar_gibbs_beta_monte_carlo(
    obj: &dyn Objective,
    h: &[f64],
    beta: f64,
    n: usize,
    rng: &mut StreamRng,
) -> Result<EffectiveFitnessEstimate> {
    monte_carlo(n, || {
        let theta = obj.sample_gibbs(h, beta, rng)?;
        Ok(obj.selection_fitness(&theta, h))
    })
}

/// `F(theta, h) - beta (L(theta, h) - inf L(., h))`.
pub fn penalized_fitness(obj: &dyn Objective, theta: &[f64], h: &[f64], beta: f64) -> Result<f64> {
    let min = obj.loss_min(h).ok_or_else(|| obj.missing("a known loss minimum"))?;
    let f = obj.selection_fitness(theta, h);
    if beta == 0.0 {
        return Ok(f);
    }
    Ok(f - beta * (obj.loss(theta, h) - min))
}

/// Objective-specific constants of the inverse-continuity assumption:
/// `|h - h*| <= c_p (F(h*) - F(h))^(1/p)` for `|h - h*| <= r_p`, and
/// `F(h) < F(h*) - fbar_inf` outside that ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceConstants {
    pub c_p: f64,
    pub p: f64,
    pub r_p: f64,
    /// `sup_{|h - h*| <= r} F(h*) - F(h)`.
    pub fbar_r: f64,
    pub fbar_inf: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Both sides of the quantitative Laplace principle on a weighted sample:
/// `lhs = |m(G_{alpha F}[rho]) - h*|` and
/// `rhs = c_p (q + F_r)^(1/p) + exp(-alpha q) int |h - h*| d rho / rho(B(h*, r))`.
#[allow(clippy::too_many_arguments)]
pub fn laplace_bound(
    samples: &EmpiricalMeasure,
    fbar: &dyn Fn(&[f64]) -> f64,
    h_star: &[f64],
    alpha: f64,
    r: f64,
    q: f64,
    k: &LaplaceConstants,
) -> Result<(f64, f64)> {
    if h_star.len() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: h_star.len(),
        });
    }
    if !(r > 0.0 && r <= k.r_p) {
        return Err(invalid("r", format!("need 0 < r <= R_p = {}, got {r}", k.r_p)));
    }
    if !(q > 0.0) || !(q + k.fbar_r < k.fbar_inf) {
        return Err(invalid("q", "need q > 0 and q + F_r < F_inf"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    let n = samples.len();
    let dists: Vec<f64> = (0..n).map(|i| dist(samples.point(i), h_star)).collect();
    let ball: Vec<f64> = (0..n).filter(|&i| dists[i] <= r).map(|i| samples.weight(i)).collect();
    let ball_mass = pairwise_sum(&ball);
    if ball_mass <= 0.0 {
        return Err(Error::BoundInapplicable(format!("no mass within {r} of h*")));
    }
    let first: Vec<f64> = (0..n).map(|i| samples.weight(i) * dists[i]).collect();
    let rhs = k.c_p * (q + k.fbar_r).powf(1.0 / k.p) + (-alpha * q).exp() * pairwise_sum(&first) / ball_mass;

    let scaled: Vec<f64> = (0..n)
        .map(|i| {
            if samples.weight(i) > 0.0 {
                alpha * fbar(samples.point(i))
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mx = max_of(&scaled);
    let w: Vec<f64> = (0..n).map(|i| samples.weight(i) * (scaled[i] - mx).exp()).collect();
    let z = pairwise_sum(&w);
    let d = samples.dim();
    let offset: Vec<f64> = (0..d)
        .map(|c| {
            let terms: Vec<f64> = (0..n).map(|i| w[i] * samples.point(i)[c]).collect();
            pairwise_sum(&terms) / z - h_star[c]
        })
        .collect();
    let lhs = offset.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((lhs, rhs))
}
