//! Selection–mutation jumps: who is copied, who is replaced, and how the
//! copied hyperparameters are perturbed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{max_of, pairwise_sum};
use crate::rng::{normal, StreamRng};
use crate::types::{project, Agent, SearchBox};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionRule {
    /// Copy source drawn with probability proportional to `exp(alpha * F)`.
    Softmax { alpha: f64 },
    /// The bottom `ceil(fraction * N)` agents are overwritten by the top ones.
    Truncation { fraction: f64 },
    /// Softmax copying, but victims are drawn proportionally to `exp(-alpha * F)`.
    WorstReplacement { alpha: f64 },
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::Softmax { alpha } | SelectionRule::WorstReplacement { alpha } => {
                if !(alpha > 0.0) {
                    return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
                }
            }
            SelectionRule::Truncation { fraction } => {
                if !(fraction > 0.0 && fraction <= 0.5) {
                    return Err(invalid("fraction", format!("must lie in (0, 0.5], got {fraction}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationConfig {
    pub sigma: f64,
    #[serde(default)]
    pub bounds: Option<SearchBox>,
    /// Perturb in box coordinates rescaled to `(-1, 1)`.
    #[serde(default)]
    pub scale_to_unit: bool,
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if self.scale_to_unit && self.bounds.is_none() {
            return Err(invalid("scale_to_unit", "requires a search box"));
        }
        Ok(())
    }
}

/// Something that can take part in a genetic update.
pub trait Individual: Clone {
    fn hyper(&self) -> &[f64];
    fn set_hyper(&mut self, h: Vec<f64>);
    /// Take over everything a copy transfers from `source` except the
    /// hyperparameters (those are mutated separately) and the slot identity.
    fn inherit(&mut self, source: &Self);
}

impl Individual for Agent {
    fn hyper(&self) -> &[f64] {
        &self.h
    }
    fn set_hyper(&mut self, h: Vec<f64>) {
        self.h = h;
    }
    fn inherit(&mut self, source: &Self) {
        self.theta.clone_from(&source.theta);
    }
}

/// One overwritten slot: `slot` now holds a mutated copy of `source`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub slot: usize,
    pub source: usize,
}

fn check_fitness(fitness: &[f64]) -> Result<()> {
    if fitness.is_empty() {
        return Err(Error::Empty("population"));
    }
    if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite(format!("fitness[{i}] = {}", fitness[i])));
    }
    Ok(())
}

fn softmax(fitness: &[f64], alpha: f64) -> Vec<f64> {
    let scaled: Vec<f64> = fitness.iter().map(|f| alpha * f).collect();
    let mx = max_of(&scaled);
    let w: Vec<f64> = scaled.iter().map(|s| (s - mx).exp()).collect();
    let z = pairwise_sum(&w);
    w.into_iter().map(|x| x / z).collect()
}

/// `ceil(fraction * n)` with a guard against representation error.
pub fn truncation_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Population indices ordered by decreasing fitness, ties by index.
fn rank_order(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order
}

/// Copy probabilities for each agent.
pub fn selection_weights(fitness: &[f64], rule: &SelectionRule) -> Result<Vec<f64>> {
    check_fitness(fitness)?;
    rule.validate()?;
    Ok(match *rule {
        SelectionRule::Softmax { alpha } | SelectionRule::WorstReplacement { alpha } => {
            softmax(fitness, alpha)
        }
        SelectionRule::Truncation { fraction } => {
            let k = truncation_count(fraction, fitness.len());
            let mut w = vec![0.0; fitness.len()];
            for &i in &rank_order(fitness)[..k] {
                w[i] = 1.0 / k as f64;
            }
            w
        }
    })
}

/// Inverse-CDF sampler over a fixed weight vector.
struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut StreamRng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // zero-weight tail entries share the final cumulative value
        idx.min(self.cumulative.len() - 1)
    }
}

/// Perturb `h` with `sigma * N(0, I)` and bring it back into the box.
pub fn mutate(h: &[f64], cfg: &MutationConfig, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let mut noise = || -> f64 { cfg.sigma * normal(rng) };
    match (&cfg.bounds, cfg.scale_to_unit) {
        (Some(bx), true) => {
            let u: Vec<f64> = bx
                .to_unit(h)
                .into_iter()
                .map(|x| (x + noise()).clamp(-1.0, 1.0))
                .collect();
            Ok(bx.from_unit(&u))
        }
        (Some(bx), false) => {
            let moved: Vec<f64> = h.iter().map(|x| x + noise()).collect();
            project(&moved, bx)
        }
        (None, true) => Err(invalid("scale_to_unit", "requires a search box")),
        (None, false) => Ok(h.iter().map(|x| x + noise()).collect()),
    }
}

/// Apply one selection–mutation round to `pop` in place.
///
/// Copy sources are read from the pre-update population, so an agent that
/// is overwritten early can still serve as a source later in the round.
/// Returns the list of overwritten slots in application order.
pub fn genetic_update<I: Individual>(
    pop: &mut [I],
    fitness: &[f64],
    rule: &SelectionRule,
    mutation: &MutationConfig,
    tau: f64,
    rng: &mut StreamRng,
) -> Result<Vec<Replacement>> {
    if fitness.len() != pop.len() {
        return Err(Error::DimensionMismatch {
            expected: pop.len(),
            got: fitness.len(),
        });
    }
    check_fitness(fitness)?;
    rule.validate()?;
    mutation.validate()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid("tau", format!("must lie in [0, 1], got {tau}")));
    }

    let n = pop.len();
    let plan: Vec<Replacement> = match *rule {
        SelectionRule::Softmax { alpha } => {
            let sampler = Categorical::new(&softmax(fitness, alpha));
            let mut plan = Vec::new();
            for slot in 0..n {
                if rng.random::<f64>() < tau {
                    plan.push(Replacement {
                        slot,
                        source: sampler.sample(rng),
                    });
                }
            }
            plan
        }
        SelectionRule::WorstReplacement { alpha } => {
            let jumps = (0..n).filter(|_| rng.random::<f64>() < tau).count();
            // Gumbel-top-k: a draw without replacement with weights exp(-alpha F)
            let mut keys: Vec<(f64, usize)> = fitness
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    (-alpha * f - (-u.ln()).ln(), i)
                })
                .collect();
            keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut victims: Vec<usize> = keys[..jumps].iter().map(|&(_, i)| i).collect();
            victims.sort_unstable();
            let sampler = Categorical::new(&softmax(fitness, alpha));
            victims
                .into_iter()
                .map(|slot| Replacement {
                    slot,
                    source: sampler.sample(rng),
                })
                .collect()
        }
        SelectionRule::Truncation { fraction } => {
            let k = truncation_count(fraction, n);
            let order = rank_order(fitness);
            (0..k)
                .map(|r| Replacement {
                    slot: order[n - 1 - r],
                    source: order[r],
                })
                .collect()
        }
    };

    let sources: Vec<Option<I>> = {
        let mut needed = vec![false; n];
        for r in &plan {
            needed[r.source] = true;
        }
        pop.iter()
            .zip(needed)
            .map(|(a, need)| need.then(|| a.clone()))
            .collect()
    };
    for r in &plan {
        let src = sources[r.source].as_ref().expect("source snapshot");
        let h = mutate(src.hyper(), mutation, rng)?;
        let target = &mut pop[r.slot];
        if r.slot != r.source {
            target.inherit(src);
        }
        target.set_hyper(h);
    }
    Ok(plan)
}
