//! Population drivers: full training-plus-jumps PBT, and the reduced loop
//! that replaces training by equilibrium sampling or a closed-form effective
//! fitness.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{train_inner, LangevinConfig, NoiseMode};
use crate::error::{invalid, Error, Result};
use crate::evolution::{genetic_update, MutationConfig, SelectionRule};
use crate::fitness::{time_avg_fitness, FitnessHistory};
use crate::objective::{Objective, ObjectiveId};
use crate::record::{MetricsRecord, Phase};
use crate::rng::{stream, StreamRng, LANE_INIT, LANE_JUMP};
use crate::types::{Agent, SearchBox};

/// How the fitness used for selection is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessMode {
    /// `F(theta, h)` at the end of the training block.
    Instantaneous,
    /// Mean of `F` over the last `window` training steps.
    TimeAverage { window: usize },
    /// `F(theta, h)` with `theta` drawn from the training equilibrium.
    EquilibriumSample,
    /// Closed-form effective fitness.
    ClosedForm,
}

/// Uniform initial distribution of parameters and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub theta: SearchBox,
    pub h: SearchBox,
}

fn default_snapshot_every() -> usize {
    10
}

fn default_parallel() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveId,
    pub n: usize,
    pub tau: f64,
    pub mutation: MutationConfig,
    pub selection: SelectionRule,
    #[serde(default)]
    pub langevin: LangevinConfig,
    pub inner_steps: usize,
    pub generations: usize,
    pub seed: u64,
    pub init: InitSpec,
    pub fitness_mode: FitnessMode,
    /// Full-population dumps every this many generations; 0 disables them.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Extra records inside training blocks every this many steps; 0 disables.
    #[serde(default)]
    pub record_every: usize,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

impl RunConfig {
    /// The low-dimensional setting: `N = 100`, `tau = 1`, `sigma = 0.1`,
    /// softmax with `alpha = 100`, `dt = 0.01`, 50 steps per generation,
    /// diffusion coefficient `h1` kept in `[0, 1]`.
    pub fn quadratic() -> Self {
        let h_box = SearchBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).expect("static box");
        Self {
            objective: ObjectiveId::Quadratic,
            n: 100,
            tau: 1.0,
            mutation: MutationConfig {
                sigma: 0.1,
                bounds: Some(h_box.clone()),
                scale_to_unit: false,
            },
            selection: SelectionRule::Softmax { alpha: 100.0 },
            langevin: LangevinConfig::default(),
            inner_steps: 50,
            generations: 100,
            seed: 0,
            init: InitSpec {
                theta: SearchBox::cube(2, -1.0, 1.0).expect("static box"),
                h: h_box,
            },
            fitness_mode: FitnessMode::Instantaneous,
            snapshot_every: default_snapshot_every(),
            record_every: 0,
            parallel: true,
        }
    }

    /// Same as [`RunConfig::quadratic`] on the Himmelblau objective with
    /// `theta` started in `[-0.5, 0.5]^2`.
    pub fn himmelblau() -> Self {
        let mut cfg = Self::quadratic();
        cfg.objective = ObjectiveId::Himmelblau;
        cfg.init.theta = SearchBox::cube(2, -0.5, 0.5).expect("static box");
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let obj = self.objective.build();
        if self.n == 0 {
            return Err(invalid("n", "population must be nonempty"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("tau", format!("must lie in (0, 1], got {}", self.tau)));
        }
        self.selection.validate()?;
        self.mutation.validate()?;
        self.langevin.validate()?;
        let dh = obj.hyper_dim();
        if self.init.theta.dim() != obj.theta_dim() {
            return Err(Error::DimensionMismatch {
                expected: obj.theta_dim(),
                got: self.init.theta.dim(),
            });
        }
        if self.init.h.dim() != dh {
            return Err(Error::DimensionMismatch {
                expected: dh,
                got: self.init.h.dim(),
            });
        }
        if let Some(bx) = &self.mutation.bounds {
            if bx.dim() != dh {
                return Err(Error::DimensionMismatch {
                    expected: dh,
                    got: bx.dim(),
                });
            }
            if !bx.contains(self.init.h.lower()) || !bx.contains(self.init.h.upper()) {
                return Err(invalid("init.h", "initial box must lie inside the mutation bounds"));
            }
        }
        if let NoiseMode::Direct { index } = self.langevin.noise {
            if index >= dh {
                return Err(invalid("langevin.noise.index", format!("{index} >= hyperparameter dimension {dh}")));
            }
        }
        match self.fitness_mode {
            FitnessMode::TimeAverage { window: 0 } => {
                return Err(invalid("fitness_mode.window", "must be >= 1"));
            }
            FitnessMode::EquilibriumSample if !obj.has_equilibrium_sampler() => {
                return Err(obj.missing("an equilibrium sampler"));
            }
            FitnessMode::ClosedForm if !obj.has_closed_effective_fitness() => {
                return Err(obj.missing("a closed-form effective fitness"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Population state at the end of a generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub generation: usize,
    pub agents: Vec<Agent>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub population: Vec<Agent>,
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub wall_time_secs: f64,
}

impl RunOutput {
    pub fn h_marginal(&self, axis: usize) -> Vec<f64> {
        self.population.iter().map(|a| a.h[axis]).collect()
    }

    pub fn theta_points(&self) -> Vec<Vec<f64>> {
        self.population.iter().map(|a| a.theta.clone()).collect()
    }
}

fn uniform_in(bx: &SearchBox, rng: &mut StreamRng) -> Vec<f64> {
    bx.lower()
        .iter()
        .zip(bx.upper())
        .map(|(lo, hi)| if lo < hi { rng.random_range(*lo..*hi) } else { *lo })
        .collect()
}

/// Initial population drawn from a single stream, so it does not depend on
/// the execution mode.
pub fn init_population(cfg: &RunConfig) -> Vec<Agent> {
    let mut rng = stream(cfg.seed, LANE_INIT, 0);
    (0..cfg.n)
        .map(|id| {
            let theta = uniform_in(&cfg.init.theta, &mut rng);
            let h = uniform_in(&cfg.init.h, &mut rng);
            Agent::new(id, theta, h)
        })
        .collect()
}

fn reported(obj: &dyn Objective, agents: &[Agent]) -> Vec<f64> {
    agents.iter().map(|a| obj.fitness(&a.theta, &a.h)).collect()
}

fn for_each_agent<T: Send, F>(parallel: bool, items: &mut [T], f: F) -> Result<()>
where
    F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
{
    if parallel {
        items.par_iter_mut().enumerate().try_for_each(|(i, x)| f(i, x))
    } else {
        items.iter_mut().enumerate().try_for_each(|(i, x)| f(i, x))
    }
}

fn record(gen: usize, time: f64, phase: Phase, agents: &[Agent], fitness: &[f64]) -> MetricsRecord {
    MetricsRecord::from_population(gen, time, phase, agents, fitness)
}

/// Full PBT: each generation trains every agent for `inner_steps` Langevin
/// steps, evaluates fitness, then applies one selection–mutation jump.
///
/// Records: one baseline, then per generation a pre-jump and a post-jump
/// record (plus training records every `record_every` steps if enabled).
pub fn run_pbt(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let obj = cfg.objective.build();
    let obj = obj.as_ref();
    let window = match cfg.fitness_mode {
        FitnessMode::Instantaneous => None,
        FitnessMode::TimeAverage { window } => Some(window),
        other => {
            return Err(invalid(
                "fitness_mode",
                format!("{other:?} belongs to the reduced driver; use run_reduced"),
            ))
        }
    };
    let start = Instant::now();
    let mut pop = init_population(cfg);
    let mut histories = match window {
        Some(m) => vec![FitnessHistory::new(m)?; cfg.n],
        None => Vec::new(),
    };
    let dt = cfg.langevin.dt;
    let mut records = vec![record(0, 0.0, Phase::Initial, &pop, &reported(obj, &pop))];
    let mut snapshots = Vec::new();
    if cfg.snapshot_every > 0 {
        snapshots.push(Snapshot {
            generation: 0,
            agents: pop.clone(),
        });
    }

    for gen in 1..=cfg.generations {
        let t0 = (gen - 1) as f64 * cfg.inner_steps as f64 * dt;
        let mut rngs: Vec<StreamRng> = (0..cfg.n).map(|i| stream(cfg.seed, i as u64, gen as u64)).collect();
        // training blocks end at every record point and where the window opens
        let window_start = window.map_or(cfg.inner_steps, |m| cfg.inner_steps.saturating_sub(m));
        let mut done = 0;
        while done < cfg.inner_steps {
            let mut next = cfg.inner_steps;
            if cfg.record_every > 0 {
                next = next.min((done / cfg.record_every + 1) * cfg.record_every);
            }
            if done < window_start {
                next = next.min(window_start);
            } else {
                next = done + 1;
            }
            let steps = next - done;
            let in_window = done >= window_start;
            let mut work: Vec<(&mut Agent, &mut StreamRng, Option<&mut FitnessHistory>)> = {
                let mut hist = histories.iter_mut();
                pop.iter_mut()
                    .zip(rngs.iter_mut())
                    .map(|(a, r)| (a, r, hist.next()))
                    .collect()
            };
            for_each_agent(cfg.parallel, &mut work, |_, (agent, rng, hist)| {
                train_inner(agent, obj, &cfg.langevin, steps, rng)?;
                if in_window {
                    if let Some(h) = hist {
                        h.push(gen, obj.selection_fitness(&agent.theta, &agent.h));
                    }
                }
                Ok(())
            })?;
            done = next;
            if cfg.record_every > 0 && done % cfg.record_every == 0 && done < cfg.inner_steps {
                records.push(record(gen, t0 + done as f64 * dt, Phase::Training, &pop, &reported(obj, &pop)));
            }
        }
        let t1 = gen as f64 * cfg.inner_steps as f64 * dt;
        let selection: Vec<f64> = match window {
            None => pop.iter().map(|a| obj.selection_fitness(&a.theta, &a.h)).collect(),
            Some(_) => histories
                .iter()
                .zip(&pop)
                .map(|(h, a)| {
                    if h.is_empty() {
                        // no training step yet since the last copy
                        Ok(obj.selection_fitness(&a.theta, &a.h))
                    } else {
                        time_avg_fitness(h)
                    }
                })
                .collect::<Result<_>>()?,
        };
        records.push(record(gen, t1, Phase::PreJump, &pop, &reported(obj, &pop)));
        let mut rng = stream(cfg.seed, LANE_JUMP, gen as u64);
        let plan = genetic_update(&mut pop, &selection, &cfg.selection, &cfg.mutation, cfg.tau, &mut rng)?;
        for r in &plan {
            if let Some(h) = histories.get_mut(r.slot) {
                h.clear();
            }
        }
        records.push(record(gen, t1, Phase::PostJump, &pop, &reported(obj, &pop)));
        if cfg.snapshot_every > 0 && (gen % cfg.snapshot_every == 0 || gen == cfg.generations) {
            snapshots.push(Snapshot {
                generation: gen,
                agents: pop.clone(),
            });
        }
        log::debug!("generation {gen}: {} replacements", plan.len());
    }
    Ok(RunOutput {
        population: pop,
        records,
        snapshots,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Reduced dynamics: no inner training. Each generation every agent gets
/// either a fresh equilibrium draw of `theta` (fitness `F(theta, h)`) or the
/// closed-form effective fitness, followed by one jump.
///
/// Records: one baseline, then one post-jump record per generation.
/// `sim_time` counts jumps (`tau` per generation).
pub fn run_reduced(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let obj = cfg.objective.build();
    let obj = obj.as_ref();
    if !matches!(cfg.fitness_mode, FitnessMode::EquilibriumSample | FitnessMode::ClosedForm) {
        return Err(invalid(
            "fitness_mode",
            "run_reduced needs equilibrium_sample or closed_form",
        ));
    }
    let start = Instant::now();
    let mut pop = init_population(cfg);
    let mut records = vec![record(0, 0.0, Phase::Initial, &pop, &reported(obj, &pop))];
    let mut snapshots = Vec::new();
    if cfg.snapshot_every > 0 {
        snapshots.push(Snapshot {
            generation: 0,
            agents: pop.clone(),
        });
    }
    for gen in 1..=cfg.generations {
        let mut values = vec![(0.0, 0.0); cfg.n];
        {
            let mut work: Vec<(&mut Agent, &mut (f64, f64))> = pop.iter_mut().zip(values.iter_mut()).collect();
            for_each_agent(cfg.parallel, &mut work, |i, (agent, out)| {
                match cfg.fitness_mode {
                    FitnessMode::EquilibriumSample => {
                        let mut rng = stream(cfg.seed, i as u64, gen as u64);
                        agent.theta = obj.sample_equilibrium(&agent.h, &mut rng)?;
                        **out = (
                            obj.selection_fitness(&agent.theta, &agent.h),
                            obj.fitness(&agent.theta, &agent.h),
                        );
                    }
                    _ => {
                        let f = obj.effective_fitness_closed(&agent.h)?;
                        **out = (f, f);
                    }
                }
                Ok(())
            })?;
        }
        let (selection, shown): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let mut rng = stream(cfg.seed, LANE_JUMP, gen as u64);
        let plan = genetic_update(&mut pop, &selection, &cfg.selection, &cfg.mutation, cfg.tau, &mut rng)?;
        // fitness values follow the agents they were computed for
        let mut after = shown.clone();
        for r in &plan {
            after[r.slot] = shown[r.source];
        }
        records.push(record(gen, gen as f64 * cfg.tau, Phase::PostJump, &pop, &after));
        if cfg.snapshot_every > 0 && (gen % cfg.snapshot_every == 0 || gen == cfg.generations) {
            snapshots.push(Snapshot {
                generation: gen,
                agents: pop.clone(),
            });
        }
    }
    Ok(RunOutput {
        population: pop,
        records,
        snapshots,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Dispatches on the fitness mode.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.fitness_mode {
        FitnessMode::Instantaneous | FitnessMode::TimeAverage { .. } => run_pbt(cfg),
        FitnessMode::EquilibriumSample | FitnessMode::ClosedForm => run_reduced(cfg),
    }
}

/// Writes `generation,id,theta0..,h0..` rows.
pub fn write_snapshots_csv<W: Write>(mut w: W, snapshots: &[Snapshot]) -> Result<()> {
    let Some(first) = snapshots.iter().find_map(|s| s.agents.first()) else {
        return Ok(());
    };
    let mut header = vec!["generation".to_string(), "id".into()];
    header.extend((0..first.theta.len()).map(|k| format!("theta{k}")));
    header.extend((0..first.h.len()).map(|k| format!("h{k}")));
    writeln!(w, "{}", header.join(","))?;
    for s in snapshots {
        for a in &s.agents {
            let mut row = vec![s.generation.to_string(), a.id.to_string()];
            row.extend(a.theta.iter().map(f64::to_string));
            row.extend(a.h.iter().map(f64::to_string));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}
