//! Population of DQN agents evolved by truncation selection on a
//! moving average of episodic rewards.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{genetic_update, Individual, MutationConfig, SelectionRule};
use crate::fitness::{time_avg_fitness, FitnessHistory};
use crate::numeric::mean_var;
use crate::rng::{stream, StreamRng, LANE_JUMP};
use crate::types::SearchBox;

use super::dqn::{dqn_update, epsilon, Scratch};
use super::env::{CartPole, Physics};
use super::net::{Adam, Mlp};
use super::replay::{Batch, ReplayBuffer, Transition};

/// Names of the tuned hyperparameters, in vector order.
pub const HYPER_NAMES: [&str; 3] = ["lr", "p_decay", "batch_size"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleConfig {
    pub n: usize,
    /// Environment steps per agent between two selection rounds.
    pub steps_per_generation: usize,
    /// Episode length cap, equal to the largest episodic reward.
    pub reward_cap: usize,
    /// Number of recent episodes averaged into the fitness.
    pub window: usize,
    pub sigma: f64,
    pub generations: usize,
    pub seed: u64,
    pub truncation_fraction: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Learner steps between target-network syncs.
    pub target_sync: usize,
    pub hidden: usize,
    pub p_start: f64,
    pub p_end: f64,
    /// Box for `[lr, p_decay, batch_size]`; mutation acts on its
    /// `(-1, 1)`-rescaled coordinates.
    pub bounds: SearchBox,
    /// Stop after the first generation whose top-5 reward reaches this.
    pub stop_at_reward: Option<f64>,
    /// Give every agent the same random stream and initial network.
    pub shared_streams: bool,
    pub parallel: bool,
    pub physics: Physics,
}

impl Default for CartpoleConfig {
    fn default() -> Self {
        Self {
            n: 20,
            steps_per_generation: 300,
            reward_cap: 100,
            window: 5,
            sigma: 0.1,
            generations: 40,
            seed: 0,
            truncation_fraction: 0.2,
            gamma: 0.99,
            buffer_capacity: 10_000,
            warmup: 500,
            target_sync: 200,
            hidden: 64,
            p_start: 1.0,
            p_end: 0.01,
            bounds: SearchBox::new(vec![1e-5, 500.0, 32.0], vec![1e-2, 5000.0, 128.0]).expect("static box"),
            stop_at_reward: None,
            shared_streams: false,
            parallel: true,
            physics: Physics::default(),
        }
    }
}

impl CartpoleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "population must be nonempty"));
        }
        if self.reward_cap == 0 || self.steps_per_generation == 0 {
            return Err(invalid("reward_cap", "reward_cap and steps_per_generation must be >= 1"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be >= 1"));
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid("gamma", "must lie in [0, 1)"));
        }
        if self.bounds.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: self.bounds.dim(),
            });
        }
        if !(self.bounds.lower()[0] > 0.0 && self.bounds.lower()[1] > 0.0 && self.bounds.lower()[2] >= 1.0) {
            return Err(invalid("bounds", "lr and p_decay must be positive, batch_size at least 1"));
        }
        if self.warmup < self.bounds.upper()[2].round() as usize {
            return Err(invalid("warmup", "must cover the largest batch size"));
        }
        if self.target_sync == 0 || self.hidden == 0 {
            return Err(invalid("target_sync", "target_sync and hidden must be >= 1"));
        }
        SelectionRule::Truncation {
            fraction: self.truncation_fraction,
        }
        .validate()
    }

    fn mutation(&self) -> MutationConfig {
        MutationConfig {
            sigma: self.sigma,
            bounds: Some(self.bounds.clone()),
            scale_to_unit: true,
        }
    }
}

/// One learner: online and target networks, optimizer, replay buffer and
/// its own environment.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub id: usize,
    /// `[lr, p_decay, batch_size]`.
    pub hyper: Vec<f64>,
    pub online: Mlp<f32>,
    pub target: Mlp<f32>,
    pub adam: Adam<f32>,
    pub buffer: ReplayBuffer,
    pub env: CartPole,
    pub history: FitnessHistory,
    /// Environment steps taken by this slot (drives exploration).
    pub total_steps: u64,
    pub learner_steps: u64,
    episode_reward: f64,
    rng: StreamRng,
    scratch: Scratch<f32>,
    batch: Batch<f32>,
}

impl Individual for DqnAgent {
    fn hyper(&self) -> &[f64] {
        &self.hyper
    }
    fn set_hyper(&mut self, h: Vec<f64>) {
        self.hyper = h;
    }
    /// Weights, target weights and optimizer state move with the copy; the
    /// slot keeps its environment, replay buffer, counters and stream. The
    /// fitness history is cleared.
    fn inherit(&mut self, source: &Self) {
        self.online.clone_from(&source.online);
        self.target.clone_from(&source.target);
        self.adam.clone_from(&source.adam);
        self.history.clear();
    }
}

impl DqnAgent {
    pub fn new(id: usize, cfg: &CartpoleConfig) -> Result<Self> {
        let lane = if cfg.shared_streams { 0 } else { id as u64 };
        let mut rng = stream(cfg.seed, lane, 0);
        let sizes = [4, cfg.hidden, cfg.hidden, 2];
        let online: Mlp<f32> = Mlp::new(&sizes, &mut rng)?;
        let hyper = cfg
            .bounds
            .lower()
            .iter()
            .zip(cfg.bounds.upper())
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect();
        let env = CartPole::new(cfg.physics, cfg.reward_cap, &mut rng);
        Ok(Self {
            id,
            hyper,
            target: online.clone(),
            adam: Adam::new(online.n_params()),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            env,
            history: FitnessHistory::new(cfg.window)?,
            total_steps: 0,
            learner_steps: 0,
            episode_reward: 0.0,
            rng,
            scratch: Scratch::default(),
            batch: Batch::default(),
        })
    }

    pub fn lr(&self) -> f32 {
        self.hyper[0] as f32
    }

    pub fn p_decay(&self) -> f64 {
        self.hyper[1]
    }

    /// Batch size rounded from the continuous hyperparameter.
    pub fn batch_size(&self) -> usize {
        (self.hyper[2].round() as usize).max(1)
    }

    /// Greedy action; errors if the network output is not finite.
    pub fn greedy_action(&self, obs: &[f32; 4]) -> Result<usize> {
        let q = self.online.predict(obs);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Q-values {q:?} of agent {}", self.id)));
        }
        Ok(if q[1] > q[0] { 1 } else { 0 })
    }

    /// Runs `steps` environment steps with learning; returns the rewards of
    /// episodes completed during the call.
    pub fn train(&mut self, steps: usize, generation: usize, cfg: &CartpoleConfig) -> Result<Vec<f64>> {
        let mut completed = Vec::new();
        let gamma = cfg.gamma as f32;
        for _ in 0..steps {
            let s = self.env.state().observation();
            let eps = epsilon(self.total_steps, cfg.p_start, cfg.p_end, self.p_decay());
            let action = if self.rng.random::<f64>() < eps {
                self.rng.random_range(0..2)
            } else {
                self.greedy_action(&s)?
            };
            let out = self.env.step(action)?;
            self.total_steps += 1;
            self.episode_reward += out.reward;
            self.buffer.push(Transition {
                s,
                a: action as u8,
                r: out.reward as f32,
                s2: self.env.state().observation(),
                terminal: out.terminal,
            });
            if out.terminal || out.truncated {
                completed.push(self.episode_reward);
                self.history.push(generation, self.episode_reward);
                self.episode_reward = 0.0;
                self.env.reset(&mut self.rng);
            }
            if self.buffer.len() >= cfg.warmup {
                let size = self.batch_size().min(self.buffer.len());
                self.buffer.sample(size, &mut self.rng, &mut self.batch)?;
                let lr = self.lr();
                dqn_update(
                    &mut self.online,
                    &self.target,
                    &mut self.adam,
                    &self.batch,
                    gamma,
                    lr,
                    &mut self.scratch,
                )?;
                self.learner_steps += 1;
                if self.learner_steps % cfg.target_sync as u64 == 0 {
                    self.target.clone_from(&self.online);
                }
            }
        }
        Ok(completed)
    }

    /// Moving average of recent episodes; before the first completed
    /// episode since the last copy, the running episode's reward so far.
    pub fn fitness(&self) -> f64 {
        if self.history.is_empty() {
            self.episode_reward
        } else {
            time_avg_fitness(&self.history).expect("nonempty history")
        }
    }
}

/// Per-generation population statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartpoleRecord {
    pub generation: usize,
    /// Mean of the five best per-agent mean episodic rewards of this
    /// generation (`None` at the baseline).
    pub top5_mean_reward: Option<f64>,
    pub pop_mean_reward: Option<f64>,
    pub episodes: usize,
    pub hyper_mean: Vec<f64>,
    pub hyper_std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CartpoleRun {
    pub records: Vec<CartpoleRecord>,
    /// Final `[lr, p_decay, batch_size]` of every agent.
    pub final_hyper: Vec<Vec<f64>>,
    pub final_fitness: Vec<f64>,
    pub wall_time_secs: f64,
}

impl CartpoleRun {
    /// First generation whose top-5 reward reaches `threshold`.
    pub fn first_generation_reaching(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.top5_mean_reward.is_some_and(|v| v >= threshold))
            .map(|r| r.generation)
    }

    pub fn best_top5(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.top5_mean_reward).reduce(f64::max)
    }
}

fn hyper_stats(agents: &[DqnAgent]) -> (Vec<f64>, Vec<f64>) {
    (0..3)
        .map(|k| {
            let xs: Vec<f64> = agents.iter().map(|a| a.hyper[k]).collect();
            let (m, v) = mean_var(&xs);
            (m, v.sqrt())
        })
        .unzip()
}

fn generation_record(generation: usize, agents: &[DqnAgent], rewards: &[Vec<f64>]) -> CartpoleRecord {
    let mut means: Vec<f64> = rewards
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    means.sort_by(|a, b| b.total_cmp(a));
    let top = &means[..means.len().min(5)];
    let (hyper_mean, hyper_std) = hyper_stats(agents);
    CartpoleRecord {
        generation,
        top5_mean_reward: (!top.is_empty()).then(|| top.iter().sum::<f64>() / top.len() as f64),
        pop_mean_reward: (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64),
        episodes: rewards.iter().map(Vec::len).sum(),
        hyper_mean,
        hyper_std,
    }
}

/// Builds the initial population.
pub fn init_agents(cfg: &CartpoleConfig) -> Result<Vec<DqnAgent>> {
    (0..cfg.n).map(|id| DqnAgent::new(id, cfg)).collect()
}

/// Runs the population for `cfg.generations` generations (or until
/// `stop_at_reward` is reached).
pub fn run_cartpole_pbt(cfg: &CartpoleConfig) -> Result<CartpoleRun> {
    let (run, _) = run_with_agents(cfg)?;
    Ok(run)
}

/// Like [`run_cartpole_pbt`] but also returns the final agents.
pub fn run_with_agents(cfg: &CartpoleConfig) -> Result<(CartpoleRun, Vec<DqnAgent>)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut agents = init_agents(cfg)?;
    let (hyper_mean, hyper_std) = hyper_stats(&agents);
    let mut records = vec![CartpoleRecord {
        generation: 0,
        top5_mean_reward: None,
        pop_mean_reward: None,
        episodes: 0,
        hyper_mean,
        hyper_std,
    }];
    let rule = SelectionRule::Truncation {
        fraction: cfg.truncation_fraction,
    };
    let mutation = cfg.mutation();
    for gen in 1..=cfg.generations {
        let train = |a: &mut DqnAgent| a.train(cfg.steps_per_generation, gen, cfg);
        let rewards: Vec<Vec<f64>> = if cfg.parallel {
            agents.par_iter_mut().map(train).collect::<Result<_>>()?
        } else {
            agents.iter_mut().map(train).collect::<Result<_>>()?
        };
        let fitness: Vec<f64> = agents.iter().map(DqnAgent::fitness).collect();
        let rec = generation_record(gen, &agents, &rewards);
        let reached = matches!((cfg.stop_at_reward, rec.top5_mean_reward), (Some(t), Some(v)) if v >= t);
        log::info!(
            "cartpole generation {gen}: top5 {:?}, population {:?}",
            rec.top5_mean_reward,
            rec.pop_mean_reward
        );
        records.push(rec);
        if reached {
            break;
        }
        let mut rng = stream(cfg.seed, LANE_JUMP, gen as u64);
        genetic_update(&mut agents, &fitness, &rule, &mutation, 1.0, &mut rng)?;
    }
    let run = CartpoleRun {
        records,
        final_hyper: agents.iter().map(|a| a.hyper.clone()).collect(),
        final_fitness: agents.iter().map(DqnAgent::fitness).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((run, agents))
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// Writes `generation,top5_mean_reward,pop_mean_reward,episodes` followed by
/// mean and std of each hyperparameter.
pub fn write_cartpole_csv<W: Write>(mut w: W, records: &[CartpoleRecord]) -> Result<()> {
    let mut header = vec!["generation", "top5_mean_reward", "pop_mean_reward", "episodes"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(HYPER_NAMES.iter().map(|h| format!("{h}_mean")));
    header.extend(HYPER_NAMES.iter().map(|h| format!("{h}_std")));
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![
            r.generation.to_string(),
            opt(r.top5_mean_reward),
            opt(r.pop_mean_reward),
            r.episodes.to_string(),
        ];
        row.extend(r.hyper_mean.iter().map(f64::to_string));
        row.extend(r.hyper_std.iter().map(f64::to_string));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes `agent,lr,p_decay,batch_size,fitness` for the final population.
pub fn write_hyper_dump<W: Write>(mut w: W, run: &CartpoleRun) -> Result<()> {
    writeln!(w, "agent,{},fitness", HYPER_NAMES.join(","))?;
    for (i, (h, f)) in run.final_hyper.iter().zip(&run.final_fitness).enumerate() {
        let hs: Vec<String> = h.iter().map(f64::to_string).collect();
        writeln!(w, "{i},{},{f}", hs.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CartpoleConfig {
        CartpoleConfig {
            n: 4,
            steps_per_generation: 150,
            generations: 3,
            warmup: 128,
            hidden: 16,
            buffer_capacity: 300,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_generations_gives_baseline_only() {
        let cfg = CartpoleConfig {
            generations: 0,
            ..tiny()
        };
        let run = run_cartpole_pbt(&cfg).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].top5_mean_reward, None);
        let mut buf = Vec::new();
        write_cartpole_csv(&mut buf, &run.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("generation,top5_mean_reward,pop_mean_reward,episodes,lr_mean"));
        assert!(text.lines().nth(1).unwrap().starts_with("0,,,0,"));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let cfg = tiny();
        let a = run_cartpole_pbt(&cfg).unwrap();
        let b = run_cartpole_pbt(&CartpoleConfig { parallel: false, ..cfg }).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_hyper, b.final_hyper);
    }

    #[test]
    fn identical_agents_stay_identical_without_mutation() {
        let cfg = CartpoleConfig {
            n: 2,
            sigma: 0.0,
            shared_streams: true,
            ..tiny()
        };
        let (_, agents) = run_with_agents(&cfg).unwrap();
        assert_eq!(agents[0].online, agents[1].online);
        assert_eq!(agents[0].adam, agents[1].adam);
        assert_eq!(agents[0].hyper, agents[1].hyper);
        assert_eq!(agents[0].env, agents[1].env);
    }

    #[test]
    fn copies_act_like_their_source() {
        let cfg = tiny();
        let mut agents = init_agents(&cfg).unwrap();
        for a in agents.iter_mut() {
            a.train(200, 1, &cfg).unwrap();
        }
        let source = agents[0].clone();
        let mut copy = agents[3].clone();
        copy.inherit(&source);
        assert!(copy.history.is_empty());
        let mut rng = stream(9, 0, 0);
        for _ in 0..100 {
            let probe = [
                rng.random_range(-2.4f32..2.4),
                rng.random_range(-3.0f32..3.0),
                rng.random_range(-0.2f32..0.2),
                rng.random_range(-3.0f32..3.0),
            ];
            assert_eq!(copy.greedy_action(&probe).unwrap(), source.greedy_action(&probe).unwrap());
        }
    }

    #[test]
    fn buffer_and_hyperparameters_stay_in_bounds() {
        let cfg = CartpoleConfig {
            sigma: 0.5,
            generations: 4,
            ..tiny()
        };
        let (run, agents) = run_with_agents(&cfg).unwrap();
        assert_eq!(run.final_hyper.len(), cfg.n);
        for a in &agents {
            assert!(a.buffer.len() <= cfg.buffer_capacity);
            assert!(cfg.bounds.contains(&a.hyper));
            assert!((32..=128).contains(&a.batch_size()));
        }
        // every generation after the first completes some episodes
        assert!(run.records[1..].iter().all(|r| r.episodes > 0 && r.top5_mean_reward.is_some()));
        let mut buf = Vec::new();
        write_hyper_dump(&mut buf, &run).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), cfg.n + 1);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(CartpoleConfig { window: 0, ..tiny() }.validate().is_err());
        assert!(CartpoleConfig { warmup: 10, ..tiny() }.validate().is_err());
        assert!(CartpoleConfig { gamma: 1.0, ..tiny() }.validate().is_err());
        let err = toml::from_str::<CartpoleConfig>("n = 4\nlearning_rate = 1").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }
}
