//! Acceptance criteria 1 to 11. Each test prints one `PASS`/`FAIL` line and
//! then asserts. Runtime budgets are asserted too.

use std::time::{Duration, Instant};

use rand::Rng;
use twoscale::cartpole::dqn::td_loss_grad;
use twoscale::cartpole::dqn::Scratch;
use twoscale::cartpole::net::Mlp;
use twoscale::cartpole::pbt::CartpoleConfig;
use twoscale::cartpole::replay::{Batch, Transition};
use twoscale::driver::{init_population, run, RunConfig};
use twoscale::evolution::{genetic_update, selection_weights, MutationConfig, SelectionRule};
use twoscale::experiment::{run_experiment, CartpoleParams, ExperimentConfig, ExperimentId, Findings, Params};
use twoscale::fitness::{fbar_gibbs_beta, fbar_gibbs_beta_monte_carlo};
use twoscale::meanfield::{
    apply_mutation, apply_selection, equilibrium_residual, evolve, mean_evolution_defect, replicator_consistency,
    DensityGrid, PdeConfig,
};
use twoscale::metrics::{bl_distance, w1_sorted_1d, EmpiricalMeasure};
use twoscale::objective::Quadratic;
use twoscale::rng::stream;
use twoscale::types::{project, SearchBox};

fn report(criterion: u32, passed: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let in_time = elapsed <= budget;
    let tag = if passed && in_time { "PASS" } else { "FAIL" };
    println!(
        "{tag} criterion {criterion}: {detail} [{:.1}s, budget {}s]",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
    assert!(in_time, "criterion {criterion} exceeded its runtime budget");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Cell-centre mean of a 1D grid, computed from the raw masses.
fn grid_mean(g: &DensityGrid) -> f64 {
    let w = (g.upper()[0] - g.lower()[0]) / g.cells()[0] as f64;
    g.masses()
        .iter()
        .enumerate()
        .map(|(i, m)| m * (g.lower()[0] + (i as f64 + 0.5) * w))
        .sum()
}

fn halving_ratios(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[0] / w[1]).collect()
}

#[test]
fn criterion_01_quadratic_concentration() {
    let start = Instant::now();
    let mut finals = Vec::new();
    for seed in 0..3 {
        let cfg = RunConfig {
            n: 1000,
            generations: 500,
            inner_steps: 50,
            snapshot_every: 0,
            seed,
            ..RunConfig::quadratic()
        };
        assert_eq!(cfg.langevin.dt, 0.01);
        assert_eq!(cfg.tau, 1.0);
        assert_eq!(cfg.mutation.sigma, 0.1);
        assert_eq!(cfg.selection, SelectionRule::Softmax { alpha: 100.0 });
        let out = run(&cfg).unwrap();
        let h0: Vec<f64> = out.population.iter().map(|a| a.h[0]).collect();
        let h1: Vec<f64> = out.population.iter().map(|a| a.h[1]).collect();
        finals.push((mean(&h0), mean(&h1)));
    }
    let ok = finals.iter().all(|(m0, m1)| m0.abs() <= 0.15 && *m1 <= 0.35);
    report(1, ok, &format!("final (mean h0, mean h1) per seed {finals:.4?}"), start.elapsed(), secs(120));
}

#[test]
fn criterion_02_propagation_of_chaos() {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(ExperimentId::QuadraticChaos);
    assert_eq!(cfg.seeds.len(), 5);
    let Params::QuadraticChaos(p) = &cfg.params else { unreachable!() };
    assert_eq!(p.populations, vec![100, 1000, 10_000]);
    assert_eq!(p.subsample, 2000);
    let summary = run_experiment(&cfg, None).unwrap();
    let Findings::QuadraticChaos { mean_distance } = summary.findings else { unreachable!() };
    let ds: Vec<f64> = mean_distance.iter().map(|r| r.1).collect();
    let ok = ds.windows(2).all(|w| w[1] < w[0]);
    report(2, ok, &format!("mean pairwise BL by N {mean_distance:.5?}"), start.elapsed(), secs(600));
}

#[test]
fn criterion_03_two_time_scale_reduction() {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(ExperimentId::QuadraticTwoTime);
    assert_eq!(cfg.seeds.len(), 3);
    let Params::QuadraticTwoTime(p) = &cfg.params else { unreachable!() };
    assert_eq!(p.run.n, 10_000);
    assert_eq!(p.inner_steps, vec![20, 50, 100]);
    let summary = run_experiment(&cfg, None).unwrap();
    let Findings::QuadraticTwoTime { mean_distance } = summary.findings else { unreachable!() };
    let ds: Vec<f64> = mean_distance.iter().map(|r| r.1).collect();
    let ok = ds.windows(2).all(|w| w[1] < w[0]);
    report(3, ok, &format!("mean BL to the reduced run by inner steps {mean_distance:.5?}"), start.elapsed(), secs(600));
}

#[test]
fn criterion_04_penalization_rate() {
    let start = Instant::now();
    let h0: f64 = 0.5;
    let h = [h0, 0.0];
    // Gibbs law N((h0, h0), I / (2 beta)) and F = 1.2 - |theta|^2
    let oracle = |beta: f64| 1.2 - 2.0 * h0 * h0 / (1.0 + 1.0 / beta) - (1.0 + 1.0 / beta).ln();
    let f_star = 1.2 - 2.0 * h0 * h0;
    let betas = [1.0, 4.0, 16.0, 64.0, 256.0];
    let mut errs = Vec::new();
    let mut agree = true;
    let mut worst_z: f64 = 0.0;
    for (i, &beta) in betas.iter().enumerate() {
        let closed = fbar_gibbs_beta(&Quadratic, &h, beta).unwrap();
        assert!((closed - oracle(beta)).abs() < 1e-12, "closed form at beta {beta}");
        let mc = fbar_gibbs_beta_monte_carlo(&Quadratic, &h, beta, 1_000_000, &mut stream(40, i as u64, 0)).unwrap();
        let z = (closed - mc.value).abs() / mc.std_error;
        worst_z = worst_z.max(z);
        agree &= z <= 3.0;
        errs.push((closed - f_star).abs());
    }
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let rate = betas.iter().zip(&errs).all(|(b, e)| *e <= errs[0] / b.sqrt() * 1.05);
    report(
        4,
        decreasing && rate && agree,
        &format!("err {errs:.5?}, worst MC gap {worst_z:.2} standard errors"),
        start.elapsed(),
        secs(60),
    );
}

fn criterion5_setup() -> (DensityGrid, PdeConfig) {
    let grid = DensityGrid::uniform(vec![-3.0], vec![3.0], vec![600]).unwrap();
    let cfg = PdeConfig::new(|h: &[f64]| -(h[0] - 0.3).powi(2))
        .alpha(100.0)
        .sigma(0.05)
        .dt(0.05);
    (grid, cfg)
}

#[test]
fn criterion_05_mean_decay() {
    let start = Instant::now();
    let (rho0, cfg) = criterion5_setup();
    let m0 = grid_mean(&rho0);
    let e0 = (m0 - 0.3).powi(2);
    let mut g = rho0.clone();
    let mut worst_margin = f64::INFINITY;
    let mut worst_drift: f64 = 0.0;
    for s in 1..=200 {
        let next = twoscale::meanfield::step(&g, &cfg).unwrap();
        let drift = (next.masses().iter().sum::<f64>() - g.masses().iter().sum::<f64>()).abs();
        worst_drift = worst_drift.max(drift);
        g = next;
        let t = s as f64 * cfg.dt;
        let margin = (-t).exp() * e0 + 0.01 - (grid_mean(&g) - 0.3).powi(2);
        worst_margin = f64::min(worst_margin, margin);
    }
    let ok = worst_margin >= 0.0 && worst_drift <= 1e-10;
    report(
        5,
        ok,
        &format!("worst bound margin {worst_margin:.3e}, worst mass drift per step {worst_drift:.2e}"),
        start.elapsed(),
        secs(60),
    );
}

#[test]
fn criterion_06_replicator_consistency() {
    let start = Instant::now();
    let grid = DensityGrid::from_density(vec![-3.0], vec![3.0], vec![600], |h: &[f64]| {
        (-0.5 * (h[0] / 0.5).powi(2)).exp()
    })
    .unwrap();
    let cfg = PdeConfig::new(|h: &[f64]| -(h[0] - 0.5).powi(2)).sigma(0.5);
    let residuals: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&nu| replicator_consistency(&grid, &cfg, nu).unwrap())
        .collect();
    let ratios = halving_ratios(&residuals);
    let ok = ratios.iter().all(|r| (1.5..=3.0).contains(r));
    report(6, ok, &format!("residuals {residuals:.5?}, ratios {ratios:.3?}"), start.elapsed(), secs(10));
}

#[test]
fn criterion_07_mean_evolution_identity() {
    let start = Instant::now();
    let (rho0, _) = criterion5_setup();
    let defects: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let cfg = PdeConfig::new(|h: &[f64]| -(h[0] - 0.3).powi(2))
                .alpha(2.0)
                .sigma(0.05)
                .dt(dt);
            mean_evolution_defect(&rho0, &cfg, 1.0).unwrap()
        })
        .collect();
    let ratios = halving_ratios(&defects);
    let ok = ratios.iter().all(|r| (1.5..=3.0).contains(r));
    report(7, ok, &format!("defects {defects:.5?}, ratios {ratios:.3?}"), start.elapsed(), secs(10));
}

#[test]
fn criterion_08_equilibrium_relations() {
    let start = Instant::now();
    let (rho0, cfg) = criterion5_setup();
    let (rho, records) = evolve(&rho0, &cfg, 10_000, 1000).unwrap();
    let (r_mean, r_energy) = equilibrium_residual(&rho, &cfg).unwrap();
    // independent check of the mean relation: m(G[rho]) = m(rho)
    let selected = apply_selection(&rho, &|h: &[f64]| 100.0 * -(h[0] - 0.3).powi(2), 1.0).unwrap();
    let direct = (grid_mean(&selected) - grid_mean(&rho)).abs();
    let cw = 6.0 / 600.0;
    let drift = records.iter().map(|r| r.mass_drift).fold(0.0, f64::max);
    let edge = rho.boundary_mass();
    let ok = r_mean <= 5.0 * cw && r_energy <= 5.0 * cw && direct <= 5.0 * cw && drift <= 1e-10 && edge < 1e-8;
    report(
        8,
        ok,
        &format!(
            "residuals mean {r_mean:.2e}, second moment {r_energy:.2e}, direct mean {direct:.2e}, \
             boundary mass {edge:.2e}, cell width {cw}"
        ),
        start.elapsed(),
        secs(60),
    );
}

/// Nearest-minimum index and distance, from the known minima positions.
fn nearest_minimum(p: &[f64]) -> (usize, f64) {
    const MINIMA: [[f64; 2]; 4] = [
        [3.0, 2.0],
        [-2.805118, 3.131312],
        [-3.779310, -3.283186],
        [3.584428, -1.848126],
    ];
    MINIMA
        .iter()
        .enumerate()
        .map(|(i, m)| (i, ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

#[test]
fn criterion_09_himmelblau_basins() {
    let start = Instant::now();
    let mut rows = Vec::new();
    for seed in 0..3 {
        let cfg = RunConfig {
            n: 10_000,
            generations: 500,
            inner_steps: 50,
            snapshot_every: 0,
            seed,
            ..RunConfig::himmelblau()
        };
        assert_eq!(cfg.init.theta, SearchBox::cube(2, -0.5, 0.5).unwrap());
        let out = run(&cfg).unwrap();
        let mut per_basin = [0usize; 4];
        let mut near = 0;
        for a in &out.population {
            let (i, d) = nearest_minimum(&a.theta);
            if d <= 0.7 {
                near += 1;
                per_basin[i] += 1;
            }
        }
        let n = out.population.len() as f64;
        rows.push((near as f64 / n, *per_basin.iter().max().unwrap() as f64 / n));
    }
    let passing = rows.iter().filter(|(near, basin)| *near >= 0.9 && *basin >= 0.7).count();
    report(
        9,
        passing >= 2,
        &format!("(near, single basin) per seed {rows:.4?}, {passing} of 3 seeds pass"),
        start.elapsed(),
        secs(300),
    );
}

#[test]
fn criterion_10_cartpole_pbt() {
    let start = Instant::now();
    let params = CartpoleParams {
        cartpole: CartpoleConfig {
            n: 20,
            reward_cap: 100,
            steps_per_generation: 300,
            generations: 40,
            // the first generation at the threshold is all the criterion needs
            stop_at_reward: Some(95.0),
            ..CartpoleConfig::default()
        },
        windows: vec![5, 1],
        reward_threshold: 95.0,
        min_passing_seeds: 3,
        compare_windows: true,
    };
    let cfg = ExperimentConfig {
        experiment: ExperimentId::Cartpole,
        out_dir: None,
        seeds: vec![0, 1, 2, 3, 4],
        params: Params::Cartpole(params),
    };
    let summary = run_experiment(&cfg, None).unwrap();
    let Findings::Cartpole { first_reaching } = summary.findings else { unreachable!() };
    let median = |xs: &[Option<usize>]| {
        let mut v: Vec<usize> = xs.iter().map(|x| x.unwrap_or(41)).collect();
        v.sort_unstable();
        v[v.len() / 2]
    };
    let m5 = &first_reaching[0].1;
    let m1 = &first_reaching[1].1;
    let reached = m5.iter().filter(|x| x.is_some()).count();
    let ok = reached >= 3 && median(m5) <= median(m1);
    report(
        10,
        ok,
        &format!(
            "m=5 reaches 95 in {reached} of 5 seeds at {m5:?} (median {}), m=1 at {m1:?} (median {})",
            median(m5),
            median(m1)
        ),
        start.elapsed(),
        secs(900),
    );
}

#[test]
fn criterion_11_invariants() {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let mut rng = stream(11, 0, 0);

    // softmax weights: normalized, shift invariant, monotone
    for _ in 0..50 {
        let f: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rule = SelectionRule::Softmax { alpha: 7.0 };
        let w = selection_weights(&f, &rule).unwrap();
        let shifted: Vec<f64> = f.iter().map(|x| x + 3.0).collect();
        let ws = selection_weights(&shifted, &rule).unwrap();
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            failures.push("softmax weights do not sum to one".into());
        }
        if w.iter().zip(&ws).any(|(a, b)| (a - b).abs() > 1e-12) {
            failures.push("softmax weights not shift invariant".into());
        }
        let z: f64 = f.iter().map(|x| (7.0 * x).exp()).sum();
        if f.iter().zip(&w).any(|(x, wi)| ((7.0 * x).exp() / z - wi).abs() > 1e-12) {
            failures.push("softmax weights differ from exp(alpha F) / Z".into());
        }
    }

    // mass conservation of the grid operators
    for _ in 0..20 {
        let masses: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let g = DensityGrid::from_masses(vec![-1.0], vec![1.0], vec![200], masses).unwrap();
        let c = rng.random_range(-1.0..1.0);
        let s = apply_selection(&g, &|h: &[f64]| -(h[0] - c).powi(2), 30.0).unwrap();
        let m = apply_mutation(&s, 0.1).unwrap();
        for x in [&s, &m] {
            if (x.masses().iter().sum::<f64>() - 1.0).abs() > 1e-10 || x.masses().iter().any(|v| *v < 0.0) {
                failures.push("grid operator lost mass or went negative".into());
            }
        }
    }

    // TD-loss gradient vs central finite differences, in f64
    let net: Mlp<f64> = Mlp::new(&[4, 8, 8, 2], &mut rng).unwrap();
    let target: Mlp<f64> = Mlp::new(&[4, 8, 8, 2], &mut rng).unwrap();
    let transitions: Vec<Transition> = (0..3)
        .map(|i| Transition {
            s: [0.1 * i as f32, -0.2, 0.05, 0.3],
            a: (i % 2) as u8,
            r: 1.0,
            s2: [0.12, -0.1 * i as f32, 0.04, 0.2],
            terminal: i == 2,
        })
        .collect();
    let batch = Batch::<f32>::from_transitions(&transitions).to_f64();
    let mut scratch = Scratch::default();
    td_loss_grad(&net, &target, &batch, 0.99, &mut scratch).unwrap();
    let grad = scratch.grad.clone();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..net.n_params() {
        let mut plus = net.clone();
        plus.params_mut()[k] += eps;
        let mut minus = net.clone();
        minus.params_mut()[k] -= eps;
        let lp = td_loss_grad(&plus, &target, &batch, 0.99, &mut Scratch::default()).unwrap();
        let lm = td_loss_grad(&minus, &target, &batch, 0.99, &mut Scratch::default()).unwrap();
        let fd = (lp - lm) / (2.0 * eps);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3));
    }
    if worst > 1e-4 {
        failures.push(format!("TD gradient relative error {worst:.2e}"));
    }

    // BL <= min(W1, 1) in 1D
    for _ in 0..20 {
        let a: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..3.0)).collect();
        let (ma, mb) = (EmpiricalMeasure::from_1d(&a).unwrap(), EmpiricalMeasure::from_1d(&b).unwrap());
        let bl = bl_distance(&ma, &mb, 2048).unwrap();
        if bl > w1_sorted_1d(&ma, &mb).unwrap().min(1.0) + 1e-12 {
            failures.push("BL exceeds min(W1, 1)".into());
        }
    }

    // projection idempotence
    let bx = SearchBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
    for _ in 0..100 {
        let h = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let p = project(&h, &bx).unwrap();
        if !bx.contains(&p) || project(&p, &bx).unwrap() != p {
            failures.push("projection not idempotent".into());
        }
    }

    // population size and box under every rule
    let cfg = RunConfig {
        n: 37,
        ..RunConfig::quadratic()
    };
    let mutation = MutationConfig {
        sigma: 0.5,
        ..cfg.mutation.clone()
    };
    for rule in [
        SelectionRule::Softmax { alpha: 5.0 },
        SelectionRule::Truncation { fraction: 0.2 },
        SelectionRule::WorstReplacement { alpha: 5.0 },
    ] {
        let mut pop = init_population(&cfg);
        for gen in 0..20 {
            let f: Vec<f64> = pop.iter().map(|a| -a.h[0].powi(2)).collect();
            genetic_update(&mut pop, &f, &rule, &mutation, 1.0, &mut stream(5, 0, gen)).unwrap();
        }
        let ids_ok = pop.iter().enumerate().all(|(i, a)| a.id == i);
        if pop.len() != 37 || !ids_ok || pop.iter().any(|a| !bx.contains(&a.h)) {
            failures.push(format!("{rule:?} changed the population size or left the box"));
        }
    }

    report(
        11,
        failures.is_empty(),
        &if failures.is_empty() {
            format!("softmax, mass, TD gradient (worst rel. error {worst:.1e}), BL <= W1, projection, population size")
        } else {
            failures.join("; ")
        },
        start.elapsed(),
        secs(120),
    );
}
