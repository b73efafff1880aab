//! Grid solvers for the averaged hyperparameter dynamics
//! `d rho/dt = K_sigma * G[rho] - rho` and the replicator–mutator equation
//! `d rho/dt = rho (F - <F, rho>) + sigma^2/2 Laplace(rho)`.
//!
//! The state is a vector of cell masses on a regular grid over a box in one
//! or two dimensions. Every operator is mass-preserving by construction and
//! checks the drift before renormalizing.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{max_of, pairwise_sum};

/// Largest tolerated total-mass drift of a single operator application.
pub const MASS_TOLERANCE: f64 = 1e-10;
/// Negative masses above this are rounding noise and get clamped.
pub const NEGATIVE_TOLERANCE: f64 = 1e-14;
/// Gaussian kernels are truncated at this many standard deviations.
pub const KERNEL_CUTOFF: f64 = 6.0;
/// Largest supported number of cells per axis in two dimensions.
pub const MAX_CELLS_2D: usize = 512;

/// Probability masses on a regular grid (row-major, last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    masses: Vec<f64>,
}

impl DensityGrid {
    /// Uniform distribution over the box.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let n: usize = cells.iter().product();
        Self::from_masses(lower, upper, cells, vec![1.0 / n as f64; n])
    }

    /// Grid with the given masses, normalized to unit total.
    pub fn from_masses(
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        let d = cells.len();
        if d == 0 || d > 2 {
            return Err(invalid("cells", format!("grids are 1D or 2D, got {d} axes")));
        }
        if lower.len() != d || upper.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: lower.len().min(upper.len()),
            });
        }
        for k in 0..d {
            if !(lower[k] < upper[k]) {
                return Err(invalid("domain", format!("need lower < upper on axis {k}")));
            }
            if cells[k] == 0 {
                return Err(invalid("cells", "every axis needs at least one cell"));
            }
            if d == 2 && cells[k] > MAX_CELLS_2D {
                return Err(invalid("cells", format!("2D grids allow at most {MAX_CELLS_2D} cells per axis")));
            }
        }
        let n: usize = cells.iter().product();
        if masses.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: masses.len(),
            });
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(invalid("masses", "must be finite and nonnegative"));
        }
        let total = pairwise_sum(&masses);
        if !(total > 0.0) {
            return Err(Error::Empty("grid has zero total mass"));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(Self {
            lower,
            upper,
            cells,
            masses,
        })
    }

    /// Masses proportional to `density` evaluated at cell centers.
    pub fn from_density(
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        density: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let probe = Self::uniform(lower.clone(), upper.clone(), cells.clone())?;
        let masses = (0..probe.len()).map(|i| density(&probe.center(i))).collect();
        Self::from_masses(lower, upper, cells, masses)
    }

    /// All mass in the cell containing `at`.
    pub fn point_mass(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>, at: &[f64]) -> Result<Self> {
        let mut g = Self::uniform(lower, upper, cells)?;
        let idx = g.locate(at)?;
        g.masses.iter_mut().for_each(|m| *m = 0.0);
        g.masses[idx] = 1.0;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    /// Smallest cell width over all axes.
    pub fn min_cell_width(&self) -> f64 {
        (0..self.dim()).map(|k| self.cell_width(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn axis_center(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.cell_width(axis)
    }

    fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [flat, 0]
        } else {
            [flat / self.cells[1], flat % self.cells[1]]
        }
    }

    /// Center of cell `flat`.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim()).map(|k| self.axis_center(k, idx[k])).collect()
    }

    /// Index of the cell containing `x` (points on the upper face belong to
    /// the last cell).
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut flat = 0;
        for k in 0..self.dim() {
            if !(self.lower[k] <= x[k] && x[k] <= self.upper[k]) {
                return Err(invalid("point", format!("{x:?} lies outside the grid")));
            }
            let i = (((x[k] - self.lower[k]) / self.cell_width(k)) as usize).min(self.cells[k] - 1);
            flat = flat * self.cells[k] + i;
        }
        Ok(flat)
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    /// Mass held by cells on the boundary of the box.
    pub fn boundary_mass(&self) -> f64 {
        let on_edge: Vec<f64> = (0..self.len())
            .filter(|&i| {
                let idx = self.multi_index(i);
                (0..self.dim()).any(|k| idx[k] == 0 || idx[k] + 1 == self.cells[k])
            })
            .map(|i| self.masses[i])
            .collect();
        pairwise_sum(&on_edge)
    }

    fn with_masses(&self, masses: Vec<f64>) -> Self {
        Self {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            cells: self.cells.clone(),
            masses,
        }
    }

    fn field(&self, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.center(i))).collect()
    }

    /// Writes `x0[,x1],mass` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let axes: Vec<String> = (0..self.dim()).map(|k| format!("h{k}")).collect();
        writeln!(w, "{},mass", axes.join(","))?;
        for i in 0..self.len() {
            let c: Vec<String> = self.center(i).iter().map(f64::to_string).collect();
            writeln!(w, "{},{}", c.join(","), self.masses[i])?;
        }
        Ok(())
    }
}

/// Clamp rounding-level negatives, check the drift, renormalize.
fn settle(grid: &DensityGrid, mut masses: Vec<f64>, what: &str) -> Result<DensityGrid> {
    let mut clamped = 0usize;
    for (i, m) in masses.iter_mut().enumerate() {
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("{what}: mass of cell {i}")));
        }
        if *m < 0.0 {
            if *m < -NEGATIVE_TOLERANCE {
                return Err(Error::NonFinite(format!("{what}: negative mass {m} in cell {i}")));
            }
            *m = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("{what}: clamped {clamped} rounding-level negative masses");
    }
    let total = pairwise_sum(&masses);
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::NonFinite(format!("{what}: total mass drifted to {total}")));
    }
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(grid.with_masses(masses))
}

fn is_flat(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// Reweight by `exp(alpha * F)`.
pub fn apply_selection(grid: &DensityGrid, fbar: &dyn Fn(&[f64]) -> f64, alpha: f64) -> Result<DensityGrid> {
    let values = grid.field(fbar);
    select_with_values(grid, &values, alpha)
}

fn select_with_values(grid: &DensityGrid, values: &[f64], alpha: f64) -> Result<DensityGrid> {
    if grid.masses.iter().all(|m| *m == 0.0) {
        return Err(Error::Empty("grid has zero total mass"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("fitness at cell {i}")));
    }
    if is_flat(values) {
        return Ok(grid.clone());
    }
    let scaled: Vec<f64> = values
        .iter()
        .zip(&grid.masses)
        .map(|(v, m)| if *m > 0.0 { alpha * v } else { f64::NEG_INFINITY })
        .collect();
    let mx = max_of(&scaled);
    let weighted: Vec<f64> = scaled
        .iter()
        .zip(&grid.masses)
        .map(|(s, m)| if *m > 0.0 { m * (s - mx).exp() } else { 0.0 })
        .collect();
    let z = pairwise_sum(&weighted);
    Ok(grid.with_masses(weighted.into_iter().map(|w| w / z).collect()))
}

/// Discrete Gaussian kernel along one axis, renormalized per source cell so
/// that no mass leaves the domain.
struct AxisKernel {
    weights: Vec<f64>,
    radius: usize,
    /// Per-source normalization (sum of the kernel over in-domain targets).
    norms: Vec<f64>,
}

impl AxisKernel {
    fn new(sigma: f64, width: f64, n: usize) -> Self {
        let radius = ((KERNEL_CUTOFF * sigma / width).floor() as usize).min(n.saturating_sub(1));
        let weights: Vec<f64> = (0..=radius)
            .map(|k| {
                let x = k as f64 * width / sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        let norms = (0..n)
            .map(|j| {
                let lo = j.saturating_sub(radius);
                let hi = (j + radius).min(n - 1);
                let ws: Vec<f64> = (lo..=hi).map(|t| weights[t.abs_diff(j)]).collect();
                pairwise_sum(&ws)
            })
            .collect();
        Self { weights, radius, norms }
    }

    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let n = src.len();
        dst.iter_mut().for_each(|x| *x = 0.0);
        for (j, &m) in src.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let s = m / self.norms[j];
            let lo = j.saturating_sub(self.radius);
            let hi = (j + self.radius).min(n - 1);
            for t in lo..=hi {
                dst[t] += s * self.weights[t.abs_diff(j)];
            }
        }
    }
}

/// Convolve with a Gaussian of standard deviation `sigma` (separable in 2D).
pub fn apply_mutation(grid: &DensityGrid, sigma: f64) -> Result<DensityGrid> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(grid.clone());
    }
    let mut masses = grid.masses.clone();
    match grid.dim() {
        1 => {
            let k = AxisKernel::new(sigma, grid.cell_width(0), grid.cells[0]);
            let src = masses.clone();
            k.apply(&src, &mut masses);
        }
        _ => {
            let (n0, n1) = (grid.cells[0], grid.cells[1]);
            let k1 = AxisKernel::new(sigma, grid.cell_width(1), n1);
            let mut buf = vec![0.0; n1];
            for row in masses.chunks_mut(n1) {
                k1.apply(row, &mut buf);
                row.copy_from_slice(&buf);
            }
            let k0 = AxisKernel::new(sigma, grid.cell_width(0), n0);
            let mut col = vec![0.0; n0];
            let mut out = vec![0.0; n0];
            for c in 0..n1 {
                for r in 0..n0 {
                    col[r] = masses[r * n1 + c];
                }
                k0.apply(&col, &mut out);
                for r in 0..n0 {
                    masses[r * n1 + c] = out[r];
                }
            }
        }
    }
    settle(grid, masses, "mutation")
}

/// Which evolution equation [`evolve`] integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SelectionMutation,
    ReplicatorMutator,
}

/// Effective-fitness field `h -> F(h)`.
pub type FitnessField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PdeConfig {
    pub dt: f64,
    pub sigma: f64,
    /// Selection pressure; every operator uses the field `alpha * fbar`.
    pub alpha: f64,
    pub fbar: FitnessField,
    pub scheme: Scheme,
    /// Slow-selection scaling parameter used by [`replicator_consistency`].
    pub nu: f64,
}

impl fmt::Debug for PdeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeConfig")
            .field("dt", &self.dt)
            .field("sigma", &self.sigma)
            .field("alpha", &self.alpha)
            .field("scheme", &self.scheme)
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

impl PdeConfig {
    pub fn new(fbar: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dt: 0.1,
            sigma: 0.0,
            alpha: 1.0,
            fbar: Arc::new(fbar),
            scheme: Scheme::SelectionMutation,
            nu: 0.1,
        }
    }

    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
    pub fn sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
    pub fn nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    fn fitness(&self) -> impl Fn(&[f64]) -> f64 + '_ {
        move |h| self.alpha * (self.fbar)(h)
    }

    /// Explicit diffusion number `sum_k sigma^2 dt / (2 dx_k^2)`; must be <= 1/2.
    pub fn diffusion_number(&self, grid: &DensityGrid) -> f64 {
        (0..grid.dim())
            .map(|k| self.sigma * self.sigma * self.dt / (2.0 * grid.cell_width(k).powi(2)))
            .sum()
    }
}

/// `K_sigma * G_{alpha F}[rho]`: the distribution right after a full jump.
pub fn jump(grid: &DensityGrid, cfg: &PdeConfig) -> Result<DensityGrid> {
    apply_mutation(&apply_selection(grid, &cfg.fitness(), 1.0)?, cfg.sigma)
}

/// Forward-Euler step `rho + dt (K * G[rho] - rho)`, a convex combination
/// for `dt <= 1`.
pub fn step_averaged(grid: &DensityGrid, cfg: &PdeConfig) -> Result<DensityGrid> {
    if !(0.0..=1.0).contains(&cfg.dt) {
        return Err(Error::Unstable(format!("averaged step needs 0 <= dt <= 1, got {}", cfg.dt)));
    }
    if cfg.dt == 0.0 {
        return Ok(grid.clone());
    }
    let jumped = jump(grid, cfg)?;
    if cfg.dt == 1.0 || jumped == *grid {
        return Ok(jumped);
    }
    let masses = grid
        .masses
        .iter()
        .zip(&jumped.masses)
        .map(|(m, j)| m + cfg.dt * (j - m))
        .collect();
    settle(grid, masses, "averaged step")
}

/// Zero-flux five-point (or three-point) Laplacian of the masses.
fn laplacian(grid: &DensityGrid) -> Vec<f64> {
    let m = &grid.masses;
    let mut out = vec![0.0; m.len()];
    match grid.dim() {
        1 => {
            let n = m.len();
            let inv = 1.0 / grid.cell_width(0).powi(2);
            for j in 0..n {
                let left = if j == 0 { m[0] } else { m[j - 1] };
                let right = if j + 1 == n { m[n - 1] } else { m[j + 1] };
                out[j] = (left - 2.0 * m[j] + right) * inv;
            }
        }
        _ => {
            let (n0, n1) = (grid.cells[0], grid.cells[1]);
            let inv0 = 1.0 / grid.cell_width(0).powi(2);
            let inv1 = 1.0 / grid.cell_width(1).powi(2);
            for r in 0..n0 {
                for c in 0..n1 {
                    let i = r * n1 + c;
                    let up = if r == 0 { m[i] } else { m[i - n1] };
                    let down = if r + 1 == n0 { m[i] } else { m[i + n1] };
                    let left = if c == 0 { m[i] } else { m[i - 1] };
                    let right = if c + 1 == n1 { m[i] } else { m[i + 1] };
                    out[i] = (up - 2.0 * m[i] + down) * inv0 + (left - 2.0 * m[i] + right) * inv1;
                }
            }
        }
    }
    out
}

/// `rho (F - <F, rho>) + sigma^2/2 Laplace(rho)` on the grid.
fn replicator_rhs(grid: &DensityGrid, values: &[f64], sigma: f64) -> Vec<f64> {
    // centering on values[0] keeps a flat field exactly reaction-free
    let f0 = values[0];
    let centered: Vec<f64> = values.iter().map(|v| v - f0).collect();
    let weighted: Vec<f64> = centered.iter().zip(&grid.masses).map(|(v, m)| v * m).collect();
    let mean = pairwise_sum(&weighted) / grid.total_mass();
    let lap = if sigma == 0.0 { vec![0.0; grid.len()] } else { laplacian(grid) };
    let diff = 0.5 * sigma * sigma;
    grid.masses
        .iter()
        .zip(&centered)
        .zip(&lap)
        .map(|((m, v), l)| m * (v - mean) + diff * l)
        .collect()
}

/// Forward-Euler step of the replicator–mutator equation with reflecting
/// boundaries.
pub fn step_replicator(grid: &DensityGrid, cfg: &PdeConfig) -> Result<DensityGrid> {
    let number = cfg.diffusion_number(grid);
    if number > 0.5 {
        return Err(Error::Unstable(format!(
            "sigma^2 dt / (2 dx^2) = {number} exceeds 1/2"
        )));
    }
    let values = grid.field(&cfg.fitness());
    let rhs = replicator_rhs(grid, &values, cfg.sigma);
    let masses = grid.masses.iter().zip(&rhs).map(|(m, r)| m + cfg.dt * r).collect();
    settle(grid, masses, "replicator step")
}

/// One step of whichever scheme `cfg` selects.
pub fn step(grid: &DensityGrid, cfg: &PdeConfig) -> Result<DensityGrid> {
    match cfg.scheme {
        Scheme::SelectionMutation => step_averaged(grid, cfg),
        Scheme::ReplicatorMutator => step_replicator(grid, cfg),
    }
}

/// Mean vector.
pub fn mean(grid: &DensityGrid) -> Vec<f64> {
    (0..grid.dim())
        .map(|k| {
            let xs: Vec<f64> = (0..grid.len())
                .map(|i| grid.masses[i] * grid.center(i)[k])
                .collect();
            pairwise_sum(&xs)
        })
        .collect()
}

/// Factor-free second moment `int |h|^2 d rho`.
pub fn second_moment(grid: &DensityGrid) -> f64 {
    let xs: Vec<f64> = (0..grid.len())
        .map(|i| grid.masses[i] * grid.center(i).iter().map(|x| x * x).sum::<f64>())
        .collect();
    pairwise_sum(&xs)
}

/// Mean and energy `1/2 int |h|^2 d rho`.
pub fn moments(grid: &DensityGrid) -> (Vec<f64>, f64) {
    (mean(grid), 0.5 * second_moment(grid))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Residuals of the stationarity relations
/// `m(rho) = m(G[rho])` and `M2(rho) = M2(G[rho]) + d sigma^2`.
///
/// The energy relation uses the factor-free second moment `M2`; with the
/// halved energy of [`moments`] the mutation term would read `d sigma^2 / 2`.
pub fn equilibrium_residual(grid: &DensityGrid, cfg: &PdeConfig) -> Result<(f64, f64)> {
    let selected = apply_selection(grid, &cfg.fitness(), 1.0)?;
    let r_mean = distance(&mean(grid), &mean(&selected));
    let d = grid.dim() as f64;
    let r_energy = (second_moment(grid) - second_moment(&selected) - d * cfg.sigma * cfg.sigma).abs();
    Ok((r_mean, r_energy))
}

/// L1 distance between `(1/nu)` times the rescaled jump operator (pressure
/// `nu F`, mutation `sqrt(nu) sigma`) and the replicator–mutator right-hand
/// side. Decays like `O(nu)`.
pub fn replicator_consistency(grid: &DensityGrid, cfg: &PdeConfig, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(invalid("nu", format!("must be > 0, got {nu}")));
    }
    let values = grid.field(&cfg.fitness());
    let selected = select_with_values(grid, &values, nu)?;
    let jumped = apply_mutation(&selected, nu.sqrt() * cfg.sigma)?;
    let rhs = replicator_rhs(grid, &values, cfg.sigma);
    let diffs: Vec<f64> = jumped
        .masses
        .iter()
        .zip(&grid.masses)
        .zip(&rhs)
        .map(|((j, m), r)| ((j - m) / nu - r).abs())
        .collect();
    Ok(pairwise_sum(&diffs))
}

/// Moment snapshot along a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub step: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub energy: f64,
    pub mass_drift: f64,
}

/// Integrates `steps` steps, recording moments every `record_every` steps
/// (and at both ends).
pub fn evolve(
    grid: &DensityGrid,
    cfg: &PdeConfig,
    steps: usize,
    record_every: usize,
) -> Result<(DensityGrid, Vec<MomentRecord>)> {
    let snapshot = |g: &DensityGrid, step: usize, drift: f64| {
        let (mean, energy) = moments(g);
        MomentRecord {
            step,
            time: step as f64 * cfg.dt,
            mean,
            energy,
            mass_drift: drift,
        }
    };
    let mut g = grid.clone();
    let mut records = vec![snapshot(&g, 0, 0.0)];
    for s in 1..=steps {
        let next = step(&g, cfg)?;
        let drift = (next.total_mass() - g.total_mass()).abs();
        g = next;
        if s == steps || (record_every > 0 && s % record_every == 0) {
            records.push(snapshot(&g, s, drift));
        }
    }
    Ok((g, records))
}

/// Backward-difference defect of the mean-evolution identity at time
/// `t_end`: `|(m(rho_N) - m(rho_{N-1}))/dt - (m(G[rho_N]) - m(rho_N))|`.
pub fn mean_evolution_defect(grid: &DensityGrid, cfg: &PdeConfig, t_end: f64) -> Result<f64> {
    let steps = (t_end / cfg.dt).round() as usize;
    if steps == 0 {
        return Err(invalid("t_end", "must cover at least one step"));
    }
    let mut prev = grid.clone();
    for _ in 0..steps - 1 {
        prev = step_averaged(&prev, cfg)?;
    }
    let last = step_averaged(&prev, cfg)?;
    let m_prev = mean(&prev);
    let m_last = mean(&last);
    let m_sel = mean(&apply_selection(&last, &cfg.fitness(), 1.0)?);
    let fd: Vec<f64> = m_last.iter().zip(&m_prev).map(|(a, b)| (a - b) / cfg.dt).collect();
    let rhs: Vec<f64> = m_sel.iter().zip(&m_last).map(|(a, b)| a - b).collect();
    Ok(distance(&fd, &rhs))
}

/// Writes `step,time,mean_h0..,energy,mass_drift` rows.
pub fn write_moments_csv<W: Write>(mut w: W, records: &[MomentRecord]) -> Result<()> {
    let d = records.first().map_or(0, |r| r.mean.len());
    let means: Vec<String> = (0..d).map(|k| format!("mean_h{k}")).collect();
    writeln!(w, "step,time,{},energy,mass_drift", means.join(","))?;
    for r in records {
        let m: Vec<String> = r.mean.iter().map(f64::to_string).collect();
        writeln!(w, "{},{},{},{},{}", r.step, r.time, m.join(","), r.energy, r.mass_drift)?;
    }
    Ok(())
}
