//! Distances between empirical measures and histogramming.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::meanfield::DensityGrid;
use crate::rng::StreamRng;

/// Default cap on the assignment size for [`bl_distance`].
pub const DEFAULT_MAX_N: usize = 2048;

/// Finite point cloud with probability weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// Row-major `len x dim`.
    points: Vec<f64>,
    /// `None` means equal weights.
    weights: Option<Vec<f64>>,
}

impl EmpiricalMeasure {
    /// Equal-weight measure on `points`.
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("empirical measure"))?.len();
        if dim == 0 {
            return Err(invalid("points", "zero-dimensional points"));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Self::check_finite(&flat)?;
        Ok(Self {
            dim,
            points: flat,
            weights: None,
        })
    }

    /// Equal-weight measure on real numbers.
    pub fn from_1d(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("empirical measure"));
        }
        Self::check_finite(xs)?;
        Ok(Self {
            dim: 1,
            points: xs.to_vec(),
            weights: None,
        })
    }

    /// Weighted measure; weights must be nonnegative and sum to one (up to
    /// 1e-9, after which they are renormalized).
    pub fn weighted(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(points)?;
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("weights", format!("sum to {total}, expected 1")));
        }
        m.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(m)
    }

    /// Cell centers of a grid weighted by cell masses.
    pub fn from_grid(grid: &DensityGrid) -> Result<Self> {
        let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.center(i)).collect();
        Self::weighted(&points, grid.masses().to_vec())
    }

    fn check_finite(xs: &[f64]) -> Result<()> {
        match xs.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("sample coordinate {i}"))),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    /// One coordinate as a 1D measure with the same weights.
    pub fn marginal(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim {
            return Err(invalid("axis", format!("{axis} out of range for dimension {}", self.dim)));
        }
        Ok(Self {
            dim: 1,
            points: (0..self.len()).map(|i| self.point(i)[axis]).collect(),
            weights: self.weights.clone(),
        })
    }

    /// `n` distinct atoms chosen uniformly (equal-weight measures only).
    /// Returns a clone when `n >= len`.
    pub fn subsample(&self, n: usize, rng: &mut StreamRng) -> Result<Self> {
        if !self.is_uniform() {
            return Err(invalid("measure", "subsampling needs equal weights"));
        }
        if n >= self.len() {
            return Ok(self.clone());
        }
        if n == 0 {
            return Err(Error::Empty("subsample"));
        }
        let mut idx = sample(rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let mut points = Vec::with_capacity(n * self.dim);
        for i in idx {
            points.extend_from_slice(self.point(i));
        }
        Ok(Self {
            dim: self.dim,
            points,
            weights: None,
        })
    }

    fn sorted_atoms(&self) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = (0..self.len()).map(|i| (self.points[i], self.weight(i))).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }
}

/// Exact 1D Wasserstein-1 distance by integrating the difference of the
/// quantile functions.
pub fn w1_sorted_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim != 1 || b.dim != 1 {
        return Err(invalid("measure", "w1_sorted_1d needs one-dimensional measures"));
    }
    if a.is_uniform() && b.is_uniform() && a.len() == b.len() {
        let mut xs = a.points.clone();
        let mut ys = b.points.clone();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let total: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / xs.len() as f64);
    }
    let (xa, xb) = (a.sorted_atoms(), b.sorted_atoms());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xa[0].1, xb[0].1);
    let mut total = 0.0;
    loop {
        let step = ra.min(rb);
        total += step * (xa[i].0 - xb[j].0).abs();
        ra -= step;
        rb -= step;
        // leftover weight below rounding noise is dropped with the atom
        if ra <= 1e-15 {
            i += 1;
            if i == xa.len() {
                break;
            }
            ra += xa[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j == xb.len() {
                break;
            }
            rb += xb[j].1;
        }
    }
    Ok(total)
}

fn truncated_cost(x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    d2.sqrt().min(1.0)
}

/// Bounded-Lipschitz distance between two equal-size, equal-weight samples:
/// the optimal assignment under the truncated cost `min(|x - y|, 1)`.
pub fn bl_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure, max_n: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(invalid("measure", "bl_distance needs equal-weight samples"));
    }
    if a.len() != b.len() {
        return Err(invalid(
            "measure",
            format!("sample sizes differ ({} vs {}); subsample to a common size", a.len(), b.len()),
        ));
    }
    let n = a.len();
    if n > max_n {
        return Err(Error::TooLarge { size: n, max: max_n });
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let x = a.point(i);
        for j in 0..n {
            cost[i * n + j] = truncated_cost(x, b.point(j));
        }
    }
    let assignment = hungarian(&cost, n);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(total / n as f64)
}

/// Subsamples both measures to at most `n` atoms with a fixed stream, then
/// calls [`bl_distance`].
pub fn bl_distance_subsampled(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    n: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let n = n.min(a.len()).min(b.len());
    let a = a.subsample(n, rng)?;
    let b = b.subsample(n, rng)?;
    bl_distance(&a, &b, n.max(1))
}

/// Minimum-cost perfect matching on a dense square matrix (shortest
/// augmenting paths with potentials). Returns the column assigned to each row.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based rows/columns; column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let ui = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - ui - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Normalized histogram on `[lo, hi]` with `bins` equal cells. Samples
/// outside the range are counted into the nearest boundary bin.
pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<DensityGrid> {
    if samples.is_empty() {
        return Err(Error::Empty("histogram samples"));
    }
    if bins == 0 {
        return Err(invalid("bins", "must be >= 1"));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(invalid("range", format!("need lo < hi, got ({lo}, {hi})")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut outside = 0usize;
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::NonFinite("histogram sample".into()));
        }
        if x < lo || x > hi {
            outside += 1;
        }
        let k = ((x - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[k] += 1;
    }
    if outside > 0 {
        log::warn!("histogram: {outside} samples outside [{lo}, {hi}] counted into boundary bins");
    }
    let n = samples.len() as f64;
    DensityGrid::from_masses(
        vec![lo],
        vec![hi],
        vec![bins],
        counts.into_iter().map(|c| c as f64 / n).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_1d(xs).unwrap()
    }

    /// Exhaustive minimum over all permutations.
    fn brute_force(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
        fn rec(k: usize, perm: &mut Vec<usize>, a: &EmpiricalMeasure, b: &EmpiricalMeasure, best: &mut f64) {
            let n = perm.len();
            if k == n {
                let c: f64 = (0..n)
                    .map(|i| {
                        let d: f64 = a.point(i).iter().zip(b.point(perm[i])).map(|(x, y)| (x - y).powi(2)).sum();
                        d.sqrt().min(1.0)
                    })
                    .sum();
                *best = best.min(c / n as f64);
                return;
            }
            for i in k..n {
                perm.swap(k, i);
                rec(k + 1, perm, a, b, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..a.len()).collect();
        let mut best = f64::INFINITY;
        rec(0, &mut perm, a, b, &mut best);
        best
    }

    #[test]
    fn w1_examples() {
        assert_eq!(w1_sorted_1d(&m(&[0.3, -1.0]), &m(&[-1.0, 0.3])).unwrap(), 0.0);
        assert_eq!(w1_sorted_1d(&m(&[0.0]), &m(&[0.5])).unwrap(), 0.5);
        assert_eq!(w1_sorted_1d(&m(&[0.0, 1.0]), &m(&[0.5, 1.5])).unwrap(), 0.5);
        let two = EmpiricalMeasure::new(&[vec![0.0, 0.0]]).unwrap();
        assert!(w1_sorted_1d(&two, &two).is_err());
    }

    #[test]
    fn w1_weighted_matches_expanded() {
        // {0 (1/4), 1 (3/4)} vs equal-weight {0.5, 2}
        let a = EmpiricalMeasure::weighted(&[vec![0.0], vec![1.0]], vec![0.25, 0.75]).unwrap();
        let b = m(&[0.5, 2.0]);
        let expanded = w1_sorted_1d(&m(&[0.0, 1.0, 1.0, 1.0]), &m(&[0.5, 0.5, 2.0, 2.0])).unwrap();
        assert!((w1_sorted_1d(&a, &b).unwrap() - expanded).abs() < 1e-15);
        assert!((expanded - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bl_examples() {
        assert_eq!(bl_distance(&m(&[0.0]), &m(&[3.0]), DEFAULT_MAX_N).unwrap(), 1.0);
        assert_eq!(bl_distance(&m(&[0.2, 0.7, 0.2]), &m(&[0.7, 0.2, 0.2]), DEFAULT_MAX_N).unwrap(), 0.0);
        let near = bl_distance(&m(&[0.0, 10.0]), &m(&[0.4, 10.4]), DEFAULT_MAX_N).unwrap();
        assert!((near - 0.4).abs() < 1e-15);
        assert!((w1_sorted_1d(&m(&[0.0, 10.0]), &m(&[0.4, 10.4])).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(bl_distance(&m(&[0.0, 0.1]), &m(&[5.0, 5.1]), DEFAULT_MAX_N).unwrap(), 1.0);
        assert_eq!(w1_sorted_1d(&m(&[0.0, 0.1]), &m(&[5.0, 5.1])).unwrap(), 5.0);
    }

    #[test]
    fn truncated_cost_is_not_sorted_pairing() {
        // sorted pairing costs (1 + 1)/2; crossing pays 0 for one pair
        let a = m(&[0.0, 1.0]);
        let b = m(&[1.0, 5.0]);
        assert_eq!(bl_distance(&a, &b, 8).unwrap(), 0.5);
        assert_eq!(brute_force(&a, &b), 0.5);
    }

    #[test]
    fn bl_errors() {
        assert!(matches!(bl_distance(&m(&[0.0, 1.0]), &m(&[0.0]), 8), Err(Error::InvalidParameter { .. })));
        assert!(matches!(bl_distance(&m(&[0.0; 5]), &m(&[1.0; 5]), 4), Err(Error::TooLarge { size: 5, max: 4 })));
        let w = EmpiricalMeasure::weighted(&[vec![0.0]], vec![1.0]).unwrap();
        assert!(bl_distance(&w, &w, 8).is_err());
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = stream(5, 0, 0);
        for trial in 0..200 {
            let n = 1 + trial % 7;
            let dim = 1 + trial % 2;
            let draw = |rng: &mut StreamRng| -> Vec<Vec<f64>> {
                (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
            };
            let a = EmpiricalMeasure::new(&draw(&mut rng)).unwrap();
            let b = EmpiricalMeasure::new(&draw(&mut rng)).unwrap();
            let got = bl_distance(&a, &b, 8).unwrap();
            let want = brute_force(&a, &b);
            assert!((got - want).abs() < 1e-12, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn subsample_is_deterministic_and_distinct() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let a = m(&xs);
        let s1 = a.subsample(10, &mut stream(1, 2, 3)).unwrap();
        let s2 = a.subsample(10, &mut stream(1, 2, 3)).unwrap();
        assert_eq!(s1, s2);
        let mut v = s1.points.clone();
        v.dedup();
        assert_eq!(v.len(), 10);
        assert_eq!(a.subsample(500, &mut stream(1, 2, 3)).unwrap(), a);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.31, 0.32, 0.33], 10, (0.0, 1.0)).unwrap();
        assert_eq!(h.masses()[3], 1.0);
        let h = histogram(&[0.9], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.masses(), &[0.0, 0.0, 0.0, 1.0]);
        let h = histogram(&[-5.0, 5.0], 2, (0.0, 1.0)).unwrap();
        assert_eq!(h.masses(), &[0.5, 0.5]);
        assert!(histogram(&[], 3, (0.0, 1.0)).is_err());
        assert!(histogram(&[0.0], 0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn histogram_of_uniform_samples() {
        let mut rng = stream(11, 0, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let h = histogram(&xs, 10, (0.0, 1.0)).unwrap();
        for mass in h.masses() {
            assert!((mass - 0.1).abs() <= 1e-3, "{mass}");
        }
        assert_eq!(h.masses().iter().sum::<f64>(), 1.0);
    }

    fn arb_sample(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn bl_bounded_by_w1_and_one((a, b) in (1usize..40).prop_flat_map(|n| (arb_sample(n), arb_sample(n)))) {
            let (a, b) = (m(&a), m(&b));
            let bl = bl_distance(&a, &b, DEFAULT_MAX_N).unwrap();
            let w1 = w1_sorted_1d(&a, &b).unwrap();
            prop_assert!(bl <= w1.min(1.0) + 1e-12);
        }

        #[test]
        fn distances_are_symmetric((a, b) in (1usize..30).prop_flat_map(|n| (arb_sample(n), arb_sample(n)))) {
            let (a, b) = (m(&a), m(&b));
            prop_assert!((bl_distance(&a, &b, 64).unwrap() - bl_distance(&b, &a, 64).unwrap()).abs() < 1e-12);
            prop_assert!((w1_sorted_1d(&a, &b).unwrap() - w1_sorted_1d(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(bl_distance(&a, &a, 64).unwrap(), 0.0);
        }

        #[test]
        fn triangle_inequality((a, b, c) in (1usize..25).prop_flat_map(|n| (arb_sample(n), arb_sample(n), arb_sample(n)))) {
            let (a, b, c) = (m(&a), m(&b), m(&c));
            let ab = bl_distance(&a, &b, 64).unwrap();
            let bc = bl_distance(&b, &c, 64).unwrap();
            let ac = bl_distance(&a, &c, 64).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            let wab = w1_sorted_1d(&a, &b).unwrap();
            let wbc = w1_sorted_1d(&b, &c).unwrap();
            prop_assert!(w1_sorted_1d(&a, &c).unwrap() <= wab + wbc + 1e-12);
        }
    }
}
