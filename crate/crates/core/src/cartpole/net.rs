//! Fully connected ReLU network with hand-written backpropagation, and Adam.
//!
//! Generic over the float type so gradients can be checked in `f64` while
//! agents train in `f32`.

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::StreamRng;

pub trait Scalar: Float + Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

/// `y += a * x`.
#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

/// Multilayer perceptron; ReLU on hidden layers, identity on the output.
///
/// All parameters live in one flat vector. Layer `l` stores its weights
/// input-major (`w[i * n_out + o]`) followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    batch: usize,
    /// `acts[l]` is the input of layer `l`; the last entry is the output.
    acts: Vec<Vec<T>>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Self {
            batch: 0,
            acts: Vec::new(),
        }
    }
}

impl<T> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl<T: Scalar> Mlp<T> {
    /// Layer widths `sizes[0] -> ... -> sizes[last]`, weights and biases
    /// uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(sizes: &[usize], rng: &mut StreamRng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("sizes", "need at least two nonzero layer widths"));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(T::from(rng.random_range(-bound..bound)).expect("representable"));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    fn offsets(&self, layer: usize) -> (usize, usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let w_len = self.sizes[layer] * self.sizes[layer + 1];
        (off, off + w_len, off + w_len + self.sizes[layer + 1])
    }

    /// Same-shaped conversion (used for gradient checks).
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self.params.iter().map(|p| U::from(*p).expect("representable")).collect(),
        }
    }

    /// Forward pass over a row-major `batch x sizes[0]` input.
    pub fn forward(&self, input: &[T], batch: usize, tape: &mut Tape<T>) {
        let layers = self.sizes.len() - 1;
        tape.batch = batch;
        tape.acts.resize(layers + 1, Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(&input[..batch * self.sizes[0]]);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w0, b0, end) = self.offsets(l);
            let (w, b) = (&self.params[w0..b0], &self.params[b0..end]);
            let (before, after) = tape.acts.split_at_mut(l + 1);
            let x = &before[l];
            let out = &mut after[0];
            out.clear();
            out.resize(batch * n_out, T::zero());
            for r in 0..batch {
                let row = &mut out[r * n_out..(r + 1) * n_out];
                row.copy_from_slice(b);
                for (i, xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                    if *xi != T::zero() {
                        axpy(row, *xi, &w[i * n_out..(i + 1) * n_out]);
                    }
                }
                if l + 1 < layers {
                    row.iter_mut().for_each(|v| *v = v.max(T::zero()));
                }
            }
        }
    }

    /// Convenience single-input forward pass.
    pub fn predict(&self, x: &[T]) -> Vec<T> {
        let mut tape = Tape::default();
        self.forward(x, 1, &mut tape);
        tape.output().to_vec()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, tape: &Tape<T>, d_out: &[T], grad: &mut [T]) {
        let layers = self.sizes.len() - 1;
        let batch = tape.batch;
        let mut delta = d_out.to_vec();
        let mut next = Vec::new();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w0, b0, end) = self.offsets(l);
            let x = &tape.acts[l];
            {
                let (gw, gb) = grad[w0..end].split_at_mut(b0 - w0);
                for r in 0..batch {
                    let d = &delta[r * n_out..(r + 1) * n_out];
                    axpy(gb, T::one(), d);
                    for (i, xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                        if *xi != T::zero() {
                            axpy(&mut gw[i * n_out..(i + 1) * n_out], *xi, d);
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w0..b0];
            next.clear();
            next.resize(batch * n_in, T::zero());
            for r in 0..batch {
                let d = &delta[r * n_out..(r + 1) * n_out];
                for i in 0..n_in {
                    // x is a ReLU output, so zero means an inactive unit
                    if x[r * n_in + i] > T::zero() {
                        next[r * n_in + i] = dot(&w[i * n_out..(i + 1) * n_out], d);
                    }
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize) -> Self {
        let c = |x: f64| T::from(x).expect("representable");
        Self {
            beta1: c(0.9),
            beta2: c(0.999),
            eps: c(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let one = T::one();
        let t = self.t as i32;
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sum_of_outputs(net: &Mlp<f64>, x: &[f64], batch: usize, weights: &[f64]) -> f64 {
        let mut tape = Tape::default();
        net.forward(x, batch, &mut tape);
        tape.output().iter().zip(weights).map(|(o, w)| o * w).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(1, 0, 0);
        let net: Mlp<f64> = Mlp::new(&[4, 16, 16, 2], &mut rng).unwrap();
        let batch = 3;
        let x: Vec<f64> = (0..batch * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wts: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::default();
        net.forward(&x, batch, &mut tape);
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&tape, &wts, &mut grad);
        let eps = 1e-6;
        for k in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params_mut()[k] += eps;
            let mut minus = net.clone();
            minus.params_mut()[k] -= eps;
            let fd = (sum_of_outputs(&plus, &x, batch, &wts) - sum_of_outputs(&minus, &x, batch, &wts)) / (2.0 * eps);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn forward_hand_example() {
        // 1 -> 1 -> 1 with w1 = 2, b1 = -1, w2 = 3, b2 = 0.5
        let net = Mlp {
            sizes: vec![1, 1, 1],
            params: vec![2.0, -1.0, 3.0, 0.5],
        };
        assert_eq!(net.predict(&[1.0]), vec![3.5]);
        assert_eq!(net.predict(&[0.25]), vec![0.5]);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a: Mlp<f32> = Mlp::new(&[4, 64, 64, 2], &mut stream(2, 0, 0)).unwrap();
        let b: Mlp<f32> = Mlp::new(&[4, 64, 64, 2], &mut stream(2, 0, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_params(), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert!(a.params()[..256].iter().all(|p| p.abs() <= 0.5));
        assert!(Mlp::<f32>::new(&[4], &mut stream(0, 0, 0)).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::<f64>::new(2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -2.0], 0.1);
        // bias-corrected first step is lr * sign(g)
        assert!((p[0] - 0.9).abs() < 1e-7 && (p[1] + 0.9).abs() < 1e-7);
        let before = p.clone();
        let mut zero = Adam::<f64>::new(2);
        zero.step(&mut p, &[0.0, 0.0], 0.1);
        assert_eq!(p, before);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..19).map(f64::from).collect();
        let want: f64 = a.iter().map(|x| x * x).sum();
        assert_eq!(dot(&a, &a), want);
    }
}
