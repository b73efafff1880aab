//! Deep Q-learning update with a frozen target network.

use crate::error::{Error, Result};

use super::net::{Adam, Mlp, Scalar, Tape};
use super::replay::Batch;

/// Exploration rate `p_end + (p_start - p_end) exp(-steps / p_decay)`.
pub fn epsilon(total_steps: u64, p_start: f64, p_end: f64, p_decay: f64) -> f64 {
    p_end + (p_start - p_end) * (-(total_steps as f64) / p_decay).exp()
}

/// Reusable buffers for [`td_loss_grad`].
#[derive(Clone, Debug, Default)]
pub struct Scratch<T> {
    online: Tape<T>,
    target: Tape<T>,
    d_out: Vec<T>,
    pub grad: Vec<T>,
}

/// Mean squared TD error
/// `(r + gamma (1 - terminal) max_a' Q_target(s', a') - Q(s, a))^2`
/// and its gradient with respect to the online parameters (left in
/// `scratch.grad`).
pub fn td_loss_grad<T: Scalar>(
    net: &Mlp<T>,
    target: &Mlp<T>,
    batch: &Batch<T>,
    gamma: T,
    scratch: &mut Scratch<T>,
) -> Result<T> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("training batch"));
    }
    let k = net.n_out();
    target.forward(&batch.s2, n, &mut scratch.target);
    net.forward(&batch.s, n, &mut scratch.online);
    scratch.d_out.clear();
    scratch.d_out.resize(n * k, T::zero());
    let scale = T::from(2.0 / n as f64).expect("representable");
    let mut loss = T::zero();
    {
        let q_next = scratch.target.output();
        let q = scratch.online.output();
        for b in 0..n {
            let boot = if batch.terminal[b] {
                T::zero()
            } else {
                q_next[b * k..(b + 1) * k].iter().fold(T::neg_infinity(), |m, v| m.max(*v))
            };
            let y = batch.r[b] + gamma * boot;
            let diff = q[b * k + batch.a[b]] - y;
            loss = loss + diff * diff;
            scratch.d_out[b * k + batch.a[b]] = scale * diff;
        }
    }
    let loss = loss / T::from(n).expect("representable");
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("TD loss {loss:?}")));
    }
    scratch.grad.clear();
    scratch.grad.resize(net.n_params(), T::zero());
    net.backward(&scratch.online, &scratch.d_out, &mut scratch.grad);
    Ok(loss)
}

/// One Adam step on the TD loss; returns the loss before the step.
pub fn dqn_update<T: Scalar>(
    net: &mut Mlp<T>,
    target: &Mlp<T>,
    adam: &mut Adam<T>,
    batch: &Batch<T>,
    gamma: T,
    lr: T,
    scratch: &mut Scratch<T>,
) -> Result<T> {
    let loss = td_loss_grad(net, target, batch, gamma, scratch)?;
    adam.step(net.params_mut(), &scratch.grad, lr);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartpole::replay::Transition;
    use crate::rng::stream;

    fn net(seed: u64) -> Mlp<f32> {
        Mlp::new(&[4, 64, 64, 2], &mut stream(seed, 0, 0)).unwrap()
    }

    fn transition(s: [f32; 4], a: u8, r: f32, s2: [f32; 4], terminal: bool) -> Transition {
        Transition { s, a, r, s2, terminal }
    }

    #[test]
    fn epsilon_schedule() {
        assert_eq!(epsilon(0, 1.0, 0.01, 1000.0), 1.0);
        assert!((epsilon(u64::MAX, 1.0, 0.01, 1000.0) - 0.01).abs() < 1e-15);
        let e = epsilon(1000, 1.0, 0.01, 1000.0);
        assert!((e - (0.01 + 0.99 / std::f64::consts::E)).abs() < 1e-12);
        assert!((e - 0.3742).abs() < 1e-4);
    }

    #[test]
    fn no_discount_reduces_to_rewards() {
        let online = net(1);
        let target = net(2);
        let ts = [
            transition([0.1, 0.0, -0.02, 0.3], 0, 1.0, [0.0; 4], false),
            transition([-0.2, 0.1, 0.05, -0.1], 1, 0.5, [1.0; 4], true),
        ];
        let batch = Batch::from_transitions(&ts);
        let mut scratch = Scratch::default();
        let loss = td_loss_grad(&online, &target, &batch, 0.0, &mut scratch).unwrap();
        let want: f32 = ts
            .iter()
            .map(|t| (t.r - online.predict(&t.s)[t.a as usize]).powi(2))
            .sum::<f32>()
            / 2.0;
        assert!((loss - want).abs() < 1e-6);
    }

    #[test]
    fn matching_targets_give_zero_loss_and_gradient() {
        let mut online = net(3);
        let target = online.clone();
        let s = [0.01, -0.02, 0.03, 0.0];
        // terminal transition whose reward equals the current Q(s, a)
        let q = online.predict(&s)[1];
        let batch = Batch::from_transitions(&[transition(s, 1, q, s, true); 4]);
        let mut scratch = Scratch::default();
        let mut adam = Adam::new(online.n_params());
        let before = online.clone();
        let loss = dqn_update(&mut online, &target, &mut adam, &batch, 0.99, 1e-3, &mut scratch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(scratch.grad.iter().all(|g| *g == 0.0));
        assert_eq!(online, before);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let online: Mlp<f64> = net(4).cast();
        let target: Mlp<f64> = net(5).cast();
        let ts = [
            transition([0.1, 0.5, -0.1, 0.2], 0, 1.0, [0.12, 0.4, -0.09, 0.1], false),
            transition([-0.3, -0.2, 0.15, -0.4], 1, 1.0, [-0.31, -0.1, 0.14, -0.2], false),
            transition([0.0, 0.1, 0.2, 0.3], 1, 1.0, [0.0, 0.2, 0.21, 0.5], true),
        ];
        let batch = Batch::from_transitions(&ts).to_f64();
        let mut scratch = Scratch::default();
        td_loss_grad(&online, &target, &batch, 0.99, &mut scratch).unwrap();
        let grad = scratch.grad.clone();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..online.n_params() {
            let mut plus = online.clone();
            plus.params_mut()[k] += eps;
            let mut minus = online.clone();
            minus.params_mut()[k] -= eps;
            let lp = td_loss_grad(&plus, &target, &batch, 0.99, &mut Scratch::default()).unwrap();
            let lm = td_loss_grad(&minus, &target, &batch, 0.99, &mut Scratch::default()).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn updates_reduce_loss_on_a_fixed_batch() {
        let mut online = net(6);
        let target = net(7);
        let ts: Vec<Transition> = (0..32)
            .map(|k| {
                let x = k as f32 / 32.0 - 0.5;
                transition([x, -x, 0.1 * x, 0.0], (k % 2) as u8, 1.0, [x, x, 0.0, 0.1], k % 5 == 0)
            })
            .collect();
        let batch = Batch::from_transitions(&ts);
        let mut adam = Adam::new(online.n_params());
        let mut scratch = Scratch::default();
        let first = dqn_update(&mut online, &target, &mut adam, &batch, 0.99, 1e-3, &mut scratch).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = dqn_update(&mut online, &target, &mut adam, &batch, 0.99, 1e-3, &mut scratch).unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn empty_batch_errors() {
        let online = net(8);
        let batch = Batch::<f32>::default();
        assert!(td_loss_grad(&online, &online.clone(), &batch, 0.9, &mut Scratch::default()).is_err());
    }
}
