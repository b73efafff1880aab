//! Fixed-capacity experience replay.

use rand::seq::index::sample;

use crate::error::{invalid, Result};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: [f32; 4],
    pub a: u8,
    pub r: f32,
    pub s2: [f32; 4],
    /// Failure; truncation at the reward cap is not terminal.
    pub terminal: bool,
}

/// A training batch in structure-of-arrays form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch<T> {
    pub s: Vec<T>,
    pub a: Vec<usize>,
    pub r: Vec<T>,
    pub s2: Vec<T>,
    pub terminal: Vec<bool>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

impl Batch<f32> {
    pub fn from_transitions(ts: &[Transition]) -> Self {
        let mut b = Batch::default();
        for t in ts {
            b.s.extend_from_slice(&t.s);
            b.a.push(t.a as usize);
            b.r.push(t.r);
            b.s2.extend_from_slice(&t.s2);
            b.terminal.push(t.terminal);
        }
        b
    }

    pub fn to_f64(&self) -> Batch<f64> {
        Batch {
            s: self.s.iter().map(|x| f64::from(*x)).collect(),
            a: self.a.clone(),
            r: self.r.iter().map(|x| f64::from(*x)).collect(),
            s2: self.s2.iter().map(|x| f64::from(*x)).collect(),
            terminal: self.terminal.clone(),
        }
    }
}

/// Ring buffer; the oldest transition is overwritten once full.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("buffer_capacity", "must be >= 1"));
        }
        Ok(Self {
            capacity,
            data: Vec::with_capacity(capacity),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `size` distinct stored positions, uniformly at random.
    pub fn sample_indices(&self, size: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
        if size == 0 || size > self.len() {
            return Err(invalid(
                "batch_size",
                format!("need 1 <= batch <= {} stored transitions, got {size}", self.len()),
            ));
        }
        Ok(sample(rng, self.len(), size).into_vec())
    }

    pub fn sample(&self, size: usize, rng: &mut StreamRng, out: &mut Batch<f32>) -> Result<()> {
        let idx = self.sample_indices(size, rng)?;
        out.s.clear();
        out.a.clear();
        out.r.clear();
        out.s2.clear();
        out.terminal.clear();
        for i in idx {
            let t = &self.data[i];
            out.s.extend_from_slice(&t.s);
            out.a.push(t.a as usize);
            out.r.push(t.r);
            out.s2.extend_from_slice(&t.s2);
            out.terminal.push(t.terminal);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn t(k: usize) -> Transition {
        Transition {
            s: [k as f32; 4],
            a: (k % 2) as u8,
            r: 1.0,
            s2: [k as f32 + 1.0; 4],
            terminal: false,
        }
    }

    #[test]
    fn overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        (0..5).for_each(|k| b.push(t(k)));
        assert_eq!(b.len(), 3);
        let mut seen: Vec<f32> = b.data.iter().map(|x| x.s[0]).collect();
        seen.sort_by(f32::total_cmp);
        assert_eq!(seen, vec![2.0, 3.0, 4.0]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn batch_requests_are_checked() {
        let mut b = ReplayBuffer::new(10).unwrap();
        (0..4).for_each(|k| b.push(t(k)));
        let mut rng = stream(0, 0, 0);
        assert!(b.sample_indices(5, &mut rng).is_err());
        assert!(b.sample_indices(0, &mut rng).is_err());
        let mut out = Batch::default();
        b.sample(4, &mut rng, &mut out).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.s.len(), 16);
    }

    proptest! {
        #[test]
        fn sampling_stays_in_bounds(cap in 1usize..200, pushes in 1usize..500, seed in any::<u64>()) {
            let mut b = ReplayBuffer::new(cap).unwrap();
            (0..pushes).for_each(|k| b.push(t(k)));
            prop_assert!(b.len() <= cap);
            let size = b.len().min(64);
            let mut idx = b.sample_indices(size, &mut stream(seed, 0, 0)).unwrap();
            prop_assert!(idx.iter().all(|&i| i < b.len()));
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), size);
        }
    }
}
