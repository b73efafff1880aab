//! Agents and the hyperparameter search box.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One individual of the population: network parameters `theta` and
/// hyperparameters `h`. The `id` is the population slot and never changes,
/// even when the slot is overwritten by a copy of another agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub theta: Vec<f64>,
    pub h: Vec<f64>,
}

impl Agent {
    pub fn new(id: usize, theta: Vec<f64>, h: Vec<f64>) -> Self {
        Self { id, theta, h }
    }
}

/// Axis-aligned box `[lower, upper]` in hyperparameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxRepr> for SearchBox {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        SearchBox::new(r.lower, r.upper)
    }
}

impl From<SearchBox> for BoxRepr {
    fn from(b: SearchBox) -> Self {
        BoxRepr {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::Empty("search box has no dimensions"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l <= u) || !l.is_finite() || !u.is_finite() {
                return Err(invalid("box", format!("need finite lower <= upper, got [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        h.len() == self.dim()
            && h
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| l <= x && x <= u)
    }

    /// Map a point of the box affinely onto `[-1, 1]^d`. Degenerate axes
    /// map to 0.
    pub fn to_unit(&self, h: &[f64]) -> Vec<f64> {
        h.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| if u > l { 2.0 * (x - l) / (u - l) - 1.0 } else { 0.0 })
            .collect()
    }

    /// Inverse of [`SearchBox::to_unit`].
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, up))| l + 0.5 * (x + 1.0) * (up - l))
            .collect()
    }
}

/// Componentwise clamp of `h` into `bx`.
pub fn project(h: &[f64], bx: &SearchBox) -> Result<Vec<f64>> {
    if h.len() != bx.dim() {
        return Err(Error::DimensionMismatch {
            expected: bx.dim(),
            got: h.len(),
        });
    }
    Ok(h.iter()
        .zip(bx.lower.iter().zip(&bx.upper))
        .map(|(x, (l, u))| x.clamp(*l, *u))
        .collect())
}
