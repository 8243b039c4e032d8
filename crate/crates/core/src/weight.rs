//! Numeric weight abstraction: `f64` for general ℓ_p^q costs, `i64` for the
//! exact integer mode (integer coordinates, ℓ₁, q = 1).

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use crate::geometry::CostModel;

pub trait Weight:
    Copy
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const ZERO: Self;
    /// Unreachable label. Never used as an operand of arithmetic.
    const INF: Self;
    const EXACT: bool;

    fn total_cmp(&self, other: &Self) -> Ordering;
    fn edge_cost(model: &CostModel, u: &[f64], v: &[f64]) -> Self;
    /// Largest representable value not exceeding `x` (used for pruning bounds).
    fn floor_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn is_inf(self) -> bool {
        self == Self::INF
    }
    fn wmin(self, o: Self) -> Self {
        if o.total_cmp(&self) == Ordering::Less {
            o
        } else {
            self
        }
    }
    fn wmax(self, o: Self) -> Self {
        if o.total_cmp(&self) == Ordering::Greater {
            o
        } else {
            self
        }
    }
}

impl Weight for f64 {
    const ZERO: f64 = 0.0;
    const INF: f64 = f64::INFINITY;
    const EXACT: bool = false;

    fn total_cmp(&self, other: &f64) -> Ordering {
        f64::total_cmp(self, other)
    }
    fn edge_cost(model: &CostModel, u: &[f64], v: &[f64]) -> f64 {
        model.distance(u, v)
    }
    fn floor_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Weight for i64 {
    const ZERO: i64 = 0;
    const INF: i64 = i64::MAX / 4;
    const EXACT: bool = true;

    fn total_cmp(&self, other: &i64) -> Ordering {
        self.cmp(other)
    }
    fn edge_cost(_model: &CostModel, u: &[f64], v: &[f64]) -> i64 {
        u.iter().zip(v).map(|(x, y)| (*x as i64 - *y as i64).abs()).sum()
    }
    fn floor_f64(x: f64) -> i64 {
        if x.is_nan() || x <= -(Self::INF as f64) {
            -Self::INF
        } else if x >= Self::INF as f64 {
            Self::INF
        } else {
            x.floor() as i64
        }
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Total-order wrapper so weights can live in heaps and sort keys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ordered<W>(pub W);

impl<W: Weight> Eq for Ordered<W> {}

impl<W: Weight> PartialOrd for Ordered<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<W: Weight> Ord for Ordered<W> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
