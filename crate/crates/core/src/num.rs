//! Scalar abstraction shared by the cost algebra.
//!
//! The airtime formulas, the balancing index and the weight heuristic only
//! need field operations and an ordering, so they are written once against
//! [`Scalar`] and instantiated for `f64` (the simulator), `f32`, or an exact
//! rational type in tests.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num};

/// Numeric type usable by the cost algebra.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + Debug {
    /// Converts a literal constant. Panics only if the type cannot represent
    /// a small finite `f64`, which no supported type does.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar type cannot represent literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar type cannot represent count")
    }

    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug {}

/// Smaller of two partially ordered values; `a` wins ties.
pub(crate) fn min_of<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}
