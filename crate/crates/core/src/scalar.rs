// SPDX-License-Identifier: MIT OR Apache-2.0

//! Floating point abstraction shared by the model and geometry code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the forward pass and the eigen-solver run on.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Short name used in manifests (`"f32"` / `"f64"`).
    const NAME: &'static str;

    /// Converts an `f64` literal. Finite inputs always convert.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn to_f32_lossy(self) -> f32;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}

/// Dot product with a plain left-to-right accumulation.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}
