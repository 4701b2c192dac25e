//! Scalar abstraction shared by the numeric kernels.
//!
//! Feature values travel as `f32` on the wire, but the quantizer, detector and
//! metric kernels are written against [`Scalar`] so the same code runs in `f64`
//! when tighter reference numbers are wanted.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the numeric kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and generated data.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always converts to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("Scalar always converts to f32")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Squared Euclidean distance between two equally long slices.
#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let diff = x - y;
            acc + diff * diff
        })
}

/// `ceil(ratio * n)` with float noise around exact integers removed, so that
/// `0.1 * 1000` yields 100 and not 101.
pub fn ceil_count(ratio: f64, n: usize) -> usize {
    let exact = ratio * n as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}
