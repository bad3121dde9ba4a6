//! Scalar abstraction shared by every numeric stage.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used by the numeric kernels: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant, rounding to the nearest representable value.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    lanes(a, b, |x, y| x * y)
}

const LANES: usize = 8;

/// `sum f(a_i, b_i)` over eight interleaved partial sums, combined in a
/// fixed order: deterministic, and lets the compiler vectorize.
#[inline]
fn lanes<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += f(x[l], y[l]);
        }
    }
    for (l, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        acc[l] += f(x, y);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

#[inline]
pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    lanes(a, b, |x, y| {
        let d = x - y;
        d * d
    })
}

#[inline]
pub(crate) fn l2_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Scales `v` to unit L2 norm in place; a zero vector stays zero.
pub(crate) fn l2_normalize<T: Scalar>(v: &mut [T]) {
    let norm = l2_norm(v);
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

pub(crate) fn cast_slice<S: Scalar, T: Scalar>(v: &[S]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x.as_f64())).collect()
}
