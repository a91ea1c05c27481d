//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the solvers: `f32` or `f64`.
///
/// Everything is built on [`nalgebra::RealField`] so the dense linear algebra
/// (Cholesky, symmetric eigendecomposition) works for any implementor.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance no tighter than `x`, floored at a multiple of machine
    /// epsilon so single precision does not chase unreachable targets.
    fn tolerance(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(1e4);
        Self::lit(x).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
