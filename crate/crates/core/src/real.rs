//! Scalar abstraction so the same graph code runs in `f32` for training
//! and in `f64` for finite-difference checks.

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).unwrap()
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}
