//! Floating scalar abstraction.
//!
//! All model math in this crate is generic over the scalar type; `f64` is
//! the default used by the CLI and the aliases at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

pub trait Scalar: Float + FromPrimitive + NumAssignOps + Debug + Display + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value not representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
