//! Scalar abstraction: everything numeric is generic over [`Scalar`], which is
//! either a real or a complex floating-point type.  The parameter vector `μ`
//! itself always stays `f64`; only field values (matrix entries, coefficients,
//! solution vectors) take the generic type.

use nalgebra::ComplexField;
use num_complex::Complex;

/// Field of the discrete problem: real (symmetric forms) or complex
/// (sesquilinear forms such as the Helmholtz impedance problem).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

/// Matrix/vector entry type. Implemented for `f32`, `f64` and their complex
/// counterparts; the associated real field carries norms, singular values and
/// tolerances.
pub trait Scalar: ComplexField + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;

    /// Embeds a real number into the field.
    fn from_re(x: f64) -> Self;
    /// Builds `re + i*im` if the field can represent it; `None` for real
    /// types with `im != 0`.
    fn try_from_parts(re: f64, im: f64) -> Option<Self>;
    fn real_from_f64(x: f64) -> Self::RealField;
    fn real_to_f64(x: Self::RealField) -> f64;

    fn field() -> Field {
        if Self::IS_COMPLEX {
            Field::Complex
        } else {
            Field::Real
        }
    }
    fn re_f64(self) -> f64 {
        Self::real_to_f64(self.real())
    }
    fn im_f64(self) -> f64 {
        Self::real_to_f64(self.imaginary())
    }
    fn abs_f64(self) -> f64 {
        Self::real_to_f64(self.modulus())
    }
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn from_re(x: f64) -> Self {
        x
    }
    fn try_from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re)
    }
    fn real_from_f64(x: f64) -> f64 {
        x
    }
    fn real_to_f64(x: f64) -> f64 {
        x
    }
}

impl Scalar for f32 {
    const IS_COMPLEX: bool = false;

    fn from_re(x: f64) -> Self {
        x as f32
    }
    fn try_from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re as f32)
    }
    fn real_from_f64(x: f64) -> f32 {
        x as f32
    }
    fn real_to_f64(x: f32) -> f64 {
        f64::from(x)
    }
}

impl Scalar for Complex<f64> {
    const IS_COMPLEX: bool = true;

    fn from_re(x: f64) -> Self {
        Complex::new(x, 0.0)
    }
    fn try_from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex::new(re, im))
    }
    fn real_from_f64(x: f64) -> f64 {
        x
    }
    fn real_to_f64(x: f64) -> f64 {
        x
    }
}

impl Scalar for Complex<f32> {
    const IS_COMPLEX: bool = true;

    fn from_re(x: f64) -> Self {
        Complex::new(x as f32, 0.0)
    }
    fn try_from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex::new(re as f32, im as f32))
    }
    fn real_from_f64(x: f64) -> f32 {
        x as f32
    }
    fn real_to_f64(x: f32) -> f64 {
        f64::from(x)
    }
}
