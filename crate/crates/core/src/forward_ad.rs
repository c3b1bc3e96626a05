//! Forward-mode automatic differentiation with fixed-width dual numbers.
//!
//! A [`Dual`] carries a value and a tangent vector of up to [`MAX_WIDTH`]
//! partial derivatives; the active width equals the parameter dimension and
//! is fixed when the dual is constructed. All simulators in this crate have
//! at most 7 parameters, so forward mode with one pass per evaluation is
//! cheaper than reverse mode and requires no allocation or tape.
//!
//! The [`Real`] trait abstracts over `f64` and [`Dual`] so that a simulator
//! map is written once and evaluated either plainly or with derivatives; the
//! dual value slot then reproduces the plain evaluation bit-for-bit because
//! both paths execute the identical floating-point operations.
//!
//! Mixing duals of different widths is a programming error and panics;
//! data-dependent domain violations (`ln` of a non-positive value, quantile
//! outside (0,1), …) are reported as [`Error::InvalidArgument`] carrying the
//! offending value.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::special;

/// Maximum tangent width (largest supported parameter dimension).
pub const MAX_WIDTH: usize = 8;

/// Forward-mode dual number: value plus up to [`MAX_WIDTH`] partials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    value: f64,
    partials: [f64; MAX_WIDTH],
    width: usize,
}

#[inline]
fn check_width(width: usize) {
    assert!(
        width >= 1 && width <= MAX_WIDTH,
        "dual tangent width must be in 1..={MAX_WIDTH}, got {width}"
    );
}

impl Dual {
    /// A constant (zero tangent) of the given width.
    #[inline]
    pub fn constant(value: f64, width: usize) -> Self {
        check_width(width);
        Dual {
            value,
            partials: [0.0; MAX_WIDTH],
            width,
        }
    }

    /// A seeded variable: unit tangent in lane `index` of `width` lanes.
    #[inline]
    pub fn seeded(value: f64, index: usize, width: usize) -> Self {
        check_width(width);
        assert!(index < width, "seed index {index} out of width {width}");
        let mut partials = [0.0; MAX_WIDTH];
        partials[index] = 1.0;
        Dual {
            value,
            partials,
            width,
        }
    }

    /// Seed one dual per parameter, lane `i` differentiating `theta[i]`.
    pub fn seed_vector(theta: &[f64]) -> Vec<Dual> {
        check_width(theta.len());
        theta
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::seeded(v, i, theta.len()))
            .collect()
    }

    /// Value slot.
    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Active partial derivatives (length = tangent width).
    #[inline]
    pub fn partials(&self) -> &[f64] {
        &self.partials[..self.width]
    }

    /// Tangent width.
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    fn assert_same_width(&self, rhs: &Dual) {
        assert_eq!(
            self.width, rhs.width,
            "mixing dual tangent widths ({} vs {}) is an error",
            self.width, rhs.width
        );
    }

    /// Apply a scalar map with derivative `scale`: (f(v), scale * dv).
    #[inline]
    fn unary(self, value: f64, scale: f64) -> Dual {
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = scale * self.partials[i];
        }
        Dual {
            value,
            partials,
            width: self.width,
        }
    }

    /// e^x.
    #[inline]
    pub fn exp(self) -> Dual {
        let e = self.value.exp();
        self.unary(e, e)
    }

    /// cos(x).
    #[inline]
    pub fn cos(self) -> Dual {
        self.unary(self.value.cos(), -self.value.sin())
    }

    /// Natural logarithm; requires a strictly positive value part.
    pub fn ln(self) -> Result<Dual> {
        if !(self.value > 0.0) {
            return Err(Error::invalid(format!(
                "log requires a positive value, got {}",
                self.value
            )));
        }
        Ok(self.unary(self.value.ln(), 1.0 / self.value))
    }

    /// Square root; requires a non-negative value part.
    pub fn sqrt(self) -> Result<Dual> {
        if !(self.value >= 0.0) {
            return Err(Error::invalid(format!(
                "sqrt requires a non-negative value, got {}",
                self.value
            )));
        }
        let s = self.value.sqrt();
        Ok(self.unary(s, 0.5 / s))
    }

    /// Power with a constant real exponent (`f64::powf` semantics on the
    /// value slot; derivative `e * x^(e-1)`).
    #[inline]
    pub fn powf(self, exponent: f64) -> Dual {
        self.unary(
            self.value.powf(exponent),
            exponent * self.value.powf(exponent - 1.0),
        )
    }

    /// Power with a dual exponent, `x^e = exp(e ln x)`; requires a strictly
    /// positive base value.
    pub fn pow(self, exponent: Dual) -> Result<Dual> {
        self.assert_same_width(&exponent);
        if !(self.value > 0.0) {
            return Err(Error::invalid(format!(
                "pow requires a positive base, got {}",
                self.value
            )));
        }
        let value = self.value.powf(exponent.value);
        let log_base = self.value.ln();
        let base_scale = value * exponent.value / self.value;
        let exp_scale = value * log_base;
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = base_scale * self.partials[i] + exp_scale * exponent.partials[i];
        }
        Ok(Dual {
            value,
            partials,
            width: self.width,
        })
    }

    /// Error function.
    #[inline]
    pub fn erf(self) -> Dual {
        const TWO_OVER_SQRT_PI: f64 = 1.1283791670955125738961589031215452_f64;
        self.unary(
            special::erf(self.value),
            TWO_OVER_SQRT_PI * (-self.value * self.value).exp(),
        )
    }

    /// Standard normal CDF Φ; derivative is the density φ.
    #[inline]
    pub fn normal_cdf(self) -> Dual {
        self.unary(
            special::std_normal_cdf(self.value),
            special::std_normal_pdf(self.value),
        )
    }

    /// Standard normal quantile Φ⁻¹; requires value ∈ (0, 1). The derivative
    /// is 1/φ(Φ⁻¹(p)).
    pub fn normal_quantile(self) -> Result<Dual> {
        let x = special::std_normal_quantile(self.value)?;
        Ok(self.unary(x, 1.0 / special::std_normal_pdf(x)))
    }

    /// Clamp below by a constant; the tangent is zeroed where the clamp is
    /// active (subgradient convention).
    #[inline]
    pub fn max_const(self, lo: f64) -> Dual {
        if self.value >= lo {
            self
        } else {
            Dual::constant(self.value.max(lo), self.width)
        }
    }

    /// Clamp above by a constant; tangent zeroed where active.
    #[inline]
    pub fn min_const(self, hi: f64) -> Dual {
        if self.value <= hi {
            self
        } else {
            Dual::constant(self.value.min(hi), self.width)
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        self.assert_same_width(&rhs);
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = self.partials[i] + rhs.partials[i];
        }
        Dual {
            value: self.value + rhs.value,
            partials,
            width: self.width,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        self.assert_same_width(&rhs);
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = self.partials[i] - rhs.partials[i];
        }
        Dual {
            value: self.value - rhs.value,
            partials,
            width: self.width,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        self.assert_same_width(&rhs);
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = self.partials[i] * rhs.value + rhs.partials[i] * self.value;
        }
        Dual {
            value: self.value * rhs.value,
            partials,
            width: self.width,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        self.assert_same_width(&rhs);
        // The value slot must be a plain `a / b` so dual evaluation
        // reproduces f64 evaluation bit for bit; the reciprocal shortcut is
        // reserved for the tangents.
        let value = self.value / rhs.value;
        let inv = 1.0 / rhs.value;
        let mut partials = [0.0; MAX_WIDTH];
        for i in 0..MAX_WIDTH {
            partials[i] = (self.partials[i] - value * rhs.partials[i]) * inv;
        }
        Dual {
            value,
            partials,
            width: self.width,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        self.unary(-self.value, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: f64) -> Dual {
        let mut out = self;
        out.value += rhs;
        out
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: f64) -> Dual {
        let mut out = self;
        out.value -= rhs;
        out
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: f64) -> Dual {
        self.unary(self.value * rhs, rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: f64) -> Dual {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

/// Scalar abstraction over `f64` and [`Dual`], used to write each simulator
/// map exactly once. The `f64` implementation applies the same domain checks
/// as the dual one, so plain and dual evaluation fail identically.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Promote a plain constant to this scalar type, matching `self`'s
    /// tangent width when dual.
    fn lift(&self, c: f64) -> Self;
    /// The value part.
    fn value(&self) -> f64;
    /// e^x.
    fn exp(self) -> Self;
    /// cos(x).
    fn cos(self) -> Self;
    /// Natural logarithm (value must be > 0).
    fn ln(self) -> Result<Self>;
    /// Square root (value must be ≥ 0).
    fn sqrt(self) -> Result<Self>;
    /// Power with a variable exponent (base value must be > 0).
    fn pow(self, exponent: Self) -> Result<Self>;
    /// Error function.
    fn erf(self) -> Self;
    /// Standard normal CDF.
    fn normal_cdf(self) -> Self;
    /// Standard normal quantile (value must be in (0,1)).
    fn normal_quantile(self) -> Result<Self>;
    /// Clamp below by a constant.
    fn max_const(self, lo: f64) -> Self;
    /// Clamp above by a constant.
    fn min_const(self, hi: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn lift(&self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn ln(self) -> Result<f64> {
        if !(self > 0.0) {
            return Err(Error::invalid(format!(
                "log requires a positive value, got {self}"
            )));
        }
        Ok(f64::ln(self))
    }
    fn sqrt(self) -> Result<f64> {
        if !(self >= 0.0) {
            return Err(Error::invalid(format!(
                "sqrt requires a non-negative value, got {self}"
            )));
        }
        Ok(f64::sqrt(self))
    }
    fn pow(self, exponent: f64) -> Result<f64> {
        if !(self > 0.0) {
            return Err(Error::invalid(format!(
                "pow requires a positive base, got {self}"
            )));
        }
        Ok(f64::powf(self, exponent))
    }
    #[inline]
    fn erf(self) -> f64 {
        special::erf(self)
    }
    #[inline]
    fn normal_cdf(self) -> f64 {
        special::std_normal_cdf(self)
    }
    fn normal_quantile(self) -> Result<f64> {
        special::std_normal_quantile(self)
    }
    #[inline]
    fn max_const(self, lo: f64) -> f64 {
        self.max(lo)
    }
    #[inline]
    fn min_const(self, hi: f64) -> f64 {
        self.min(hi)
    }
}

impl Real for Dual {
    #[inline]
    fn lift(&self, c: f64) -> Dual {
        Dual::constant(c, self.width)
    }
    #[inline]
    fn value(&self) -> f64 {
        Dual::value(self)
    }
    #[inline]
    fn exp(self) -> Dual {
        Dual::exp(self)
    }
    #[inline]
    fn cos(self) -> Dual {
        Dual::cos(self)
    }
    fn ln(self) -> Result<Dual> {
        Dual::ln(self)
    }
    fn sqrt(self) -> Result<Dual> {
        Dual::sqrt(self)
    }
    fn pow(self, exponent: Dual) -> Result<Dual> {
        Dual::pow(self, exponent)
    }
    #[inline]
    fn erf(self) -> Dual {
        Dual::erf(self)
    }
    #[inline]
    fn normal_cdf(self) -> Dual {
        Dual::normal_cdf(self)
    }
    fn normal_quantile(self) -> Result<Dual> {
        Dual::normal_quantile(self)
    }
    #[inline]
    fn max_const(self, lo: f64) -> Dual {
        Dual::max_const(self, lo)
    }
    #[inline]
    fn min_const(self, hi: f64) -> Dual {
        Dual::min_const(self, hi)
    }
}

/// Gradient of a scalar function of `theta` by seeding unit tangents.
///
/// # Errors
/// Propagates elementary-function domain errors from `f`; rejects parameter
/// vectors longer than [`MAX_WIDTH`] or empty.
pub fn gradient<F>(f: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: FnOnce(&[Dual]) -> Result<Dual>,
{
    if theta.is_empty() || theta.len() > MAX_WIDTH {
        return Err(Error::invalid(format!(
            "gradient requires 1..={MAX_WIDTH} parameters, got {}",
            theta.len()
        )));
    }
    let seeded = Dual::seed_vector(theta);
    let out = f(&seeded)?;
    Ok(out.partials().to_vec())
}
