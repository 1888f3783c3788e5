//! Second-order forward-mode jets in the two surface parameters (u, v).

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use super::JetError;

/// A scalar together with its first and second partial derivatives
/// with respect to the parameters `u` and `v`.
///
/// Mixed partials are stored once in `duv`, so symmetry holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2::constant(0.0);

    pub const fn new(val: f64, du: f64, dv: f64, duu: f64, duv: f64, dvv: f64) -> Self {
        Self {
            val,
            du,
            dv,
            duu,
            duv,
            dvv,
        }
    }

    /// A jet with every derivative slot zero.
    pub const fn constant(val: f64) -> Self {
        Self::new(val, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// The independent variable `u` evaluated at `val`.
    pub const fn seed_u(val: f64) -> Self {
        Self::new(val, 1.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// The independent variable `v` evaluated at `val`.
    pub const fn seed_v(val: f64) -> Self {
        Self::new(val, 0.0, 1.0, 0.0, 0.0, 0.0)
    }

    /// Composes a scalar function with this jet given `g(x)`, `g'(x)` and
    /// `g''(x)` evaluated at `self.val` (second-order chain rule).
    #[inline]
    pub fn chain(self, g: f64, dg: f64, ddg: f64) -> Self {
        Self {
            val: g,
            du: dg * self.du,
            dv: dg * self.dv,
            duu: ddg * self.du * self.du + dg * self.duu,
            duv: ddg * self.du * self.dv + dg * self.duv,
            dvv: ddg * self.dv * self.dv + dg * self.dvv,
        }
    }

    #[inline]
    pub fn scale(self, c: f64) -> Self {
        Self {
            val: c * self.val,
            du: c * self.du,
            dv: c * self.dv,
            duu: c * self.duu,
            duv: c * self.duv,
            dvv: c * self.dvv,
        }
    }

    /// Reciprocal; fails when the value slot is zero.
    pub fn recip(self) -> Result<Self, JetError> {
        if self.val == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let r = 1.0 / self.val;
        Ok(self.chain(r, -r * r, 2.0 * r * r * r))
    }

    /// Division that reports a zero denominator instead of producing inf/NaN.
    pub fn checked_div(self, rhs: Self) -> Result<Self, JetError> {
        Ok(self * rhs.recip()?)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.val))
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// Softplus `ln(1 + e^x)`, with derivatives from the logistic sigmoid.
    pub fn softplus(self) -> Self {
        let s = sigmoid(self.val);
        self.chain(softplus(self.val), s, s * (1.0 - s))
    }

    /// The two first-order slots as a gradient vector.
    pub fn gradient(&self) -> [f64; 2] {
        [self.du, self.dv]
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `(softplus(x), sigmoid(x))` from a single exponential.
#[inline]
pub fn softplus_sigmoid(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let r = 1.0 / (1.0 + e);
    let s = if x >= 0.0 { r } else { e * r };
    (x.max(0.0) + e.ln_1p(), s)
}

/// Logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, b: Jet2) -> Jet2 {
        Jet2 {
            val: self.val + b.val,
            du: self.du + b.du,
            dv: self.dv + b.dv,
            duu: self.duu + b.duu,
            duv: self.duv + b.duv,
            dvv: self.dvv + b.dvv,
        }
    }
}

impl AddAssign for Jet2 {
    #[inline]
    fn add_assign(&mut self, b: Jet2) {
        *self = *self + b;
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, b: Jet2) -> Jet2 {
        self + (-b)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, b: Jet2) -> Jet2 {
        let a = self;
        Jet2 {
            val: a.val * b.val,
            du: a.du * b.val + a.val * b.du,
            dv: a.dv * b.val + a.val * b.dv,
            duu: a.duu * b.val + 2.0 * a.du * b.du + a.val * b.duu,
            duv: a.duv * b.val + a.du * b.dv + a.dv * b.du + a.val * b.duv,
            dvv: a.dvv * b.val + 2.0 * a.dv * b.dv + a.val * b.dvv,
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(mut self, c: f64) -> Jet2 {
        self.val += c;
        self
    }
}

/// Plain division; a zero denominator yields non-finite slots like `f64`
/// division does. Use [`Jet2::checked_div`] to get an error instead.
impl Div for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, b: Jet2) -> Jet2 {
        let r = 1.0 / b.val;
        self * b.chain(r, -r * r, 2.0 * r * r * r)
    }
}
