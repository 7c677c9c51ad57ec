use std::ops::{Add, Div, Mul, Neg, Sub};

/// Second-order forward-mode scalar `a + b ε₁ + c ε₂ + d ε₁ε₂` with `ε₁² = ε₂² = 0`.
///
/// Seeding `ε₁` on variable `i` and `ε₂` on variable `j` makes `d12` the exact
/// mixed partial `∂²f/∂xᵢ∂xⱼ`, while `d1` and `d2` carry the first partials.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
}

impl HyperDual {
    pub const fn new(value: f64, d1: f64, d2: f64, d12: f64) -> Self {
        Self { value, d1, d2, d12 }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0, 0.0)
    }

    /// Applies a scalar function given its value and first two derivatives at `self.value`.
    #[inline]
    pub fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            value: f,
            d1: df * self.d1,
            d2: df * self.d2,
            d12: df * self.d12 + ddf * self.d1 * self.d2,
        }
    }

    pub fn has_derivatives(&self) -> bool {
        self.d1 != 0.0 || self.d2 != 0.0 || self.d12 != 0.0
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let a = self.value;
        self.chain(a.ln(), 1.0 / a, -1.0 / (a * a))
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.value))
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let sech2 = 1.0 - t * t;
        self.chain(t, sech2, -2.0 * t * sech2)
    }

    pub fn powi(self, k: i32) -> Self {
        let a = self.value;
        match k {
            0 => Self::constant(1.0),
            1 => self,
            _ => {
                let kf = f64::from(k);
                self.chain(
                    a.powi(k),
                    kf * a.powi(k - 1),
                    kf * (kf - 1.0) * a.powi(k - 2),
                )
            }
        }
    }

    pub fn recip(self) -> Self {
        let a = self.value;
        let inv = 1.0 / a;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl From<f64> for HyperDual {
    fn from(value: f64) -> Self {
        Self::constant(value)
    }
}

impl Add for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.value + rhs.value,
            self.d1 + rhs.d1,
            self.d2 + rhs.d2,
            self.d12 + rhs.d12,
        )
    }
}

impl Sub for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(
            self.value - rhs.value,
            self.d1 - rhs.d1,
            self.d2 - rhs.d2,
            self.d12 - rhs.d12,
        )
    }
}

impl Mul for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.value * rhs.d1 + self.d1 * rhs.value,
            self.value * rhs.d2 + self.d2 * rhs.value,
            self.value * rhs.d12 + self.d1 * rhs.d2 + self.d2 * rhs.d1 + self.d12 * rhs.value,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2, -self.d12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(a: f64) -> HyperDual {
        HyperDual::new(a, 1.0, 1.0, 0.0)
    }

    #[test]
    fn sin_derivatives() {
        let r = seeded(0.0).sin();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.d1, 1.0);
        assert_eq!(r.d12, 0.0);
    }

    #[test]
    fn product_rule_second_order() {
        // f(a) = a^3 - a, f'' = 6a
        let a = seeded(2.0);
        let r = a * a * a - a;
        assert_eq!(r.value, 6.0);
        assert_eq!(r.d1, 11.0);
        assert_eq!(r.d12, 12.0);
    }

    #[test]
    fn mixed_partial_from_separate_seeds() {
        // f(x, y) = x^2 y at (1, 2): f_xy = 2x = 2
        let x = HyperDual::new(1.0, 1.0, 0.0, 0.0);
        let y = HyperDual::new(2.0, 0.0, 1.0, 0.0);
        let r = x * x * y;
        assert_eq!(r.d1, 4.0);
        assert_eq!(r.d2, 1.0);
        assert_eq!(r.d12, 2.0);
    }

    #[test]
    fn quotient_and_powi_agree() {
        let a = seeded(1.5);
        let q = HyperDual::constant(1.0) / (a * a);
        let p = a.powi(-2);
        assert!((q.value - p.value).abs() < 1e-15);
        assert!((q.d1 - p.d1).abs() < 1e-15);
        assert!((q.d12 - p.d12).abs() < 1e-14);
    }
}
