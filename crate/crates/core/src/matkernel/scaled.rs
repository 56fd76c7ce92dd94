use std::f64::consts::PI;
use std::fmt;
use std::ops::{Div, Mul, Neg};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex number held as `(ln|z|, arg z)`.
///
/// Tau-functions grow like exponentials of the times, so determinants are
/// accumulated in this form and only converted back when a ratio is needed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledComplex {
    log_magnitude: f64,
    phase: f64,
}

fn wrap_phase(phase: f64) -> f64 {
    if !phase.is_finite() {
        return 0.0;
    }
    if phase > -PI && phase <= PI {
        return phase;
    }
    let p = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if p <= -PI {
        PI
    } else {
        p
    }
}

impl ScaledComplex {
    pub const ZERO: ScaledComplex = ScaledComplex {
        log_magnitude: f64::NEG_INFINITY,
        phase: 0.0,
    };
    pub const ONE: ScaledComplex = ScaledComplex {
        log_magnitude: 0.0,
        phase: 0.0,
    };

    pub fn from_log_polar(log_magnitude: f64, phase: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        ScaledComplex {
            log_magnitude,
            phase: wrap_phase(phase),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re == 0.0 && z.im == 0.0 {
            return Self::ZERO;
        }
        // hypot avoids overflow in |z|^2
        Self::from_log_polar(z.re.hypot(z.im).ln(), z.im.atan2(z.re))
    }

    /// `e^w` without forming it.
    pub fn exp(w: Complex64) -> Self {
        Self::from_log_polar(w.re, w.im)
    }

    pub fn log_magnitude(&self) -> f64 {
        self.log_magnitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn is_zero(&self) -> bool {
        self.log_magnitude == f64::NEG_INFINITY
    }

    pub fn abs(&self) -> f64 {
        self.log_magnitude.exp()
    }

    /// Plain complex value; overflows to infinity when `log_magnitude > ~709.78`.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_magnitude.exp(), self.phase)
    }

    /// Principal logarithm `ln|z| + i arg z`.
    pub fn ln(&self) -> Complex64 {
        Complex64::new(self.log_magnitude, self.phase)
    }

    pub fn inv(&self) -> Self {
        Self::from_log_polar(-self.log_magnitude, -self.phase)
    }

    pub fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return if k > 0 {
                Self::ZERO
            } else {
                Self::from_log_polar(f64::INFINITY, 0.0)
            };
        }
        Self::from_log_polar(self.log_magnitude * k as f64, self.phase * k as f64)
    }

    pub fn scale_complex(&self, z: Complex64) -> Self {
        *self * Self::from_complex(z)
    }

    /// Sum of scaled values, normalised by the largest magnitude before
    /// converting so that no intermediate leaves double range.
    pub fn sum(values: &[ScaledComplex]) -> ScaledComplex {
        let top = values
            .iter()
            .map(|v| v.log_magnitude)
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let acc: Complex64 = values
            .iter()
            .filter(|v| !v.is_zero())
            .map(|v| Complex64::from_polar((v.log_magnitude - top).exp(), v.phase))
            .sum();
        let s = Self::from_complex(acc);
        Self::from_log_polar(s.log_magnitude + top, s.phase)
    }

    /// `|a - b| / max(|a|, |b|)`, and 0 when both vanish.
    pub fn relative_difference(a: ScaledComplex, b: ScaledComplex) -> f64 {
        let top = a.log_magnitude.max(b.log_magnitude);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let diff = Self::sum(&[a, -b]);
        (diff.log_magnitude - top).exp()
    }
}

impl Default for ScaledComplex {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<Complex64> for ScaledComplex {
    fn from(z: Complex64) -> Self {
        Self::from_complex(z)
    }
}

impl Mul for ScaledComplex {
    type Output = ScaledComplex;
    fn mul(self, rhs: ScaledComplex) -> ScaledComplex {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::from_log_polar(
            self.log_magnitude + rhs.log_magnitude,
            self.phase + rhs.phase,
        )
    }
}

impl Div for ScaledComplex {
    type Output = ScaledComplex;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: ScaledComplex) -> ScaledComplex {
        self * rhs.inv()
    }
}

impl Neg for ScaledComplex {
    type Output = ScaledComplex;
    fn neg(self) -> ScaledComplex {
        if self.is_zero() {
            return self;
        }
        Self::from_log_polar(self.log_magnitude, self.phase + PI)
    }
}

impl fmt::Display for ScaledComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})·e^(i·{})", self.log_magnitude, self.phase)
    }
}
