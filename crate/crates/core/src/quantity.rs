//! Physical constants and a small dimensional-algebra engine.
//!
//! A [`Quantity`] carries a value together with exact rational exponents of
//! length, time and mass, plus an exponent of the speed of light that is
//! kept symbolic. Keeping `c` out of the value lets relations be checked for
//! exact cancellation of `c` rather than for numeric near-cancellation.

use std::fmt;
use std::ops::{Div, Mul};

use num_rational::Rational64;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Newtonian gravitational constant, m^3 kg^-1 s^-2.
pub const G: f64 = 6.674_30e-11;
/// Speed of light in vacuum, m/s.
pub const C: f64 = 2.997_924_58e8;

/// The constants used by every computation, fixed in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub hbar: f64,
    pub g: f64,
    pub c: f64,
}

impl Constants {
    pub const SI: Constants = Constants {
        hbar: HBAR,
        g: G,
        c: C,
    };

    /// `sqrt(hbar G / c^3)`, in metres.
    pub fn planck_length(&self) -> f64 {
        (self.hbar * self.g / (self.c * self.c * self.c)).sqrt()
    }

    pub fn hbar_quantity(&self) -> Quantity {
        Quantity::from_ints(self.hbar, 2, -1, 1)
    }

    pub fn g_quantity(&self) -> Quantity {
        Quantity::from_ints(self.g, 3, -2, -1)
    }

    /// The speed of light as an ordinary number (`c_exponent` zero).
    pub fn c_quantity(&self) -> Quantity {
        Quantity::from_ints(self.c, 1, -1, 0)
    }

    /// Planck length with `c` kept symbolic: `sqrt(hbar G) * c^(-3/2)`.
    pub fn planck_length_symbolic(&self) -> Quantity {
        let hg = self.hbar_quantity() * self.g_quantity();
        hg.powr(Rational64::new(1, 2)) * Quantity::symbolic_c().powr(Rational64::new(-3, 2))
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self::SI
    }
}

/// A value with exact exponents over (length, time, mass) and a symbolic
/// power of `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub length: Rational64,
    pub time: Rational64,
    pub mass: Rational64,
    pub c_exponent: Rational64,
}

impl Quantity {
    pub fn new(value: f64, length: Rational64, time: Rational64, mass: Rational64) -> Self {
        Self {
            value,
            length,
            time,
            mass,
            c_exponent: Rational64::zero(),
        }
    }

    pub fn from_ints(value: f64, length: i64, time: i64, mass: i64) -> Self {
        Self::new(
            value,
            Rational64::from_integer(length),
            Rational64::from_integer(time),
            Rational64::from_integer(mass),
        )
    }

    pub fn dimensionless(value: f64) -> Self {
        Self::from_ints(value, 0, 0, 0)
    }

    /// One power of the speed of light, kept symbolic: value 1, dimensions
    /// of a velocity, `c_exponent` 1.
    pub fn symbolic_c() -> Self {
        Self {
            value: 1.0,
            length: Rational64::one(),
            time: -Rational64::one(),
            mass: Rational64::zero(),
            c_exponent: Rational64::one(),
        }
    }

    /// Raises to an exact rational power. Exponents scale exactly; the value
    /// goes through `powf`.
    pub fn powr(self, p: Rational64) -> Self {
        let pf = p.to_f64().unwrap_or(f64::NAN);
        Self {
            value: if p.is_integer() {
                self.value.powi(p.to_integer() as i32)
            } else {
                self.value.powf(pf)
            },
            length: self.length * p,
            time: self.time * p,
            mass: self.mass * p,
            c_exponent: self.c_exponent * p,
        }
    }

    pub fn recip(self) -> Self {
        self.powr(-Rational64::one())
    }

    pub fn scale(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            ..self
        }
    }

    pub fn is_dimensionless(&self) -> bool {
        self.length.is_zero()
            && self.time.is_zero()
            && self.mass.is_zero()
            && self.c_exponent.is_zero()
    }

    /// True iff all four exponents agree.
    pub fn dims_equal(&self, other: &Quantity) -> bool {
        self.length == other.length
            && self.time == other.time
            && self.mass == other.mass
            && self.c_exponent == other.c_exponent
    }
}

/// Multiplies values and adds exponents.
pub fn q_mul(a: Quantity, b: Quantity) -> Quantity {
    Quantity {
        value: a.value * b.value,
        length: a.length + b.length,
        time: a.time + b.time,
        mass: a.mass + b.mass,
        c_exponent: a.c_exponent + b.c_exponent,
    }
}

pub fn dims_equal(a: &Quantity, b: &Quantity) -> bool {
    a.dims_equal(b)
}

impl Mul for Quantity {
    type Output = Quantity;

    fn mul(self, rhs: Quantity) -> Quantity {
        q_mul(self, rhs)
    }
}

impl Div for Quantity {
    type Output = Quantity;

    fn div(self, rhs: Quantity) -> Quantity {
        Quantity {
            value: self.value / rhs.value,
            length: self.length - rhs.length,
            time: self.time - rhs.time,
            mass: self.mass - rhs.mass,
            c_exponent: self.c_exponent - rhs.c_exponent,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.value)?;
        for (sym, e) in [
            ("m", self.length),
            ("s", self.time),
            ("kg", self.mass),
            ("c", self.c_exponent),
        ] {
            if !e.is_zero() {
                write!(f, " {sym}^{e}")?;
            }
        }
        Ok(())
    }
}
