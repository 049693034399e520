//! Order-of-magnitude relations for a quantized test mass probing the
//! gravitational field, and the speed-of-light bookkeeping of the metric
//! uncertainty bound.
//!
//! All relations hold up to factors of order one; they are evaluated here
//! with every such factor set to 1.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::quantity::{dims_equal, Constants, Quantity, G, HBAR};

/// Mass `M` (kg), packet size `r` (m), averaging time `T` (s) and volume
/// `V` (m³, `r³` when absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestMassConfig {
    pub mass: f64,
    pub r: f64,
    pub t: f64,
    #[serde(default)]
    pub volume: Option<f64>,
}

impl TestMassConfig {
    pub fn new(mass: f64, r: f64, t: f64) -> Self {
        Self { mass, r, t, volume: None }
    }

    pub fn volume(&self) -> f64 {
        self.volume.unwrap_or(self.r * self.r * self.r)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("mass", self.mass)?;
        ensure_positive("r", self.r)?;
        ensure_positive("t", self.t)?;
        if let Some(v) = self.volume {
            ensure_positive("volume", v)?;
        }
        Ok(())
    }
}

/// `ħ/(MrT)`, m/s².
pub fn quantum_g_uncertainty(cfg: &TestMassConfig) -> f64 {
    HBAR / (cfg.mass * cfg.r * cfg.t)
}

/// `GM/r²`, m/s².
pub fn gravity_g_uncertainty(cfg: &TestMassConfig) -> f64 {
    G * cfg.mass / (cfg.r * cfg.r)
}

/// `√(ħr/(GT))`, kg: the mass at which the two uncertainties coincide.
pub fn optimal_testmass(r: f64, t: f64) -> f64 {
    (HBAR * r / (G * t)).sqrt()
}

/// `√(ħG/(VT))`, m/s².
pub fn optimal_precision(volume: f64, t: f64) -> f64 {
    (HBAR * G / (volume * t)).sqrt()
}

/// `Mr²/ħ`, s.
pub fn retention_time(mass: f64, r: f64) -> f64 {
    mass * r * r / HBAR
}

/// `M g² t³/(6ħ)`, rad: the time integral of `½Mg²t'²` over `ħ`.
pub fn freefall_phase(mass: f64, g: f64, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    Ok(mass * g * g * t * t * t / (6.0 * HBAR))
}

/// Averaging time equal to the retention time of the optimal mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentPoint {
    /// s.
    pub t: f64,
    /// kg.
    pub mass: f64,
    /// `|T - M*(T) r²/ħ| / T`.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `T = M*(T) r²/ħ` by fixed-point iteration on `ln T`.
pub fn self_consistent_time(r: f64) -> Result<SelfConsistentPoint> {
    ensure_positive("r", r)?;
    // ln T ↦ ln(M*(T) r²/ħ) has slope -1/2, so the iteration contracts.
    let step = |x: f64| retention_time(optimal_testmass(r, x.exp()), r).ln();
    let mut x = 0.0;
    for i in 1..=200 {
        let next = step(x);
        if !next.is_finite() {
            return Err(Error::Numeric("self-consistent time iteration diverged".into()));
        }
        let done = (next - x).abs() <= 1e-15 * next.abs().max(1.0);
        x = next;
        if done {
            let t = x.exp();
            let mass = optimal_testmass(r, t);
            return Ok(SelfConsistentPoint {
                t,
                mass,
                residual: (t - retention_time(mass, r)).abs() / t,
                iterations: i,
            });
        }
    }
    Err(Error::Numeric("self-consistent time iteration did not settle".into()))
}

/// Substitutions tried by [`unruh_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FourVolume {
    /// `V⁽⁴⁾ = cVT`.
    #[default]
    WithC,
    /// `V⁽⁴⁾ = VT`, a deliberately wrong substitution.
    WithoutC,
}

/// Powers of `c` on the two sides of the metric-fluctuation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnruhReport {
    pub lhs_c_exponent: Rational64,
    pub rhs_c_exponent: Rational64,
    /// `lhs - rhs`.
    pub difference: Rational64,
    /// Both sides carry the same length, time and mass exponents.
    pub dims_match: bool,
    /// With `c` cleared, `δΦ δ∇²Φ` and `ħG/(VT)` share dimensions.
    pub reduced_dims_match: bool,
}

/// Substitutes `δg₀₀ = 2c⁻²δΦ`, `δG⁰⁰ = ½c⁻²δ∇²Φ` into
/// `δg₀₀ δG⁰⁰ ≥ ℓ²/V⁽⁴⁾` with `ℓ² = ħG/c³`, keeping `c` symbolic.
pub fn unruh_check(four_volume: FourVolume) -> UnruhReport {
    let k = Constants::SI;
    let c = Quantity::symbolic_c();
    let phi = Quantity::from_ints(1.0, 2, -2, 0);
    let lap_phi = phi * Quantity::from_ints(1.0, -2, 0, 0);
    let volume = Quantity::from_ints(1.0, 3, 0, 0);
    let time = Quantity::from_ints(1.0, 0, 1, 0);

    let g00 = Quantity::dimensionless(2.0) * c.powr(Rational64::from_integer(-2)) * phi;
    let ein00 = Quantity::dimensionless(0.5) * c.powr(Rational64::from_integer(-2)) * lap_phi;
    let lhs = g00 * ein00;

    let planck_sq = k.planck_length_symbolic().powr(Rational64::from_integer(2));
    let v4 = match four_volume {
        FourVolume::WithC => c * volume * time,
        FourVolume::WithoutC => volume * time,
    };
    let rhs = planck_sq / v4;

    let reduced_lhs = phi * lap_phi;
    let reduced_rhs = k.hbar_quantity() * k.g_quantity() / (volume * time);
    UnruhReport {
        lhs_c_exponent: lhs.c_exponent,
        rhs_c_exponent: rhs.c_exponent,
        difference: lhs.c_exponent - rhs.c_exponent,
        dims_match: lhs.length == rhs.length && lhs.time == rhs.time && lhs.mass == rhs.mass,
        reduced_dims_match: dims_equal(&reduced_lhs, &reduced_rhs),
    }
}

/// [`unruh_check`] with the correct four-volume.
pub fn unruh_c_cancellation() -> UnruhReport {
    unruh_check(FourVolume::WithC)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussLegendre;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn unit_inputs_reproduce_constants() {
        let one = TestMassConfig::new(1.0, 1.0, 1.0);
        assert_eq!(quantum_g_uncertainty(&one), HBAR);
        assert_eq!(gravity_g_uncertainty(&one), G);
        assert_eq!(optimal_testmass(1.0, 1.0), (HBAR / G).sqrt());
        assert_eq!(optimal_precision(1.0, 1.0), (HBAR * G).sqrt());
        assert_eq!(retention_time(1.0, 1.0), 1.0 / HBAR);
        assert_eq!(one.volume(), 1.0);
    }

    #[test]
    fn simple_scalings() {
        let a = TestMassConfig::new(3.0, 0.5, 2.0);
        let m2 = TestMassConfig { mass: 6.0, ..a };
        let r2 = TestMassConfig { r: 1.0, ..a };
        assert!(rel(quantum_g_uncertainty(&m2), quantum_g_uncertainty(&a) / 2.0) < 1e-15);
        assert!(rel(gravity_g_uncertainty(&m2), 2.0 * gravity_g_uncertainty(&a)) < 1e-15);
        assert!(rel(gravity_g_uncertainty(&r2), gravity_g_uncertainty(&a) / 4.0) < 1e-15);
        assert!(rel(optimal_precision(4.0, 2.0), optimal_precision(1.0, 2.0) / 2.0) < 1e-15);
        assert!(rel(retention_time(3.0, 1.0), 4.0 * retention_time(3.0, 0.5)) < 1e-15);
    }

    #[test]
    fn uncertainties_coincide_at_optimal_mass() {
        let mut rng = stream(77, 0, 0);
        for _ in 0..100 {
            let r = 10f64.powf(rng.random_range(-9.0..1.0));
            let t = 10f64.powf(rng.random_range(-3.0..4.0));
            let cfg = TestMassConfig::new(optimal_testmass(r, t), r, t);
            let q = quantum_g_uncertainty(&cfg);
            assert!(rel(q, gravity_g_uncertainty(&cfg)) < 1e-12);
            assert!(rel(q, optimal_precision(r * r * r, t)) < 1e-12);
            assert!(rel(q * q, HBAR * G / (r * r * r * t)) < 1e-12);
        }
    }

    #[test]
    fn self_consistent_time_matches_closed_form() {
        for r in [1e-9, 1e-6, 1e-3, 1.0] {
            let p = self_consistent_time(r).unwrap();
            assert!(p.residual < 1e-10);
            let closed = (r.powi(5) / (HBAR * G)).cbrt();
            assert!(rel(p.t, closed) < 1e-12, "{} vs {closed}", p.t);
        }
    }

    #[test]
    fn freefall_phase_is_integrated_kinetic_energy() {
        assert_eq!(freefall_phase(2.0, 9.8, 0.0).unwrap(), 0.0);
        let p1 = freefall_phase(2.0, 9.8, 1.5).unwrap();
        assert!(rel(freefall_phase(2.0, 9.8, 3.0).unwrap(), 8.0 * p1) < 1e-15);
        let (m, g, t) = (1e-14, 9.81, 0.7);
        let gl = GaussLegendre::new(8);
        let quad = gl.integrate(0.0, t, |s| 0.5 * m * g * g * s * s) / HBAR;
        assert!(rel(quad, freefall_phase(m, g, t).unwrap()) <= 1e-10);
        assert!(freefall_phase(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn speed_of_light_cancels() {
        let r = unruh_c_cancellation();
        assert_eq!(r.lhs_c_exponent, Rational64::from_integer(-4));
        assert_eq!(r.rhs_c_exponent, Rational64::from_integer(-4));
        assert_eq!(r.difference, Rational64::from_integer(0));
        assert!(r.dims_match && r.reduced_dims_match);
    }

    #[test]
    fn dropping_c_from_four_volume_is_caught() {
        let r = unruh_check(FourVolume::WithoutC);
        assert_eq!(r.difference, Rational64::from_integer(-1));
        assert!(!r.dims_match);
    }

    proptest! {
        #[test]
        fn relations_are_homogeneous(
            lm in -20.0f64..5.0, lr in -9.0f64..2.0, lt in -3.0f64..4.0, s in 0.1f64..10.0
        ) {
            let (m, r, t) = (10f64.powf(lm), 10f64.powf(lr), 10f64.powf(lt));
            let c = TestMassConfig::new(m, r, t);
            let tol = 1e-13;
            prop_assert!(rel(quantum_g_uncertainty(&TestMassConfig::new(s * m, s * r, s * t)),
                quantum_g_uncertainty(&c) / s.powi(3)) < tol);
            prop_assert!(rel(gravity_g_uncertainty(&TestMassConfig::new(s * m, s * r, t)),
                gravity_g_uncertainty(&c) / s) < tol);
            prop_assert!(rel(optimal_testmass(s * r, s * t), optimal_testmass(r, t)) < tol);
            prop_assert!(rel(optimal_precision(s * r, s * t), optimal_precision(r, t) / s) < tol);
            prop_assert!(rel(retention_time(s * m, s * r), s.powi(3) * retention_time(m, r)) < tol);
            prop_assert!(rel(freefall_phase(m, s * r, s * t).unwrap(),
                s.powi(5) * freefall_phase(m, r, t).unwrap()) < tol);
        }
    }
}
