//! Collapse rate and lifetime from the self-energy difference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Result};
use crate::mass::{RateConvention, SuperpositionScenario};
use crate::quantity::HBAR;
use crate::self_energy::{e_delta, EnergyMethod, QuadratureSettings};

/// Rate `Λ = E_Δ/ħ` and lifetime `τ = 1/Λ` of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// J.
    pub e_delta: f64,
    /// 1/s.
    pub lambda: f64,
    /// s; `None` when the rate is zero.
    pub tau: Option<f64>,
    pub convention: RateConvention,
    pub scenario: SuperpositionScenario,
    pub quadrature: QuadratureSettings,
    pub method: EnergyMethod,
    pub relative_error: f64,
    pub clamped: bool,
}

impl RateReport {
    /// `τ` with `+inf` standing in for a zero rate.
    pub fn tau_or_inf(&self) -> f64 {
        self.tau.unwrap_or(f64::INFINITY)
    }
}

pub fn collapse_rate(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<RateReport> {
    let e = e_delta(s, q)?;
    let lambda = e.value / HBAR;
    Ok(RateReport {
        e_delta: e.value,
        lambda,
        tau: (lambda > 0.0).then(|| 1.0 / lambda),
        convention: s.convention,
        scenario: s.clone(),
        quadrature: *q,
        method: e.method,
        relative_error: e.relative_error,
        clamped: e.clamped,
    })
}

/// One row of a separation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// m.
    pub d: f64,
    pub e_delta: f64,
    pub lambda: f64,
    pub tau: Option<f64>,
    pub relative_error: f64,
}

/// Rates for the scenario displaced by `d` along the direction of its own
/// displacement (the x axis when that is zero). Rows keep input order.
pub fn sweep_separation(s: &SuperpositionScenario, ds: &[f64], q: &QuadratureSettings) -> Result<Vec<SweepRow>> {
    for &d in ds {
        ensure_finite("separation", d)?;
        if d < 0.0 {
            return Err(domain(format!("separations must be >= 0, got {d}")));
        }
    }
    let n = s.separation();
    let dir = if n > 0.0 {
        s.displacement.map(|x| x / n)
    } else {
        [1.0, 0.0, 0.0]
    };
    ds.par_iter()
        .map(|&d| {
            let r = collapse_rate(&s.with_displacement(dir.map(|x| x * d)), q)?;
            Ok(SweepRow {
                d,
                e_delta: r.e_delta,
                lambda: r.lambda,
                tau: r.tau,
                relative_error: r.relative_error,
            })
        })
        .collect()
}

/// Minimum of `a γ + b / γ` over `γ > 0`: `(γ*, total*) = (√(b/a), 2√(ab))`.
pub fn tradeoff_minimum(a: f64, b: f64) -> Result<(f64, f64)> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(domain(format!("tradeoff coefficient {name} must be > 0, got {v}")));
        }
    }
    Ok(((b / a).sqrt(), 2.0 * (a * b).sqrt()))
}
