//! The Lorentz-invariant conformal-factor correlation and its Newtonian
//! limit.
//!
//! With signature (+,-,-,-), `k = (k₀, k⃗)` and `k² = k₀² - |k⃗|²`,
//!
//! ```text
//! ⟨h(x)h(y)⟩ = ℓ²/(2π)⁴ ∫ e^{-ik(x-y)} θ(-k²)/(-k²) d⁴k,   ℓ² = ħG/c³.
//! ```
//!
//! Writing `k₀ = |k⃗| u` and integrating over directions leaves
//!
//! ```text
//! ⟨hh⟩(r, τ) = ℓ²/(2π)⁴ (4π/r) ∫₀^∞ dk sin(kr) ∫₋₁¹ du cos(kcτu) w(u),
//! ```
//!
//! where `w(u) = 1/(1 - u²)` would be the bare propagator. Its endpoint
//! singularity is smoothed to `w_ε(u) = v/(v² + ε²)`, `v = 1 - u²`.
//!
//! The time-integrated correlation is taken against a Gaussian window
//! `exp(-τ²/2T²)`, which turns the `u` integral into
//! `C(s) = ∫₋₁¹ exp(-s²u²/2) w_ε(u) du` at `s = kcT` and gives
//!
//! ```text
//! ∫ dτ e^{-τ²/2T²} ⟨hh⟩ = ℓ²/(2π)⁴ 4π√(2π) T/r ∫₀^∞ dk sin(kr) C(kcT)
//!                      → ℓ² / (4π c r (1 + ε²))      as cT/r → ∞.
//! ```
//!
//! For `Φ = c²h/2` the limit is `ħG/(16π r (1 + ε²))`, independent of `c`.
//!
//! The `k` integral runs over half-period panels `[nπ/r, (n+1)π/r]` (after
//! geometric panels from `k_min`), and the oscillating tail is summed by
//! averaging the partial sums at the last two panel ends.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::quad::{GaussLegendre, Neumaier};
use crate::quantity::{G, HBAR};

/// Beyond this many Gaussian widths the window weight is taken as zero.
const GAUSS_REACH: f64 = 9.0;
/// Upper bound on integrand evaluations for one kernel value.
const MAX_EVALUATIONS: f64 = 4e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSettings {
    /// Momentum cutoff, 1/m. Rounded up to a whole number of half-periods.
    pub k_max: f64,
    /// Infrared cutoff, 1/m.
    pub k_min: f64,
    /// Gauss-Legendre nodes per panel on both axes.
    pub resolution: usize,
    /// `ε` of the smoothed propagator.
    pub theta_width: f64,
    /// Width `T` of the Gaussian time window, s.
    pub time_window: f64,
    /// Largest accepted relative tail oscillation.
    pub tolerance: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            k_max: 50.0,
            k_min: 1e-9,
            resolution: 32,
            theta_width: 1e-2,
            time_window: 1.0,
            tolerance: 1e-2,
        }
    }
}

impl KernelSettings {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("k_min", self.k_min)?;
        ensure_positive("k_max", self.k_max)?;
        if self.k_min >= self.k_max {
            return Err(Error::Domain(format!(
                "need k_min < k_max, got {} and {}",
                self.k_min, self.k_max
            )));
        }
        if self.resolution < 16 {
            return Err(Error::Domain(format!("resolution must be >= 16, got {}", self.resolution)));
        }
        ensure_positive("theta_width", self.theta_width)?;
        ensure_positive("time_window", self.time_window)?;
        ensure_positive("tolerance", self.tolerance)
    }
}

/// A regulated integral and its tail diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Half the change of the averaged partial sum over the last period,
    /// relative to the result.
    pub tail_estimate: f64,
    /// Upper end of the `k` integration, 1/m.
    pub k_end: f64,
}

/// `w_ε(u)`.
fn smoothed_propagator(u: f64, eps: f64) -> f64 {
    let v = (1.0 - u) * (1.0 + u);
    v / (v * v + eps * eps)
}

/// Breakpoints on `[0, 1]` resolving the peak of `w_ε` near `u = 1`.
fn u_breaks(eps: f64) -> Vec<f64> {
    let mut ys = vec![0.0];
    let mut y = 0.5 * eps * 2f64.powi(-20);
    while y < 0.5 {
        ys.push(y);
        y *= 2.0;
    }
    let mut breaks: Vec<f64> = vec![0.0, 0.25];
    breaks.extend(ys.iter().rev().map(|y| 1.0 - y));
    breaks.dedup();
    breaks
}

/// Inner `u` integrals, with breakpoints computed once.
struct InnerRule {
    gl: GaussLegendre,
    eps: f64,
    breaks: Vec<f64>,
}

impl InnerRule {
    fn new(ks: &KernelSettings) -> Self {
        Self {
            gl: GaussLegendre::new(ks.resolution),
            eps: ks.theta_width,
            breaks: u_breaks(ks.theta_width),
        }
    }

    /// `C(s) = ∫₋₁¹ exp(-s²u²/2) w_ε(u) du`.
    fn gaussian(&self, s: f64) -> f64 {
        let reach = if s > 0.0 { GAUSS_REACH / s } else { f64::INFINITY };
        let f = |u: f64| (-0.5 * (s * u).powi(2)).exp() * smoothed_propagator(u, self.eps);
        let half = if reach < 0.25 {
            self.gl
                .integrate_panels(&[0.0, 0.25 * reach, 0.5 * reach, reach], f)
        } else {
            let mut br: Vec<f64> = self.breaks.iter().copied().filter(|&b| b < reach).collect();
            if reach < 1.0 {
                br.push(reach);
            }
            self.gl.integrate_panels(&br, f)
        };
        2.0 * half
    }

    /// `A(s) = ∫₋₁¹ cos(su) w_ε(u) du`.
    fn cosine(&self, s: f64) -> f64 {
        let s = s.abs();
        let f = |u: f64| (s * u).cos() * smoothed_propagator(u, self.eps);
        let mut acc = Neumaier::default();
        for w in self.breaks.windows(2) {
            let pieces = ((w[1] - w[0]) * s / (2.0 * PI)).ceil().max(1.0) as usize;
            let step = (w[1] - w[0]) / pieces as f64;
            for j in 0..pieces {
                let a = w[0] + j as f64 * step;
                acc.add(self.gl.integrate(a, a + step, f));
            }
        }
        2.0 * acc.sum()
    }
}

/// `k` breakpoints: geometric from `k_min` to `π/r`, then half-periods up
/// to the first multiple of `π/r` at or beyond `k_max`. Returns the breaks
/// and the indices of the half-period ends.
fn k_breaks(r: f64, ks: &KernelSettings) -> Result<(Vec<f64>, Vec<usize>)> {
    let half = PI / r;
    let n = (ks.k_max / half).ceil() as usize;
    if n < 3 {
        return Err(Error::Domain(format!(
            "k_max r = {} is too small; need at least three half-periods",
            ks.k_max * r
        )));
    }
    let mut breaks = vec![ks.k_min];
    let mut k = ks.k_min * 2.0;
    while k < half {
        breaks.push(k);
        k *= 2.0;
    }
    let first = ((ks.k_min / half).floor() as usize + 1).max(1);
    let mut ends = Vec::new();
    for m in first..=n {
        breaks.push(m as f64 * half);
        ends.push(breaks.len() - 1);
    }
    if ends.len() < 3 {
        return Err(Error::Domain("k_min leaves fewer than three half-periods below k_max".into()));
    }
    Ok((breaks, ends))
}

/// `∫ sin(kr) g(k) dk` from `k_min` with the averaged-partial-sum tail rule.
/// `subdivide(a, b)` gives the number of sub-panels for `[a, b]`.
fn oscillatory_integral<F, P>(r: f64, ks: &KernelSettings, g: F, subdivide: P) -> Result<KernelValue>
where
    F: Fn(f64) -> f64 + Sync,
    P: Fn(f64, f64) -> usize + Sync,
{
    let (breaks, ends) = k_breaks(r, ks)?;
    let gl = GaussLegendre::new(ks.resolution);
    let panels: Vec<f64> = breaks
        .par_windows(2)
        .map(|w| {
            let pieces = subdivide(w[0], w[1]).max(1);
            let step = (w[1] - w[0]) / pieces as f64;
            let mut acc = Neumaier::default();
            for j in 0..pieces {
                let a = w[0] + j as f64 * step;
                acc.add(gl.integrate(a, a + step, |k| (k * r).sin() * g(k)));
            }
            acc.sum()
        })
        .collect();
    let mut partial = Vec::with_capacity(breaks.len());
    let mut acc = Neumaier::default();
    partial.push(0.0);
    for p in &panels {
        acc.add(*p);
        partial.push(acc.sum());
    }
    let s = |i: usize| partial[ends[ends.len() - 1 - i]];
    let value = 0.5 * (s(0) + s(1));
    let previous = 0.5 * (s(1) + s(2));
    if !value.is_finite() {
        return Err(Error::Numeric("kernel quadrature produced a non-finite value".into()));
    }
    let tail_estimate = if value != 0.0 {
        ((value - previous) / value).abs()
    } else {
        (value - previous).abs()
    };
    if tail_estimate > ks.tolerance {
        return Err(Error::Numeric(format!(
            "oscillating tail did not settle: relative change {tail_estimate:e} over the last period \
             exceeds tolerance {:e} (r = {r}, k_end = {})",
            ks.tolerance,
            breaks[breaks.len() - 1]
        )));
    }
    Ok(KernelValue {
        value,
        tail_estimate,
        k_end: breaks[breaks.len() - 1],
    })
}

fn planck_sq(c: f64) -> f64 {
    HBAR * G / (c * c * c)
}

fn check_inputs(r: f64, c: f64, ks: &KernelSettings) -> Result<()> {
    ensure_positive("r", r)?;
    ensure_positive("c", c)?;
    ks.validate()
}

fn pointwise(r: f64, dt_sep: f64, c: f64, ks: &KernelSettings, prefactor: f64) -> Result<KernelValue> {
    check_inputs(r, c, ks)?;
    if !dt_sep.is_finite() {
        return Err(Error::Domain(format!("dt_sep must be finite, got {dt_sep}")));
    }
    let inner = InnerRule::new(ks);
    let freq = c * dt_sep.abs();
    let k_end = (ks.k_max * r / PI).ceil() * PI / r;
    let periods = k_end * freq / (2.0 * PI);
    let res = ks.resolution as f64;
    let cost = (k_end * r / PI + 64.0 + periods) * res * (inner.breaks.len() as f64 + periods) * res;
    if cost > MAX_EVALUATIONS {
        return Err(Error::Resource(format!(
            "pointwise kernel at c|dt_sep| = {freq:e} m needs about {cost:e} integrand evaluations, \
             limit is {MAX_EVALUATIONS:e}"
        )));
    }
    let mut kv = oscillatory_integral(
        r,
        ks,
        |k| inner.cosine(k * freq),
        |a, b| ((b - a) * freq / (2.0 * PI)).ceil().max(1.0) as usize,
    )?;
    kv.value *= prefactor / (2.0 * PI).powi(4) * 4.0 * PI / r;
    Ok(kv)
}

/// `⟨h h⟩` at spatial separation `r` (m) and time separation `dt_sep` (s).
pub fn conformal_kernel(r: f64, dt_sep: f64, c: f64, ks: &KernelSettings) -> Result<KernelValue> {
    pointwise(r, dt_sep, c, ks, planck_sq(c))
}

fn integrated(r: f64, c: f64, ks: &KernelSettings, prefactor: f64) -> Result<KernelValue> {
    check_inputs(r, c, ks)?;
    let inner = InnerRule::new(ks);
    let ct = c * ks.time_window;
    let mut kv = oscillatory_integral(r, ks, |k| inner.gaussian(k * ct), |_, _| 1)?;
    kv.value *= prefactor / (2.0 * PI).powi(4) * 4.0 * PI * (2.0 * PI).sqrt() * ks.time_window / r;
    Ok(kv)
}

/// `∫ dτ exp(-τ²/2T²) ⟨h h⟩(r, τ)`, s.
pub fn integrated_kernel(r: f64, c: f64, ks: &KernelSettings) -> Result<KernelValue> {
    integrated(r, c, ks, planck_sq(c))
}

/// `∫ e^{ik⃗·r⃗}/|k⃗|² d³k/(2π)³` by the same radial quadrature; `1/(4πr)`
/// in the limit.
pub fn newtonian_transform(r: f64, ks: &KernelSettings) -> Result<KernelValue> {
    ensure_positive("r", r)?;
    ks.validate()?;
    let mut kv = oscillatory_integral(r, ks, |k| 1.0 / k, |_, _| 1)?;
    kv.value /= 2.0 * PI * PI * r;
    Ok(kv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    /// m.
    pub r: f64,
    /// m/s.
    pub c: f64,
    /// Windowed `∫⟨hh⟩ dτ`, s.
    pub hh_integrated: f64,
    /// Windowed `∫⟨ΦΦ⟩ dτ = (c⁴/4) ∫⟨hh⟩ dτ`, J² s / kg².
    pub phi_integrated: f64,
    /// `phi_integrated / (ħG/r)`.
    pub ratio: f64,
    /// `ratio · 16π(1 + ε²)`, which tends to 1.
    pub normalized: f64,
    pub tail_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonianLimitTable {
    pub rows: Vec<LimitRow>,
    /// Largest max/min of `ratio` over the top half of the `c` list, across `r`.
    pub c_spread: f64,
    /// max/min of `ratio` across `r` at the largest `c`.
    pub r_spread: f64,
    /// `c_spread <= 1.1`.
    pub flat_in_c: bool,
    /// `r_spread <= 1.1`.
    pub flat_in_r: bool,
}

fn spread(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Windowed `Φ` correlation over the `(r, c)` grid; rows are ordered by `r`
/// then `c`.
pub fn newtonian_limit_check(rs: &[f64], cs: &[f64], ks: &KernelSettings) -> Result<NewtonianLimitTable> {
    ks.validate()?;
    if rs.is_empty() || cs.is_empty() {
        return Err(Error::Domain("r and c lists must be non-empty".into()));
    }
    if cs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("c values must be strictly increasing".into()));
    }
    let pairs: Vec<(f64, f64)> = rs.iter().flat_map(|&r| cs.iter().map(move |&c| (r, c))).collect();
    let eps2 = ks.theta_width * ks.theta_width;
    let rows: Vec<LimitRow> = pairs
        .par_iter()
        .map(|&(r, c)| {
            let kv = integrated_kernel(r, c, ks)?;
            let phi = 0.25 * c.powi(4) * kv.value;
            let ratio = phi * r / (HBAR * G);
            Ok(LimitRow {
                r,
                c,
                hh_integrated: kv.value,
                phi_integrated: phi,
                ratio,
                normalized: ratio * 16.0 * PI * (1.0 + eps2),
                tail_estimate: kv.tail_estimate,
            })
        })
        .collect::<Result<_>>()?;
    let nc = cs.len();
    let top = nc / 2;
    let c_spread = rows
        .chunks(nc)
        .map(|chunk| spread(chunk[top.min(nc - 1)..].iter().map(|row| row.ratio)))
        .fold(1.0, f64::max);
    let r_spread = spread(rows.chunks(nc).map(|chunk| chunk[nc - 1].ratio));
    Ok(NewtonianLimitTable {
        rows,
        c_spread,
        r_spread,
        flat_in_c: c_spread <= 1.1,
        flat_in_r: r_spread <= 1.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn fine_propagator_integral(eps: f64) -> f64 {
        // Uniform panels much finer than the peak width.
        let gl = GaussLegendre::new(20);
        let n = (20.0 / eps) as usize;
        let breaks: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        2.0 * gl.integrate_panels(&breaks, |u| smoothed_propagator(u, eps))
    }

    #[test]
    fn settings_are_validated() {
        let ks = KernelSettings::default();
        assert!(ks.validate().is_ok());
        assert!(KernelSettings { resolution: 8, ..ks }.validate().is_err());
        assert!(KernelSettings { k_min: 60.0, ..ks }.validate().is_err());
        assert!(integrated_kernel(0.01, 1e3, &ks).is_err());
    }

    #[test]
    fn inner_integrals_match_fine_quadrature() {
        let ks = KernelSettings::default();
        let inner = InnerRule::new(&ks);
        let a0 = fine_propagator_integral(ks.theta_width);
        assert!(rel(inner.cosine(0.0), a0) < 1e-10);
        assert!(rel(inner.gaussian(0.0), a0) < 1e-10);
        // Large s: Laplace expansion about u = 0, w = w0 + w2 u² + ...
        let eps2 = ks.theta_width.powi(2);
        let w0 = 1.0 / (1.0 + eps2);
        let w2 = (1.0 - eps2) / (1.0 + eps2).powi(2);
        let s = 300.0;
        let laplace = (2.0 * PI).sqrt() / s * (w0 + w2 / (s * s));
        assert!(rel(inner.gaussian(s), laplace) < 1e-8);
    }

    #[test]
    fn transform_reproduces_inverse_distance() {
        let ks = KernelSettings::default();
        for r in [1.0, 2.0, 4.0, 8.0] {
            let t = newtonian_transform(r, &ks).unwrap();
            assert!(t.k_end * r >= 50.0);
            assert!(rel(t.value, 1.0 / (4.0 * PI * r)) < 1e-3);
        }
    }

    #[test]
    fn integrated_kernel_tends_to_transform() {
        let ks = KernelSettings::default();
        for r in [1.0, 3.0] {
            let c = 1e5;
            let kv = integrated_kernel(r, c, &ks).unwrap();
            let norm = kv.value * c * (1.0 + ks.theta_width.powi(2)) / planck_sq(c);
            assert!(rel(norm, 1.0 / (4.0 * PI * r)) < 0.05, "{norm}");
        }
        let a = integrated_kernel(2.0, 1e5, &ks).unwrap().value;
        let b = integrated_kernel(4.0, 1e5, &ks).unwrap().value;
        assert!(rel(b, a / 2.0) < 0.02);
    }

    #[test]
    fn integrated_kernel_is_linear_in_planck_area() {
        let ks = KernelSettings::default();
        let a = integrated(2.0, 1e4, &ks, 1.0).unwrap().value;
        let b = integrated(2.0, 1e4, &ks, 2.0).unwrap().value;
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn cutoff_doubling_changes_little() {
        let ks = KernelSettings::default();
        let a = integrated_kernel(2.0, 1e4, &ks).unwrap().value;
        let b = integrated_kernel(2.0, 1e4, &KernelSettings { k_max: 100.0, ..ks }).unwrap().value;
        assert!(rel(b, a) < 0.05);
    }

    #[test]
    fn equal_time_kernel_matches_abel_sum() {
        // At τ = 0 the k integral is A(0) ∫ sin(kr) dk, whose averaged
        // partial sums give A(0)/r.
        let ks = KernelSettings::default();
        let (r, c) = (2.0, 1e3);
        let v = conformal_kernel(r, 0.0, c, &ks).unwrap().value;
        let a0 = fine_propagator_integral(ks.theta_width);
        let expected = planck_sq(c) * a0 / (4.0 * PI.powi(3) * r * r);
        assert!(rel(v, expected) < 1e-6, "{v:e} vs {expected:e}");
    }

    #[test]
    fn kernel_is_even_in_time_separation() {
        let ks = KernelSettings { tolerance: 0.5, ..KernelSettings::default() };
        let a = conformal_kernel(2.0, 1e-4, 1e3, &ks).unwrap();
        let b = conformal_kernel(2.0, -1e-4, 1e3, &ks).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsettled_tail_is_a_numeric_error() {
        // Away from τ = 0 the tail also oscillates at r ± cτ, which the
        // half-period average does not remove.
        let ks = KernelSettings::default();
        let e = conformal_kernel(2.0, 1e-4, 1e3, &ks).unwrap_err();
        assert!(matches!(e, Error::Numeric(ref m) if m.contains("did not settle")));
    }

    #[test]
    fn limit_table_is_flat() {
        let ks = KernelSettings::default();
        let cs: Vec<f64> = (0..6).map(|i| 250.0 * 2f64.powi(i)).collect();
        let t = newtonian_limit_check(&[1.0, 2.0, 4.0, 8.0], &cs, &ks).unwrap();
        assert_eq!(t.rows.len(), 24);
        assert!(t.flat_in_c && t.flat_in_r, "{} {}", t.c_spread, t.r_spread);
        let last = t.rows.last().unwrap();
        assert!(rel(last.normalized, 1.0) < 0.05, "{}", last.normalized);

        let single = newtonian_limit_check(&[2.0], &[1e4], &ks).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(newtonian_limit_check(&[2.0], &[2e3, 1e3], &ks).is_err());
    }
}
