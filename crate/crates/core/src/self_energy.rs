//! Gravitational interaction integrals and the self-energy difference.
//!
//! `I(d) = G ∬ ρ(x) ρ(x' - d) / |x - x'| d³x d³x'` is the (positive)
//! interaction energy magnitude between a density and its copy shifted by
//! `d`; the Newton interaction potential is `U(d) = -I(d)`. The reported
//! self-energy difference is `E_Δ = I(0) - I(d)`, which is one half of
//! `G ∬ Δρ(x) Δρ(x') / |x - x'|` with `Δρ = ρ₁ - ρ₂`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::kernel::{bilinear_form, quadratic_form, CellSet, SelfTermMode};
use crate::mass::{norm, sub, BranchGrids, MassDistribution, RegulatorShape, SuperpositionScenario, Vec3};
use crate::quad::{GaussLegendre, Neumaier};
use crate::quantity::G;

/// Gaussian tails are kept out to this many widths by default.
pub const DEFAULT_GAUSSIAN_PADDING: f64 = 4.0;
/// Default cells per smallest smearing length.
pub const DEFAULT_CELLS_PER_LENGTH: f64 = 6.0;
pub const DEFAULT_MAX_CELLS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSettings {
    /// Lattice spacing `h`, m.
    pub cell_size: f64,
    /// Margin around the compact support; also the truncation radius of
    /// Gaussian components, m.
    pub padding: f64,
    #[serde(default)]
    pub self_term: SelfTermMode,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

impl QuadratureSettings {
    pub fn new(cell_size: f64, padding: f64) -> Self {
        Self {
            cell_size,
            padding,
            self_term: SelfTermMode::Calibrated,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }

    /// `h` = smallest smearing length / `cells_per_length`; padding wide
    /// enough for Gaussian tails when the model has any.
    pub fn for_distribution(rho: &MassDistribution, cells_per_length: f64) -> Self {
        let l = rho.smallest_length();
        let padding = if rho.has_gaussian_tails() {
            DEFAULT_GAUSSIAN_PADDING * gaussian_width(rho)
        } else {
            0.0
        };
        Self::new(l / cells_per_length, padding)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("cell_size", self.cell_size)?;
        if !(self.padding >= 0.0 && self.padding.is_finite()) {
            return Err(Error::Domain(format!("padding must be >= 0, got {}", self.padding)));
        }
        if self.max_cells == 0 {
            return Err(Error::Domain("max_cells must be > 0".into()));
        }
        Ok(())
    }

    fn coarsened(&self) -> Self {
        Self {
            cell_size: 2.0 * self.cell_size,
            ..*self
        }
    }
}

/// Largest Gaussian width in the model (0 when there is none).
fn gaussian_width(rho: &MassDistribution) -> f64 {
    match rho {
        MassDistribution::Gaussian { sigma, .. } => *sigma,
        MassDistribution::SmearedPoints { points } => points
            .iter()
            .filter(|p| p.regulator_shape == RegulatorShape::Gaussian)
            .map(|p| p.regulator_radius)
            .fold(0.0, f64::max),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMethod {
    ClosedForm,
    GridSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    /// Energy in joules.
    pub value: f64,
    pub method: EnergyMethod,
    /// `|E(h) - E(2h)| / |E(h)|` for grid sums, 0 for closed forms.
    pub relative_error: f64,
    /// True when a small negative grid-sum value was clamped to zero.
    pub clamped: bool,
    /// Occupied cells in the grid sum (0 for closed forms).
    pub cells: usize,
}

impl EnergyResult {
    fn closed(value: f64) -> Self {
        Self {
            value,
            method: EnergyMethod::ClosedForm,
            relative_error: 0.0,
            clamped: false,
            cells: 0,
        }
    }
}

/// `⟨1/|r + Y|⟩` for `Y ~ N(0, s² I)`: `erf(r / (s√2)) / r`.
fn gaussian_pair_kernel(r: f64, s: f64) -> f64 {
    let x = r / (s * SQRT_2);
    if x < 1e-4 {
        // erf(x)/x series; avoids 0/0 at r = 0.
        FRAC_2_SQRT_PI / (s * SQRT_2) * (1.0 - x * x / 3.0 + x.powi(4) / 10.0)
    } else {
        libm::erf(x) / r
    }
}

/// Self-interaction minus shifted interaction of a unit Gaussian pair,
/// `1/(σ√π) - erf(d/(2σ))/d`, stable for small `d`.
fn gaussian_edelta_kernel(d: f64, sigma: f64) -> f64 {
    let x = d / (2.0 * sigma);
    let head = 1.0 / (sigma * PI.sqrt());
    if x < 1e-3 {
        let x2 = x * x;
        head * (x2 / 3.0 - x2 * x2 / 10.0 + x2 * x2 * x2 / 42.0)
    } else {
        head - libm::erf(x) / d
    }
}

/// One-component view used by the closed-form pair sums.
struct Blob {
    center: Vec3,
    mass: f64,
    length: f64,
    shape: RegulatorShape,
}

fn blobs(rho: &MassDistribution) -> Option<Vec<Blob>> {
    match rho {
        MassDistribution::Gaussian {
            center,
            mass,
            sigma,
        } => Some(vec![Blob {
            center: *center,
            mass: *mass,
            length: *sigma,
            shape: RegulatorShape::Gaussian,
        }]),
        MassDistribution::UniformSphere {
            center,
            mass,
            radius,
        } => Some(vec![Blob {
            center: *center,
            mass: *mass,
            length: *radius,
            shape: RegulatorShape::UniformBall,
        }]),
        MassDistribution::SmearedPoints { points } => Some(
            points
                .iter()
                .map(|p| Blob {
                    center: p.position,
                    mass: p.mass,
                    length: p.regulator_radius,
                    shape: p.regulator_shape,
                })
                .collect(),
        ),
        MassDistribution::Grid(_) => None,
    }
}

/// Closed-form `G m_a m_b ⟨1/r⟩` for one pair at centre separation `r`,
/// when one exists.
fn pair_closed_form(a: &Blob, b: &Blob, r: f64) -> Option<f64> {
    let gm2 = G * a.mass * b.mass;
    match (a.shape, b.shape) {
        (RegulatorShape::Gaussian, RegulatorShape::Gaussian) => {
            let s = (a.length * a.length + b.length * b.length).sqrt();
            Some(gm2 * gaussian_pair_kernel(r, s))
        }
        (RegulatorShape::UniformBall, RegulatorShape::UniformBall) => {
            if r >= a.length + b.length {
                Some(gm2 / r)
            } else if r == 0.0 && a.length == b.length {
                Some(1.2 * gm2 / a.length)
            } else {
                None
            }
        }
        _ => None,
    }
}

fn closed_form_interaction(rho: &MassDistribution, d: Vec3) -> Option<f64> {
    let parts = blobs(rho)?;
    let mut acc = Neumaier::default();
    for a in &parts {
        for b in &parts {
            let r = norm(sub([b.center[0] + d[0], b.center[1] + d[1], b.center[2] + d[2]], a.center));
            acc.add(pair_closed_form(a, b, r)?);
        }
    }
    Some(acc.sum())
}

fn check_grid_result(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is not finite")))
    }
}

fn grid_interaction(rho: &MassDistribution, d: Vec3, q: &QuadratureSettings) -> Result<(f64, usize)> {
    let grids = BranchGrids::build(rho, &rho.displace(d), q.cell_size, q.padding, q.max_cells)?;
    let a = CellSet::from_box(&grids.ibox, &grids.first);
    let b = CellSet::from_box(&grids.ibox, &grids.second);
    let v = G / q.cell_size * bilinear_form(&a, &b, q.self_term.coefficient());
    Ok((check_grid_result(v, "interaction grid sum")?, a.len().max(b.len())))
}

fn relative_change(fine: f64, coarse: f64) -> f64 {
    if fine == 0.0 {
        if coarse == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((fine - coarse) / fine).abs()
    }
}

/// `I(d)`: closed form for Gaussians (any `d`), spheres (`d = 0` or
/// `|d| >= 2R`) and smeared points whose every component pair is covered by
/// those rules; a lattice double sum otherwise.
pub fn interaction_integral(rho: &MassDistribution, d: Vec3, q: &QuadratureSettings) -> Result<EnergyResult> {
    rho.validate()?;
    q.validate()?;
    if let Some(v) = closed_form_interaction(rho, d) {
        return Ok(EnergyResult::closed(v));
    }
    interaction_integral_grid(rho, d, q)
}

/// `I(d)` by the lattice double sum even where a closed form exists.
pub fn interaction_integral_grid(rho: &MassDistribution, d: Vec3, q: &QuadratureSettings) -> Result<EnergyResult> {
    rho.validate()?;
    q.validate()?;
    let (fine, cells) = grid_interaction(rho, d, q)?;
    let (coarse, _) = grid_interaction(rho, d, &q.coarsened())?;
    Ok(EnergyResult {
        value: fine,
        method: EnergyMethod::GridSum,
        relative_error: relative_change(fine, coarse),
        clamped: false,
        cells,
    })
}

fn closed_form_edelta(s: &SuperpositionScenario) -> Option<f64> {
    let d = s.displacement;
    match &s.distribution {
        MassDistribution::Gaussian { mass, sigma, .. } => {
            Some(G * mass * mass * gaussian_edelta_kernel(norm(d), *sigma))
        }
        rho => {
            let i0 = closed_form_interaction(rho, [0.0; 3])?;
            let id = closed_form_interaction(rho, d)?;
            Some(i0 - id)
        }
    }
}

/// `½(I₁₁ + I₂₂) - I₁₂` on the shared lattice, in joules, before clamping.
fn grid_edelta(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<(f64, usize)> {
    let grids = BranchGrids::for_scenario(s, q.cell_size, q.padding, q.max_cells)?;
    let a = CellSet::from_box(&grids.ibox, &grids.first);
    let b = CellSet::from_box(&grids.ibox, &grids.second);
    let diag = q.self_term.coefficient();
    let i11 = quadratic_form(&a, diag);
    let i22 = quadratic_form(&b, diag);
    let i12 = bilinear_form(&a, &b, diag);
    let v = G / q.cell_size * (0.5 * (i11 + i22) - i12);
    Ok((check_grid_result(v, "self-energy grid sum")?, a.len() + b.len()))
}

/// `E_Δ = I(0) - I(d)`, exactly zero for `d = 0`.
pub fn e_delta(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<EnergyResult> {
    s.validate()?;
    q.validate()?;
    if s.displacement == [0.0; 3] {
        return Ok(EnergyResult::closed(0.0));
    }
    if let Some(v) = closed_form_edelta(s) {
        let mut r = EnergyResult::closed(v.max(0.0));
        r.clamped = v < 0.0;
        return Ok(r);
    }
    let (fine, cells) = grid_edelta(s, q)?;
    let (coarse, _) = grid_edelta(s, &q.coarsened())?;
    Ok(EnergyResult {
        value: fine.max(0.0),
        method: EnergyMethod::GridSum,
        relative_error: relative_change(fine, coarse),
        clamped: fine < 0.0,
        cells,
    })
}

/// Direct double sum `(G/2) Σᵢ Σⱼ Δmᵢ Δmⱼ Kᵢⱼ` over the rasterized branch
/// difference. Independent of the closed forms; used as the oracle.
pub fn e_delta_bruteforce(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<f64> {
    s.validate()?;
    q.validate()?;
    let grids = BranchGrids::for_scenario(s, q.cell_size, q.padding, q.max_cells)?;
    let delta: Vec<f64> = grids.first.iter().zip(&grids.second).map(|(a, b)| a - b).collect();
    let cells = CellSet::from_box(&grids.ibox, &delta);
    let v = 0.5 * G / q.cell_size * quadratic_form(&cells, q.self_term.coefficient());
    check_grid_result(v, "brute-force double sum")
}

// ---------------------------------------------------------------------------
// Acceleration-field measure

/// Fraction of a unit Gaussian's mass inside radius `r`.
fn gaussian_enclosed(r: f64, sigma: f64) -> f64 {
    let u = r / (sigma * SQRT_2);
    if u < 1e-3 {
        2.0 * FRAC_2_SQRT_PI / 3.0 * u.powi(3) * (1.0 - 0.6 * u * u)
    } else {
        libm::erf(u) - FRAC_2_SQRT_PI * u * (-u * u).exp()
    }
}

/// Accumulates the field of a spherically symmetric blob at `x`.
fn add_blob_field(acc: &mut Vec3, x: Vec3, c: Vec3, mass: f64, length: f64, shape: RegulatorShape) {
    let rv = sub(x, c);
    let r = norm(rv);
    if r == 0.0 {
        return;
    }
    let enclosed = match shape {
        RegulatorShape::Gaussian => gaussian_enclosed(r, length),
        RegulatorShape::UniformBall => {
            if r >= length {
                1.0
            } else {
                (r / length).powi(3)
            }
        }
    };
    let f = -G * mass * enclosed / (r * r * r);
    acc[0] += f * rv[0];
    acc[1] += f * rv[1];
    acc[2] += f * rv[2];
}

/// Gravitational acceleration `g = -∇Φ` of a density, m/s². Grid cells are
/// treated as uniform balls of the cell volume.
pub fn acceleration_field(rho: &MassDistribution, x: Vec3) -> Vec3 {
    let mut g = [0.0; 3];
    match rho {
        MassDistribution::Grid(grid) => {
            let a = grid.cell_size * (3.0 / (4.0 * PI)).cbrt();
            for (c, m) in grid.occupied_cells() {
                add_blob_field(&mut g, x, c, m, a, RegulatorShape::UniformBall);
            }
        }
        other => {
            for b in blobs(other).unwrap_or_default() {
                add_blob_field(&mut g, x, b.center, b.mass, b.length, b.shape);
            }
        }
    }
    g
}

fn center_of_mass(rho: &MassDistribution) -> Vec3 {
    let mut c = [0.0; 3];
    let mut m_tot = 0.0;
    let mut push = |p: Vec3, m: f64| {
        for a in 0..3 {
            c[a] += m * p[a];
        }
        m_tot += m;
    };
    match rho {
        MassDistribution::Grid(g) => g.occupied_cells().for_each(|(p, m)| push(p, m)),
        other => blobs(other)
            .unwrap_or_default()
            .iter()
            .for_each(|b| push(b.center, b.mass)),
    }
    if m_tot > 0.0 {
        c.iter_mut().for_each(|x| *x /= m_tot);
    }
    c
}

/// Orthonormal frame whose third axis is `axis` (or z when `axis` is zero).
fn frame(axis: Vec3) -> [Vec3; 3] {
    let n = norm(axis);
    let e3 = if n > 0.0 {
        [axis[0] / n, axis[1] / n, axis[2] / n]
    } else {
        [0.0, 0.0, 1.0]
    };
    let helper = if e3[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = helper[0] * e3[0] + helper[1] * e3[1] + helper[2] * e3[2];
    let mut e1 = [helper[0] - dot * e3[0], helper[1] - dot * e3[1], helper[2] - dot * e3[2]];
    let n1 = norm(e1);
    e1.iter_mut().for_each(|x| *x /= n1);
    let e2 = [
        e3[1] * e1[2] - e3[2] * e1[1],
        e3[2] * e1[0] - e3[0] * e1[2],
        e3[0] * e1[1] - e3[1] * e1[0],
    ];
    [e1, e2, e3]
}

/// `∫ |g₁(x) - g₂(x)|² d³x`, in m⁵ s⁻⁴.
///
/// The fields are evaluated pointwise from the densities and integrated in
/// spherical coordinates about the midpoint of the two branches, polar axis
/// along the displacement; beyond the outer radius the difference field is
/// replaced by its dipole far field. Only the quadrature resolution scales
/// with `q.cell_size`.
pub fn acceleration_difference_measure(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<f64> {
    s.validate()?;
    q.validate()?;
    if s.displacement == [0.0; 3] {
        return Ok(0.0);
    }
    let rho1 = s.branch_one();
    let rho2 = s.branch_two();
    let d = s.displacement;
    let com = center_of_mass(rho1);
    let mid = [com[0] + 0.5 * d[0], com[1] + 0.5 * d[1], com[2] + 0.5 * d[2]];

    let scale = rho1.smallest_length().min(6.0 * q.cell_size);
    let (lo, hi) = rho1.support_bounds();
    let tail = q.padding.max(3.0 * gaussian_width(rho1));
    let mut extent: f64 = 0.0;
    for corner in 0..8 {
        let p = [
            if corner & 1 == 0 { lo[0] } else { hi[0] },
            if corner & 2 == 0 { lo[1] } else { hi[1] },
            if corner & 4 == 0 { lo[2] } else { hi[2] },
        ];
        extent = extent.max(norm(sub(p, mid)) + 0.5 * norm(d));
    }
    let inner = extent + tail + scale;
    let outer = 40.0 * inner;

    let mut breaks = Vec::new();
    let n_inner = ((inner / (0.5 * scale)).ceil() as usize).clamp(4, 4000);
    for i in 0..=n_inner {
        breaks.push(inner * i as f64 / n_inner as f64);
    }
    let mut r = inner;
    while r < outer {
        r = (r * 1.5).min(outer);
        breaks.push(r);
    }

    let radial = GaussLegendre::new(16);
    let polar = GaussLegendre::new(96);
    let n_phi = 48usize;
    let axes = frame(d);

    let mut acc = Neumaier::default();
    for w in breaks.windows(2) {
        for (rr, wr) in radial.points(w[0], w[1]) {
            let mut shell = Neumaier::default();
            for (ct, wt) in polar.points(-1.0, 1.0) {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                let mut ring = 0.0;
                for k in 0..n_phi {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                    let (sp, cp) = phi.sin_cos();
                    let local = [rr * st * cp, rr * st * sp, rr * ct];
                    let x = [
                        mid[0] + local[0] * axes[0][0] + local[1] * axes[1][0] + local[2] * axes[2][0],
                        mid[1] + local[0] * axes[0][1] + local[1] * axes[1][1] + local[2] * axes[2][1],
                        mid[2] + local[0] * axes[0][2] + local[1] * axes[1][2] + local[2] * axes[2][2],
                    ];
                    let g1 = acceleration_field(rho1, x);
                    let g2 = acceleration_field(&rho2, x);
                    let dg = sub(g1, g2);
                    ring += dg[0] * dg[0] + dg[1] * dg[1] + dg[2] * dg[2];
                }
                shell.add(wt * ring * 2.0 * PI / n_phi as f64);
            }
            acc.add(wr * rr * rr * shell.sum());
        }
    }
    // Dipole far field of Δρ (moment -M d): ∫_{r>L} |g|² = 8π G² p² / (3 L³).
    let p = rho1.total_mass() * norm(d);
    acc.add(8.0 * PI * G * G * p * p / (3.0 * outer.powi(3)));
    let v = acc.sum();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric("acceleration measure is not finite".into()))
    }
}
