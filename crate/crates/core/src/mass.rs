//! Mass densities of the two superposition branches.
//!
//! Every distribution is smeared over a finite length: point masses carry a
//! regulator radius, spheres a radius, Gaussians a width and grids a cell
//! size. A zero length would make the self-energy, and hence the rate,
//! diverge, so validation rejects it.

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, ensure_positive, Error, Result};

pub type Vec3 = [f64; 3];

/// Side length of the boundary-cell subsampling used for spheres and balls.
const SPHERE_SUBSAMPLES: usize = 4;

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn ensure_finite_vec(name: &str, v: Vec3) -> Result<()> {
    for (axis, x) in v.iter().enumerate() {
        ensure_finite(&format!("{name}[{axis}]"), *x)?;
    }
    Ok(())
}

fn ensure_mass(name: &str, m: f64) -> Result<()> {
    if m.is_finite() && m >= 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and >= 0, got {m}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegulatorShape {
    /// Mass spread uniformly over a ball of the regulator radius.
    #[default]
    UniformBall,
    /// Isotropic Gaussian whose standard deviation is the regulator radius.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmearedPoint {
    pub position: Vec3,
    pub mass: f64,
    pub regulator_radius: f64,
    #[serde(default)]
    pub regulator_shape: RegulatorShape,
}

/// Cell masses on a regular lattice. `origin` is the lower corner of cell
/// `(0, 0, 0)`; the flat index of cell `(i, j, k)` is `(i * ny + j) * nz + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassGrid {
    pub origin: Vec3,
    pub cell_size: f64,
    pub shape: [usize; 3],
    pub masses: Vec<f64>,
}

impl MassGrid {
    pub fn cell_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> Vec3 {
        let h = self.cell_size;
        [
            self.origin[0] + (idx[0] as f64 + 0.5) * h,
            self.origin[1] + (idx[1] as f64 + 0.5) * h,
            self.origin[2] + (idx[2] as f64 + 0.5) * h,
        ]
    }

    fn unflatten(&self, flat: usize) -> [usize; 3] {
        let [_, ny, nz] = self.shape;
        [flat / (ny * nz), (flat / nz) % ny, flat % nz]
    }

    /// Centres and masses of the cells with non-zero mass.
    pub fn occupied_cells(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m != 0.0)
            .map(|(flat, m)| (self.cell_center(self.unflatten(flat)), *m))
    }
}

/// A mass density model for one superposition branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MassDistribution {
    SmearedPoints {
        points: Vec<SmearedPoint>,
    },
    UniformSphere {
        #[serde(default)]
        center: Vec3,
        mass: f64,
        radius: f64,
    },
    Gaussian {
        #[serde(default)]
        center: Vec3,
        mass: f64,
        sigma: f64,
    },
    Grid(MassGrid),
}

impl MassDistribution {
    pub fn gaussian(center: Vec3, mass: f64, sigma: f64) -> Result<Self> {
        let rho = Self::Gaussian {
            center,
            mass,
            sigma,
        };
        rho.validate()?;
        Ok(rho)
    }

    pub fn uniform_sphere(center: Vec3, mass: f64, radius: f64) -> Result<Self> {
        let rho = Self::UniformSphere {
            center,
            mass,
            radius,
        };
        rho.validate()?;
        Ok(rho)
    }

    pub fn smeared_points(points: Vec<SmearedPoint>) -> Result<Self> {
        let rho = Self::SmearedPoints { points };
        rho.validate()?;
        Ok(rho)
    }

    pub fn grid(grid: MassGrid) -> Result<Self> {
        let rho = Self::Grid(grid);
        rho.validate()?;
        Ok(rho)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::SmearedPoints { .. } => "smeared-points",
            Self::UniformSphere { .. } => "uniform-sphere",
            Self::Gaussian { .. } => "gaussian",
            Self::Grid(_) => "grid",
        }
    }

    /// Checks masses, positions and smearing lengths.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SmearedPoints { points } => {
                if points.is_empty() {
                    return Err(domain("smeared-points needs at least one point"));
                }
                for (i, p) in points.iter().enumerate() {
                    ensure_finite_vec(&format!("points[{i}].position"), p.position)?;
                    ensure_mass(&format!("points[{i}].mass"), p.mass)?;
                    ensure_positive(&format!("points[{i}].regulator_radius"), p.regulator_radius)?;
                }
            }
            Self::UniformSphere {
                center,
                mass,
                radius,
            } => {
                ensure_finite_vec("center", *center)?;
                ensure_mass("mass", *mass)?;
                ensure_positive("radius", *radius)?;
            }
            Self::Gaussian {
                center,
                mass,
                sigma,
            } => {
                ensure_finite_vec("center", *center)?;
                ensure_mass("mass", *mass)?;
                ensure_positive("sigma", *sigma)?;
            }
            Self::Grid(g) => {
                ensure_finite_vec("origin", g.origin)?;
                ensure_positive("cell_size", g.cell_size)?;
                if g.shape.contains(&0) {
                    return Err(domain("grid shape must be non-zero on every axis"));
                }
                if g.masses.len() != g.cell_count() {
                    return Err(domain(format!(
                        "grid has {} masses for shape {:?}",
                        g.masses.len(),
                        g.shape
                    )));
                }
                for (i, m) in g.masses.iter().enumerate() {
                    ensure_mass(&format!("masses[{i}]"), *m)?;
                }
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::SmearedPoints { points } => points.iter().map(|p| p.mass).sum(),
            Self::UniformSphere { mass, .. } | Self::Gaussian { mass, .. } => *mass,
            Self::Grid(g) => g.masses.iter().sum(),
        }
    }

    /// Translates every position by `d`; masses are untouched.
    pub fn displace(&self, d: Vec3) -> Self {
        match self {
            Self::SmearedPoints { points } => Self::SmearedPoints {
                points: points
                    .iter()
                    .map(|p| SmearedPoint {
                        position: add(p.position, d),
                        ..p.clone()
                    })
                    .collect(),
            },
            Self::UniformSphere {
                center,
                mass,
                radius,
            } => Self::UniformSphere {
                center: add(*center, d),
                mass: *mass,
                radius: *radius,
            },
            Self::Gaussian {
                center,
                mass,
                sigma,
            } => Self::Gaussian {
                center: add(*center, d),
                mass: *mass,
                sigma: *sigma,
            },
            Self::Grid(g) => Self::Grid(MassGrid {
                origin: add(g.origin, d),
                ..g.clone()
            }),
        }
    }

    /// Multiplies every mass by `factor`.
    pub fn scale_mass(&self, factor: f64) -> Self {
        match self {
            Self::SmearedPoints { points } => Self::SmearedPoints {
                points: points
                    .iter()
                    .map(|p| SmearedPoint {
                        mass: p.mass * factor,
                        ..p.clone()
                    })
                    .collect(),
            },
            Self::UniformSphere {
                center,
                mass,
                radius,
            } => Self::UniformSphere {
                center: *center,
                mass: mass * factor,
                radius: *radius,
            },
            Self::Gaussian {
                center,
                mass,
                sigma,
            } => Self::Gaussian {
                center: *center,
                mass: mass * factor,
                sigma: *sigma,
            },
            Self::Grid(g) => Self::Grid(MassGrid {
                masses: g.masses.iter().map(|m| m * factor).collect(),
                ..g.clone()
            }),
        }
    }

    /// Multiplies every length (positions, radii, widths, cell sizes) by `factor`.
    pub fn scale_lengths(&self, factor: f64) -> Self {
        let s = |v: Vec3| [v[0] * factor, v[1] * factor, v[2] * factor];
        match self {
            Self::SmearedPoints { points } => Self::SmearedPoints {
                points: points
                    .iter()
                    .map(|p| SmearedPoint {
                        position: s(p.position),
                        regulator_radius: p.regulator_radius * factor,
                        ..p.clone()
                    })
                    .collect(),
            },
            Self::UniformSphere {
                center,
                mass,
                radius,
            } => Self::UniformSphere {
                center: s(*center),
                mass: *mass,
                radius: radius * factor,
            },
            Self::Gaussian {
                center,
                mass,
                sigma,
            } => Self::Gaussian {
                center: s(*center),
                mass: *mass,
                sigma: sigma * factor,
            },
            Self::Grid(g) => Self::Grid(MassGrid {
                origin: s(g.origin),
                cell_size: g.cell_size * factor,
                ..g.clone()
            }),
        }
    }

    /// The smallest smearing length in the model.
    pub fn smallest_length(&self) -> f64 {
        match self {
            Self::SmearedPoints { points } => points
                .iter()
                .map(|p| p.regulator_radius)
                .fold(f64::INFINITY, f64::min),
            Self::UniformSphere { radius, .. } => *radius,
            Self::Gaussian { sigma, .. } => *sigma,
            Self::Grid(g) => g.cell_size,
        }
    }

    pub fn has_gaussian_tails(&self) -> bool {
        match self {
            Self::Gaussian { .. } => true,
            Self::SmearedPoints { points } => points
                .iter()
                .any(|p| p.regulator_shape == RegulatorShape::Gaussian),
            _ => false,
        }
    }

    /// Lower and upper corners of the compact support. Gaussian components
    /// contribute only their centre; their tails are governed by the
    /// rasterization padding.
    pub fn support_bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut grow = |c: Vec3, r: f64| {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a] - r);
                hi[a] = hi[a].max(c[a] + r);
            }
        };
        match self {
            Self::SmearedPoints { points } => {
                for p in points {
                    let r = match p.regulator_shape {
                        RegulatorShape::UniformBall => p.regulator_radius,
                        RegulatorShape::Gaussian => 0.0,
                    };
                    grow(p.position, r);
                }
            }
            Self::UniformSphere { center, radius, .. } => grow(*center, *radius),
            Self::Gaussian { center, .. } => grow(*center, 0.0),
            Self::Grid(g) => {
                for a in 0..3 {
                    lo[a] = g.origin[a];
                    hi[a] = g.origin[a] + g.shape[a] as f64 * g.cell_size;
                }
            }
        }
        (lo, hi)
    }

    /// Re-expresses the density as cell masses on a lattice of spacing `h`
    /// anchored at the coordinate origin (or at the input grid's own origin
    /// when the input is a grid with the same spacing, which is returned
    /// unchanged).
    ///
    /// Per kind: Gaussians use exact per-cell integrals (products of error
    /// function differences) truncated at `padding` from the centre; spheres
    /// and balls classify cells as inside, outside or boundary, subsample
    /// boundary cells on a 4x4x4 pattern and renormalize to the exact mass;
    /// grids are redistributed by exact cell-overlap volumes.
    pub fn rasterize(&self, h: f64, padding: f64, max_cells: usize) -> Result<MassDistribution> {
        ensure_positive("cell size", h)?;
        if !(padding >= 0.0 && padding.is_finite()) {
            return Err(domain(format!("padding must be finite and >= 0, got {padding}")));
        }
        self.validate()?;
        if let Self::Grid(g) = self {
            if g.cell_size == h {
                return Ok(self.clone());
            }
        }
        let lattice = Lattice::for_distribution(self, h);
        let (lo, hi) = self.support_bounds();
        let ibox = lattice.covering_box(lo, hi, padding, max_cells)?;
        let masses = self.cell_masses(&lattice, &ibox, padding);
        Ok(Self::Grid(MassGrid {
            origin: lattice.corner(ibox.lo),
            cell_size: h,
            shape: ibox.shape,
            masses,
        }))
    }

    /// Mass in every cell of `ibox` on `lattice`.
    pub(crate) fn cell_masses(&self, lattice: &Lattice, ibox: &IndexBox, padding: f64) -> Vec<f64> {
        let mut out = vec![0.0; ibox.len()];
        match self {
            Self::Gaussian {
                center,
                mass,
                sigma,
            } => add_gaussian(&mut out, lattice, ibox, *center, *mass, *sigma, padding),
            Self::UniformSphere {
                center,
                mass,
                radius,
            } => add_ball(&mut out, lattice, ibox, *center, *mass, *radius),
            Self::SmearedPoints { points } => {
                for p in points {
                    match p.regulator_shape {
                        RegulatorShape::UniformBall => {
                            add_ball(&mut out, lattice, ibox, p.position, p.mass, p.regulator_radius)
                        }
                        RegulatorShape::Gaussian => add_gaussian(
                            &mut out,
                            lattice,
                            ibox,
                            p.position,
                            p.mass,
                            p.regulator_radius,
                            padding,
                        ),
                    }
                }
            }
            Self::Grid(g) => add_grid(&mut out, lattice, ibox, g),
        }
        out
    }
}

/// A cubic lattice of spacing `h` whose cell corners sit at `anchor + n h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Lattice {
    pub h: f64,
    pub anchor: Vec3,
}

/// A box of lattice cells: `lo` is the global index of the first cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct IndexBox {
    pub lo: [i64; 3],
    pub shape: [usize; 3],
}

impl IndexBox {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn union(&self, other: &IndexBox) -> IndexBox {
        let mut lo = [0i64; 3];
        let mut shape = [0usize; 3];
        for a in 0..3 {
            lo[a] = self.lo[a].min(other.lo[a]);
            let hi = (self.lo[a] + self.shape[a] as i64).max(other.lo[a] + other.shape[a] as i64);
            shape[a] = (hi - lo[a]) as usize;
        }
        IndexBox { lo, shape }
    }

    /// Global integer index of the cell at flat position `flat`.
    pub fn global_index(&self, flat: usize) -> [i64; 3] {
        let [_, ny, nz] = self.shape;
        [
            self.lo[0] + (flat / (ny * nz)) as i64,
            self.lo[1] + ((flat / nz) % ny) as i64,
            self.lo[2] + (flat % nz) as i64,
        ]
    }

    fn flat(&self, local: [usize; 3]) -> usize {
        (local[0] * self.shape[1] + local[1]) * self.shape[2] + local[2]
    }
}

impl Lattice {
    pub fn for_distribution(rho: &MassDistribution, h: f64) -> Self {
        let anchor = match rho {
            MassDistribution::Grid(g) if g.cell_size == h => [
                g.origin[0].rem_euclid(h),
                g.origin[1].rem_euclid(h),
                g.origin[2].rem_euclid(h),
            ],
            _ => [0.0; 3],
        };
        Lattice { h, anchor }
    }

    pub fn corner(&self, idx: [i64; 3]) -> Vec3 {
        [
            self.anchor[0] + idx[0] as f64 * self.h,
            self.anchor[1] + idx[1] as f64 * self.h,
            self.anchor[2] + idx[2] as f64 * self.h,
        ]
    }

    /// Smallest box of cells covering `[lo - padding, hi + padding]`.
    pub fn covering_box(&self, lo: Vec3, hi: Vec3, padding: f64, max_cells: usize) -> Result<IndexBox> {
        let mut ilo = [0i64; 3];
        let mut shape = [0usize; 3];
        let mut total: f64 = 1.0;
        for a in 0..3 {
            let a_lo = ((lo[a] - padding - self.anchor[a]) / self.h).floor();
            let mut a_hi = ((hi[a] + padding - self.anchor[a]) / self.h).ceil();
            if a_hi <= a_lo {
                a_hi = a_lo + 1.0;
            }
            let n = a_hi - a_lo;
            total *= n;
            if !total.is_finite() || total > max_cells as f64 {
                return Err(Error::Resource(format!(
                    "rasterization needs more than {max_cells} cells at h = {:e} m",
                    self.h
                )));
            }
            ilo[a] = a_lo as i64;
            shape[a] = n as usize;
        }
        Ok(IndexBox { lo: ilo, shape })
    }
}

/// Fraction of a 1D normal(c, sigma) truncated to `[c - p, c + p]` lying in
/// each cell of one axis of the box.
fn gaussian_axis(lattice: &Lattice, lo: i64, n: usize, axis: usize, c: f64, sigma: f64, p: f64) -> Vec<f64> {
    let scale = 1.0 / (sigma * std::f64::consts::SQRT_2);
    (0..n)
        .map(|i| {
            let a = lattice.anchor[axis] + (lo + i as i64) as f64 * lattice.h;
            let b = a + lattice.h;
            let (a, b) = (a.max(c - p), b.min(c + p));
            if b <= a {
                0.0
            } else {
                0.5 * (libm::erf((b - c) * scale) - libm::erf((a - c) * scale))
            }
        })
        .collect()
}

fn add_gaussian(
    out: &mut [f64],
    lattice: &Lattice,
    ibox: &IndexBox,
    c: Vec3,
    mass: f64,
    sigma: f64,
    padding: f64,
) {
    let fx = gaussian_axis(lattice, ibox.lo[0], ibox.shape[0], 0, c[0], sigma, padding);
    let fy = gaussian_axis(lattice, ibox.lo[1], ibox.shape[1], 1, c[1], sigma, padding);
    let fz = gaussian_axis(lattice, ibox.lo[2], ibox.shape[2], 2, c[2], sigma, padding);
    for (i, x) in fx.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in fy.iter().enumerate() {
            if *y == 0.0 {
                continue;
            }
            let base = ibox.flat([i, j, 0]);
            for (k, z) in fz.iter().enumerate() {
                out[base + k] += mass * x * y * z;
            }
        }
    }
}

fn add_ball(out: &mut [f64], lattice: &Lattice, ibox: &IndexBox, c: Vec3, mass: f64, radius: f64) {
    let h = lattice.h;
    let r2 = radius * radius;
    let mut weights: Vec<(usize, f64)> = Vec::new();
    let mut range = [(0usize, 0usize); 3];
    for a in 0..3 {
        let first = (((c[a] - radius - lattice.anchor[a]) / h).floor() as i64 - ibox.lo[a]).max(0);
        let last = (((c[a] + radius - lattice.anchor[a]) / h).ceil() as i64 - ibox.lo[a])
            .min(ibox.shape[a] as i64);
        range[a] = (first as usize, last.max(first) as usize);
    }
    let sub = SPHERE_SUBSAMPLES;
    for i in range[0].0..range[0].1 {
        for j in range[1].0..range[1].1 {
            for k in range[2].0..range[2].1 {
                let corner = lattice.corner([
                    ibox.lo[0] + i as i64,
                    ibox.lo[1] + j as i64,
                    ibox.lo[2] + k as i64,
                ]);
                let mut near2 = 0.0;
                let mut far2 = 0.0;
                for a in 0..3 {
                    let (l, u) = (corner[a], corner[a] + h);
                    let nearest = c[a].clamp(l, u) - c[a];
                    let farthest = (l - c[a]).abs().max((u - c[a]).abs());
                    near2 += nearest * nearest;
                    far2 += farthest * farthest;
                }
                let w = if far2 <= r2 {
                    1.0
                } else if near2 >= r2 {
                    0.0
                } else {
                    let mut inside = 0usize;
                    for si in 0..sub {
                        for sj in 0..sub {
                            for sk in 0..sub {
                                let p = [
                                    corner[0] + (si as f64 + 0.5) * h / sub as f64 - c[0],
                                    corner[1] + (sj as f64 + 0.5) * h / sub as f64 - c[1],
                                    corner[2] + (sk as f64 + 0.5) * h / sub as f64 - c[2],
                                ];
                                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r2 {
                                    inside += 1;
                                }
                            }
                        }
                    }
                    inside as f64 / (sub * sub * sub) as f64
                };
                if w > 0.0 {
                    weights.push((ibox.flat([i, j, k]), w));
                }
            }
        }
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total > 0.0 {
        for (flat, w) in weights {
            out[flat] += mass * w / total;
        }
    } else {
        // Ball much smaller than a cell that missed every subsample: put the
        // mass in the cell holding the centre.
        let mut local = [0usize; 3];
        for a in 0..3 {
            let g = ((c[a] - lattice.anchor[a]) / h).floor() as i64 - ibox.lo[a];
            local[a] = g.clamp(0, ibox.shape[a] as i64 - 1) as usize;
        }
        out[ibox.flat(local)] += mass;
    }
}

/// Overlap lengths of source cells `[o + n hs, o + (n+1) hs)` with target
/// cells on one axis, as (target local index, fraction of the source cell).
fn overlap_axis(lattice: &Lattice, ibox: &IndexBox, axis: usize, src_lo: f64, hs: f64) -> Vec<(usize, f64)> {
    let h = lattice.h;
    let src_hi = src_lo + hs;
    let first = ((src_lo - lattice.anchor[axis]) / h).floor() as i64;
    let last = ((src_hi - lattice.anchor[axis]) / h).ceil() as i64;
    let mut out = Vec::new();
    for g in first..last {
        let local = g - ibox.lo[axis];
        if local < 0 || local >= ibox.shape[axis] as i64 {
            continue;
        }
        let a = lattice.anchor[axis] + g as f64 * h;
        let len = (a + h).min(src_hi) - a.max(src_lo);
        if len > 0.0 {
            out.push((local as usize, len / hs));
        }
    }
    out
}

fn add_grid(out: &mut [f64], lattice: &Lattice, ibox: &IndexBox, g: &MassGrid) {
    let hs = g.cell_size;
    let aligned = hs == lattice.h
        && (0..3).all(|a| {
            let off = (g.origin[a] - lattice.anchor[a]) / hs;
            (off - off.round()).abs() < 1e-9
        });
    let axes: Vec<Vec<Vec<(usize, f64)>>> = (0..3)
        .map(|a| {
            (0..g.shape[a])
                .map(|n| {
                    if aligned {
                        let gl = ((g.origin[a] - lattice.anchor[a]) / hs).round() as i64 + n as i64;
                        let local = gl - ibox.lo[a];
                        if local >= 0 && local < ibox.shape[a] as i64 {
                            vec![(local as usize, 1.0)]
                        } else {
                            vec![]
                        }
                    } else {
                        overlap_axis(lattice, ibox, a, g.origin[a] + n as f64 * hs, hs)
                    }
                })
                .collect()
        })
        .collect();
    let [_, ny, nz] = g.shape;
    for (flat, m) in g.masses.iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        let (i, j, k) = (flat / (ny * nz), (flat / nz) % ny, flat % nz);
        for (ti, fx) in &axes[0][i] {
            for (tj, fy) in &axes[1][j] {
                for (tk, fz) in &axes[2][k] {
                    out[ibox.flat([*ti, *tj, *tk])] += m * fx * fy * fz;
                }
            }
        }
    }
}

/// The only collapse-rate normalization the crate implements: the reported
/// energy is `I(0) - I(d)`, one half of the double integral over the
/// branch-density difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RateConvention {
    #[default]
    #[serde(rename = "minimal-decoherence-half")]
    MinimalDecoherenceHalf,
}

impl RateConvention {
    pub fn tag(&self) -> &'static str {
        "minimal-decoherence-half"
    }
}

/// Two branches: the distribution and its copy translated by `displacement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionScenario {
    pub distribution: MassDistribution,
    pub displacement: Vec3,
    #[serde(default)]
    pub convention: RateConvention,
}

impl SuperpositionScenario {
    pub fn new(distribution: MassDistribution, displacement: Vec3) -> Result<Self> {
        let s = Self {
            distribution,
            displacement,
            convention: RateConvention::MinimalDecoherenceHalf,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        ensure_finite_vec("displacement", self.displacement)?;
        let m = self.distribution.total_mass();
        if m > 0.0 {
            Ok(())
        } else {
            Err(domain("scenario needs a total mass > 0"))
        }
    }

    pub fn separation(&self) -> f64 {
        norm(self.displacement)
    }

    pub fn branch_one(&self) -> &MassDistribution {
        &self.distribution
    }

    pub fn branch_two(&self) -> MassDistribution {
        self.distribution.displace(self.displacement)
    }

    pub fn with_displacement(&self, d: Vec3) -> Self {
        Self {
            displacement: d,
            ..self.clone()
        }
    }
}

/// Both branches rasterized onto one shared box of one lattice.
#[derive(Debug, Clone)]
pub(crate) struct BranchGrids {
    pub lattice: Lattice,
    pub ibox: IndexBox,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl BranchGrids {
    pub fn build(rho1: &MassDistribution, rho2: &MassDistribution, h: f64, padding: f64, max_cells: usize) -> Result<Self> {
        ensure_positive("cell size", h)?;
        let lattice = Lattice::for_distribution(rho1, h);
        let (lo1, hi1) = rho1.support_bounds();
        let (lo2, hi2) = rho2.support_bounds();
        let b1 = lattice.covering_box(lo1, hi1, padding, max_cells)?;
        let b2 = lattice.covering_box(lo2, hi2, padding, max_cells)?;
        let ibox = b1.union(&b2);
        if ibox.len() > max_cells {
            return Err(Error::Resource(format!(
                "branch grids need {} cells, cap is {max_cells}",
                ibox.len()
            )));
        }
        Ok(Self {
            lattice,
            first: rho1.cell_masses(&lattice, &ibox, padding),
            second: rho2.cell_masses(&lattice, &ibox, padding),
            ibox,
        })
    }

    pub fn for_scenario(s: &SuperpositionScenario, h: f64, padding: f64, max_cells: usize) -> Result<Self> {
        Self::build(s.branch_one(), &s.branch_two(), h, padding, max_cells)
    }

    pub fn cell_center(&self, flat: usize) -> Vec3 {
        let g = self.ibox.global_index(flat);
        let c = self.lattice.corner(g);
        let hh = 0.5 * self.lattice.h;
        [c[0] + hh, c[1] + hh, c[2] + hh]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn total_mass_per_kind() {
        let g = MassDistribution::gaussian([0.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(g.total_mass(), 1.0);

        let grid = MassDistribution::grid(MassGrid {
            origin: [0.0; 3],
            cell_size: 0.5,
            shape: [2, 2, 2],
            masses: vec![0.125; 8],
        })
        .unwrap();
        assert_eq!(grid.total_mass(), 1.0);

        let pts = MassDistribution::smeared_points(vec![
            SmearedPoint {
                position: [0.0; 3],
                mass: 2.0,
                regulator_radius: 0.1,
                regulator_shape: RegulatorShape::UniformBall,
            },
            SmearedPoint {
                position: [1.0, 0.0, 0.0],
                mass: 3.0,
                regulator_radius: 0.1,
                regulator_shape: RegulatorShape::Gaussian,
            },
        ])
        .unwrap();
        assert_eq!(pts.total_mass(), 5.0);
    }

    #[test]
    fn pointlike_and_negative_inputs_rejected() {
        assert!(MassDistribution::gaussian([0.0; 3], 1.0, 0.0).is_err());
        assert!(MassDistribution::uniform_sphere([0.0; 3], -1.0, 1.0).is_err());
        assert!(MassDistribution::smeared_points(vec![SmearedPoint {
            position: [0.0; 3],
            mass: 1.0,
            regulator_radius: 0.0,
            regulator_shape: RegulatorShape::UniformBall,
        }])
        .is_err());
        assert!(MassDistribution::grid(MassGrid {
            origin: [0.0; 3],
            cell_size: 1.0,
            shape: [2, 1, 1],
            masses: vec![1.0],
        })
        .is_err());
        let zero = MassDistribution::gaussian([0.0; 3], 0.0, 1.0).unwrap();
        assert!(SuperpositionScenario::new(zero, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn displace_examples() {
        let g = MassDistribution::gaussian([0.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(g.displace([0.0; 3]), g);
        let d = [0.3, -1.2, 4.0];
        assert_eq!(g.displace(d).displace([-0.3, 1.2, -4.0]), g);
        match g.displace([1.0, 0.0, 0.0]) {
            MassDistribution::Gaussian { center, mass, .. } => {
                assert_eq!(center, [1.0, 0.0, 0.0]);
                assert_eq!(mass, 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn sphere_rasterization_conserves_mass() {
        let s = MassDistribution::uniform_sphere([0.1, 0.0, -0.2], 2.5, 1.0).unwrap();
        let g = s.rasterize(0.1, 0.0, 1 << 22).unwrap();
        assert!(rel(g.total_mass(), 2.5) < 1e-12);
    }

    #[test]
    fn gaussian_six_sigma_padding_captures_mass() {
        let g = MassDistribution::gaussian([0.0; 3], 1.0, 1.0).unwrap();
        let r = g.rasterize(0.5, 6.0, 1 << 22).unwrap();
        let captured = r.total_mass();
        // Per-axis loss is erfc(6 / sqrt 2); three axes bound the total loss.
        let loss = 3.0 * libm::erfc(6.0 / std::f64::consts::SQRT_2);
        assert!(captured >= 1.0 - 1e-8, "captured {captured}");
        assert!(1.0 - captured <= loss * 1.0001);
    }

    #[test]
    fn grid_with_matching_cell_size_is_unchanged() {
        let grid = MassDistribution::grid(MassGrid {
            origin: [0.03, 0.0, 1.0],
            cell_size: 0.5,
            shape: [2, 1, 3],
            masses: vec![1.0, 0.0, 2.0, 0.5, 0.0, 0.1],
        })
        .unwrap();
        assert_eq!(grid.rasterize(0.5, 1.0, 1000).unwrap(), grid);
    }

    #[test]
    fn grid_resampling_conserves_mass() {
        let grid = MassDistribution::grid(MassGrid {
            origin: [0.03, -0.4, 1.0],
            cell_size: 0.5,
            shape: [3, 2, 2],
            masses: (0..12).map(|i| i as f64 * 0.25).collect(),
        })
        .unwrap();
        let r = grid.rasterize(0.2, 0.0, 100_000).unwrap();
        assert!(rel(r.total_mass(), grid.total_mass()) < 1e-12);
    }

    #[test]
    fn oversized_grid_is_a_resource_error() {
        let g = MassDistribution::uniform_sphere([0.0; 3], 1.0, 1.0).unwrap();
        match g.rasterize(0.001, 0.0, 1_000_000) {
            Err(Error::Resource(_)) => {}
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn tiny_ball_lands_in_one_cell() {
        let p = MassDistribution::smeared_points(vec![SmearedPoint {
            position: [0.26, 0.26, 0.26],
            mass: 1.0,
            regulator_radius: 1e-4,
            regulator_shape: RegulatorShape::UniformBall,
        }])
        .unwrap();
        let r = p.rasterize(0.5, 0.0, 100).unwrap();
        let MassDistribution::Grid(g) = r else { unreachable!() };
        assert_eq!(g.occupied_cells().count(), 1);
        assert!(rel(g.masses.iter().sum::<f64>(), 1.0) < 1e-15);
    }

    fn sorted_masses(rho: &MassDistribution) -> Vec<f64> {
        let MassDistribution::Grid(g) = rho else { unreachable!() };
        let mut v: Vec<f64> = g.masses.iter().copied().filter(|m| *m > 1e-14).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn arb_distribution() -> impl Strategy<Value = MassDistribution> {
        prop_oneof![
            (0.1f64..5.0, 0.3f64..2.0, -1.0f64..1.0).prop_map(|(m, r, x)| {
                MassDistribution::uniform_sphere([x, 0.5 * x, 0.0], m, r).unwrap()
            }),
            (0.1f64..5.0, 0.3f64..2.0, -1.0f64..1.0).prop_map(|(m, s, x)| {
                MassDistribution::gaussian([x, 0.0, -x], m, s).unwrap()
            }),
            (0.1f64..5.0, 0.2f64..0.8, 0.1f64..2.0).prop_map(|(m, r, x)| {
                MassDistribution::smeared_points(vec![
                    SmearedPoint {
                        position: [0.0; 3],
                        mass: m,
                        regulator_radius: r,
                        regulator_shape: RegulatorShape::UniformBall,
                    },
                    SmearedPoint {
                        position: [x, 0.3, 0.0],
                        mass: 1.0,
                        regulator_radius: r,
                        regulator_shape: RegulatorShape::Gaussian,
                    },
                ])
                .unwrap()
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rasterize_preserves_total_mass(rho in arb_distribution(), frac in 0.15f64..0.4) {
            let h = frac * rho.smallest_length();
            let pad = if rho.has_gaussian_tails() { 6.5 * rho.smallest_length() } else { 0.0 };
            let g = rho.rasterize(h, pad, 1 << 23).unwrap();
            prop_assert!(rel(g.total_mass(), rho.total_mass()) < 1e-6);
        }

        #[test]
        fn displace_commutes_with_rasterize_on_lattice_shifts(
            rho in arb_distribution(),
            n in proptest::array::uniform3(-4i64..5),
        ) {
            let h = 0.25 * rho.smallest_length();
            let pad = if rho.has_gaussian_tails() { 3.0 } else { 0.0 };
            let d = [n[0] as f64 * h, n[1] as f64 * h, n[2] as f64 * h];
            let a = sorted_masses(&rho.rasterize(h, pad, 1 << 22).unwrap());
            let b = sorted_masses(&rho.displace(d).rasterize(h, pad, 1 << 22).unwrap());
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
            }
        }
    }
}
