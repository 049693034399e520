//! Newton-potential noise, branch dephasing and the branching Monte Carlo.
//!
//! The noise `δΦ` is white in time and correlated in space with covariance
//! `ħG/|x - x'|`, with the same cell self-term as the self-energy sums. With
//! this normalization the phase difference between the branches obeys
//! `⟨cos Δχ⟩ = exp(-Λt)` and `⟨Δχ²⟩ = 2Λt`, `Λ` being the grid rate.

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::kernel::kernel_matrix;
use crate::mass::{BranchGrids, SuperpositionScenario, Vec3};
use crate::quad::Neumaier;
use crate::quantity::{G, HBAR};
use crate::rng::stream;
use crate::self_energy::{e_delta_bruteforce, QuadratureSettings};

/// Diagonal jitter tried in turn, relative to the largest diagonal entry.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];
/// Largest accepted `‖LLᵀ - K‖_max / ‖K‖_max`.
pub const MAX_FACTOR_RESIDUAL: f64 = 1e-8;
/// Dense covariance matrices are limited to this many points.
pub const MAX_NOISE_POINTS: usize = 6000;

/// Trajectories per deterministic reduction block.
const BLOCK: usize = 1024;

/// Sample points, covariance `K` (J² s / kg², so `K/dt` is the per-step
/// covariance of `δΦ`) and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct NoiseGrid {
    pub points: Vec<Vec3>,
    pub cell_size: f64,
    pub covariance: DMatrix<f64>,
    pub factor: DMatrix<f64>,
    /// Jitter added to the diagonal, relative to its largest entry.
    pub jitter: f64,
    pub residual: f64,
}

impl NoiseGrid {
    /// `K_ij = ħG/|x_i - x_j|`, `K_ii = ħG κ/h`.
    pub fn from_points(points: Vec<Vec3>, cell_size: f64, diag: f64) -> Result<Self> {
        ensure_positive("cell size", cell_size)?;
        let n = points.len();
        if n == 0 {
            return Err(Error::Domain("noise grid needs at least one point".into()));
        }
        if n > MAX_NOISE_POINTS {
            return Err(Error::Resource(format!(
                "noise grid has {n} points, dense limit is {MAX_NOISE_POINTS}"
            )));
        }
        let k = DMatrix::from_row_slice(n, n, &kernel_matrix(&points, cell_size, diag)) * (HBAR * G);
        let (factor, jitter, residual) = factorize(&k)?;
        Ok(Self {
            points,
            cell_size,
            covariance: k,
            factor,
            jitter,
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn factorize(k: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, f64)> {
    let kmax = k.amax();
    let dmax = k.diagonal().max();
    let mut last = String::from("not positive definite");
    for rel in JITTER_LADDER {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += rel * dmax;
        }
        let Some(ch) = m.cholesky() else {
            continue;
        };
        let l = ch.l();
        let residual = (&l * l.transpose() - k).amax() / kmax;
        if residual <= MAX_FACTOR_RESIDUAL {
            return Ok((l, rel, residual));
        }
        last = format!("residual {residual:e} at jitter {rel:e}");
    }
    Err(Error::Numeric(format!(
        "noise covariance factorization failed after jitter {:e}: {last}",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// Noise grid on the cells occupied by either branch, with the branch mass
/// difference `Δm = m₁ - m₂` per point.
fn scenario_grid(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<(NoiseGrid, Vec<f64>)> {
    s.validate()?;
    q.validate()?;
    let grids = BranchGrids::for_scenario(s, q.cell_size, q.padding, q.max_cells)?;
    let mut points = Vec::new();
    let mut delta = Vec::new();
    for (i, (a, b)) in grids.first.iter().zip(&grids.second).enumerate() {
        if *a != 0.0 || *b != 0.0 {
            points.push(grids.cell_center(i));
            delta.push(a - b);
        }
    }
    let g = NoiseGrid::from_points(points, q.cell_size, q.self_term.coefficient())?;
    Ok((g, delta))
}

pub fn build_noise_grid(s: &SuperpositionScenario, q: &QuadratureSettings) -> Result<NoiseGrid> {
    Ok(scenario_grid(s, q)?.0)
}

fn normals(seed: u64, lane: u64, step: u64, n: usize) -> DVector<f64> {
    let mut rng = stream(seed, lane, step);
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// One step of noise on `lane`: `L z / √dt`, J/kg per point.
pub fn sample_noise_lane(g: &NoiseGrid, dt: f64, seed: u64, lane: u64, step: u64) -> Result<Vec<f64>> {
    ensure_positive("dt", dt)?;
    let z = normals(seed, lane, step, g.len());
    Ok((&g.factor * z / dt.sqrt()).as_slice().to_vec())
}

/// One step of noise, `L z / √dt`, with `z` addressed by `(seed, step)`.
pub fn sample_noise(g: &NoiseGrid, dt: f64, seed: u64, step: u64) -> Result<Vec<f64>> {
    sample_noise_lane(g, dt, seed, 0, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherencePoint {
    /// s.
    pub t: f64,
    pub mean_cos: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingRun {
    pub trajectories: usize,
    pub steps: usize,
    /// s.
    pub dt: f64,
    pub seed: u64,
    /// `(t, ⟨Δχ²⟩)`, starting at `(0, 0)`.
    pub variance_curve: Vec<(f64, f64)>,
    pub decoherence_curve: Vec<DecoherencePoint>,
    /// Least-squares slope of the variance curve through the origin, 1/s.
    pub fitted_slope: f64,
    /// `e_delta_bruteforce / ħ` on the same grid, 1/s.
    pub lambda_grid: f64,
    pub cells: usize,
    pub jitter: f64,
}

impl DephasingRun {
    /// `fitted_slope / 2Λ_grid`; 1 in expectation.
    pub fn slope_ratio(&self) -> f64 {
        self.fitted_slope / (2.0 * self.lambda_grid)
    }
}

/// Slope of `v = a t` by least squares.
pub fn slope_through_origin(curve: &[(f64, f64)]) -> f64 {
    let mut num = Neumaier::default();
    let mut den = Neumaier::default();
    for (t, v) in curve {
        num.add(t * v);
        den.add(t * t);
    }
    if den.sum() > 0.0 {
        num.sum() / den.sum()
    } else {
        0.0
    }
}

/// Simulates `trajectories` phase differences over `steps` steps of
/// `total_time / steps`.
///
/// Each step adds `(1/ħ) Σᵢ δΦᵢ Δmᵢ dt` with `δΦ = L z/√dt`, evaluated as
/// `(Lᵀ Δm)·z √dt/ħ`. Trajectory `j` draws from lane `j` of `seed`.
pub fn dephasing_sim(
    s: &SuperpositionScenario,
    q: &QuadratureSettings,
    total_time: f64,
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<DephasingRun> {
    ensure_positive("total time", total_time)?;
    if steps == 0 || trajectories == 0 {
        return Err(Error::Domain("steps and trajectories must be >= 1".into()));
    }
    let (grid, delta) = scenario_grid(s, q)?;
    let lambda_grid = e_delta_bruteforce(s, q)? / HBAR;
    let dt = total_time / steps as f64;
    let w = grid.factor.transpose() * DVector::from_vec(delta);
    let scale = dt.sqrt() / HBAR;
    let zero_w = w.iter().all(|x| *x == 0.0);

    let mut sq = vec![Neumaier::default(); steps + 1];
    let mut cs = vec![Neumaier::default(); steps + 1];
    let mut cs2 = vec![Neumaier::default(); steps + 1];
    for start in (0..trajectories).step_by(BLOCK) {
        let end = (start + BLOCK).min(trajectories);
        let paths: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|j| {
                let mut path = Vec::with_capacity(steps + 1);
                let mut chi = 0.0;
                path.push(chi);
                for k in 0..steps {
                    if !zero_w {
                        let mut rng = stream(seed, j as u64, k as u64);
                        let mut acc = 0.0;
                        for wi in w.iter() {
                            let z: f64 = rng.sample(StandardNormal);
                            acc += wi * z;
                        }
                        chi += acc * scale;
                    }
                    path.push(chi);
                }
                path
            })
            .collect();
        for path in &paths {
            for (k, chi) in path.iter().enumerate() {
                if !chi.is_finite() {
                    return Err(Error::Numeric(format!("non-finite phase difference at step {k}")));
                }
                let c = chi.cos();
                sq[k].add(chi * chi);
                cs[k].add(c);
                cs2[k].add(c * c);
            }
        }
    }

    let n = trajectories as f64;
    let mut variance_curve = Vec::with_capacity(steps + 1);
    let mut decoherence_curve = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let mean = cs[k].sum() / n;
        let var = if trajectories > 1 {
            ((cs2[k].sum() - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        variance_curve.push((t, sq[k].sum() / n));
        decoherence_curve.push(DecoherencePoint {
            t,
            mean_cos: mean,
            stderr: (var / n).sqrt(),
        });
    }
    Ok(DephasingRun {
        trajectories,
        steps,
        dt,
        seed,
        fitted_slope: slope_through_origin(&variance_curve),
        variance_curve,
        decoherence_curve,
        lambda_grid,
        cells: grid.len(),
        jitter: grid.jitter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    One,
    Two,
}

impl Branch {
    pub fn index(&self) -> u8 {
        match self {
            Branch::One => 1,
            Branch::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub branch: Branch,
    /// s.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEnsemble {
    pub tau: f64,
    pub seed: u64,
    pub outcomes: Vec<Outcome>,
}

impl CollapseEnsemble {
    pub fn mean_time(&self) -> f64 {
        let mut acc = Neumaier::default();
        for o in &self.outcomes {
            acc.add(o.time);
        }
        acc.sum() / self.outcomes.len() as f64
    }

    pub fn branch_one_fraction(&self) -> f64 {
        let ones = self.outcomes.iter().filter(|o| o.branch == Branch::One).count();
        ones as f64 / self.outcomes.len() as f64
    }
}

/// `n` independent collapses: a fair choice of branch and an exponential
/// waiting time of mean `tau`. Outcome `i` draws from lane `i` of `seed`.
pub fn collapse_mc(tau: f64, n: usize, seed: u64) -> Result<CollapseEnsemble> {
    ensure_positive("tau", tau)?;
    let outcomes = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64, 0);
            let branch = if rng.random::<bool>() { Branch::One } else { Branch::Two };
            let u: f64 = rng.sample(Open01);
            Outcome {
                branch,
                time: -tau * u.ln(),
            }
        })
        .collect();
    Ok(CollapseEnsemble { tau, seed, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SELF_TERM_KAPPA;
    use crate::mass::MassDistribution;

    fn scenario(d: f64) -> SuperpositionScenario {
        SuperpositionScenario::new(MassDistribution::gaussian([0.0; 3], 1.0, 1.0).unwrap(), [d, 0.0, 0.0]).unwrap()
    }

    fn small_q() -> QuadratureSettings {
        QuadratureSettings::new(0.5, 1.5)
    }

    #[test]
    fn two_point_covariance_entries() {
        let g = NoiseGrid::from_points(vec![[0.0; 3], [3.0, 4.0, 0.0]], 1.0, SELF_TERM_KAPPA).unwrap();
        let hg = HBAR * G;
        assert!((g.covariance[(0, 1)] - hg / 5.0).abs() < 1e-15 * hg);
        assert!((g.covariance[(1, 1)] - hg * SELF_TERM_KAPPA).abs() < 1e-15 * hg);
        assert_eq!(g.jitter, 0.0);
    }

    #[test]
    fn permuted_points_give_permuted_covariance() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 1.0], [3.0, 1.0, 1.0]];
        let perm = [2, 0, 3, 1];
        let a = NoiseGrid::from_points(pts.clone(), 1.0, SELF_TERM_KAPPA).unwrap();
        let b = NoiseGrid::from_points(perm.iter().map(|&i| pts[i]).collect(), 1.0, SELF_TERM_KAPPA).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b.covariance[(i, j)], a.covariance[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn random_cloud_factorizes_with_small_jitter() {
        let mut rng = stream(5, 0, 0);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])
            .collect();
        let g = NoiseGrid::from_points(pts, 0.2, SELF_TERM_KAPPA).unwrap();
        assert!(g.jitter <= 1e-10);
        assert!(g.residual <= MAX_FACTOR_RESIDUAL);
    }

    #[test]
    fn zero_self_term_cannot_be_factorized() {
        let g = NoiseGrid::from_points(vec![[0.0; 3], [1.0, 0.0, 0.0]], 1.0, 0.0);
        assert!(matches!(g, Err(Error::Numeric(_))));
    }

    #[test]
    fn noise_is_addressed_by_seed_and_step() {
        let g = build_noise_grid(&scenario(1.0), &small_q()).unwrap();
        let a = sample_noise(&g, 1e-3, 9, 4).unwrap();
        assert_eq!(a, sample_noise(&g, 1e-3, 9, 4).unwrap());
        assert_ne!(a, sample_noise(&g, 1e-3, 9, 5).unwrap());
        assert!(sample_noise(&g, 0.0, 9, 4).is_err());
    }

    #[test]
    fn sample_covariance_converges() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [2.0, 2.0, 1.0], [0.5, 0.5, 3.0]];
        let g = NoiseGrid::from_points(pts, 0.7, SELF_TERM_KAPPA).unwrap();
        let n = 100_000;
        let dt = 0.01;
        let p = g.len();
        let mut acc = vec![Neumaier::default(); p * p];
        for step in 0..n {
            let v = sample_noise(&g, dt, 17, step as u64).unwrap();
            for i in 0..p {
                for j in 0..p {
                    acc[i * p + j].add(v[i] * v[j]);
                }
            }
        }
        let kmax = g.covariance.amax();
        let worst = (0..p * p)
            .map(|ij| (acc[ij].sum() / n as f64 * dt - g.covariance[(ij / p, ij % p)]).abs() / kmax)
            .fold(0.0, f64::max);
        assert!(worst <= 5.0 / (n as f64).sqrt(), "{worst}");
    }

    #[test]
    fn contracted_increment_matches_explicit_noise_sum() {
        let s = scenario(1.0);
        let q = small_q();
        let (g, delta) = scenario_grid(&s, &q).unwrap();
        let steps = 4;
        let dt = 1e-24;
        let mut explicit = 0.0;
        for k in 0..steps {
            let phi = sample_noise_lane(&g, dt, 3, 0, k).unwrap();
            let sum: f64 = phi.iter().zip(&delta).map(|(p, m)| p * m).sum();
            explicit += sum * dt / HBAR;
        }
        let run = dephasing_sim(&s, &q, steps as f64 * dt, steps as usize, 1, 3).unwrap();
        let chi2 = run.variance_curve[steps as usize].1;
        assert!((chi2 - explicit * explicit).abs() <= 1e-10 * chi2);
    }

    #[test]
    fn zero_displacement_never_dephases() {
        let run = dephasing_sim(&scenario(0.0), &small_q(), 1e-20, 5, 50, 1).unwrap();
        assert_eq!(run.variance_curve.len(), 6);
        assert!(run.variance_curve.iter().all(|(_, v)| *v == 0.0));
        assert!(run.decoherence_curve.iter().all(|p| p.mean_cos == 1.0));
        assert_eq!(run.lambda_grid, 0.0);
    }

    #[test]
    fn dephasing_slope_tracks_grid_rate() {
        let s = scenario(2.0);
        let q = small_q();
        let lambda = e_delta_bruteforce(&s, &q).unwrap() / HBAR;
        let run = dephasing_sim(&s, &q, 1.0 / lambda, 10, 4000, 21).unwrap();
        assert_eq!(run.variance_curve[0], (0.0, 0.0));
        assert!((run.slope_ratio() - 1.0).abs() < 0.08, "{}", run.slope_ratio());
        for p in &run.decoherence_curve[1..] {
            assert!((p.mean_cos - (-lambda * p.t).exp()).abs() <= 4.0 * p.stderr);
        }
    }

    #[test]
    fn dephasing_is_reproducible() {
        let s = scenario(1.5);
        let a = dephasing_sim(&s, &small_q(), 1e-23, 3, 1500, 8).unwrap();
        let b = dephasing_sim(&s, &small_q(), 1e-23, 3, 1500, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collapse_statistics() {
        assert!(collapse_mc(1.0, 0, 1).unwrap().outcomes.is_empty());
        let e = collapse_mc(2.0, 50_000, 4).unwrap();
        assert!(e.outcomes.iter().all(|o| o.time > 0.0));
        assert!((e.mean_time() - 2.0).abs() < 3.0 * 2.0 / (5e4f64).sqrt());
        assert!((e.branch_one_fraction() - 0.5).abs() < 3.0 * 0.5 / (5e4f64).sqrt());
        assert_eq!(e, collapse_mc(2.0, 50_000, 4).unwrap());
        assert!(collapse_mc(0.0, 1, 1).is_err());
        assert!(collapse_mc(f64::INFINITY, 1, 1).is_err());
    }
}
