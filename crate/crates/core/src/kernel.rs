//! Lattice sums of the Newton kernel `1/|x - x'|`.
//!
//! Cells are points on a cubic lattice of spacing `h`. Distinct cells
//! interact through the inverse distance of their centres; a cell paired
//! with itself uses `SELF_TERM_KAPPA / h`, the exact mean of `1/|x - x'|` over
//! two points drawn uniformly from one cell. The same pairing rule is used by
//! the self-energy double sums and by the noise covariance.
//!
//! Sums are returned in lattice units (distances measured in cells); divide
//! by `h` for physical values. Row sums are computed independently and
//! combined in row order with compensated summation, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mass::IndexBox;
use crate::quad::neumaier_sum;

/// Mean of `1/|x - x'|` for `x, x'` uniform in the unit cube.
///
/// Derived by `scripts/self_term_coefficient.py`: a deterministic quadrature
/// gives 1.882312644386502 (+/- 7e-13); a 2e7-sample Monte Carlo run gives
/// 1.88222 +/- 3.2e-4.
pub const SELF_TERM_KAPPA: f64 = 1.882_312_644_386_502;

const LANES: usize = 8;

/// Diagonal rule for the kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelfTermMode {
    /// `K_ii = SELF_TERM_KAPPA / h`.
    #[default]
    Calibrated,
    /// `K_ii = 0`: cells do not interact with themselves.
    None,
}

impl SelfTermMode {
    pub fn coefficient(&self) -> f64 {
        match self {
            SelfTermMode::Calibrated => SELF_TERM_KAPPA,
            SelfTermMode::None => 0.0,
        }
    }
}

/// Occupied cells in structure-of-arrays form, coordinates in lattice units.
#[derive(Debug, Clone, Default)]
pub(crate) struct CellSet {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl CellSet {
    /// Cells of `ibox` with non-zero weight.
    pub fn from_box(ibox: &IndexBox, weights: &[f64]) -> Self {
        let mut set = CellSet::default();
        for (flat, w) in weights.iter().enumerate() {
            if *w != 0.0 {
                let g = ibox.global_index(flat);
                set.x.push(g[0] as f64);
                set.y.push(g[1] as f64);
                set.z.push(g[2] as f64);
                set.w.push(*w);
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `sum_j w_j / |p - x_j|`, with `diag` standing in for coincident cells.
#[inline]
fn row(p: (f64, f64, f64), xs: &[f64], ys: &[f64], zs: &[f64], ws: &[f64], diag: f64) -> f64 {
    let n = ws.len();
    let split = n - n % LANES;
    let mut acc = [0.0f64; LANES];
    for c in (0..split).step_by(LANES) {
        let xs = &xs[c..c + LANES];
        let ys = &ys[c..c + LANES];
        let zs = &zs[c..c + LANES];
        let ws = &ws[c..c + LANES];
        for l in 0..LANES {
            let dx = xs[l] - p.0;
            let dy = ys[l] - p.1;
            let dz = zs[l] - p.2;
            let r2 = dx * dx + dy * dy + dz * dz;
            let inv = if r2 > 0.0 { 1.0 / r2.sqrt() } else { diag };
            acc[l] += ws[l] * inv;
        }
    }
    let mut tail = 0.0;
    for j in split..n {
        let dx = xs[j] - p.0;
        let dy = ys[j] - p.1;
        let dz = zs[j] - p.2;
        let r2 = dx * dx + dy * dy + dz * dz;
        tail += ws[j] * if r2 > 0.0 { 1.0 / r2.sqrt() } else { diag };
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `sum_ij w_i w_j K_ij` in lattice units.
pub(crate) fn quadratic_form(cells: &CellSet, diag: f64) -> f64 {
    let n = cells.len();
    if n == 0 {
        return 0.0;
    }
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let p = (cells.x[i], cells.y[i], cells.z[i]);
            let off = row(
                p,
                &cells.x[i + 1..],
                &cells.y[i + 1..],
                &cells.z[i + 1..],
                &cells.w[i + 1..],
                diag,
            );
            cells.w[i] * (2.0 * off + cells.w[i] * diag)
        })
        .collect();
    neumaier_sum(rows)
}

/// `sum_ij a_i b_j K_ij` in lattice units.
pub(crate) fn bilinear_form(a: &CellSet, b: &CellSet, diag: f64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let p = (a.x[i], a.y[i], a.z[i]);
            a.w[i] * row(p, &b.x, &b.y, &b.z, &b.w, diag)
        })
        .collect();
    neumaier_sum(rows)
}

/// Dense kernel matrix for explicit points, in physical units (1/m).
pub(crate) fn kernel_matrix(points: &[[f64; 3]], h: f64, diag: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = diag / h;
        for j in 0..i {
            let d = [
                points[i][0] - points[j][0],
                points[i][1] - points[j][1],
                points[i][2] - points[j][2],
            ];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let v = if r > 0.0 { 1.0 / r } else { diag / h };
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[([i64; 3], f64)], b: &[([i64; 3], f64)], diag: f64) -> f64 {
        let mut s = 0.0;
        for (pa, wa) in a {
            for (pb, wb) in b {
                let d: Vec<f64> = (0..3).map(|k| (pa[k] - pb[k]) as f64).collect();
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                s += wa * wb * if r > 0.0 { 1.0 / r } else { diag };
            }
        }
        s
    }

    fn set(cells: &[([i64; 3], f64)]) -> CellSet {
        let mut s = CellSet::default();
        for (p, w) in cells {
            s.x.push(p[0] as f64);
            s.y.push(p[1] as f64);
            s.z.push(p[2] as f64);
            s.w.push(*w);
        }
        s
    }

    fn random_cells(rng: &mut ChaCha8Rng, n: usize) -> Vec<([i64; 3], f64)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        while out.len() < n {
            let p = [rng.random_range(-6..6), rng.random_range(-6..6), rng.random_range(-6..6)];
            if seen.insert(p) {
                out.push((p, rng.random_range(-1.0..1.0)));
            }
        }
        out
    }

    #[test]
    fn forms_match_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_cells(&mut rng, 37);
        let b = random_cells(&mut rng, 29);
        let q = quadratic_form(&set(&a), SELF_TERM_KAPPA);
        let qn = naive(&a, &a, SELF_TERM_KAPPA);
        assert!((q - qn).abs() < 1e-12 * qn.abs().max(1.0));
        let x = bilinear_form(&set(&a), &set(&b), SELF_TERM_KAPPA);
        let xn = naive(&a, &b, SELF_TERM_KAPPA);
        assert!((x - xn).abs() < 1e-12 * xn.abs().max(1.0));
    }

    #[test]
    fn calibrated_kernel_is_positive_definite_on_checkerboard() {
        // The most negative lattice mode alternates sign cell to cell.
        let mut cells = Vec::new();
        for i in 0..10i64 {
            for j in 0..10i64 {
                for k in 0..10i64 {
                    let s = if (i + j + k) % 2 == 0 { 1.0 } else { -1.0 };
                    cells.push(([i, j, k], s));
                }
            }
        }
        assert!(quadratic_form(&set(&cells), SELF_TERM_KAPPA) > 0.0);
    }

    #[test]
    fn kappa_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2_000_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let a: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let b: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            s += 1.0 / r;
            s2 += 1.0 / (r * r);
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - SELF_TERM_KAPPA).abs() < 4.0 * se, "{mean} +/- {se}");
    }
}
