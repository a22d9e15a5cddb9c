//! Aggregation multigrid V-cycle used as a CG preconditioner.
//!
//! Levels merge 2x2 pixel blocks. With piecewise-constant prolongation the
//! Galerkin product `P^T A P` of a grid system is again a grid system: block
//! data weights add up, edges inside a block vanish, and the edges crossing
//! between two neighbouring blocks add up to one coarse edge. The smoother
//! is red-black Gauss-Seidel, run red then black before the coarse
//! correction and black then red after it, which keeps the cycle symmetric.
//! The coarsest level is solved exactly by a dense Cholesky factorization.

use rayon::prelude::*;

use super::WlsSystem;

/// Largest grid factored densely.
const COARSE_MAX: usize = 400;
const SMOOTHING_SWEEPS: usize = 2;
/// Unsmoothed aggregation underestimates the coarse correction; scaling it
/// up restores most of the convergence rate.
const OVERCORRECTION: f64 = 1.6;

pub(super) struct Multigrid {
    levels: Vec<Level>,
    coarse: Cholesky,
}

struct Level {
    sys: WlsSystem,
    diag: Vec<f64>,
}

impl Multigrid {
    /// `None` when the coarsest system is not positive definite, which
    /// happens only without smoothing and with invalid pixels.
    pub(super) fn new(sys: &WlsSystem) -> Option<Self> {
        let mut levels = Vec::new();
        let mut current = sys.clone();
        while current.len() > COARSE_MAX {
            let next = current.coarsen();
            levels.push(Level {
                diag: current.diagonal(),
                sys: current,
            });
            current = next;
        }
        let coarse = Cholesky::new(&current)?;
        Some(Multigrid { levels, coarse })
    }

    /// One V-cycle applied to `r`, starting from zero.
    pub(super) fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, depth: usize, rhs: &[f64], e: &mut [f64]) {
        let Some(level) = self.levels.get(depth) else {
            self.coarse.solve(rhs, e);
            return;
        };
        let sys = &level.sys;
        let mut scratch = vec![0.0; e.len()];
        e.fill(0.0);
        for _ in 0..SMOOTHING_SWEEPS {
            gauss_seidel_half(sys, &level.diag, rhs, e, &mut scratch, 0);
            gauss_seidel_half(sys, &level.diag, rhs, e, &mut scratch, 1);
        }

        sys.apply(e, &mut scratch);
        scratch.par_iter_mut().zip(rhs).for_each(|(s, b)| *s = b - *s);
        let coarse_rhs = sys.restrict(&scratch);
        let mut coarse_e = vec![0.0; coarse_rhs.len()];
        self.cycle(depth + 1, &coarse_rhs, &mut coarse_e);
        sys.prolong_add(&coarse_e, OVERCORRECTION, e);

        for _ in 0..SMOOTHING_SWEEPS {
            gauss_seidel_half(sys, &level.diag, rhs, e, &mut scratch, 1);
            gauss_seidel_half(sys, &level.diag, rhs, e, &mut scratch, 0);
        }
    }
}

/// Updates the pixels with `(x + y) % 2 == color` from their neighbours.
/// Those neighbours all have the other color, so rows update independently.
fn gauss_seidel_half(sys: &WlsSystem, diag: &[f64], rhs: &[f64], e: &mut [f64], scratch: &mut [f64], color: usize) {
    let (h, w) = (sys.height, sys.width);
    {
        let e: &[f64] = e;
        scratch.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let i = y * w + x;
                if (x + y) % 2 != color {
                    *out = e[i];
                    continue;
                }
                let mut s = rhs[i];
                if x + 1 < w {
                    s += sys.wx[i] * e[i + 1];
                }
                if x > 0 {
                    s += sys.wx[i - 1] * e[i - 1];
                }
                if y + 1 < h {
                    s += sys.wy[i] * e[i + w];
                }
                if y > 0 {
                    s += sys.wy[i - w] * e[i - w];
                }
                *out = s / diag[i];
            }
        });
    }
    e.copy_from_slice(scratch);
}

impl WlsSystem {
    fn coarse_dims(&self) -> (usize, usize) {
        (self.height.div_ceil(2), self.width.div_ceil(2))
    }

    /// Galerkin coarse system over 2x2 blocks.
    pub(super) fn coarsen(&self) -> WlsSystem {
        let (h, w) = (self.height, self.width);
        let (hc, wc) = self.coarse_dims();
        let mut data_weight = vec![0.0; hc * wc];
        let mut wx = vec![0.0; hc * wc];
        let mut wy = vec![0.0; hc * wc];
        for y in 0..h {
            for x in 0..w {
                let (i, ci) = (y * w + x, (y / 2) * wc + x / 2);
                data_weight[ci] += self.data_weight[i];
                if x % 2 == 1 && x + 1 < w {
                    wx[ci] += self.wx[i];
                }
                if y % 2 == 1 && y + 1 < h {
                    wy[ci] += self.wy[i];
                }
            }
        }
        WlsSystem {
            height: hc,
            width: wc,
            data_weight,
            wx,
            wy,
        }
    }

    /// Block sums, `P^T r`.
    fn restrict(&self, r: &[f64]) -> Vec<f64> {
        let w = self.width;
        let (hc, wc) = self.coarse_dims();
        let mut out = vec![0.0; hc * wc];
        out.par_chunks_mut(wc).enumerate().for_each(|(cy, row)| {
            for y in 2 * cy..(2 * cy + 2).min(self.height) {
                for x in 0..w {
                    row[x / 2] += r[y * w + x];
                }
            }
        });
        out
    }

    /// `e += scale * P ec`.
    fn prolong_add(&self, ec: &[f64], scale: f64, e: &mut [f64]) {
        let wc = self.coarse_dims().1;
        e.par_chunks_mut(self.width).enumerate().for_each(|(y, row)| {
            let crow = &ec[(y / 2) * wc..(y / 2 + 1) * wc];
            for (x, v) in row.iter_mut().enumerate() {
                *v += scale * crow[x / 2];
            }
        });
    }
}

/// Dense lower-triangular factor `L` with `A = L L^T`.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    fn new(sys: &WlsSystem) -> Option<Self> {
        let n = sys.len();
        let w = sys.width;
        let mut a = vec![0.0; n * n];
        for (i, d) in sys.diagonal().into_iter().enumerate() {
            a[i * n + i] = d;
            if i % w + 1 < w {
                a[i * n + i + 1] = -sys.wx[i];
                a[(i + 1) * n + i] = -sys.wx[i];
            }
            if i + w < n {
                a[i * n + i + w] = -sys.wy[i];
                a[(i + w) * n + i] = -sys.wy[i];
            }
        }
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d.is_nan() || d <= 0.0 {
                return None;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Some(Cholesky { n, l: a })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, l) = (self.n, &self.l);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
    }
}
