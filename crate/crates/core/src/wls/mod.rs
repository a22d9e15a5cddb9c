//! Edge-preserving weighted-least-squares refinement of disparity maps.
//!
//! Minimizes
//!
//! ```text
//! sum_p w_p (u_p - g_p)^2 + lambda * sum_p (ax_p (u_{p+x} - u_p)^2 + ay_p (u_{p+y} - u_p)^2)
//! ```
//!
//! with affinities `ax_p = 1 / (|guide_{p+x} - guide_p|^alpha + eps)` (same for
//! `y`) taken from forward differences of the guide image, and `w_p = 1` where
//! `g` is valid, `0` where it is not. The minimizer solves the sparse
//! symmetric positive-definite system `(W + lambda * L_a) u = W g`, where
//! `L_a` is the affinity-weighted graph Laplacian of the pixel grid. Invalid
//! pixels are filled in by the smoothness term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stereo::{to_fixed, DisparityMap, GrayImage};

mod multigrid;

use multigrid::Multigrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WlsParams {
    pub lambda: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Target `||A u - b|| / ||b||`.
    pub solver_tol: f64,
    pub max_iters: usize,
}

impl Default for WlsParams {
    fn default() -> Self {
        WlsParams {
            lambda: 8000.0,
            alpha: 1.3,
            eps: 1e-4,
            solver_tol: 1e-6,
            max_iters: 20_000,
        }
    }
}

impl WlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.solver_tol.is_finite() && self.solver_tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be > 0"));
        }
        Ok(())
    }
}

/// The linear system `(W + lambda * L_a) u = W g` on an `height x width` grid.
#[derive(Debug, Clone)]
pub struct WlsSystem {
    height: usize,
    width: usize,
    /// Data weights, 1 for valid pixels and 0 otherwise.
    data_weight: Vec<f64>,
    /// `lambda * ax_p` for the edge `p -- p+x`; 0 in the last column.
    wx: Vec<f64>,
    /// `lambda * ay_p` for the edge `p -- p+y`; 0 in the last row.
    wy: Vec<f64>,
}

impl WlsSystem {
    pub fn new(guide: &GrayImage, valid: &[bool], params: &WlsParams) -> Result<Self> {
        params.validate()?;
        let (h, w) = guide.dims();
        if valid.len() != h * w {
            return Err(Error::invalid(format!(
                "{} validity flags for a {h}x{w} guide",
                valid.len()
            )));
        }
        let g = guide.pixels();
        let affinity = |a: f32, b: f32| {
            params.lambda / ((b as f64 - a as f64).abs().powf(params.alpha) + params.eps)
        };
        let mut wx = vec![0.0; h * w];
        let mut wy = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    wx[i] = affinity(g[i], g[i + 1]);
                }
                if y + 1 < h {
                    wy[i] = affinity(g[i], g[i + w]);
                }
            }
        }
        Ok(WlsSystem {
            height: h,
            width: w,
            data_weight: valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            wx,
            wy,
        })
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Right-hand side `W g`.
    pub fn rhs(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.data_weight).map(|(g, w)| g * w).collect()
    }

    /// `(W + lambda * L_a) u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let w = self.width;
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let i = y * w + x;
                let mut v = self.data_weight[i] * u[i];
                if x + 1 < w {
                    v += self.wx[i] * (u[i] - u[i + 1]);
                }
                if x > 0 {
                    v += self.wx[i - 1] * (u[i] - u[i - 1]);
                }
                if y + 1 < self.height {
                    v += self.wy[i] * (u[i] - u[i + w]);
                }
                if y > 0 {
                    v += self.wy[i - w] * (u[i] - u[i - w]);
                }
                *o = v;
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let w = self.width;
        (0..self.len())
            .map(|i| {
                let (y, x) = (i / w, i % w);
                let mut d = self.data_weight[i] + self.wx[i] + self.wy[i];
                if x > 0 {
                    d += self.wx[i - 1];
                }
                if y > 0 {
                    d += self.wy[i - w];
                }
                d
            })
            .collect()
    }

    /// Value of the quadratic loss at `u`.
    pub fn loss(&self, u: &[f64], g: &[f64]) -> f64 {
        let w = self.width;
        let mut total = 0.0;
        for i in 0..self.len() {
            total += self.data_weight[i] * (u[i] - g[i]).powi(2);
            if i % w + 1 < w {
                total += self.wx[i] * (u[i + 1] - u[i]).powi(2);
            }
            if i / w + 1 < self.height {
                total += self.wy[i] * (u[i + w] - u[i]).powi(2);
            }
        }
        total
    }

    /// `||(W + lambda L_a) u - W g|| / ||W g||`.
    pub fn relative_residual(&self, u: &[f64], g: &[f64]) -> f64 {
        let b = self.rhs(g);
        let mut au = vec![0.0; self.len()];
        self.apply(u, &mut au);
        let r: Vec<f64> = au.iter().zip(&b).map(|(a, b)| a - b).collect();
        let bn = dot(&b, &b).sqrt();
        if bn == 0.0 {
            dot(&r, &r).sqrt()
        } else {
            dot(&r, &r).sqrt() / bn
        }
    }
}

const REDUCE_CHUNK: usize = 4096;

/// Dot product with a fixed summation tree: per-chunk partial sums in
/// parallel, then a sequential sum over chunks. The result does not depend
/// on the number of worker threads.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum())
        .collect();
    partial.iter().sum()
}

#[derive(Debug, Clone)]
pub struct WlsSolution {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the WLS system for `g` by conjugate gradients preconditioned with
/// a multigrid V-cycle, or with the diagonal when the multigrid hierarchy
/// cannot be built. Entries of `g` at invalid pixels are ignored.
pub fn wls_solve(g: &[f64], valid: &[bool], guide: &GrayImage, params: &WlsParams) -> Result<WlsSolution> {
    let n = guide.height() * guide.width();
    if g.len() != n || valid.len() != n {
        return Err(Error::invalid("disparity, mask and guide sizes differ"));
    }
    let sys = WlsSystem::new(guide, valid, params)?;
    let b = sys.rhs(g);
    let bn = dot(&b, &b).sqrt();
    if bn == 0.0 {
        // all valid samples are zero, so is the minimizer
        return Ok(WlsSolution {
            u: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }

    // start from g, invalid pixels at the mean of the valid ones
    let valid_count = valid.iter().filter(|&&v| v).count();
    let mean = b.iter().sum::<f64>() / valid_count as f64;
    let mut u: Vec<f64> = g
        .iter()
        .zip(valid)
        .map(|(&g, &v)| if v { g } else { mean })
        .collect();

    let precond = match Multigrid::new(&sys) {
        Some(mg) => Preconditioner::Multigrid(mg),
        None => Preconditioner::Jacobi(sys.diagonal().iter().map(|d| 1.0 / d).collect()),
    };
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    // The recurrence residual drifts from the true one on ill-conditioned
    // systems, so convergence is judged on the true residual and CG restarts
    // from the current iterate when they disagree.
    for _ in 0..MAX_RESTARTS {
        pcg(&sys, &b, bn, &precond, &mut u, &mut iterations, params)?;
        residual = sys.relative_residual(&u, g);
        if residual <= params.solver_tol {
            return Ok(WlsSolution {
                u,
                iterations,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations,
        residual,
    })
}

const MAX_RESTARTS: usize = 4;

enum Preconditioner {
    Multigrid(Multigrid),
    /// Reciprocal diagonal.
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Multigrid(mg) => mg.apply(r, z),
            Preconditioner::Jacobi(inv_diag) => z
                .par_iter_mut()
                .zip(r)
                .zip(inv_diag)
                .for_each(|((z, r), d)| *z = r * d),
        }
    }
}

/// Preconditioned CG from `u` until the recurrence residual drops below the
/// tolerance; `iterations` accumulates across calls.
fn pcg(
    sys: &WlsSystem,
    b: &[f64],
    bn: f64,
    precond: &Preconditioner,
    u: &mut [f64],
    iterations: &mut usize,
    params: &WlsParams,
) -> Result<()> {
    let n = u.len();
    let mut au = vec![0.0; n];
    sys.apply(u, &mut au);
    let mut r: Vec<f64> = b.iter().zip(&au).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let mut residual = dot(&r, &r).sqrt() / bn;
    while residual > params.solver_tol {
        if *iterations >= params.max_iters {
            return Err(Error::NotConverged {
                iterations: *iterations,
                residual,
            });
        }
        sys.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        u.par_iter_mut().zip(&p).for_each(|(u, p)| *u += step * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        *iterations += 1;
        residual = dot(&r, &r).sqrt() / bn;
    }
    Ok(())
}

/// WLS refinement of a disparity map guided by an image of the same size.
/// The result is re-quantized to 1/16 pixel. With `lambda == 0` the input
/// is returned unchanged; a map without valid pixels stays invalid.
pub fn wls_filter(g: &DisparityMap, guide: &GrayImage, params: &WlsParams) -> Result<DisparityMap> {
    params.validate()?;
    if g.dims() != guide.dims() {
        return Err(Error::DimensionMismatch {
            expected: guide.dims(),
            actual: g.dims(),
        });
    }
    if params.lambda == 0.0 || g.valid_count() == 0 {
        return Ok(g.clone());
    }
    let scale = DisparityMap::SCALE as f64;
    let valid: Vec<bool> = g.raw().iter().map(|&v| v != DisparityMap::INVALID).collect();
    let values: Vec<f64> = g
        .raw()
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| if ok { v as f64 / scale } else { 0.0 })
        .collect();
    let sol = wls_solve(&values, &valid, guide, params)?;
    log::debug!(
        "wls: {} iterations, relative residual {:e}",
        sol.iterations,
        sol.residual
    );
    let raw = sol.u.iter().map(|&u| to_fixed(u)).collect();
    DisparityMap::from_raw(g.height(), g.width(), raw)
}
