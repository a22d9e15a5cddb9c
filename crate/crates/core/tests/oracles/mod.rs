//! Brute-force reference implementations shared by the integration tests.
//! Each one is written from the defining formula, without reusing library
//! internals.
#![allow(dead_code)]

/// SAD over a `block x block` window with every coordinate clamped to the
/// image, for `min_d .. min_d + nd`. Layout `[(y * w + x) * nd + k]`.
pub fn sad_naive(
    left: &[u8],
    right: &[u8],
    h: usize,
    w: usize,
    min_d: i32,
    nd: usize,
    block: usize,
) -> Vec<u32> {
    let half = (block / 2) as i64;
    let cl = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut out = Vec::with_capacity(h * w * nd);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for k in 0..nd as i64 {
                let d = min_d as i64 + k;
                let mut c = 0u32;
                for oy in -half..=half {
                    for ox in -half..=half {
                        let ry = cl(y + oy, h);
                        let a = left[ry * w + cl(x + ox, w)] as i32;
                        let b = right[ry * w + cl(x + ox - d, w)] as i32;
                        c += a.abs_diff(b);
                    }
                }
                out.push(c);
            }
        }
    }
    out
}

/// Smoothness penalty between neighboring disparity indices.
pub fn penalty(a: usize, b: usize, p1: u64, p2: u64) -> u64 {
    match a.abs_diff(b) {
        0 => 0,
        1 => p1,
        _ => p2,
    }
}

/// Scanline energy: matching costs plus `P1` per unit step and `P2` per
/// larger jump between consecutive pixels.
pub fn energy_1d(costs: &[Vec<u32>], assignment: &[usize], p1: u64, p2: u64) -> u64 {
    let data: u64 = assignment
        .iter()
        .zip(costs)
        .map(|(&d, c)| c[d] as u64)
        .sum();
    let smooth: u64 = assignment
        .windows(2)
        .map(|w| penalty(w[0], w[1], p1, p2))
        .sum();
    data + smooth
}

/// Every assignment of `nd` labels to `len` pixels, in lexicographic order.
fn assignments(len: usize, nd: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = nd.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut a = vec![0; len];
        for slot in a.iter_mut().rev() {
            *slot = code % nd;
            code /= nd;
        }
        a
    })
}

/// For every pixel `p`, the label `d_p` of the exhaustive minimizer of the
/// energy of the prefix `0..=p`; among minimizers the lowest `d_p` wins.
pub fn prefix_minimizers(costs: &[Vec<u32>], p1: u64, p2: u64) -> Vec<usize> {
    let nd = costs[0].len();
    (0..costs.len())
        .map(|p| {
            let prefix = &costs[..=p];
            let mut best = (u64::MAX, usize::MAX);
            for a in assignments(p + 1, nd) {
                let e = energy_1d(prefix, &a, p1, p2);
                let cand = (e, a[p]);
                if cand < best {
                    best = cand;
                }
            }
            best.1
        })
        .collect()
}

/// Minimum energy over all assignments of the whole row, and the lowest
/// last-pixel label among the assignments reaching it.
pub fn row_minimum(costs: &[Vec<u32>], p1: u64, p2: u64) -> (u64, usize) {
    let nd = costs[0].len();
    let last = costs.len() - 1;
    assignments(costs.len(), nd)
        .map(|a| (energy_1d(costs, &a, p1, p2), a[last]))
        .min()
        .expect("at least one assignment")
}

/// Two-dimensional energy over the 8-neighborhood (each pair counted once).
/// `cost` has layout `[(y * w + x) * nd + k]`, `labels` holds indices `k`.
pub fn energy_2d(cost: &[u32], labels: &[usize], h: usize, w: usize, nd: usize, p1: u64, p2: u64) -> u64 {
    let mut e = 0u64;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            e += cost[i * nd + labels[i]] as u64;
            for (dy, dx) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
                let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                if ny < h as i64 && nx >= 0 && nx < w as i64 {
                    let j = ny as usize * w + nx as usize;
                    e += penalty(labels[i], labels[j], p1, p2);
                }
            }
        }
    }
    e
}

/// Shepard interpolation by scanning the whole map: every valid `q` with
/// `max(|dr|, |dc|) <= ngrid` contributes `d_q / |p - q|`.
pub fn shepard(values: &[Option<f64>], h: usize, w: usize, ngrid: usize) -> Vec<Option<f64>> {
    (0..h * w)
        .map(|i| {
            if values[i].is_some() {
                return values[i];
            }
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            let (mut num, mut den) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let Some(d) = v else { continue };
                let (qr, qc) = ((j / w) as i64, (j % w) as i64);
                if (qr - r).abs().max((qc - c).abs()) > ngrid as i64 {
                    continue;
                }
                let dist = (((qr - r).pow(2) + (qc - c).pow(2)) as f64).sqrt();
                num += d / dist;
                den += 1.0 / dist;
            }
            (den > 0.0).then(|| num / den)
        })
        .collect()
}

/// Edges of the 4-connected grid with their guide affinities
/// `1 / (|guide_q - guide_p|^alpha + eps)`.
fn affinity_edges(guide: &[f32], h: usize, w: usize, alpha: f64, eps: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let mut push = |q: usize| {
                let g = (guide[q] as f64 - guide[p] as f64).abs();
                edges.push((p, q, 1.0 / (g.powf(alpha) + eps)));
            };
            if x + 1 < w {
                push(p + 1);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
    }
    edges
}

/// Weighted least-squares loss with data weight 1 on valid pixels, 0 elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn wls_loss(
    u: &[f64],
    g: &[f64],
    valid: &[bool],
    guide: &[f32],
    h: usize,
    w: usize,
    lambda: f64,
    alpha: f64,
    eps: f64,
) -> f64 {
    let data: f64 = (0..h * w)
        .filter(|&i| valid[i])
        .map(|i| (u[i] - g[i]).powi(2))
        .sum();
    let smooth: f64 = affinity_edges(guide, h, w, alpha, eps)
        .iter()
        .map(|&(p, q, a)| a * (u[q] - u[p]).powi(2))
        .sum();
    data + lambda * smooth
}

/// `||grad(loss)/2|| / ||W g||`: the relative residual of the normal
/// equations, assembled edge by edge.
#[allow(clippy::too_many_arguments)]
pub fn wls_residual(
    u: &[f64],
    g: &[f64],
    valid: &[bool],
    guide: &[f32],
    h: usize,
    w: usize,
    lambda: f64,
    alpha: f64,
    eps: f64,
) -> f64 {
    let mut r: Vec<f64> = (0..h * w)
        .map(|i| if valid[i] { u[i] - g[i] } else { 0.0 })
        .collect();
    for (p, q, a) in affinity_edges(guide, h, w, alpha, eps) {
        let f = lambda * a * (u[p] - u[q]);
        r[p] += f;
        r[q] -= f;
    }
    let rhs: f64 = (0..h * w).filter(|&i| valid[i]).map(|i| g[i] * g[i]).sum();
    let rn: f64 = r.iter().map(|v| v * v).sum();
    if rhs == 0.0 {
        rn.sqrt()
    } else {
        (rn / rhs).sqrt()
    }
}
