use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CostVolume, MatchParams};
use crate::error::{Error, Result};

/// Scanline direction: each path visits pixel `p` right after `p - (dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Direction {
    pub dx: i32,
    pub dy: i32,
}

/// One step of the path recursion:
///
/// `L(p,d) = C(p,d) + min(L'(d), L'(d±1) + P1, min_k L'(k) + P2) - min_k L'(k)`
#[inline]
fn path_step(cost: &[u32], prev: &[u32], out: &mut [u32], p1: u32, p2: u32) {
    let nd = cost.len();
    let min_prev = *prev.iter().min().expect("non-empty disparity range");
    let jump = min_prev + p2;
    for d in 0..nd {
        let mut v = prev[d].min(jump);
        if d > 0 {
            v = v.min(prev[d - 1] + p1);
        }
        if d + 1 < nd {
            v = v.min(prev[d + 1] + p1);
        }
        out[d] = cost[d] + v - min_prev;
    }
}

/// Semi-global aggregation: sums the path costs `L_r` over the configured
/// directions. Each `L_r` minimizes, along its scanline, the matching cost
/// plus `P1` for every unit disparity change and `P2` for every larger jump.
pub fn sgm_aggregate(cost: &CostVolume, params: &MatchParams) -> Result<CostVolume> {
    if (params.p1, params.p2) != (0, 0) && params.p2 <= params.p1 {
        return Err(Error::invalid(format!(
            "p2 ({}) must exceed p1 ({})",
            params.p2, params.p1
        )));
    }
    let (h, w, nd) = (cost.height(), cost.width(), cost.num_disparities());
    let mut total = vec![0u32; h * w * nd];
    for &dir in params.directions.paths() {
        if dir.dy == 0 {
            aggregate_rows(cost, dir.dx, params, &mut total);
        } else {
            aggregate_sweep(cost, dir, params, &mut total);
        }
    }
    Ok(cost.like(total))
}

/// Horizontal paths: every row is independent.
fn aggregate_rows(cost: &CostVolume, dx: i32, params: &MatchParams, total: &mut [u32]) {
    let (w, nd) = (cost.width(), cost.num_disparities());
    let data = cost.data();
    total.par_chunks_mut(w * nd).enumerate().for_each(|(y, acc)| {
        let row = &data[y * w * nd..(y + 1) * w * nd];
        let mut prev = vec![0u32; nd];
        let mut cur = vec![0u32; nd];
        let xs: Box<dyn Iterator<Item = usize>> = if dx > 0 {
            Box::new(0..w)
        } else {
            Box::new((0..w).rev())
        };
        for (i, x) in xs.enumerate() {
            let c = &row[x * nd..(x + 1) * nd];
            if i == 0 {
                cur.copy_from_slice(c);
            } else {
                path_step(c, &prev, &mut cur, params.p1, params.p2);
            }
            acc[x * nd..(x + 1) * nd]
                .iter_mut()
                .zip(&cur)
                .for_each(|(a, l)| *a += l);
            std::mem::swap(&mut prev, &mut cur);
        }
    });
}

/// Vertical and diagonal paths: rows are visited in path order and the
/// pixels of one row are independent given the previous row.
fn aggregate_sweep(cost: &CostVolume, dir: Direction, params: &MatchParams, total: &mut [u32]) {
    let (h, w, nd) = (cost.height(), cost.width(), cost.num_disparities());
    let data = cost.data();
    let mut prev = vec![0u32; w * nd];
    let mut cur = vec![0u32; w * nd];
    let ys: Vec<usize> = if dir.dy > 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    for (i, &y) in ys.iter().enumerate() {
        let row = &data[y * w * nd..(y + 1) * w * nd];
        cur.par_chunks_mut(nd).enumerate().for_each(|(x, out)| {
            let c = &row[x * nd..(x + 1) * nd];
            let px = x as i64 - dir.dx as i64;
            if i == 0 || px < 0 || px >= w as i64 {
                out.copy_from_slice(c);
            } else {
                let px = px as usize;
                path_step(c, &prev[px * nd..(px + 1) * nd], out, params.p1, params.p2);
            }
        });
        total[y * w * nd..(y + 1) * w * nd]
            .par_iter_mut()
            .zip(&cur)
            .for_each(|(a, l)| *a += l);
        std::mem::swap(&mut prev, &mut cur);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::{bm_match, Directions};
    use proptest::prelude::*;

    fn params(p1: u32, p2: u32, directions: Directions) -> MatchParams {
        MatchParams {
            num_disparities: 16,
            p1,
            p2,
            directions,
            uniqueness_ratio: 0,
            subpixel: false,
            ..MatchParams::default()
        }
    }

    fn random_volume(h: usize, w: usize, nd: usize, seed: u64) -> CostVolume {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..h * w * nd)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % 200) as u32
            })
            .collect();
        CostVolume::from_raw(h, w, 0, nd, data).unwrap()
    }

    /// Straightforward path cost over one row, left to right, recomputed
    /// from the definition without the min-subtraction.
    fn row_path_costs(cost: &CostVolume, y: usize, p1: u32, p2: u32) -> Vec<Vec<i64>> {
        let nd = cost.num_disparities();
        let mut out: Vec<Vec<i64>> = Vec::new();
        for x in 0..cost.width() {
            let c = cost.costs(y, x);
            let l: Vec<i64> = (0..nd)
                .map(|d| {
                    let prior = match out.last() {
                        None => 0,
                        Some(prev) => (0..nd)
                            .map(|k| {
                                let jump = d.abs_diff(k);
                                prev[k]
                                    + match jump {
                                        0 => 0,
                                        1 => p1 as i64,
                                        _ => p2 as i64,
                                    }
                            })
                            .min()
                            .unwrap(),
                    };
                    c[d] as i64 + prior
                })
                .collect();
            out.push(l);
        }
        out
    }

    #[test]
    fn zero_penalties_reduce_to_raw_costs() {
        let cv = random_volume(6, 9, 16, 3);
        let agg = sgm_aggregate(&cv, &params(0, 0, Directions::Eight)).unwrap();
        for (a, c) in agg.data().iter().zip(cv.data()) {
            assert_eq!(*a, 8 * c);
        }
        let p = params(0, 0, Directions::Eight);
        assert_eq!(bm_match(&agg, &p), bm_match(&cv, &p));
    }

    #[test]
    fn constant_volume_ties_to_lowest() {
        let cv = CostVolume::from_raw(5, 5, 0, 16, vec![42; 5 * 5 * 16]).unwrap();
        let p = params(10, 100, Directions::Eight);
        let agg = sgm_aggregate(&cv, &p).unwrap();
        assert!(bm_match(&agg, &p).raw().iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_p2_not_above_p1() {
        let cv = random_volume(2, 2, 16, 0);
        assert!(sgm_aggregate(&cv, &params(10, 5, Directions::One)).is_err());
    }

    proptest! {
        #[test]
        fn single_direction_matches_definition(seed in 0u64..10_000, w in 1usize..20, h in 1usize..4) {
            let cv = random_volume(h, w, 16, seed);
            let (p1, p2) = (7, 60);
            let agg = sgm_aggregate(&cv, &params(p1, p2, Directions::One)).unwrap();
            for y in 0..h {
                let reference = row_path_costs(&cv, y, p1, p2);
                for x in 0..w {
                    // aggregated = reference minus a per-pixel constant
                    let got = agg.costs(y, x);
                    let shift = reference[x][0] - got[0] as i64;
                    for d in 0..16 {
                        prop_assert_eq!(reference[x][d] - got[d] as i64, shift);
                    }
                }
            }
        }

        #[test]
        fn directions_are_symmetric_under_transpose(seed in 0u64..1000) {
            // 4-path aggregation of a volume equals that of its transpose, transposed
            let (h, w, nd) = (5, 7, 16);
            let cv = random_volume(h, w, nd, seed);
            let mut t = vec![0u32; h * w * nd];
            for y in 0..h {
                for x in 0..w {
                    t[(x * h + y) * nd..(x * h + y + 1) * nd].copy_from_slice(cv.costs(y, x));
                }
            }
            let tv = CostVolume::from_raw(w, h, 0, nd, t).unwrap();
            let p = params(5, 40, Directions::Four);
            let a = sgm_aggregate(&cv, &p).unwrap();
            let b = sgm_aggregate(&tv, &p).unwrap();
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(a.costs(y, x), b.costs(x, y));
                }
            }
        }
    }
}
