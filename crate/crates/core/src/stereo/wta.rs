use rayon::prelude::*;

use super::{CostVolume, DisparityMap, MatchParams};

/// Winner-take-all over a (raw or aggregated) cost volume.
///
/// Ties go to the lowest disparity. With `uniqueness_ratio > 0` a pixel is
/// rejected when some candidate not adjacent to the winner costs at most
/// `best * (1 + ratio / 100)`. With `subpixel` set, a parabola through the
/// winner and its two neighbours refines the result to 1/16 pixel.
pub fn bm_match(cost: &CostVolume, params: &MatchParams) -> DisparityMap {
    let (h, w) = (cost.height(), cost.width());
    let nd = cost.num_disparities();
    let min_d = cost.min_disparity();
    let mut out = DisparityMap::new_invalid(h, w);

    out.raw_mut().par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let c = cost.costs(y, x);
            let (best, best_cost) = c
                .iter()
                .enumerate()
                .fold((0, u32::MAX), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });

            if params.uniqueness_ratio > 0 {
                let ambiguous = c.iter().enumerate().any(|(k, &v)| {
                    k.abs_diff(best) > 1
                        && (v as u64) * 100 <= best_cost as u64 * (100 + params.uniqueness_ratio as u64)
                });
                if ambiguous {
                    continue;
                }
            }

            let mut raw = (min_d + best as i32) * DisparityMap::SCALE;
            if params.subpixel && best > 0 && best + 1 < nd {
                let (cm, c0, cp) = (c[best - 1] as f64, best_cost as f64, c[best + 1] as f64);
                let denom = cm + cp - 2.0 * c0;
                if denom > 0.0 {
                    let offset = ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
                    raw += (offset * DisparityMap::SCALE as f64).round() as i32;
                }
            }
            *px = raw as i16;
        }
    });
    out
}

/// Marks the leftmost `min_disparity + num_disparities` columns invalid: for
/// those pixels part of the search range falls off the left edge of the
/// right image, so no full match exists.
pub fn invalidate_unmatched_columns(disp: &mut DisparityMap, params: &MatchParams) {
    let w = disp.width();
    let band = (params.min_disparity + params.num_disparities as i32).clamp(0, w as i32) as usize;
    disp.raw_mut()
        .chunks_mut(w)
        .for_each(|row| row[..band].fill(DisparityMap::INVALID));
}
