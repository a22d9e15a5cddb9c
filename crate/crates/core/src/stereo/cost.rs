use rayon::prelude::*;

use super::{GrayImage, MatchParams};
use crate::error::{Error, Result};

/// `H x W x D` matching costs, laid out `[(row * W + col) * D + k]` where
/// candidate `k` is disparity `min_disparity + k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostVolume {
    height: usize,
    width: usize,
    min_disparity: i32,
    num_disparities: usize,
    data: Vec<u32>,
}

impl CostVolume {
    pub fn from_raw(
        height: usize,
        width: usize,
        min_disparity: i32,
        num_disparities: usize,
        data: Vec<u32>,
    ) -> Result<Self> {
        if num_disparities == 0 || data.len() != height * width * num_disparities {
            return Err(Error::invalid(format!(
                "{} costs for a {height}x{width}x{num_disparities} volume",
                data.len()
            )));
        }
        Ok(CostVolume {
            height,
            width,
            min_disparity,
            num_disparities,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn min_disparity(&self) -> i32 {
        self.min_disparity
    }

    pub fn num_disparities(&self) -> usize {
        self.num_disparities
    }

    /// Costs of all candidates at one pixel.
    pub fn costs(&self, row: usize, col: usize) -> &[u32] {
        let d = self.num_disparities;
        let i = (row * self.width + col) * d;
        &self.data[i..i + d]
    }

    pub fn get(&self, row: usize, col: usize, k: usize) -> u32 {
        self.costs(row, col)[k]
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub(crate) fn like(&self, data: Vec<u32>) -> CostVolume {
        debug_assert_eq!(data.len(), self.data.len());
        CostVolume { data, ..*self }
    }
}

/// Sum of absolute differences over the matching block, in 8-bit intensity
/// units:
///
/// `C(p, d) = sum_o |left(p + o) - right(p - (d, 0) + o)|`
///
/// Every sample coordinate is clamped to the image independently.
pub fn sad_cost_volume(left: &GrayImage, right: &GrayImage, params: &MatchParams) -> Result<CostVolume> {
    if left.dims() != right.dims() {
        return Err(Error::DimensionMismatch {
            expected: left.dims(),
            actual: right.dims(),
        });
    }
    params.validate_relaxed()?;
    let (h, w) = left.dims();
    let nd = params.num_disparities as usize;
    let half = (params.block_size / 2) as i64;
    let lq = left.to_u8();
    let rq = right.to_u8();
    let clamp_col = |x: i64| x.clamp(0, w as i64 - 1) as usize;

    // Horizontal block sums per image row: hsum[(row * W + col) * D + k].
    let mut hsum = vec![0u32; h * w * nd];
    hsum.par_chunks_mut(w * nd).enumerate().for_each(|(y, out)| {
        let l = &lq[y * w..(y + 1) * w];
        let r = &rq[y * w..(y + 1) * w];
        let span = w + 2 * half as usize;
        let mut diff = vec![0u32; span];
        for k in 0..nd {
            let disp = params.min_disparity as i64 + k as i64;
            for (i, v) in diff.iter_mut().enumerate() {
                let xs = i as i64 - half;
                let a = l[clamp_col(xs)] as i32;
                let b = r[clamp_col(xs - disp)] as i32;
                *v = a.abs_diff(b);
            }
            // running window of width block_size over the padded span
            let mut acc: u32 = diff[..2 * half as usize].iter().sum();
            for x in 0..w {
                acc += diff[x + 2 * half as usize];
                out[x * nd + k] = acc;
                acc -= diff[x];
            }
        }
    });

    let mut data = vec![0u32; h * w * nd];
    data.par_chunks_mut(w * nd).enumerate().for_each(|(y, out)| {
        for oy in -half..=half {
            let sy = (y as i64 + oy).clamp(0, h as i64 - 1) as usize;
            let src = &hsum[sy * w * nd..(sy + 1) * w * nd];
            out.iter_mut().zip(src).for_each(|(o, s)| *o += s);
        }
    });
    CostVolume::from_raw(h, w, params.min_disparity, nd, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(nd: u32, block: u32) -> MatchParams {
        MatchParams {
            num_disparities: nd,
            block_size: block,
            ..MatchParams::default()
        }
    }

    fn naive(left: &GrayImage, right: &GrayImage, p: &MatchParams) -> Vec<u32> {
        let (h, w) = left.dims();
        let (l, r) = (left.to_u8(), right.to_u8());
        let half = (p.block_size / 2) as i64;
        let cl = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        let mut out = Vec::new();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                for k in 0..p.num_disparities as i64 {
                    let d = p.min_disparity as i64 + k;
                    let mut c = 0u32;
                    for oy in -half..=half {
                        for ox in -half..=half {
                            let ry = cl(y + oy, h);
                            let a = l[ry * w + cl(x + ox, w)] as i32;
                            let b = r[ry * w + cl(x + ox - d, w)] as i32;
                            c += a.abs_diff(b);
                        }
                    }
                    out.push(c);
                }
            }
        }
        out
    }

    fn textured(h: usize, w: usize, seed: u32) -> GrayImage {
        GrayImage::from_fn(h, w, |r, c| {
            let v = (r as u32 * 7919 + c as u32 * 104729 + seed * 31).wrapping_mul(2654435761) >> 24;
            v as f32 / 255.0
        })
        .unwrap()
    }

    #[test]
    fn identical_images_cost_zero_at_zero() {
        let img = textured(12, 20, 1);
        let cv = sad_cost_volume(&img, &img, &params(16, 3)).unwrap();
        for r in 0..12 {
            for c in 0..20 {
                assert_eq!(cv.get(r, c, 0), 0);
            }
        }
    }

    #[test]
    fn shifted_pair_minimum_at_shift() {
        let left = textured(16, 48, 3);
        let right = GrayImage::from_fn(16, 48, |r, c| left.get(r, (c + 5).min(47))).unwrap();
        let cv = sad_cost_volume(&left, &right, &params(16, 5)).unwrap();
        for r in 2..14 {
            for c in 20..40 {
                let costs = cv.costs(r, c);
                let best = (0..16).min_by_key(|&k| costs[k]).unwrap();
                assert_eq!(best, 5, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn constant_region_is_ambiguous() {
        let img = GrayImage::filled(8, 30, 0.4).unwrap();
        let cv = sad_cost_volume(&img, &img, &params(16, 5)).unwrap();
        assert!(cv.data().iter().all(|&c| c == 0));
    }

    #[test]
    fn size_mismatch_is_error() {
        let a = GrayImage::filled(4, 4, 0.0).unwrap();
        let b = GrayImage::filled(4, 5, 0.0).unwrap();
        assert!(matches!(
            sad_cost_volume(&a, &b, &params(16, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_naive_triple_loop(
            h in 1usize..16, w in 1usize..16,
            seed in 0u32..1000, seed2 in 0u32..1000,
            nd in 1u32..8, min_d in -3i32..4, block in prop::sample::select(vec![3u32, 5, 7]),
        ) {
            let left = textured(h, w, seed);
            let right = textured(h, w, seed2);
            let p = MatchParams { min_disparity: min_d, ..params(nd, block) };
            let cv = sad_cost_volume(&left, &right, &p).unwrap();
            prop_assert_eq!(cv.data(), &naive(&left, &right, &p)[..]);
        }
    }
}
