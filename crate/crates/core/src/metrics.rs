//! Depth error statistics and visualizations.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lidar_depth::DepthMap;

pub use crate::colormap::TURBO;

/// Upper edges (meters) of the error histogram buckets; the last bucket is
/// open-ended.
pub const HISTOGRAM_EDGES: [f64; 7] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lo: f64,
    /// `None` for the open-ended last bucket.
    pub hi: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Average absolute depth error per compared pixel, meters.
    pub mean_abs_error: f64,
    /// Pixels valid in both maps.
    pub pixel_count: usize,
    pub histogram: Vec<HistogramBucket>,
}

impl ErrorReport {
    /// Line-oriented `key value` text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "avg_meter_error_per_pixel {}", self.mean_abs_error).unwrap();
        writeln!(s, "pixel_count {}", self.pixel_count).unwrap();
        for b in &self.histogram {
            match b.hi {
                Some(hi) => writeln!(s, "bucket {} {} {}", b.lo, hi, b.count).unwrap(),
                None => writeln!(s, "bucket {} inf {}", b.lo, b.count).unwrap(),
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn bucket_of(err: f64) -> usize {
    HISTOGRAM_EDGES
        .iter()
        .position(|&hi| err < hi)
        .unwrap_or(HISTOGRAM_EDGES.len())
}

/// Mean absolute difference over pixels valid in both maps.
///
/// Errors are summed sequentially in row-major order, so the result is
/// reproducible bit for bit.
pub fn mean_abs_error(pred: &DepthMap, gt: &DepthMap) -> Result<ErrorReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    let mut counts = vec![0usize; HISTOGRAM_EDGES.len() + 1];
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in pred.values().iter().zip(gt.values()) {
        if let (Some(p), Some(g)) = (p, g) {
            let e = (p - g).abs();
            sum += e;
            n += 1;
            counts[bucket_of(e)] += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramBucket {
            lo: if i == 0 { 0.0 } else { HISTOGRAM_EDGES[i - 1] },
            hi: HISTOGRAM_EDGES.get(i).copied(),
            count,
        })
        .collect();
    Ok(ErrorReport {
        mean_abs_error: sum / n as f64,
        pixel_count: n,
        histogram,
    })
}

/// Maps depths linearly onto [`TURBO`]: `d_min` to the first entry, `d_max`
/// to the last, clamping outside. Invalid pixels are black.
pub fn colorize_depth(map: &DepthMap, d_min: f64, d_max: f64) -> Result<RgbImage> {
    if !d_min.is_finite() || !d_max.is_finite() || d_min >= d_max {
        return Err(Error::invalid(format!(
            "colorize range needs d_min < d_max, got [{d_min}, {d_max}]"
        )));
    }
    let (h, w) = map.dims();
    let top = (TURBO.len() - 1) as f64;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        match map.get(y as usize, x as usize) {
            None => Rgb([0, 0, 0]),
            Some(d) => {
                let t = ((d - d_min) / (d_max - d_min)).clamp(0.0, 1.0);
                Rgb(TURBO[(t * top).round() as usize])
            }
        }
    }))
}

/// Paints the valid pixels of `map` in `color` on top of `base`.
pub fn overlay_points(base: &RgbImage, map: &DepthMap, color: [u8; 3]) -> Result<RgbImage> {
    let dims = (base.height() as usize, base.width() as usize);
    if dims != map.dims() {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: map.dims(),
        });
    }
    let mut out = base.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if map.is_valid(y as usize, x as usize) {
            *px = Rgb(color);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: &[Option<f64>]) -> DepthMap {
        DepthMap::from_values(h, w, v).unwrap()
    }

    #[test]
    fn identical_maps_have_zero_error() {
        let m = map(1, 3, &[Some(1.0), None, Some(9.0)]);
        let r = mean_abs_error(&m, &m).unwrap();
        assert_eq!(r.mean_abs_error, 0.0);
        assert_eq!(r.pixel_count, 2);
    }

    #[test]
    fn constant_offset() {
        let gt = map(1, 3, &[Some(1.0), Some(4.0), Some(9.0)]);
        let pred = map(1, 3, &[Some(3.0), Some(6.0), Some(11.0)]);
        assert_eq!(mean_abs_error(&pred, &gt).unwrap().mean_abs_error, 2.0);
    }

    #[test]
    fn hand_average() {
        let pred = map(1, 2, &[Some(1.0), Some(4.0)]);
        let gt = map(1, 2, &[Some(2.0), Some(2.0)]);
        let r = mean_abs_error(&pred, &gt).unwrap();
        assert_eq!(r.mean_abs_error, 1.5);
        assert_eq!(r.histogram[2].count, 1); // error 1.0 in [1, 2)
        assert_eq!(r.histogram[3].count, 1); // error 2.0 in [2, 5)
    }

    #[test]
    fn only_shared_pixels_count() {
        let pred = map(1, 3, &[Some(1.0), None, Some(5.0)]);
        let gt = map(1, 3, &[None, Some(2.0), Some(6.0)]);
        let r = mean_abs_error(&pred, &gt).unwrap();
        assert_eq!((r.mean_abs_error, r.pixel_count), (1.0, 1));
    }

    #[test]
    fn error_cases() {
        let a = map(1, 2, &[Some(1.0), None]);
        let b = map(1, 2, &[None, Some(1.0)]);
        assert!(matches!(mean_abs_error(&a, &b), Err(Error::EmptyOverlap)));
        let c = map(2, 1, &[Some(1.0), None]);
        assert!(matches!(mean_abs_error(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn report_text_and_json() {
        let pred = map(1, 2, &[Some(1.0), Some(4.0)]);
        let gt = map(1, 2, &[Some(2.0), Some(2.0)]);
        let r = mean_abs_error(&pred, &gt).unwrap();
        let text = r.to_text();
        assert!(text.starts_with("avg_meter_error_per_pixel 1.5\npixel_count 2\n"));
        assert!(text.ends_with("bucket 50 inf 0\n"));
        let back: ErrorReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn colorize_endpoints() {
        let m = map(1, 4, &[Some(10.0), Some(20.0), Some(15.0), None]);
        let img = colorize_depth(&m, 10.0, 20.0).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, TURBO[0]);
        assert_eq!(img.get_pixel(1, 0).0, TURBO[255]);
        assert_eq!(img.get_pixel(2, 0).0, TURBO[128]);
        assert_eq!(img.get_pixel(3, 0).0, [0, 0, 0]);
        assert!(colorize_depth(&m, 5.0, 5.0).is_err());
    }

    #[test]
    fn colorize_all_invalid_is_black() {
        let img = colorize_depth(&DepthMap::empty(3, 3), 0.0, 1.0).unwrap();
        assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn overlay_cases() {
        let base = RgbImage::from_pixel(3, 2, Rgb([10, 20, 30]));
        let out = overlay_points(&base, &DepthMap::empty(2, 3), [255, 0, 0]).unwrap();
        assert_eq!(out, base);

        let mut m = DepthMap::empty(2, 3);
        m.set(1, 2, Some(4.0));
        let out = overlay_points(&base, &m, [255, 0, 0]).unwrap();
        let painted = out.pixels().filter(|p| p.0 == [255, 0, 0]).count();
        assert_eq!(painted, 1);
        assert_eq!(out.get_pixel(2, 1).0, [255, 0, 0]);

        let full = DepthMap::from_values(2, 3, &[Some(1.0); 6]).unwrap();
        let out = overlay_points(&base, &full, [0, 255, 0]).unwrap();
        assert!(out.pixels().all(|p| p.0 == [0, 255, 0]));

        assert!(overlay_points(&base, &DepthMap::empty(3, 2), [0, 0, 0]).is_err());
    }

    fn pair() -> impl Strategy<Value = (Vec<Option<f64>>, Vec<Option<f64>>)> {
        (1usize..40).prop_flat_map(|n| {
            let v = proptest::collection::vec(proptest::option::weighted(0.8, 0.1..100.0f64), n);
            (v.clone(), v)
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_covariant((a, b) in pair(), c in 0.1..10.0f64) {
            let n = a.len();
            let (ma, mb) = (map(1, n, &a), map(1, n, &b));
            let (ab, ba) = (mean_abs_error(&ma, &mb), mean_abs_error(&mb, &ma));
            match (ab, ba) {
                (Ok(ab), Ok(ba)) => {
                    prop_assert_eq!(ab.mean_abs_error, ba.mean_abs_error);
                    let scale = |v: &[Option<f64>]| v.iter().map(|d| d.map(|d| d * c)).collect::<Vec<_>>();
                    let sc = mean_abs_error(&map(1, n, &scale(&a)), &map(1, n, &scale(&b))).unwrap();
                    prop_assert!((sc.mean_abs_error - c * ab.mean_abs_error).abs() <= 1e-9 * (1.0 + sc.mean_abs_error));
                }
                (Err(Error::EmptyOverlap), Err(Error::EmptyOverlap)) => {}
                other => prop_assert!(false, "asymmetric outcome {:?}", other),
            }
        }

        #[test]
        fn zero_iff_equal_on_overlap(a in proptest::collection::vec(0.1..100.0f64, 1..30)) {
            let m = map(1, a.len(), &a.iter().map(|&v| Some(v)).collect::<Vec<_>>());
            prop_assert_eq!(mean_abs_error(&m, &m).unwrap().mean_abs_error, 0.0);
            let mut b = a.clone();
            b[0] += 1.0;
            let mb = map(1, b.len(), &b.iter().map(|&v| Some(v)).collect::<Vec<_>>());
            prop_assert!(mean_abs_error(&m, &mb).unwrap().mean_abs_error > 0.0);
        }
    }
}
