//! Lidar depth images: z-buffered rasterization of camera-frame points,
//! near-object spreading, and inverse-distance depth completion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parent_to_child, project_point, CameraIntrinsics, Point3, Pose};

/// Per-pixel metric depth with an explicit "no data" state, row-major.
///
/// Invalid pixels hold no value; [`DepthMap::get`] returns `None` for them.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<Option<f64>>,
}

/// Depth map straight out of rasterization; most pixels are invalid.
pub type SparseDepthMap = DepthMap;
/// Depth map after completion.
pub type DenseDepthMap = DepthMap;

impl DepthMap {
    pub fn empty(height: usize, width: usize) -> Self {
        DepthMap {
            height,
            width,
            data: vec![None; height * width],
        }
    }

    /// Builds a map from raw values; non-positive or non-finite entries
    /// become invalid.
    pub fn from_values(height: usize, width: usize, values: &[Option<f64>]) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "{} values for a {height}x{width} depth map",
                values.len()
            )));
        }
        Ok(DepthMap {
            height,
            width,
            data: values.iter().map(|v| v.filter(|d| is_valid_depth(*d))).collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.width + col]
    }

    /// Stores `depth`, or clears the pixel when `depth` is not a valid
    /// positive finite depth.
    pub fn set(&mut self, row: usize, col: usize, depth: Option<f64>) {
        self.data[row * self.width + col] = depth.filter(|d| is_valid_depth(*d));
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| d.is_some()).count()
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    /// Bitwise equality, including the validity mask.
    pub fn bit_eq(&self, other: &DepthMap) -> bool {
        self.dims() == other.dims()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.map(f64::to_bits) == b.map(f64::to_bits))
    }
}

fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Offsets `lo..=hi` (applied to rows and columns alike) that a near pixel
/// spreads its depth into.
///
/// Odd windows are centered. Even windows have no center pixel and lean
/// towards +row/+col: a 4x4 window covers offsets `-1..=2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadWindow {
    pub lo: i32,
    pub hi: i32,
}

impl SpreadWindow {
    /// `(2r+1) x (2r+1)` centered window; radius 0 disables spreading.
    pub fn radius(r: u32) -> Self {
        let r = r as i32;
        SpreadWindow { lo: -r, hi: r }
    }

    /// `size x size` window, asymmetric when `size` is even.
    pub fn size(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("spread window size must be >= 1"));
        }
        let size = size as i32;
        let lo = -((size - 1) / 2);
        Ok(SpreadWindow {
            lo,
            hi: lo + size - 1,
        })
    }

    pub fn is_noop(&self) -> bool {
        self.lo == 0 && self.hi == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    /// Completion uses the `(2*ngrid+1)^2` window around each pixel.
    pub ngrid: u32,
    pub spread: SpreadWindow,
    /// Only pixels strictly nearer than this (meters) are spread.
    pub near_threshold: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            ngrid: 4,
            spread: SpreadWindow::radius(1),
            near_threshold: 15.0,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        if self.ngrid < 1 {
            return Err(Error::invalid("ngrid must be >= 1"));
        }
        if self.spread.lo > 0 || self.spread.hi < 0 {
            return Err(Error::invalid("spread window must contain offset 0"));
        }
        if self.near_threshold.is_nan() {
            return Err(Error::invalid("near threshold is NaN"));
        }
        Ok(())
    }
}

/// Counts from [`rasterize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RasterStats {
    /// Points that landed on a pixel (including ones hidden by a nearer point).
    pub projected: usize,
    /// Points behind the camera, off the image, or non-finite.
    pub dropped: usize,
}

/// Round half away from zero, as MATLAB's `round` does.
fn round_pixel(c: f64) -> f64 {
    c.round()
}

/// Projects camera-frame points into a sparse depth image. When several
/// points hit the same pixel the nearest wins.
pub fn rasterize(points_cam: &[Point3], intr: &CameraIntrinsics) -> (SparseDepthMap, RasterStats) {
    let (h, w) = (intr.height, intr.width);
    let hits: Vec<Option<(usize, f64)>> = points_cam
        .par_iter()
        .map(|p| {
            if !p.is_finite() {
                return None;
            }
            let ip = project_point(intr, *p)?;
            let (u, v) = (round_pixel(ip.u), round_pixel(ip.v));
            if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
                return None;
            }
            Some((v as usize * w + u as usize, ip.depth))
        })
        .collect();

    let mut map = DepthMap::empty(h, w);
    let mut stats = RasterStats::default();
    for hit in hits {
        match hit {
            Some((idx, z)) => {
                stats.projected += 1;
                let slot = &mut map.data[idx];
                // min is order independent, so the scatter is deterministic
                *slot = Some(slot.map_or(z, |cur| cur.min(z)));
            }
            None => stats.dropped += 1,
        }
    }
    (map, stats)
}

/// Spreads every near pixel (depth below `near_threshold`) into its spread
/// window, overwriting targets that are invalid or strictly farther.
///
/// Implemented as a gather over the input map, so the result does not depend
/// on visiting order. Near pixels themselves are left untouched and no pixel
/// ever gets farther.
pub fn preserve_characteristics(map: &SparseDepthMap, params: &CompletionParams) -> SparseDepthMap {
    let (h, w) = map.dims();
    let SpreadWindow { lo, hi } = params.spread;
    let near = |d: f64| d < params.near_threshold;

    let mut out = map.clone();
    if params.spread.is_noop() || h == 0 || w == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, px) in row.iter_mut().enumerate() {
                let own = map.data[r * w + c];
                if own.is_some_and(near) {
                    continue;
                }
                let mut best = own;
                // source s spreads into t when t - s is in lo..=hi
                for dr in lo..=hi {
                    let sr = r as i64 - dr as i64;
                    if sr < 0 || sr >= h as i64 {
                        continue;
                    }
                    for dc in lo..=hi {
                        let sc = c as i64 - dc as i64;
                        if sc < 0 || sc >= w as i64 {
                            continue;
                        }
                        if let Some(d) = map.data[sr as usize * w + sc as usize] {
                            if near(d) && best.is_none_or(|b| d < b) {
                                best = Some(d);
                            }
                        }
                    }
                }
                *px = best;
            }
        });
    out
}

/// Fills invalid pixels with the inverse-distance weighted mean of the valid
/// pixels in the `(2*ngrid+1)^2` window around them:
/// `sum(d_q / |p-q|) / sum(1 / |p-q|)`.
///
/// Valid pixels pass through unchanged. Pixels with no valid neighbor stay
/// invalid. The window is summed in row-major order.
pub fn complete(map: &SparseDepthMap, params: &CompletionParams) -> DenseDepthMap {
    let (h, w) = map.dims();
    let n = params.ngrid as i64;
    let weights: Vec<f64> = (-n..=n)
        .flat_map(|dr| (-n..=n).map(move |dc| ((dr * dr + dc * dc) as f64).sqrt().recip()))
        .collect();
    let side = (2 * n + 1) as usize;

    let mut out = map.clone();
    if h == 0 || w == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, px) in row.iter_mut().enumerate() {
                if px.is_some() {
                    continue;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for dr in -n..=n {
                    let qr = r as i64 + dr;
                    if qr < 0 || qr >= h as i64 {
                        continue;
                    }
                    for dc in -n..=n {
                        let qc = c as i64 + dc;
                        if qc < 0 || qc >= w as i64 {
                            continue;
                        }
                        if let Some(d) = map.data[qr as usize * w + qc as usize] {
                            let wt = weights[(dr + n) as usize * side + (dc + n) as usize];
                            num += wt * d;
                            den += wt;
                        }
                    }
                }
                if den > 0.0 {
                    *px = Some(num / den);
                }
            }
        });
    out
}

/// Which optional stages [`lidar_pipeline`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub preserve: bool,
    pub complete: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            preserve: true,
            complete: true,
        }
    }
}

/// Moves global-frame points into the camera frame: global to body with the
/// body pose, then body to camera with the camera pose (camera in body).
pub fn global_to_camera(points_global: &[Point3], body_pose: &Pose, camera_pose: &Pose) -> Vec<Point3> {
    points_global
        .par_iter()
        .map(|&p| parent_to_child(camera_pose, parent_to_child(body_pose, p)))
        .collect()
}

/// Global-frame cloud to completed depth image.
pub fn lidar_pipeline(
    points_global: &[Point3],
    body_pose: &Pose,
    camera_pose: &Pose,
    intr: &CameraIntrinsics,
    params: &CompletionParams,
    stages: Stages,
) -> Result<(DenseDepthMap, RasterStats)> {
    params.validate()?;
    let cam = global_to_camera(points_global, body_pose, camera_pose);
    let (mut map, stats) = rasterize(&cam, intr);
    if stages.preserve {
        map = preserve_characteristics(&map, params);
    }
    if stages.complete {
        map = complete(&map, params);
    }
    Ok((map, stats))
}
