//! Disparity from a rectified stereo pair.
//!
//! The pipeline is Gaussian pre-smoothing, optional column padding, a SAD
//! cost volume, optional semi-global aggregation, winner-take-all with
//! uniqueness rejection and parabolic sub-pixel refinement, then an optional
//! WLS refinement pass. Inputs must already be rectified so that
//! correspondences share a row.

mod blur;
mod cost;
mod depth;
mod pad;
mod sgm;
mod wta;

pub use blur::gaussian_blur;
pub use cost::{sad_cost_volume, CostVolume};
pub use depth::{depth_to_disparity, disparity_to_depth, MIN_DEPTH_DISPARITY};
pub use pad::{crop_columns, crop_disparity, pad_for_matching};
pub use sgm::{sgm_aggregate, Direction};
pub use wta::{bm_match, invalidate_unmatched_columns};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wls::{wls_filter, WlsParams};

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "{} samples for a {height}x{width} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        GrayImage::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        GrayImage::new(height, width, data)
    }

    /// Scales 8-bit samples to `[0, 1]`.
    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        GrayImage::new(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// 8-bit quantization, `round(255 * v)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
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

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut data = self.data.clone();
        data.chunks_mut(self.width).for_each(|r| r.reverse());
        GrayImage { data, ..*self }
    }
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Fixed-point disparity map: `raw / 16` pixels, `i16` storage,
/// [`DisparityMap::INVALID`] where no disparity was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityMap {
    height: usize,
    width: usize,
    data: Vec<i16>,
}

impl DisparityMap {
    pub const SCALE: i32 = 16;
    pub const INVALID: i16 = i16::MIN;

    pub fn new_invalid(height: usize, width: usize) -> Self {
        DisparityMap {
            height,
            width,
            data: vec![Self::INVALID; height * width],
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<i16>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "{} samples for a {height}x{width} disparity map",
                data.len()
            )));
        }
        Ok(DisparityMap {
            height,
            width,
            data,
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

    pub fn raw(&self) -> &[i16] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [i16] {
        &mut self.data
    }

    pub fn get_raw(&self, row: usize, col: usize) -> i16 {
        self.data[row * self.width + col]
    }

    /// Disparity in pixels, `None` if invalid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        match self.get_raw(row, col) {
            Self::INVALID => None,
            raw => Some(raw as f64 / Self::SCALE as f64),
        }
    }

    pub fn set(&mut self, row: usize, col: usize, disparity: Option<f64>) {
        self.data[row * self.width + col] = disparity.map_or(Self::INVALID, to_fixed);
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != Self::INVALID).count()
    }
}

/// Pixels to 1/16 fixed point, saturating at the `i16` range.
pub(crate) fn to_fixed(d: f64) -> i16 {
    let v = (d * DisparityMap::SCALE as f64).round();
    v.clamp(i16::MIN as f64 + 1.0, i16::MAX as f64) as i16
}

/// Aggregation path set for semi-global matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directions {
    /// Left-to-right only.
    One,
    /// Horizontal and vertical, both senses.
    Four,
    /// Four plus the diagonals.
    Eight,
}

impl Directions {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Directions::One),
            4 => Ok(Directions::Four),
            8 => Ok(Directions::Eight),
            _ => Err(Error::invalid(format!("directions must be 1, 4 or 8, got {n}"))),
        }
    }

    pub fn paths(self) -> &'static [Direction] {
        use Direction as D;
        const ALL: [Direction; 8] = [
            D { dx: 1, dy: 0 },
            D { dx: -1, dy: 0 },
            D { dx: 0, dy: 1 },
            D { dx: 0, dy: -1 },
            D { dx: 1, dy: 1 },
            D { dx: -1, dy: 1 },
            D { dx: 1, dy: -1 },
            D { dx: -1, dy: -1 },
        ];
        match self {
            Directions::One => &ALL[..1],
            Directions::Four => &ALL[..4],
            Directions::Eight => &ALL[..],
        }
    }
}

/// Matching knobs. Costs are in 8-bit intensity units summed over the block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub min_disparity: i32,
    /// Search range length; a positive multiple of 16.
    pub num_disparities: u32,
    /// Odd, >= 3.
    pub block_size: u32,
    pub p1: u32,
    pub p2: u32,
    /// Percent margin by which the best cost must beat the runner-up
    /// (disparities adjacent to the best excluded); 0 disables the check.
    pub uniqueness_ratio: u32,
    pub directions: Directions,
    pub subpixel: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        let block_size = 5;
        let area = block_size * block_size;
        MatchParams {
            min_disparity: 0,
            num_disparities: 64,
            block_size,
            p1: 8 * area,
            p2: 32 * area,
            uniqueness_ratio: 10,
            directions: Directions::Eight,
            subpixel: true,
        }
    }
}

impl MatchParams {
    pub fn max_disparity(&self) -> i32 {
        self.min_disparity + self.num_disparities as i32 - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_disparities == 0 || !self.num_disparities.is_multiple_of(16) {
            return Err(Error::invalid(format!(
                "num_disparities must be a positive multiple of 16, got {}",
                self.num_disparities
            )));
        }
        self.validate_common()
    }

    /// Like [`MatchParams::validate`] but allows any positive
    /// `num_disparities`, for small exhaustive-search tests.
    pub fn validate_relaxed(&self) -> Result<()> {
        if self.num_disparities == 0 {
            return Err(Error::invalid("num_disparities must be positive"));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        if self.block_size < 3 || self.block_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "block_size must be odd and >= 3, got {}",
                self.block_size
            )));
        }
        if self.block_size > 31 {
            return Err(Error::invalid("block_size must be <= 31"));
        }
        // p1 = p2 = 0 turns aggregation off and is allowed
        if (self.p1, self.p2) != (0, 0) && self.p2 <= self.p1 {
            return Err(Error::invalid(format!(
                "p2 ({}) must exceed p1 ({})",
                self.p2, self.p1
            )));
        }
        let max_raw = (self.max_disparity() as i64 + 1) * DisparityMap::SCALE as i64;
        let min_raw = self.min_disparity as i64 * DisparityMap::SCALE as i64;
        if max_raw > i16::MAX as i64 || min_raw <= i16::MIN as i64 {
            return Err(Error::invalid("disparity range does not fit 1/16 fixed point in i16"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Bm,
    Sgbm,
}

/// Full stereo pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoConfig {
    pub params: MatchParams,
    pub algorithm: Algorithm,
    /// Gaussian pre-smoothing; 0 disables.
    pub blur_sigma: f64,
    /// Prepend columns so the leftmost image columns get a full search range.
    pub pad: bool,
    pub wls: Option<WlsParams>,
}

impl Default for StereoConfig {
    fn default() -> Self {
        StereoConfig {
            params: MatchParams::default(),
            algorithm: Algorithm::Sgbm,
            blur_sigma: 1.0,
            pad: true,
            wls: Some(WlsParams::default()),
        }
    }
}

/// Raw matching (blur, pad, cost, aggregate, winner-take-all, crop) without
/// the WLS pass.
pub fn match_pair(left: &GrayImage, right: &GrayImage, config: &StereoConfig) -> Result<DisparityMap> {
    let p = &config.params;
    p.validate()?;
    if left.dims() != right.dims() {
        return Err(Error::DimensionMismatch {
            expected: left.dims(),
            actual: right.dims(),
        });
    }
    let left = gaussian_blur(left, config.blur_sigma)?;
    let right = gaussian_blur(right, config.blur_sigma)?;
    let (left, right, offset) = if config.pad {
        pad_for_matching(&left, &right, p)
    } else {
        (left, right, 0)
    };

    let cost = sad_cost_volume(&left, &right, p)?;
    let mut disp = match config.algorithm {
        Algorithm::Bm => bm_match(&cost, p),
        Algorithm::Sgbm => bm_match(&sgm_aggregate(&cost, p)?, p),
    };
    invalidate_unmatched_columns(&mut disp, p);
    Ok(crop_disparity(&disp, offset))
}

/// Left-view disparity through the whole pipeline, WLS included when
/// configured. The left image guides the filter.
pub fn compute_disparity(left: &GrayImage, right: &GrayImage, config: &StereoConfig) -> Result<DisparityMap> {
    let disp = match_pair(left, right, config)?;
    match &config.wls {
        Some(wls) => wls_filter(&disp, left, wls),
        None => Ok(disp),
    }
}

/// Right-view disparity: matches with the roles of the views swapped by
/// mirroring both images, so the search runs towards +x in the right view.
/// Values are positive, `x_left = x_right + d`.
pub fn compute_right_disparity(
    left: &GrayImage,
    right: &GrayImage,
    config: &StereoConfig,
) -> Result<DisparityMap> {
    let config = StereoConfig { wls: None, ..*config };
    let mirrored = match_pair(&right.flip_horizontal(), &left.flip_horizontal(), &config)?;
    let mut data = mirrored.data;
    data.chunks_mut(mirrored.width).for_each(|r| r.reverse());
    DisparityMap::from_raw(mirrored.height, mirrored.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_image_validation() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.0]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn u8_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = GrayImage::from_u8(16, 16, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }

    #[test]
    fn params_validation() {
        let p = MatchParams::default();
        assert!(p.validate().is_ok());
        assert_eq!(p.max_disparity(), 63);
        assert!(MatchParams { num_disparities: 20, ..p }.validate().is_err());
        assert!(MatchParams { num_disparities: 20, ..p }.validate_relaxed().is_ok());
        assert!(MatchParams { block_size: 4, ..p }.validate().is_err());
        assert!(MatchParams { p1: 10, p2: 10, ..p }.validate().is_err());
        assert!(MatchParams { p1: 0, p2: 0, ..p }.validate().is_ok());
        assert!(MatchParams { num_disparities: 2048, ..p }.validate().is_err());
    }

    #[test]
    fn fixed_point_disparity() {
        let mut m = DisparityMap::new_invalid(1, 2);
        assert_eq!(m.get(0, 0), None);
        m.set(0, 0, Some(5.25));
        assert_eq!(m.get_raw(0, 0), 84);
        assert_eq!(m.get(0, 0), Some(5.25));
        assert_eq!(m.valid_count(), 1);
    }

    #[test]
    fn directions_from_count() {
        assert_eq!(Directions::from_count(1).unwrap().paths().len(), 1);
        assert_eq!(Directions::from_count(4).unwrap().paths().len(), 4);
        assert_eq!(Directions::from_count(8).unwrap().paths().len(), 8);
        assert!(Directions::from_count(3).is_err());
    }
}
