use rayon::prelude::*;

use super::GrayImage;
use crate::error::{Error, Result};

/// Normalized discrete Gaussian with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma == 0` returns
/// the input unchanged.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (h, w) = img.dims();
    let src = img.pixels();

    let mut tmp = vec![0.0f64; h * w];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            *out = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let sx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                    k * line[sx] as f64
                })
                .sum();
        }
    });

    let mut data = vec![0.0f32; h * w];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                    k * tmp[sy * w + x]
                })
                .sum();
            *out = (v as f32).clamp(0.0, 1.0);
        }
    });
    GrayImage::new(h, w, data)
}
