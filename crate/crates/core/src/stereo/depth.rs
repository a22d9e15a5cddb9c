use super::DisparityMap;
use crate::geometry::CameraIntrinsics;
use crate::lidar_depth::{DenseDepthMap, DepthMap};

/// Smallest disparity (pixels) converted to depth; one fixed-point step.
pub const MIN_DEPTH_DISPARITY: f64 = 1.0 / DisparityMap::SCALE as f64;

/// `Z = focal * baseline / d`. Invalid disparities and disparities below
/// [`MIN_DEPTH_DISPARITY`] give invalid depth.
pub fn disparity_to_depth(disp: &DisparityMap, intr: &CameraIntrinsics) -> DenseDepthMap {
    let fb = intr.focal_baseline();
    let values: Vec<Option<f64>> = disp
        .raw()
        .iter()
        .map(|&raw| {
            if raw == DisparityMap::INVALID {
                return None;
            }
            let d = raw as f64 / DisparityMap::SCALE as f64;
            (d >= MIN_DEPTH_DISPARITY).then(|| fb / d)
        })
        .collect();
    DepthMap::from_values(disp.height(), disp.width(), &values).expect("sizes match")
}

/// `d = focal * baseline / Z`, quantized to 1/16 pixel.
pub fn depth_to_disparity(depth: &DepthMap, intr: &CameraIntrinsics) -> DisparityMap {
    let fb = intr.focal_baseline();
    let mut out = DisparityMap::new_invalid(depth.height(), depth.width());
    for r in 0..depth.height() {
        for c in 0..depth.width() {
            out.set(r, c, depth.get(r, c).map(|z| fb / z));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rig() -> CameraIntrinsics {
        CameraIntrinsics::new(945.391406, None, 860, 1656, 0.5764).unwrap()
    }

    #[test]
    fn ten_pixels_with_rig_constants() {
        let mut d = DisparityMap::new_invalid(1, 3);
        d.set(0, 0, Some(10.0));
        d.set(0, 1, Some(20.0));
        let z = disparity_to_depth(&d, &rig());
        // 945.391406 * 0.5764 / 10
        assert_abs_diff_eq!(z.get(0, 0).unwrap(), 54.49236064, epsilon = 1e-6);
        assert_eq!(z.get(0, 0).unwrap() / 2.0, z.get(0, 1).unwrap());
        assert_eq!(z.get(0, 2), None);
    }

    #[test]
    fn tiny_disparity_is_invalid() {
        let d = DisparityMap::from_raw(1, 3, vec![0, -5, 1]).unwrap();
        let z = disparity_to_depth(&d, &rig());
        assert_eq!(z.get(0, 0), None);
        assert_eq!(z.get(0, 1), None);
        assert!(z.get(0, 2).is_some());
    }
}
