use super::{DisparityMap, GrayImage, MatchParams};

fn pad_left(img: &GrayImage, cols: usize) -> GrayImage {
    let (h, w) = img.dims();
    let mut data = Vec::with_capacity(h * (w + cols));
    for y in 0..h {
        let row = img.row(y);
        data.extend(std::iter::repeat_n(row[0], cols));
        data.extend_from_slice(row);
    }
    GrayImage::new(h, w + cols, data).expect("padding keeps samples in range")
}

/// Prepends edge-replicated columns to both views so that the leftmost
/// original columns have their whole search range inside the right image.
///
/// Returns the padded pair and the number of columns to drop from the
/// resulting disparity map: `num_disparities`, plus `min_disparity` when
/// that is positive.
pub fn pad_for_matching(
    left: &GrayImage,
    right: &GrayImage,
    params: &MatchParams,
) -> (GrayImage, GrayImage, usize) {
    let cols = params.num_disparities as usize + params.min_disparity.max(0) as usize;
    (pad_left(left, cols), pad_left(right, cols), cols)
}

/// Drops the first `offset` columns.
pub fn crop_columns(img: &GrayImage, offset: usize) -> GrayImage {
    let (h, w) = img.dims();
    let data = (0..h).flat_map(|y| img.row(y)[offset..].iter().copied()).collect();
    GrayImage::new(h, w - offset, data).expect("crop keeps samples in range")
}

pub fn crop_disparity(disp: &DisparityMap, offset: usize) -> DisparityMap {
    if offset == 0 {
        return disp.clone();
    }
    let w = disp.width();
    let data = disp
        .raw()
        .chunks(w)
        .flat_map(|row| row[offset..].iter().copied())
        .collect();
    DisparityMap::from_raw(disp.height(), w - offset, data).expect("cropped size is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> GrayImage {
        GrayImage::from_fn(3, 5, |r, c| (r * 5 + c) as f32 / 20.0).unwrap()
    }

    #[test]
    fn pads_by_num_disparities() {
        let p = MatchParams {
            num_disparities: 16,
            ..MatchParams::default()
        };
        let (l, r, off) = pad_for_matching(&img(), &img(), &p);
        assert_eq!(off, 16);
        assert_eq!(l.width(), 21);
        assert_eq!(r.width(), 21);
        // edge replicated
        assert_eq!(l.get(1, 0), img().get(1, 0));
        assert_eq!(l.get(1, 15), img().get(1, 0));
        assert_eq!(crop_columns(&l, off), img());
    }

    #[test]
    fn positive_min_disparity_widens_pad() {
        let p = MatchParams {
            num_disparities: 16,
            min_disparity: 4,
            ..MatchParams::default()
        };
        assert_eq!(pad_for_matching(&img(), &img(), &p).2, 20);
    }

    #[test]
    fn crop_disparity_drops_columns() {
        let d = DisparityMap::from_raw(2, 4, vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert_eq!(crop_disparity(&d, 1).raw(), &[2, 3, 4, 6, 7, 8]);
        assert_eq!(crop_disparity(&d, 0), d);
    }
}
