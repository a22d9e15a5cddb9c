mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use depthkit::geometry::CameraIntrinsics;
use depthkit::stereo::{
    bm_match, compute_disparity, compute_right_disparity, sad_cost_volume, sgm_aggregate, Algorithm,
    Directions, DisparityMap, GrayImage, MatchParams, StereoConfig,
};
use depthkit::synth::{render_scene, PlaneSpec, Region, SceneSpec};

fn labels(disp: &DisparityMap, min_d: i32) -> Vec<usize> {
    disp.raw()
        .iter()
        .map(|&raw| (raw as i32 / DisparityMap::SCALE - min_d) as usize)
        .collect()
}

fn random_scene(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SceneSpec {
    let planes = (0..rng.random_range(0..3))
        .map(|_| {
            let (r0, c0) = (rng.random_range(0..h - 8), rng.random_range(0..w - 8));
            PlaneSpec {
                depth: rng.random_range(4.0..15.0),
                region: Region {
                    row0: r0,
                    col0: c0,
                    row1: rng.random_range(r0 + 4..=h),
                    col1: rng.random_range(c0 + 4..=w),
                },
                texture_seed: rng.random(),
            }
        })
        .collect();
    SceneSpec {
        planes,
        background_depth: rng.random_range(15.0..40.0),
        background_seed: rng.random(),
        noise_sigma: rng.random_range(0.0..0.03),
        seed: rng.random(),
        ..SceneSpec::default()
    }
}

#[test]
fn sgbm_energy_not_above_wta_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (h, w) = (40, 64);
    let intr = CameraIntrinsics::new(120.0, None, h, w, 0.5).unwrap();
    let params = MatchParams {
        num_disparities: 16,
        uniqueness_ratio: 0,
        subpixel: false,
        ..MatchParams::default()
    };
    let (p1, p2) = (params.p1 as u64, params.p2 as u64);
    let scenes = 100;
    let mut lower_or_equal = 0;
    for _ in 0..scenes {
        let s = render_scene(&random_scene(&mut rng, h, w), &intr).unwrap();
        let cost = sad_cost_volume(&s.left, &s.right, &params).unwrap();
        let bm = bm_match(&cost, &params);
        let sgbm = bm_match(&sgm_aggregate(&cost, &params).unwrap(), &params);
        let nd = params.num_disparities as usize;
        let e_bm = oracles::energy_2d(cost.data(), &labels(&bm, 0), h, w, nd, p1, p2);
        let e_sgbm = oracles::energy_2d(cost.data(), &labels(&sgbm, 0), h, w, nd, p1, p2);
        if e_sgbm <= e_bm {
            lower_or_equal += 1;
        }
    }
    assert!(
        lower_or_equal * 100 >= scenes * 99,
        "SGBM energy <= BM energy on only {lower_or_equal}/{scenes} scenes"
    );
}

#[test]
fn four_and_one_directions_also_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let intr = CameraIntrinsics::new(120.0, None, 24, 48, 0.5).unwrap();
    let s = render_scene(&random_scene(&mut rng, 24, 48), &intr).unwrap();
    for directions in [Directions::One, Directions::Four, Directions::Eight] {
        let config = StereoConfig {
            params: MatchParams {
                num_disparities: 16,
                directions,
                ..MatchParams::default()
            },
            algorithm: Algorithm::Sgbm,
            blur_sigma: 1.0,
            pad: true,
            wls: None,
        };
        let d = compute_disparity(&s.left, &s.right, &config).unwrap();
        assert!(d.valid_count() > 0, "{directions:?}");
    }
}

#[test]
fn right_disparity_of_shifted_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (h, w) = (48, 96);
    // focal * baseline / depth = 6 px everywhere
    let intr = CameraIntrinsics::new(120.0, None, h, w, 0.5).unwrap();
    let spec = SceneSpec {
        background_depth: 10.0,
        background_seed: rng.random(),
        ..SceneSpec::default()
    };
    let s = render_scene(&spec, &intr).unwrap();
    let config = StereoConfig {
        params: MatchParams {
            num_disparities: 16,
            ..MatchParams::default()
        },
        algorithm: Algorithm::Sgbm,
        blur_sigma: 1.0,
        pad: true,
        wls: None,
    };
    let right = compute_right_disparity(&s.left, &s.right, &config).unwrap();
    let mut close = 0;
    let mut total = 0;
    for r in 2..h - 2 {
        for c in 2..w - 8 {
            total += 1;
            if right.get(r, c).is_some_and(|d| (d - 6.0).abs() <= 0.25) {
                close += 1;
            }
        }
    }
    assert!(close * 100 >= total * 95, "{close}/{total}");
}

fn range_case() -> impl Strategy<Value = (i32, u32, u32, u64, bool, bool)> {
    (
        -8i32..8,
        1u32..3,
        prop_oneof![Just(3u32), Just(5), Just(7)],
        any::<u64>(),
        any::<bool>(),
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn valid_disparities_stay_in_range((min_d, blocks, block, seed, sgbm, pad) in range_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (20, 56);
        let left: Vec<u8> = (0..h * w).map(|_| rng.random()).collect();
        let right: Vec<u8> = (0..h * w).map(|_| rng.random()).collect();
        let params = MatchParams {
            min_disparity: min_d,
            num_disparities: 16 * blocks,
            block_size: block,
            ..MatchParams::default()
        };
        let config = StereoConfig {
            params,
            algorithm: if sgbm { Algorithm::Sgbm } else { Algorithm::Bm },
            blur_sigma: 0.0,
            pad,
            wls: None,
        };
        let d = compute_disparity(
            &GrayImage::from_u8(h, w, &left).unwrap(),
            &GrayImage::from_u8(h, w, &right).unwrap(),
            &config,
        )
        .unwrap();
        for r in 0..h {
            for c in 0..w {
                if let Some(v) = d.get(r, c) {
                    prop_assert!(v >= min_d as f64 && v <= params.max_disparity() as f64, "{v} at ({r},{c})");
                }
            }
        }
    }
}
