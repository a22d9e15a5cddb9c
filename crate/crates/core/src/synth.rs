//! Synthetic scenes with exact ground truth: fronto-parallel textured
//! rectangles in front of a textured background plane.
//!
//! A scene renders to a rectified stereo pair plus the true depth of every
//! left-view pixel, and can be sampled into a global-frame lidar cloud.
//!
//! # Scene file
//!
//! Plain text, one `key = value` per line, `#` starts a comment.
//!
//! ```text
//! focal = 945.391406          # required
//! baseline = 0.5764           # required
//! height = 256                # required
//! width = 320                 # required
//! cx = 159.5                  # optional, defaults to image center
//! cy = 127.5
//! background_depth = 40
//! background_seed = 1
//! texture_sigma = 1.0         # blur applied to the noise textures
//! noise_sigma = 0.0           # per-view additive Gaussian noise
//! lidar_points = 20000
//! seed = 7
//! plane = 10 64 80 192 240 3  # depth row0 col0 row1 col1 texture_seed (repeatable)
//! body_pose = 0 0 0 1 0 0 0   # tx ty tz qw qx qy qz, optional
//! camera_pose = 0 0 0 1 0 0 0 # optional; random chain from `seed` if both absent
//! ```
//!
//! Plane regions are half-open pixel ranges `[row0, row1) x [col0, col1)` in
//! the left view.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{back_project, child_to_parent, CameraIntrinsics, Point3, Pose, Quaternion};
use crate::lidar_depth::DepthMap;
use crate::stereo::{gaussian_blur, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Region {
    fn contains_row(&self, r: usize) -> bool {
        (self.row0..self.row1).contains(&r)
    }

    fn contains(&self, r: usize, c: f64) -> bool {
        self.contains_row(r) && c >= self.col0 as f64 && c < self.col1 as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub depth: f64,
    pub region: Region,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub planes: Vec<PlaneSpec>,
    pub background_depth: f64,
    pub background_seed: u64,
    pub texture_sigma: f64,
    pub noise_sigma: f64,
    pub lidar_points: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            planes: Vec::new(),
            background_depth: 40.0,
            background_seed: 1,
            texture_sigma: 1.0,
            noise_sigma: 0.0,
            lidar_points: 20_000,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self, intr: &CameraIntrinsics) -> Result<()> {
        let positive = |d: f64| d.is_finite() && d > 0.0;
        if !positive(self.background_depth) {
            return Err(Error::invalid("background depth must be > 0"));
        }
        if !(self.texture_sigma >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("texture and noise sigma must be >= 0"));
        }
        for (i, p) in self.planes.iter().enumerate() {
            if !positive(p.depth) {
                return Err(Error::invalid(format!("plane {i}: depth must be > 0")));
            }
            let r = &p.region;
            if r.row0 >= r.row1 || r.col0 >= r.col1 || r.row1 > intr.height || r.col1 > intr.width {
                return Err(Error::invalid(format!(
                    "plane {i}: region {r:?} is empty or outside the {}x{} image",
                    intr.height, intr.width
                )));
            }
        }
        Ok(())
    }

    /// Surfaces in draw order: planes as listed, then the background.
    fn surfaces(&self, intr: &CameraIntrinsics) -> Vec<PlaneSpec> {
        let mut s = self.planes.clone();
        s.push(PlaneSpec {
            depth: self.background_depth,
            // unbounded to the right so the right view sees it at every column
            region: Region {
                row0: 0,
                col0: 0,
                row1: intr.height,
                col1: usize::MAX,
            },
            texture_seed: self.background_seed,
        });
        s
    }
}

/// A parsed scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub spec: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    /// Body pose in the global frame and camera pose in the body frame.
    pub poses: (Pose, Pose),
}

fn parse_fields<const N: usize>(value: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} values, got {}", v.len()))
}

fn parse_pose(value: &str) -> std::result::Result<Pose, String> {
    let [tx, ty, tz, qw, qx, qy, qz] = parse_fields::<7>(value)?;
    let q = Quaternion::new(qw, qx, qy, qz).map_err(|e| e.to_string())?;
    Ok(Pose::new(q, Point3::new(tx, ty, tz)))
}

fn parse_count(value: &str) -> std::result::Result<u64, String> {
    value
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("not a non-negative integer: {value:?}"))
}

/// Parses the scene file grammar documented at module level.
pub fn parse_scene(text: &str, path: &Path) -> Result<SceneFile> {
    let mut spec = SceneSpec::default();
    let (mut focal, mut baseline, mut height, mut width) = (None, None, None, None);
    let (mut cx, mut cy) = (None, None);
    let (mut body, mut camera) = (None, None);

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let scalar = || parse_fields::<1>(value).map(|[v]| v);
        let res: std::result::Result<(), String> = (|| {
            match key {
                "focal" => focal = Some(scalar()?),
                "baseline" => baseline = Some(scalar()?),
                "height" => height = Some(parse_count(value)? as usize),
                "width" => width = Some(parse_count(value)? as usize),
                "cx" => cx = Some(scalar()?),
                "cy" => cy = Some(scalar()?),
                "background_depth" => spec.background_depth = scalar()?,
                "background_seed" => spec.background_seed = parse_count(value)?,
                "texture_sigma" => spec.texture_sigma = scalar()?,
                "noise_sigma" => spec.noise_sigma = scalar()?,
                "lidar_points" => spec.lidar_points = parse_count(value)? as usize,
                "seed" => spec.seed = parse_count(value)?,
                "body_pose" => body = Some(parse_pose(value)?),
                "camera_pose" => camera = Some(parse_pose(value)?),
                "plane" => {
                    let f = parse_fields::<6>(value)?;
                    if f[1..].iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                        return Err("plane bounds and seed must be non-negative integers".into());
                    }
                    spec.planes.push(PlaneSpec {
                        depth: f[0],
                        region: Region {
                            row0: f[1] as usize,
                            col0: f[2] as usize,
                            row1: f[3] as usize,
                            col1: f[4] as usize,
                        },
                        texture_seed: f[5] as u64,
                    });
                }
                other => return Err(format!("unknown key {other:?}")),
            }
            Ok(())
        })();
        res.map_err(err)?;
    }

    let missing = |k: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("missing required key `{k}`"),
    };
    let principal = match (cx, cy) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "cx and cy must be given together".into(),
            })
        }
    };
    let intrinsics = CameraIntrinsics::new(
        focal.ok_or_else(|| missing("focal"))?,
        principal,
        height.ok_or_else(|| missing("height"))?,
        width.ok_or_else(|| missing("width"))?,
        baseline.ok_or_else(|| missing("baseline"))?,
    )?;
    spec.validate(&intrinsics)?;
    let poses = match (body, camera) {
        (None, None) => random_pose_chain(spec.seed),
        (b, c) => (b.unwrap_or(Pose::IDENTITY), c.unwrap_or(Pose::IDENTITY)),
    };
    Ok(SceneFile {
        spec,
        intrinsics,
        poses,
    })
}

/// Arbitrary but reproducible body pose (in global) and camera pose (in body).
pub fn random_pose_chain(seed: u64) -> (Pose, Pose) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_9053);
    let mut pose = |t_range: f64| {
        let q = loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if let Ok(q) = Quaternion::new(c[0], c[1], c[2], c[3]) {
                break q;
            }
        };
        let t = Point3::new(
            rng.random_range(-t_range..t_range),
            rng.random_range(-t_range..t_range),
            rng.random_range(-t_range..t_range),
        );
        Pose::new(q, t)
    };
    let body = pose(100.0);
    let camera = pose(2.0);
    (body, camera)
}

/// Rendered stereo pair and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub left: GrayImage,
    pub right: GrayImage,
    /// True depth of every left-view pixel.
    pub gt_depth: DepthMap,
    /// `focal * baseline / depth` per left-view pixel.
    pub gt_disparity: Vec<f64>,
    /// Left-view pixels with no visible correspondence in the right view,
    /// either hidden behind a nearer surface or outside the right frame.
    pub occluded: Vec<bool>,
}

/// Noise texture: uniform noise blurred by `sigma`, stretched to [0.05, 0.95].
fn texture(height: usize, width: usize, seed: u64, sigma: f64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f32> = (0..height * width).map(|_| rng.random::<f32>()).collect();
    let img = GrayImage::new(height, width, noise).expect("noise in [0, 1)");
    let img = gaussian_blur(&img, sigma).expect("sigma validated");
    let (lo, hi) = img
        .pixels()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-6);
    img.pixels()
        .iter()
        .map(|&v| 0.05 + 0.9 * (v - lo) / span)
        .collect()
}

struct Surface {
    plane: PlaneSpec,
    disparity: f64,
    tex: Vec<f32>,
    tex_width: usize,
}

impl Surface {
    /// Texture at left-view row `r`, real column `c >= 0`, linear in `c`.
    fn sample(&self, r: usize, c: f64) -> f32 {
        let c = c.clamp(0.0, (self.tex_width - 1) as f64);
        let c0 = c.floor() as usize;
        let c1 = (c0 + 1).min(self.tex_width - 1);
        let t = (c - c0 as f64) as f32;
        let row = &self.tex[r * self.tex_width..(r + 1) * self.tex_width];
        row[c0] * (1.0 - t) + row[c1] * t
    }
}

/// Index of the nearest surface covering left-view `(r, c)`; ties go to the
/// earlier surface.
fn visible(surfaces: &[Surface], r: usize, c: f64) -> Option<usize> {
    surfaces
        .iter()
        .enumerate()
        .filter(|(_, s)| s.plane.region.contains(r, c))
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, d)) if d <= s.plane.depth => best,
            _ => Some((i, s.plane.depth)),
        })
        .map(|(i, _)| i)
}

/// Visible surface at right-view `(r, c)`: the nearest surface whose left
/// position `c + d` falls inside its region.
fn visible_right(surfaces: &[Surface], r: usize, c: f64) -> Option<usize> {
    surfaces
        .iter()
        .enumerate()
        .filter(|(_, s)| s.plane.region.contains(r, c + s.disparity))
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, d)) if d <= s.plane.depth => best,
            _ => Some((i, s.plane.depth)),
        })
        .map(|(i, _)| i)
}

fn add_noise(img: &mut [f32], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for v in img.iter_mut() {
        *v = (*v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32;
    }
}

/// Renders the left/right pair. The right view shows, at column `c'`, the
/// nearest surface whose left-view column `c' + d` lies in its region, so
/// every visible left pixel `(r, c)` reappears at `(r, c - d)`.
pub fn render_scene(spec: &SceneSpec, intr: &CameraIntrinsics) -> Result<RenderedScene> {
    spec.validate(intr)?;
    let (h, w) = (intr.height, intr.width);
    let fb = intr.focal_baseline();
    let surfaces: Vec<Surface> = spec
        .surfaces(intr)
        .into_iter()
        .map(|plane| {
            let disparity = fb / plane.depth;
            let tex_width = w + disparity.ceil() as usize + 2;
            Surface {
                plane,
                disparity,
                tex: texture(h, tex_width, plane.texture_seed, spec.texture_sigma),
                tex_width,
            }
        })
        .collect();

    let mut left = vec![0.0f32; h * w];
    let mut right = vec![0.0f32; h * w];
    let mut depth = vec![None; h * w];
    let mut gt_disparity = vec![0.0; h * w];
    let mut occluded = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let s = &surfaces[visible(&surfaces, r, c as f64).expect("background covers the frame")];
            left[i] = s.sample(r, c as f64);
            depth[i] = Some(s.plane.depth);
            gt_disparity[i] = s.disparity;
            let rc = c as f64 - s.disparity;
            occluded[i] = rc < 0.0
                || visible_right(&surfaces, r, rc)
                    .is_some_and(|k| surfaces[k].plane.depth < s.plane.depth);

            let sr = &surfaces[visible_right(&surfaces, r, c as f64).expect("background covers the frame")];
            right[i] = sr.sample(r, c as f64 + sr.disparity);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    add_noise(&mut left, spec.noise_sigma, &mut rng);
    add_noise(&mut right, spec.noise_sigma, &mut rng);
    Ok(RenderedScene {
        left: GrayImage::new(h, w, left)?,
        right: GrayImage::new(h, w, right)?,
        gt_depth: DepthMap::from_values(h, w, &depth)?,
        gt_disparity,
        occluded,
    })
}

/// Samples `count` visible surface points, uniformly over pixels with a
/// sub-pixel jitter of at most 0.45 px (so each point rounds back to the
/// pixel it was drawn from), and expresses them in the global frame through
/// the inverse of the body/camera pose chain.
pub fn sample_lidar(
    spec: &SceneSpec,
    intr: &CameraIntrinsics,
    body_pose: &Pose,
    camera_pose: &Pose,
    count: usize,
    seed: u64,
) -> Result<Vec<Point3>> {
    spec.validate(intr)?;
    let surfaces = spec.surfaces(intr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.random_range(0..intr.height);
        let c = rng.random_range(0..intr.width);
        let u = c as f64 + rng.random_range(-0.45..=0.45);
        let v = r as f64 + rng.random_range(-0.45..=0.45);
        let z = surfaces
            .iter()
            .filter(|s| s.region.contains(r, c as f64))
            .map(|s| s.depth)
            .fold(f64::INFINITY, f64::min);
        let p_cam = back_project(intr, u, v, z);
        points.push(child_to_parent(body_pose, child_to_parent(camera_pose, p_cam)));
    }
    Ok(points)
}
