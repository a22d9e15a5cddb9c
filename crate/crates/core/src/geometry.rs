//! Rigid-frame math for moving lidar points between frames and pinhole
//! projection into the image.
//!
//! Camera axis convention: **z forward, x right, y down**. A camera-frame
//! point with positive z lies in front of the camera, and increasing image
//! column `u` / row `v` follow +x / +y. Pose files must be written in this
//! convention; a different rig convention only changes the poses fed in.
//!
//! All matrices are stored row-major: `m[row][col]`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with camera-frame depth at or below this are behind the camera.
pub const Z_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a unit quaternion, normalizing the components. Rejects
    /// non-finite components and the zero quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        if ![w, x, y, z].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!(
                "quaternion has non-finite component ({w}, {x}, {y}, {z})"
            )));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("zero quaternion has no rotation"));
        }
        Ok(Quaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("rotation axis must be non-zero and finite"));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, s * axis.x / n, s * axis.y / n, s * axis.z / n)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Hamilton product; `a * b` rotates by `b` first, then `a`.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        // product of unit quaternions is unit up to rounding; renormalize
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Quaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }
}

/// 3x3 rotation, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let m = &self.0;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
        )
    }

    /// `Rᵀ p` without materializing the transpose.
    pub fn apply_transpose(&self, p: Point3) -> Point3 {
        let m = &self.0;
        Point3::new(
            m[0][0] * p.x + m[1][0] * p.y + m[2][0] * p.z,
            m[0][1] * p.x + m[1][1] * p.y + m[2][1] * p.z,
            m[0][2] * p.x + m[1][2] * p.y + m[2][2] * p.z,
        )
    }

    pub fn matmul(&self, o: &RotationMatrix) -> RotationMatrix {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        RotationMatrix(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`:
///
/// ```text
/// | 1-2y²-2z²   2xy-2zw     2xz+2yw   |
/// | 2xy+2zw     1-2x²-2z²   2yz-2xw   |
/// | 2xz-2yw     2yz+2xw     1-2x²-2y² |
/// ```
pub fn quaternion_to_rotation(q: &Quaternion) -> Result<RotationMatrix> {
    let [w, x, y, z] = q.components();
    if ![w, x, y, z].iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("quaternion has non-finite component"));
    }
    Ok(RotationMatrix([
        [
            1.0 - 2.0 * y * y - 2.0 * z * z,
            2.0 * x * y - 2.0 * z * w,
            2.0 * x * z + 2.0 * y * w,
        ],
        [
            2.0 * x * y + 2.0 * z * w,
            1.0 - 2.0 * x * x - 2.0 * z * z,
            2.0 * y * z - 2.0 * x * w,
        ],
        [
            2.0 * x * z - 2.0 * y * w,
            2.0 * y * z + 2.0 * x * w,
            1.0 - 2.0 * x * x - 2.0 * y * y,
        ],
    ]))
}

/// Placement of a child frame (body, camera) in its parent frame.
///
/// `rotation` maps child-frame vectors into the parent frame and
/// `translation` is the child origin expressed in the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Quaternion,
    pub translation: Point3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Quaternion::IDENTITY,
        translation: Point3::ORIGIN,
    };

    pub fn new(rotation: Quaternion, translation: Point3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn rotation_matrix(&self) -> RotationMatrix {
        // components of a constructed quaternion are always finite
        quaternion_to_rotation(&self.rotation).expect("pose quaternion is finite")
    }

    /// Pose of a grandchild in this pose's parent frame, given the
    /// grandchild's pose relative to this child frame.
    pub fn compose(&self, child: &Pose) -> Pose {
        let r = self.rotation_matrix();
        Pose {
            rotation: self.rotation * child.rotation,
            translation: r.apply(child.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation_matrix();
        Pose {
            rotation: self.rotation.conjugate(),
            translation: -r.apply_transpose(self.translation),
        }
    }
}

/// Expresses a parent-frame point in the child frame: `Rᵀ·p − Rᵀ·t`.
///
/// Global to body uses the body pose; body to camera uses the camera pose
/// (camera placed in the body frame) unchanged.
pub fn parent_to_child(pose: &Pose, p_parent: Point3) -> Point3 {
    let r = pose.rotation_matrix();
    r.apply_transpose(p_parent) - r.apply_transpose(pose.translation)
}

/// Inverse of [`parent_to_child`]: `R·p + t`.
pub fn child_to_parent(pose: &Pose, p_child: Point3) -> Point3 {
    pose.rotation_matrix().apply(p_child) + pose.translation
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub height: usize,
    pub width: usize,
    /// Stereo baseline in meters.
    pub baseline: f64,
}

impl CameraIntrinsics {
    pub fn new(
        focal: f64,
        principal_point: Option<(f64, f64)>,
        height: usize,
        width: usize,
        baseline: f64,
    ) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::invalid(format!("focal must be > 0, got {focal}")));
        }
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::invalid(format!(
                "baseline must be > 0, got {baseline}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image size must be positive, got {height}x{width}"
            )));
        }
        let (cx, cy) = principal_point
            .unwrap_or(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0));
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(CameraIntrinsics {
            focal,
            cx,
            cy,
            height,
            width,
            baseline,
        })
    }

    /// `focal * baseline`, the numerator of the depth/disparity relation.
    pub fn focal_baseline(&self) -> f64 {
        self.focal * self.baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole projection. Returns `None` when the point is behind the camera
/// (`z <= Z_MIN`). Coordinates stay real-valued; rounding happens at
/// rasterization.
pub fn project_point(intr: &CameraIntrinsics, p_cam: Point3) -> Option<ImagePoint> {
    if p_cam.z.is_nan() || p_cam.z <= Z_MIN {
        return None;
    }
    Some(ImagePoint {
        u: intr.focal * p_cam.x / p_cam.z + intr.cx,
        v: intr.focal * p_cam.y / p_cam.z + intr.cy,
        depth: p_cam.z,
    })
}

/// Camera-frame point seen at pixel `(u, v)` with depth `depth`.
pub fn back_project(intr: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Point3 {
    Point3::new(
        (u - intr.cx) * depth / intr.focal,
        (v - intr.cy) * depth / intr.focal,
        depth,
    )
}
