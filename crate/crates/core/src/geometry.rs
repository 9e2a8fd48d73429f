//! Pinhole camera model and rigid transforms.
//!
//! Conventions: the camera looks down +z, +x points right and +y points
//! down. Pixel coordinates have their origin at the top-left and the pixel
//! with integer index `(i, j)` is centered at the continuous coordinate
//! `(i, j)`. Poses are stored camera-to-world.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("zero image size".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx = {} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy = {} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Continuous image coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

/// Maximum allowed deviation of a stored quaternion's norm from one.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, rejecting quaternions
    /// whose norm is off by more than [`QUATERNION_NORM_TOLERANCE`].
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Result<Self, GeometryError> {
        if q.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite component".into()));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "quaternion norm {norm} is not unit"
            )));
        }
        Ok(Self::new(
            UnitQuaternion::from_quaternion(quat),
            Vec3::new(t[0], t[1], t[2]),
        ))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        invert_pose(self)
    }

    /// Camera whose optical axis passes through `target`, with world `up`
    /// mapped towards image-up (−y).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Pose, GeometryError> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(GeometryError::InvalidPose("eye equals target".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(GeometryError::InvalidPose("up parallel to view".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        let rotation = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
        Ok(Pose::new(rotation, eye))
    }
}

/// Pinhole projection of a camera-frame point.
pub fn project(point_cam: &Vec3, k: &CameraIntrinsics) -> Result<Pixel, GeometryError> {
    let z = point_cam.z;
    if !(z > 0.0) {
        return Err(GeometryError::BehindCamera(z));
    }
    Ok(Pixel {
        u: k.fx * point_cam.x / z + k.cx,
        v: k.fy * point_cam.y / z + k.cy,
    })
}

/// Inverse of [`project`] for a known z-depth.
pub fn unproject(pixel: Pixel, depth: f64, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new(
        depth * (pixel.u - k.cx) / k.fx,
        depth * (pixel.v - k.cy) / k.fy,
        depth,
    )
}

/// Camera frame to world frame: `R·p + t`.
pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.rotation * p + pose.translation
}

pub fn invert_pose(pose: &Pose) -> Pose {
    let rotation = pose.rotation.inverse();
    Pose {
        rotation,
        translation: -(rotation * pose.translation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn random_pose(axis: [f64; 3], angle: f64, t: [f64; 3]) -> Pose {
        let axis = Vec3::new(axis[0], axis[1], axis[2]);
        let rot = if axis.norm() < 1e-6 {
            UnitQuaternion::identity()
        } else {
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        };
        Pose::new(rot, Vec3::new(t[0], t[1], t[2]))
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let p = project(&Vec3::new(0.0, 0.0, 2.0), &k()).unwrap();
        assert_eq!((p.u, p.v), (320.0, 240.0));
        let p = project(&Vec3::new(1.0, 0.0, 1.0), &k()).unwrap();
        assert_eq!(p.u, 420.0);
    }

    #[test]
    fn behind_camera_is_rejected() {
        assert!(matches!(
            project(&Vec3::new(0.0, 0.0, 0.0), &k()),
            Err(GeometryError::BehindCamera(_))
        ));
        assert!(project(&Vec3::new(0.0, 0.0, -1.0), &k()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn simple_transforms() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Pose::identity(), &p), p);
        let shift = Pose::new(UnitQuaternion::identity(), Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(transform_point(&shift, &Vec3::zeros()), Vec3::new(0.0, 0.0, 5.0));

        let inv = invert_pose(&Pose::identity());
        assert_eq!(inv.translation, Vec3::zeros());
        assert!(inv.rotation.angle() < 1e-15);

        let tx = Pose::new(UnitQuaternion::identity(), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(invert_pose(&tx).translation, Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn from_wxyz_rejects_non_unit() {
        assert!(Pose::from_wxyz([1.0, 0.0, 0.0, 0.0], [0.0; 3]).is_ok());
        assert!(Pose::from_wxyz([1.1, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
        assert!(Pose::from_wxyz([f64::NAN, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
    }

    #[test]
    fn look_at_puts_target_on_optical_axis() {
        let eye = Vec3::new(1.3, -0.7, 1.9);
        let pose = Pose::look_at(eye, Vec3::zeros(), Vec3::z()).unwrap();
        let cam = transform_point(&invert_pose(&pose), &Vec3::zeros());
        assert!(cam.x.abs() < 1e-12 && cam.y.abs() < 1e-12);
        assert!((cam.z - eye.norm()).abs() < 1e-12);
        // world up appears as image-up
        let up_cam = invert_pose(&pose).rotation * Vec3::z();
        assert!(up_cam.y < 0.0);
    }

    #[test]
    fn renormalization_survives_many_compositions() {
        let step = random_pose([0.3, -0.2, 0.9], 0.7311, [0.1, 0.0, -0.2]);
        let mut acc = Pose::identity();
        for _ in 0..1_000_000 {
            acc = acc.compose(&step);
        }
        assert!((acc.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in 0.05f64..20.0
        ) {
            let kk = k();
            let p = Vec3::new(x, y, z);
            let px = project(&p, &kk).unwrap();
            let back = unproject(px, z, &kk);
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn transform_inverse_round_trip(
            axis in proptest::array::uniform3(-1.0f64..1.0),
            angle in -3.1f64..3.1,
            t in proptest::array::uniform3(-10.0f64..10.0),
            p in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let pose = random_pose(axis, angle, t);
            let p = Vec3::new(p[0], p[1], p[2]);
            let back = transform_point(&invert_pose(&pose), &transform_point(&pose, &p));
            prop_assert!((back - p).norm() < 1e-12 * (1.0 + p.norm() + pose.translation.norm()));

            let id = pose.compose(&invert_pose(&pose));
            prop_assert!(id.translation.norm() < 1e-12 * (1.0 + pose.translation.norm()));
            prop_assert!(id.rotation.angle() < 1e-12 * 10.0);
        }

        #[test]
        fn composition_is_associative(
            a in proptest::array::uniform3(-1.0f64..1.0),
            b in proptest::array::uniform3(-1.0f64..1.0),
            c in proptest::array::uniform3(-1.0f64..1.0),
            angles in proptest::array::uniform3(-3.0f64..3.0),
        ) {
            let pa = random_pose(a, angles[0], a);
            let pb = random_pose(b, angles[1], b);
            let pc = random_pose(c, angles[2], c);
            let l = pa.compose(&pb).compose(&pc);
            let r = pa.compose(&pb.compose(&pc));
            prop_assert!((l.translation - r.translation).norm() < 1e-12);
            prop_assert!(l.rotation.angle_to(&r.rotation) < 1e-7);
        }
    }
}
