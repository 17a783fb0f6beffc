//! Room-frame vectors and the head-centered coordinate convention.
//!
//! The room frame is right-handed: X rightward (parallel to the launch
//! plane), Y up (opposing gravity), Z forward from the subject toward the
//! launch plane.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Head pose used for room-to-head transforms. The synthetic agent keeps the
/// head fixed with identity orientation, but the transform is general so that
/// recorded data with a moving head could be ingested.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeadPose {
    pub position: Vec3,
    /// Row-major 3x3 rotation taking room-frame offsets into head frame.
    pub rotation: [[f64; 3]; 3],
}

impl Default for HeadPose {
    fn default() -> Self {
        HeadPose {
            position: Vec3::new(0.0, 1.6, 0.0),
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }
}

impl HeadPose {
    /// Transform a room-frame point into head-centered coordinates.
    pub fn to_head(&self, room: Vec3) -> Vec3 {
        let d = room - self.position;
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * d.x + r[0][1] * d.y + r[0][2] * d.z,
            r[1][0] * d.x + r[1][1] * d.y + r[1][2] * d.z,
            r[2][0] * d.x + r[2][1] * d.y + r[2][2] * d.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_transform_identity_is_translation() {
        let head = HeadPose::default();
        let p = head.to_head(Vec3::new(1.0, 2.0, 3.0));
        assert!((p - Vec3::new(1.0, 0.4, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn head_transform_applies_rotation() {
        // 90 degree yaw: head x axis points along room -z.
        let head = HeadPose {
            position: Vec3::ZERO,
            rotation: [[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
        };
        let p = head.to_head(Vec3::new(0.0, 0.0, 2.0));
        assert!((p.x + 2.0).abs() < 1e-12 && p.z.abs() < 1e-12);
    }
}
