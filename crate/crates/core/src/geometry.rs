//! Camera geometry: pinhole intrinsics, rigid poses, object boxes.

use alloc::string::String;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config("intrinsics: focal lengths must be positive".into()));
        }
        if self.cx < 0.0 || self.cx > width as f64 || self.cy < 0.0 || self.cy > height as f64 {
            return Err(Error::Config("intrinsics: principal point outside image".into()));
        }
        Ok(())
    }

    /// Ray direction (z = 1) through the center of pixel (row, col).
    #[inline]
    pub fn ray(&self, row: usize, col: usize) -> [f64; 3] {
        [
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        ]
    }

    /// Project a camera-frame point; returns continuous pixel coordinates
    /// (u along width, v along height) or None behind the camera.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }
}

/// Rigid transform `x' = R·x + t`. Direction conventions are documented at
/// each use: frame poses store camera-to-world, reprojection takes the
/// coordinate map from the reference frame to the neighbor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Row-major 3×3 rotation.
    pub rotation: [f64; 9],
    /// Translation in meters.
    pub translation: [f64; 3],
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        translation: [0.0, 0.0, 0.0],
    };

    pub fn translation_only(t: [f64; 3]) -> Pose {
        Pose {
            translation: t,
            ..Pose::IDENTITY
        }
    }

    /// Rotation about the y axis by `angle` radians (positive turns the
    /// optical axis toward +x).
    pub fn rotation_y(angle: f64) -> Pose {
        let (s, c) = angle.sin_cos();
        Pose {
            rotation: [c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c],
            translation: [0.0, 0.0, 0.0],
        }
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + t[0],
            r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + t[1],
            r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + t[2],
        ]
    }

    /// Inverse transform: `x = Rᵀ·(x' − t)`.
    pub fn inverse(&self) -> Pose {
        let r = &self.rotation;
        let rt = [r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]];
        let t = &self.translation;
        Pose {
            rotation: rt,
            translation: [
                -(rt[0] * t[0] + rt[1] * t[1] + rt[2] * t[2]),
                -(rt[3] * t[0] + rt[4] * t[1] + rt[5] * t[2]),
                -(rt[6] * t[0] + rt[7] * t[1] + rt[8] * t[2]),
            ],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[i * 3 + j] =
                    a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
            }
        }
        Pose {
            rotation: r,
            translation: self.apply(other.translation),
        }
    }

    /// RᵀR = I and det R = 1, within 1e-6.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += r[k * 3 + i] * r[k * 3 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return Err(Error::Config("pose: rotation is not orthonormal".into()));
                }
            }
        }
        let det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
            + r[2] * (r[3] * r[7] - r[4] * r[6]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::Config("pose: rotation determinant is not 1".into()));
        }
        Ok(())
    }
}

/// Object classes carried by synthetic boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectClass {
    Car,
    Cyclist,
    Pedestrian,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Cyclist => "cyclist",
            ObjectClass::Pedestrian => "pedestrian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "car" => Ok(ObjectClass::Car),
            "cyclist" => Ok(ObjectClass::Cyclist),
            "pedestrian" => Ok(ObjectClass::Pedestrian),
            other => Err(Error::Config({
                let mut m = String::from("unknown object class: ");
                m.push_str(other);
                m
            })),
        }
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)` labelling one object
/// footprint, with the object's physical height in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub frame_id: usize,
    pub class: ObjectClass,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub object_height: f32,
}

impl BBox {
    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}
