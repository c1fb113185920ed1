use glam::{DMat3, DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-4;

/// Pinhole camera. `rotation` maps world to camera coordinates; the camera looks down +Z with
/// +X right and +Y down in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    rotation: DMat3,
    translation: DVec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Serialized camera record: rotation is 9 numbers, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub name: String,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

fn invalid(reason: impl Into<String>) -> Error {
    Error::InvalidCamera {
        name: String::new(),
        reason: reason.into(),
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: DMat3,
        translation: DVec3,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let deviation = rotation.transpose() * rotation - DMat3::IDENTITY;
        let frob = deviation.to_cols_array().iter().map(|v| v * v).sum::<f64>().sqrt();
        if !frob.is_finite() || frob > ORTHONORMAL_TOLERANCE {
            return Err(invalid(format!(
                "rotation is not orthonormal (Frobenius deviation {frob:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(invalid(format!("rotation determinant is {det:.6}, expected 1")));
        }
        if !translation.is_finite() {
            return Err(invalid("non-finite translation"));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(invalid("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(invalid("non-finite principal point"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image size must be at least 1x1"));
        }
        Ok(Self {
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`. Falls back to another up vector when `up` is
    /// parallel to the viewing direction.
    pub fn look_at(eye: DVec3, target: DVec3, up: DVec3, width: u32, height: u32, focal: f64) -> Result<Self> {
        let forward = (target - eye).normalize_or_zero();
        if forward == DVec3::ZERO {
            return Err(Error::Degenerate("camera eye coincides with its target".into()));
        }
        let mut right = forward.cross(up);
        if right.length() < 1e-6 {
            let alt = if forward.z.abs() < 0.9 { DVec3::Z } else { DVec3::X };
            right = forward.cross(alt);
        }
        let right = right.normalize();
        let down = forward.cross(right);
        let rotation = DMat3::from_cols(right, down, forward).transpose();
        let translation = -(rotation * eye);
        Self::new(
            rotation,
            translation,
            focal,
            focal,
            width as f64 * 0.5,
            height as f64 * 0.5,
            width,
            height,
        )
    }

    pub fn rotation(&self) -> DMat3 {
        self.rotation
    }

    pub fn translation(&self) -> DVec3 {
        self.translation
    }

    pub fn to_camera(&self, p: DVec3) -> DVec3 {
        self.rotation * p + self.translation
    }

    /// Pixel coordinates (continuous; pixel centers at `i + 0.5`) and camera depth of a
    /// world point. `None` when the point is not in front of the camera.
    pub fn project(&self, p: DVec3) -> Option<(DVec2, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((
            DVec2::new(self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy),
            c.z,
        ))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> DVec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction (+Z of the camera) in world coordinates.
    pub fn forward(&self) -> DVec3 {
        self.rotation.transpose() * DVec3::Z
    }

    pub fn with_intrinsics(&self, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(self.rotation, self.translation, fx, fy, cx, cy, self.width, self.height)
    }

    /// Same view at a different resolution; intrinsics scale with the image.
    pub fn resized(&self, width: u32, height: u32) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.rotation,
            self.translation,
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            width,
            height,
        )
    }

    pub fn from_record(record: &CameraRecord) -> Result<Self> {
        let r = record.rotation;
        let rotation = DMat3::from_cols_array(&r).transpose();
        Self::new(
            rotation,
            DVec3::from_array(record.translation),
            record.fx,
            record.fy,
            record.cx,
            record.cy,
            record.width,
            record.height,
        )
        .map_err(|e| match e {
            Error::InvalidCamera { reason, .. } => Error::InvalidCamera {
                name: record.name.clone(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_record(&self, name: &str) -> CameraRecord {
        CameraRecord {
            name: name.to_string(),
            rotation: self.rotation.transpose().to_cols_array(),
            translation: self.translation.to_array(),
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }
}
