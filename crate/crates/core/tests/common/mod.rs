//! Independent oracles shared by the integration tests. Apart from `fixture`, nothing here calls into
//! the rasterizer.
#![allow(dead_code)]

pub mod alloc;
pub mod fixture;
pub mod oracles;

use glam::{DVec2, DVec3};
use matmart::types::Camera;

/// World-space ray through a continuous pixel coordinate.
pub fn pixel_ray(camera: &Camera, px: DVec2) -> (DVec3, DVec3) {
    let dir_cam = DVec3::new((px.x - camera.cx) / camera.fx, (px.y - camera.cy) / camera.fy, 1.0);
    let dir = (camera.rotation().transpose() * dir_cam).normalize();
    (camera.center(), dir)
}

/// Nearest positive hit distance of a ray with a sphere.
pub fn ray_sphere(origin: DVec3, dir: DVec3, center: DVec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.length_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Hand-rolled pinhole projection.
pub fn project(camera: &Camera, p: DVec3) -> Option<DVec2> {
    let c = camera.rotation() * p + camera.translation();
    (c.z > 0.0).then(|| DVec2::new(camera.fx * c.x / c.z + camera.cx, camera.fy * c.y / c.z + camera.cy))
}

/// Straight bilinear interpolation of a single-channel row-major grid, pixel centers at i + 0.5,
/// clamped at the border.
pub fn bilinear(data: &[f32], width: usize, height: usize, channels: usize, c: usize, p: DVec2) -> f64 {
    let x = (p.x - 0.5).clamp(0.0, (width - 1) as f64);
    let y = (p.y - 0.5).clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let g = |xx: usize, yy: usize| data[(yy * width + xx) * channels + c] as f64;
    g(x0, y0) * (1.0 - tx) * (1.0 - ty)
        + g(x1, y0) * tx * (1.0 - ty)
        + g(x0, y1) * (1.0 - tx) * ty
        + g(x1, y1) * tx * ty
}

pub fn angle_deg(a: DVec3, b: DVec3) -> f64 {
    a.normalize().dot(b.normalize()).clamp(-1.0, 1.0).acos().to_degrees()
}
