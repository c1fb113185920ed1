//! Synthetic scenes: a UV-unwrapped shape, procedural ground-truth materials, cameras and input
//! renders. Everything the reconstruction needs, generated from a seed.

use std::path::Path;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize_view, render_texture};
use crate::shapes;
use crate::types::io::{save_cameras, save_image, save_mesh, BitDepth};
use crate::types::{texel_center_uv, Camera, ImageBuffer, TriangleMesh};
use crate::views::{fibonacci_directions, ViewRig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Cube,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlbedoPattern {
    /// Square cells with a random colour each.
    Checker,
    /// Smooth colour ramp across UV space.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub shape: ShapeKind,
    pub pattern: AlbedoPattern,
    /// Checker cells per UV side.
    pub checker: usize,
    pub uv_resolution: usize,
    pub view_resolution: u32,
    pub views: usize,
    pub seed: u64,
    /// Shade inputs with a headlight instead of showing raw albedo.
    pub lambertian: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            shape: ShapeKind::Cube,
            pattern: AlbedoPattern::Checker,
            checker: 8,
            uv_resolution: 512,
            view_resolution: 512,
            views: 3,
            seed: 0,
            lambertian: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub gt_albedo: ImageBuffer,
    pub gt_rm: ImageBuffer,
    pub cameras: Vec<(String, Camera)>,
    pub images: Vec<ImageBuffer>,
}

pub fn shape_mesh(shape: ShapeKind) -> TriangleMesh {
    match shape {
        ShapeKind::Cube => shapes::cube(1.0),
        ShapeKind::Sphere => shapes::uv_sphere(1.0, 64, 32),
    }
}

/// Ground-truth albedo and roughness/metallic textures.
///
/// Checker colours stay within [0.25, 0.75]. Roughness ramps with u; metallic alternates between
/// 0.2 and 0.8 on the same checker grid.
pub fn material_textures(spec: &SceneSpec) -> Result<(ImageBuffer, ImageBuffer)> {
    let res = spec.uv_resolution;
    if res == 0 || spec.checker == 0 {
        return Err(Error::Config(
            "texture resolution and checker count must be positive".into(),
        ));
    }
    let n = spec.checker;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let colours: Vec<[f32; 3]> = (0..n * n).map(|_| [0; 3].map(|_| rng.gen_range(0.25..=0.75))).collect();
    let mut albedo = ImageBuffer::zeros(res, res, 3);
    let mut rm = ImageBuffer::zeros(res, res, 2);
    for y in 0..res {
        for x in 0..res {
            let uv = texel_center_uv(x, y, res);
            let cx = ((uv.x * n as f64) as usize).min(n - 1);
            let cy = ((uv.y * n as f64) as usize).min(n - 1);
            let i = y * res + x;
            albedo.at_mut(i).copy_from_slice(&match spec.pattern {
                AlbedoPattern::Checker => colours[cy * n + cx],
                AlbedoPattern::Gradient => [
                    0.25 + 0.5 * uv.x as f32,
                    0.25 + 0.5 * uv.y as f32,
                    0.75 - 0.25 * (uv.x + uv.y) as f32,
                ],
            });
            let metallic = if (cx + cy).is_multiple_of(2) { 0.2 } else { 0.8 };
            rm.at_mut(i).copy_from_slice(&[0.2 + 0.6 * uv.x as f32, metallic]);
        }
    }
    Ok((albedo, rm))
}

/// Input cameras on a Fibonacci spiral around the object, rescaled like generation views. The
/// spiral is rotated by a different seed than the candidate pool so inputs are not candidates.
pub fn input_cameras(mesh: &TriangleMesh, spec: &SceneSpec) -> Result<Vec<(String, Camera)>> {
    let rig = ViewRig {
        resolution: spec.view_resolution,
        distance_factor: 2.5,
        target_fill: 0.9,
    };
    fibonacci_directions(spec.views, spec.seed.wrapping_add(0x9e37_79b9))
        .into_iter()
        .enumerate()
        .map(|(i, dir)| Ok((format!("view_{i:03}"), rig.camera(mesh, dir, DVec3::Y)?)))
        .collect()
}

/// Albedo seen through `camera`, optionally shaded by a light at the camera.
pub fn render_input(mesh: &TriangleMesh, camera: &Camera, albedo: &ImageBuffer, lambertian: bool) -> ImageBuffer {
    let gbuf = rasterize_view(mesh, camera);
    let mut img = render_texture(mesh, &gbuf, albedo);
    if lambertian {
        let eye = camera.center();
        for i in 0..gbuf.width * gbuf.height {
            let Some(p) = gbuf.surface_point(mesh, i) else { continue };
            let n = gbuf.normal.at(i);
            let n = DVec3::new(n[0] as f64, n[1] as f64, n[2] as f64);
            let shade = 0.2 + 0.8 * n.dot((eye - p).normalize()).max(0.0);
            for v in img.at_mut(i) {
                *v *= shade as f32;
            }
        }
    }
    img.clamp_unit();
    img
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.views == 0 {
        return Err(Error::Config("a scene needs at least one view".into()));
    }
    if spec.view_resolution == 0 {
        return Err(Error::Config("view resolution must be positive".into()));
    }
    let mesh = shape_mesh(spec.shape);
    let (gt_albedo, gt_rm) = material_textures(spec)?;
    let cameras = input_cameras(&mesh, spec)?;
    let images = cameras
        .iter()
        .map(|(_, c)| render_input(&mesh, c, &gt_albedo, spec.lambertian))
        .collect();
    Ok(Scene {
        mesh,
        gt_albedo,
        gt_rm,
        cameras,
        images,
    })
}

/// Writes `mesh.obj`, `gt_albedo.png`, `gt_rm.png`, `cameras.json` and `images/<name>.png`.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    save_mesh(&scene.mesh, &dir.join("mesh.obj"))?;
    save_image(&dir.join("gt_albedo.png"), &scene.gt_albedo, BitDepth::Eight)?;
    save_image(&dir.join("gt_rm.png"), &scene.gt_rm, BitDepth::Eight)?;
    save_cameras(&scene.cameras, &dir.join("cameras.json"))?;
    for ((name, _), img) in scene.cameras.iter().zip(&scene.images) {
        save_image(&images_dir.join(format!("{name}.png")), img, BitDepth::Eight)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_colours_are_bounded() {
        let (a, rm) = material_textures(&SceneSpec {
            uv_resolution: 32,
            ..SceneSpec::default()
        })
        .unwrap();
        assert!(a.data().iter().all(|&v| (0.25..=0.75).contains(&v)));
        assert!(rm.data().iter().all(|&v| (0.2..=0.8).contains(&v)));
    }

    #[test]
    fn zero_views_is_rejected() {
        let spec = SceneSpec {
            views: 0,
            ..SceneSpec::default()
        };
        assert!(generate_scene(&spec).is_err());
    }
}
