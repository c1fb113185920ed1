//! Scene fixtures and cross-view measurements built on the library itself.

use matmart::pipeline::{InputView, ReconstructionJob};
use matmart::predictor::OraclePredictor;
use matmart::raster::rasterize_view;
use matmart::scene::Scene;
use matmart::types::{Camera, MaterialView, PipelineConfig, TriangleMesh};

pub fn job(scene: &Scene, config: PipelineConfig) -> ReconstructionJob {
    ReconstructionJob {
        mesh: scene.mesh.clone(),
        views: scene
            .cameras
            .iter()
            .zip(&scene.images)
            .map(|((name, camera), image)| InputView {
                name: name.clone(),
                image: image.clone(),
                camera: *camera,
            })
            .collect(),
        config,
    }
}

pub fn oracle(scene: &Scene) -> OraclePredictor {
    OraclePredictor::new(scene.mesh.clone(), scene.gt_albedo.clone(), scene.gt_rm.clone()).unwrap()
}

/// One predicted view with its noise-free counterpart.
pub struct Observed<'a> {
    pub camera: &'a Camera,
    pub predicted: &'a MaterialView,
    pub clean: &'a MaterialView,
}

/// Largest disagreement between the albedo residuals (predicted minus clean) of two views at
/// surface points both of them see, plus the number of such points.
pub fn residual_disagreement(mesh: &TriangleMesh, a: &Observed, b: &Observed) -> (f64, usize) {
    let ga = rasterize_view(mesh, a.camera);
    let gb = rasterize_view(mesh, b.camera);
    let (mut worst, mut shared) = (0.0f64, 0usize);
    for ia in 0..ga.width * ga.height {
        let Some(p) = ga.surface_point(mesh, ia) else { continue };
        let Some((px, depth)) = b.camera.project(p) else {
            continue;
        };
        if px.x < 0.0 || px.y < 0.0 || px.x >= gb.width as f64 || px.y >= gb.height as f64 {
            continue;
        }
        let ib = px.y as usize * gb.width + px.x as usize;
        if !gb.is_covered(ib) || (gb.depth.at(ib)[0] as f64 - depth).abs() > 1e-3 * depth {
            continue;
        }
        shared += 1;
        for c in 0..3 {
            let ra = a.predicted.albedo.at(ia)[c] as f64 - a.clean.albedo.at(ia)[c] as f64;
            let rb = b.predicted.albedo.at(ib)[c] as f64 - b.clean.albedo.at(ib)[c] as f64;
            worst = worst.max((ra - rb).abs());
        }
    }
    (worst, shared)
}
