//! Generation viewpoints: six axis views, a spherical candidate pool, greedy coverage-driven
//! selection and mask-size ordering.

use std::f64::consts::PI;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize_view, rescale_intrinsics, texel_cosines, UVGBuffer};
use crate::types::{Camera, ImageBuffer, PipelineConfig, SPrimeMode, TriangleMesh, UVMaterialAtlas};

/// Placement rules shared by axis views and candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRig {
    pub resolution: u32,
    /// Distance from the centroid as a multiple of the bounding radius.
    pub distance_factor: f64,
    pub target_fill: f64,
}

impl ViewRig {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            resolution: config.view_resolution as u32,
            distance_factor: config.camera_distance_factor,
            target_fill: config.target_fill,
        }
    }

    /// Camera looking at the mesh centroid from direction `dir`, intrinsics rescaled to the mesh.
    pub fn camera(&self, mesh: &TriangleMesh, dir: DVec3, up: DVec3) -> Result<Camera> {
        let radius = mesh.bounding_radius();
        if !(radius > 0.0) {
            return Err(Error::Degenerate("mesh has zero extent".into()));
        }
        let center = mesh.centroid();
        let eye = center + dir.normalize() * (self.distance_factor * radius);
        let res = self.resolution;
        let camera = Camera::look_at(eye, center, up, res, res, res as f64)?;
        rescale_intrinsics(mesh, &camera, self.target_fill)
    }
}

/// Cameras on the +X, -X, +Y, -Y, +Z, -Z axes through the centroid. The Y views use +Z as up.
pub fn base_axis_views(mesh: &TriangleMesh, rig: &ViewRig) -> Result<Vec<Camera>> {
    let axes = [
        (DVec3::X, DVec3::Y),
        (DVec3::NEG_X, DVec3::Y),
        (DVec3::Y, DVec3::Z),
        (DVec3::NEG_Y, DVec3::Z),
        (DVec3::Z, DVec3::Y),
        (DVec3::NEG_Z, DVec3::Y),
    ];
    axes.iter().map(|&(dir, up)| rig.camera(mesh, dir, up)).collect()
}

/// Fibonacci-spiral unit vectors. The seed only rotates the spiral about Y.
pub fn fibonacci_directions(count: usize, seed: u64) -> Vec<DVec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..2.0 * PI);
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = i as f64 * golden + offset;
            DVec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

pub fn sample_sphere_candidates(mesh: &TriangleMesh, count: usize, seed: u64, rig: &ViewRig) -> Result<Vec<Camera>> {
    fibonacci_directions(count, seed)
        .into_iter()
        .map(|dir| rig.camera(mesh, dir, DVec3::Y))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyParams {
    pub rho: f64,
    pub max_views: usize,
    pub tau: f64,
    /// A texel counts toward a candidate's gain only when S′ exceeds this.
    pub s_min: f64,
    pub mode: SPrimeMode,
    /// Square resolution the candidates are rasterized at during simulation.
    pub sim_resolution: u32,
}

impl GreedyParams {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            rho: config.rho,
            max_views: config.max_extra_views,
            tau: config.tau,
            s_min: config.s_min,
            mode: config.s_prime_mode,
            sim_resolution: (config.view_resolution as u32 / 2).max(1),
        }
    }
}

/// One greedy pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidate: usize,
    /// Newly covered texels.
    pub gain: usize,
    /// Simulated coverage after this pick.
    pub coverage: f64,
}

/// Outcome of greedy selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    /// Simulated coverage before any candidate was picked (atlas plus base views).
    pub start_coverage: f64,
    pub selections: Vec<Selection>,
}

/// Positions (into `uv.occupied`) of the listed texels that `camera` sees with S′ > `s_min`.
pub(crate) fn visible_texels(
    mesh: &TriangleMesh,
    camera: &Camera,
    uv: &UVGBuffer,
    texels: &[u32],
    params: &GreedyParams,
) -> Result<Vec<u32>> {
    let cam = camera.resized(params.sim_resolution, params.sim_resolution)?;
    let gbuf = rasterize_view(mesh, &cam);
    let occupied: Vec<u32> = texels.iter().map(|&k| uv.occupied[k as usize]).collect();
    let cos = texel_cosines(mesh, &cam, &gbuf, uv, &occupied, params.mode);
    Ok(texels
        .iter()
        .zip(cos)
        .filter(|&(_, s)| s > 0.0 && s > params.s_min)
        .map(|(&k, _)| k)
        .collect())
}

/// Greedily picks candidates maximizing newly covered texels.
///
/// A texel is covered once its atlas weight reaches `tau` or once any base view or picked
/// candidate sees it. Stops at `rho`, at `max_views` picks, or when no candidate adds anything.
/// Ties go to the lowest candidate index.
pub fn greedy_select(
    mesh: &TriangleMesh,
    atlas: &UVMaterialAtlas,
    uv: &UVGBuffer,
    base_views: &[Camera],
    candidates: &[Camera],
    params: &GreedyParams,
) -> Result<GreedyOutcome> {
    let total = uv.occupied.len();
    let weights = atlas.weights().data();
    let mut covered: Vec<bool> = uv
        .occupied
        .iter()
        .map(|&ti| weights[ti as usize] as f64 >= params.tau)
        .collect();
    let uncovered = |covered: &[bool]| -> Vec<u32> { (0..total as u32).filter(|&k| !covered[k as usize]).collect() };

    for camera in base_views {
        for k in visible_texels(mesh, camera, uv, &uncovered(&covered), params)? {
            covered[k as usize] = true;
        }
    }
    let fraction = |n: usize| if total == 0 { 1.0 } else { n as f64 / total as f64 };
    let mut count = covered.iter().filter(|&&c| c).count();
    let start_coverage = fraction(count);
    let mut selections = Vec::new();
    if start_coverage >= params.rho || params.max_views == 0 || candidates.is_empty() {
        return Ok(GreedyOutcome {
            start_coverage,
            selections,
        });
    }

    let pool = uncovered(&covered);
    let visible: Vec<Vec<u32>> = candidates
        .par_iter()
        .map(|c| visible_texels(mesh, c, uv, &pool, params))
        .collect::<Result<_>>()?;
    let mut taken = vec![false; candidates.len()];

    while selections.len() < params.max_views {
        let gains: Vec<usize> = visible
            .par_iter()
            .enumerate()
            .map(|(i, vis)| {
                if taken[i] {
                    0
                } else {
                    vis.iter().filter(|&&k| !covered[k as usize]).count()
                }
            })
            .collect();
        let mut best = 0;
        for (i, &g) in gains.iter().enumerate() {
            if g > gains[best] {
                best = i;
            }
        }
        let gain = gains[best];
        if gain == 0 {
            break;
        }
        for &k in &visible[best] {
            covered[k as usize] = true;
        }
        taken[best] = true;
        count += gain;
        let coverage = fraction(count);
        selections.push(Selection {
            candidate: best,
            gain,
            coverage,
        });
        if coverage >= params.rho {
            break;
        }
    }
    Ok(GreedyOutcome {
        start_coverage,
        selections,
    })
}

/// Indices ordering the counts ascending; equal counts keep their original order.
pub fn mask_order(counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| counts[i]);
    order
}

/// Reorders views so those with the fewest pixels to generate come first.
pub fn sort_views_by_mask<T: Clone>(views: &[T], masks: &[ImageBuffer]) -> Result<Vec<T>> {
    if views.len() != masks.len() {
        return Err(Error::Shape(format!("{} views but {} masks", views.len(), masks.len())));
    }
    let counts: Vec<usize> = masks
        .iter()
        .map(|m| m.data().iter().filter(|&&v| v > 0.5).count())
        .collect();
    Ok(mask_order(&counts).into_iter().map(|i| views[i].clone()).collect())
}
