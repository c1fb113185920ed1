use glam::DVec2;

use super::image::ImageBuffer;

/// Accumulating UV-space material textures with their per-texel blending weight.
///
/// Row `y` of every grid holds texels whose centers sit at `v = 1 - (y + 0.5) / resolution`,
/// so the grids are stored top-down like ordinary images.
#[derive(Debug, Clone, PartialEq)]
pub struct UVMaterialAtlas {
    resolution: usize,
    pub(crate) albedo: ImageBuffer,
    pub(crate) rm: ImageBuffer,
    pub(crate) weights: ImageBuffer,
    /// Bumped on every blend; lets callers check which bakes a prior has seen.
    pub(crate) version: u64,
}

impl UVMaterialAtlas {
    pub fn new(resolution: usize) -> Self {
        assert!(resolution >= 1, "atlas resolution must be positive");
        Self {
            resolution,
            albedo: ImageBuffer::zeros(resolution, resolution, 3),
            rm: ImageBuffer::zeros(resolution, resolution, 2),
            weights: ImageBuffer::zeros(resolution, resolution, 1),
            version: 0,
        }
    }

    pub(crate) fn from_parts(albedo: ImageBuffer, rm: ImageBuffer, weights: ImageBuffer) -> Self {
        let resolution = albedo.width();
        debug_assert!(albedo.height() == resolution && rm.width() == resolution && weights.width() == resolution);
        Self {
            resolution,
            albedo,
            rm,
            weights,
            version: 0,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn albedo(&self) -> &ImageBuffer {
        &self.albedo
    }

    pub fn rm(&self) -> &ImageBuffer {
        &self.rm
    }

    pub fn weights(&self) -> &ImageBuffer {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f32 {
        self.weights.data()[index]
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn max_weight(&self) -> f32 {
        self.weights.data().iter().copied().fold(0.0, f32::max)
    }
}

/// Continuous texel coordinates (texel centers at `i + 0.5`) of a UV point.
pub fn uv_to_texel(uv: DVec2, resolution: usize) -> DVec2 {
    let r = resolution as f64;
    DVec2::new(uv.x * r, (1.0 - uv.y) * r)
}

/// UV coordinate of the center of texel `(x, y)`.
pub fn texel_center_uv(x: usize, y: usize, resolution: usize) -> DVec2 {
    let r = resolution as f64;
    DVec2::new((x as f64 + 0.5) / r, 1.0 - (y as f64 + 0.5) / r)
}
