use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-texel view cosine S′ is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SPrimeMode {
    /// Cosine between the texel normal and the direction from the texel to the camera center.
    #[default]
    PerTexel,
    /// Cosine between the texel normal and the camera's inverse forward axis.
    CameraAxis,
}

/// Which earlier prediction is handed to later rounds as the reference view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePolicy {
    /// The prediction for the first input image, for the whole run.
    #[default]
    First,
    /// The last prediction of the preceding round.
    Previous,
}

/// Which pixels of a generated view are baked back into the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationBakeScope {
    /// Only texels still uncovered when the group's priors were rendered receive weight.
    #[default]
    Generated,
    /// The whole composited view (priors included) is blended back.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub uv_resolution: usize,
    pub view_resolution: usize,
    /// Target texel coverage that ends view selection and generation.
    pub rho: f64,
    /// Greedy views picked on top of the 6 axis views.
    pub max_extra_views: usize,
    pub candidate_count: usize,
    pub group_size: usize,
    /// Blend exponent: W′ = S′^lambda.
    pub lambda: f64,
    /// A texel counts as covered once its accumulated weight reaches tau.
    pub tau: f64,
    pub seed: u64,
    pub s_prime_mode: SPrimeMode,
    /// Minimum S′ for a texel to count toward a candidate's coverage gain.
    pub s_min: f64,
    /// Fraction of the smaller image side the projected object should span.
    pub target_fill: f64,
    /// Generation cameras sit at this multiple of the bounding-sphere radius.
    pub camera_distance_factor: f64,
    /// Seam dilation applied at export; `None` disables it.
    pub dilation_radius: Option<usize>,
    pub reference_policy: ReferencePolicy,
    pub generation_bake_scope: GenerationBakeScope,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            uv_resolution: 1024,
            view_resolution: 512,
            rho: 0.95,
            max_extra_views: 10,
            candidate_count: 300,
            group_size: 3,
            lambda: 6.0,
            tau: 1e-3,
            seed: 0,
            s_prime_mode: SPrimeMode::PerTexel,
            s_min: 0.0,
            target_fill: 0.9,
            camera_distance_factor: 2.5,
            dilation_radius: Some(4),
            reference_policy: ReferencePolicy::First,
            generation_bake_scope: GenerationBakeScope::Generated,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.uv_resolution == 0 || self.view_resolution < 2 {
            return fail("uv resolution must be >= 1 and view resolution >= 2");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return fail("rho must lie in (0, 1]");
        }
        if self.candidate_count == 0 {
            return fail("candidate count must be >= 1");
        }
        if self.group_size == 0 {
            return fail("group size must be >= 1");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail("tau must be positive");
        }
        if !(0.0..1.0).contains(&self.s_min) {
            return fail("s_min must lie in [0, 1)");
        }
        if !(self.target_fill > 0.0 && self.target_fill <= 1.0) {
            return fail("target fill must lie in (0, 1]");
        }
        if !(self.camera_distance_factor > 1.0 && self.camera_distance_factor.is_finite()) {
            return fail("camera distance factor must exceed 1");
        }
        Ok(())
    }
}
