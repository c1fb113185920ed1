//! Two-stage reconstruction: progressive estimation from the input photos, then coverage-driven
//! generation from extra viewpoints, both baked into one UV atlas.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::bake::{blend, dilate_atlas, texel_coverage, BakeContribution};
use crate::error::{Error, Result};
use crate::predictor::{composite, GenerateRequest, GenerationTarget, MaterialPredictor, PredictRequest, TargetImage};
use crate::raster::{project_view_to_uv, rasterize_uv, rasterize_view, render_material_priors, UVGBuffer};
use crate::types::io::{save_atlas, write_text};
use crate::types::{
    Camera, GenerationBakeScope, ImageBuffer, MaterialView, PipelineConfig, ReferencePolicy, TriangleMesh,
    UVMaterialAtlas,
};
use crate::views::{base_axis_views, greedy_select, mask_order, sample_sphere_candidates, GreedyParams, ViewRig};

/// An input photo with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct InputView {
    pub name: String,
    pub image: ImageBuffer,
    pub camera: Camera,
}

#[derive(Debug, Clone)]
pub struct ReconstructionJob {
    pub mesh: TriangleMesh,
    pub views: Vec<InputView>,
    pub config: PipelineConfig,
}

impl ReconstructionJob {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.views.is_empty() {
            return Err(Error::Config("at least one input view is required".into()));
        }
        for v in &self.views {
            if v.image.width() != v.camera.width as usize || v.image.height() != v.camera.height as usize {
                return Err(Error::InvalidCamera {
                    name: v.name.clone(),
                    reason: format!(
                        "image is {}x{} but the camera is {}x{}",
                        v.image.width(),
                        v.image.height(),
                        v.camera.width,
                        v.camera.height
                    ),
                });
            }
            if v.image.channels() != 3 {
                return Err(Error::Image {
                    path: v.name.clone().into(),
                    message: "input images must be RGB".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_seconds: f64,
    pub selection_seconds: f64,
    pub stage2_seconds: f64,
    pub total_seconds: f64,
}

/// A greedily selected candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedView {
    pub candidate: usize,
    pub gain: usize,
    pub simulated_coverage: f64,
}

/// One generation viewpoint in processing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationView {
    /// `axis+x`, `axis-y`, ... or `candidate-<index>`.
    pub label: String,
    /// Mask size against the atlas left by stage one.
    pub initial_mask_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    /// Positions in `generation_views`.
    pub views: Vec<usize>,
    /// Views actually sent to the predictor (non-empty mask).
    pub generated: Vec<usize>,
    /// Atlas version the group's priors were rendered from.
    pub atlas_version: u64,
    pub coverage_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub predictor: String,
    pub timings: StageTimings,
    pub coverage_after_stage1: f64,
    /// Coverage assumed by view selection once the axis views are counted.
    pub simulated_start_coverage: f64,
    pub selections: Vec<SelectedView>,
    pub generation_views: Vec<GenerationView>,
    pub groups: Vec<GroupRecord>,
    /// Coverage after stage one, then after every processed group.
    pub coverage_trajectory: Vec<f64>,
    pub stopped_early: bool,
    pub final_coverage: f64,
}

/// Shared state of one reconstruction.
pub struct Reconstruction<'a> {
    pub mesh: &'a TriangleMesh,
    pub config: &'a PipelineConfig,
    pub uv: UVGBuffer,
}

impl<'a> Reconstruction<'a> {
    pub fn new(mesh: &'a TriangleMesh, config: &'a PipelineConfig) -> Result<Self> {
        config.validate()?;
        let uv = rasterize_uv(mesh, config.uv_resolution);
        if uv.overlapping_texels > 0 {
            warn!("{} texels are claimed by more than one triangle", uv.overlapping_texels);
        }
        Ok(Self { mesh, config, uv })
    }

    pub fn coverage(&self, atlas: &UVMaterialAtlas) -> f64 {
        texel_coverage(atlas, &self.uv, self.config.tau)
    }

    /// Projects a material view seen from `camera` and blends it into the atlas.
    pub fn bake(
        &self,
        atlas: &mut UVMaterialAtlas,
        camera: &Camera,
        view: &MaterialView,
        eligible: Option<&(dyn Fn(usize) -> bool + Sync)>,
    ) -> Result<()> {
        let gbuf = rasterize_view(self.mesh, camera);
        let projection = project_view_to_uv(
            self.mesh,
            camera,
            view,
            &gbuf,
            &self.uv,
            self.config.s_prime_mode,
            eligible,
        )?;
        blend(atlas, &BakeContribution::new(projection, self.config.lambda)?)
    }

    /// Stage one: the first view alone without reference, then rounds of `group_size` views
    /// referencing the first prediction (or the previous round's last one). Every prediction is
    /// baked as soon as it arrives, in input order.
    pub fn stage1(
        &self,
        views: &[InputView],
        predictor: &mut dyn MaterialPredictor,
        atlas: &mut UVMaterialAtlas,
    ) -> Result<Vec<MaterialView>> {
        let mut predictions: Vec<MaterialView> = Vec::with_capacity(views.len());
        let mut start = 0;
        while start < views.len() {
            let end = if start == 0 {
                1
            } else {
                (start + self.config.group_size).min(views.len())
            };
            let reference = match (start, self.config.reference_policy) {
                (0, _) => None,
                (_, ReferencePolicy::First) => Some(predictions[0].clone()),
                (_, ReferencePolicy::Previous) => predictions.last().cloned(),
            };
            let request = PredictRequest {
                targets: views[start..end]
                    .iter()
                    .map(|v| TargetImage {
                        image: v.image.clone(),
                        camera: v.camera,
                    })
                    .collect(),
                reference,
            };
            let out = predictor.predict(&request)?;
            if out.len() != end - start {
                return Err(Error::Predictor {
                    predictor: predictor.name().to_string(),
                    message: format!("returned {} views for {} targets", out.len(), end - start),
                });
            }
            for (v, pred) in views[start..end].iter().zip(out) {
                self.bake(atlas, &v.camera, &pred, None)?;
                info!("baked input {} (coverage {:.4})", v.name, self.coverage(atlas));
                predictions.push(pred);
            }
            start = end;
        }
        Ok(predictions)
    }

    /// Axis views followed by greedily selected candidates, each with a label.
    pub fn generation_cameras(&self, atlas: &UVMaterialAtlas, report: &mut RunReport) -> Result<Vec<(String, Camera)>> {
        let rig = ViewRig::from_config(self.config);
        let base = base_axis_views(self.mesh, &rig)?;
        let candidates = sample_sphere_candidates(self.mesh, self.config.candidate_count, self.config.seed, &rig)?;
        let outcome = greedy_select(
            self.mesh,
            atlas,
            &self.uv,
            &base,
            &candidates,
            &GreedyParams::from_config(self.config),
        )?;
        report.simulated_start_coverage = outcome.start_coverage;
        let labels = ["axis+x", "axis-x", "axis+y", "axis-y", "axis+z", "axis-z"];
        let mut cameras: Vec<(String, Camera)> = labels.iter().map(|l| l.to_string()).zip(base).collect();
        for s in outcome.selections {
            cameras.push((format!("candidate-{}", s.candidate), candidates[s.candidate]));
            report.selections.push(SelectedView {
                candidate: s.candidate,
                gain: s.gain,
                simulated_coverage: s.coverage,
            });
        }
        Ok(cameras)
    }

    /// Stage two: order generation views by mask size, then alternate generation and baking one
    /// group at a time until coverage reaches `rho` or the views run out.
    pub fn stage2(
        &self,
        cameras: Vec<(String, Camera)>,
        predictor: &mut dyn MaterialPredictor,
        atlas: &mut UVMaterialAtlas,
        mut reference: Option<MaterialView>,
        report: &mut RunReport,
    ) -> Result<()> {
        let tau = self.config.tau;
        let counts: Vec<usize> = cameras
            .iter()
            .map(|(_, c)| render_material_priors(atlas, self.mesh, &rasterize_view(self.mesh, c), tau).mask_pixels())
            .collect();
        let order = mask_order(&counts);
        report.generation_views = order
            .iter()
            .map(|&i| GenerationView {
                label: cameras[i].0.clone(),
                initial_mask_pixels: counts[i],
            })
            .collect();

        let positions: Vec<usize> = (0..order.len()).collect();
        for group in positions.chunks(self.config.group_size) {
            let atlas_version = atlas.version();
            let mut targets = Vec::new();
            let mut generated = Vec::new();
            for &pos in group {
                let camera = &cameras[order[pos]].1;
                let bundle = render_material_priors(atlas, self.mesh, &rasterize_view(self.mesh, camera), tau);
                debug_assert_eq!(bundle.atlas_version, atlas_version);
                if bundle.mask_pixels() == 0 {
                    continue;
                }
                generated.push(pos);
                targets.push(GenerationTarget {
                    bundle,
                    camera: *camera,
                });
            }
            if !targets.is_empty() {
                let request = GenerateRequest {
                    targets,
                    reference: reference.clone(),
                };
                let out = predictor.generate(&request)?;
                if out.len() != request.targets.len() {
                    return Err(Error::Predictor {
                        predictor: predictor.name().to_string(),
                        message: format!("returned {} views for {} bundles", out.len(), request.targets.len()),
                    });
                }
                // texels still uncovered when the priors were rendered
                let open: Vec<bool> = atlas.weights().data().iter().map(|&w| (w as f64) < tau).collect();
                let eligible = |i: usize| open[i];
                let scope: Option<&(dyn Fn(usize) -> bool + Sync)> = match self.config.generation_bake_scope {
                    GenerationBakeScope::Generated => Some(&eligible),
                    GenerationBakeScope::Full => None,
                };
                let mut last = None;
                for (target, view) in request.targets.iter().zip(out) {
                    let completed = composite(&view, &target.bundle)?;
                    self.bake(atlas, &target.camera, &completed, scope)?;
                    last = Some(completed);
                }
                if self.config.reference_policy == ReferencePolicy::Previous {
                    reference = last.or(reference);
                }
            }
            let coverage = self.coverage(atlas);
            info!(
                "group {:?}: generated {} views, coverage {coverage:.4}",
                group,
                generated.len()
            );
            report.groups.push(GroupRecord {
                views: group.to_vec(),
                generated,
                atlas_version,
                coverage_after: coverage,
            });
            report.coverage_trajectory.push(coverage);
            if coverage >= self.config.rho && group.last() != positions.last() {
                report.stopped_early = true;
                break;
            }
        }
        Ok(())
    }
}

/// Runs both stages and returns the exported (dilated) atlas with its report. When `out_dir` is
/// given and a stage fails, the partial atlas is written to `out_dir/partial` first.
pub fn reconstruct(
    job: &ReconstructionJob,
    predictor: &mut dyn MaterialPredictor,
    out_dir: Option<&Path>,
) -> Result<(UVMaterialAtlas, RunReport)> {
    job.validate()?;
    let t0 = Instant::now();
    let ctx = Reconstruction::new(&job.mesh, &job.config)?;
    let mut atlas = UVMaterialAtlas::new(job.config.uv_resolution);
    let mut report = RunReport {
        predictor: predictor.name().to_string(),
        ..RunReport::default()
    };

    let save_partial = |atlas: &UVMaterialAtlas, err: Error| -> Error {
        if let Some(dir) = out_dir {
            let partial = dir.join("partial");
            match save_atlas(atlas, &partial) {
                Ok(()) => warn!("run failed; partial atlas written to {}", partial.display()),
                Err(e) => warn!("could not save partial atlas: {e}"),
            }
        }
        err
    };

    let predictions = match ctx.stage1(&job.views, predictor, &mut atlas) {
        Ok(p) => p,
        Err(e) => return Err(save_partial(&atlas, e)),
    };
    let t1 = Instant::now();
    report.coverage_after_stage1 = ctx.coverage(&atlas);
    report.coverage_trajectory.push(report.coverage_after_stage1);

    let cameras = ctx.generation_cameras(&atlas, &mut report)?;
    let t2 = Instant::now();
    let reference = match job.config.reference_policy {
        ReferencePolicy::First => predictions.first().cloned(),
        ReferencePolicy::Previous => predictions.last().cloned(),
    };
    if let Err(e) = ctx.stage2(cameras, predictor, &mut atlas, reference, &mut report) {
        return Err(save_partial(&atlas, e));
    }
    let t3 = Instant::now();

    report.final_coverage = ctx.coverage(&atlas);
    if let Some(r) = job.config.dilation_radius {
        atlas = dilate_atlas(&atlas, r);
    }
    report.timings = StageTimings {
        stage1_seconds: (t1 - t0).as_secs_f64(),
        selection_seconds: (t2 - t1).as_secs_f64(),
        stage2_seconds: (t3 - t2).as_secs_f64(),
        total_seconds: t0.elapsed().as_secs_f64(),
    };
    Ok((atlas, report))
}

/// Writes albedo.png, rm.png, weights.png, atlas.json and report.json.
pub fn write_outputs(dir: &Path, atlas: &UVMaterialAtlas, report: &RunReport) -> Result<()> {
    save_atlas(atlas, dir)?;
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)
}
