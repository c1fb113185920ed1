mod common;

use common::fixture::{job, oracle};
use matmart::metrics::{covered_mask, si_psnr};
use matmart::pipeline::{reconstruct, Reconstruction, RunReport};
use matmart::predictor::{composite, MaterialPredictor, OraclePredictor};
use matmart::raster::{rasterize_view, render_material_priors};
use matmart::scene::{generate_scene, Scene, SceneSpec};
use matmart::types::{Camera, GenerationBakeScope, MaterialView, PipelineConfig, UVMaterialAtlas};
use matmart::views::{base_axis_views, ViewRig};
use matmart::Error;

fn small_scene(views: usize) -> Scene {
    generate_scene(&SceneSpec {
        uv_resolution: 256,
        view_resolution: 256,
        views,
        ..SceneSpec::default()
    })
    .unwrap()
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        uv_resolution: 256,
        view_resolution: 256,
        candidate_count: 60,
        ..PipelineConfig::default()
    }
}

fn run(scene: &Scene, config: PipelineConfig) -> (UVMaterialAtlas, RunReport) {
    reconstruct(&job(scene, config), &mut oracle(scene), None).unwrap()
}

fn albedo_psnr(scene: &Scene, atlas: &UVMaterialAtlas, config: &PipelineConfig) -> f64 {
    let uv = matmart::raster::rasterize_uv(&scene.mesh, config.uv_resolution);
    let mask = covered_mask(atlas, &uv, config.tau);
    si_psnr(atlas.albedo(), &scene.gt_albedo, Some(&mask)).unwrap()
}

#[test]
fn oracle_round_trip_recovers_textures() {
    let scene = small_scene(3);
    let config = small_config();
    let (atlas, report) = run(&scene, config.clone());
    assert!(report.final_coverage >= 0.95, "coverage {}", report.final_coverage);
    let psnr = albedo_psnr(&scene, &atlas, &config);
    assert!(psnr >= 30.0, "albedo si-psnr {psnr}");
}

#[test]
fn single_view_is_completed_within_budget() {
    let scene = small_scene(1);
    let config = small_config();
    let (_, report) = run(&scene, config.clone());
    assert!(report.final_coverage >= 0.95);
    assert!(report.generation_views.len() <= 6 + config.max_extra_views);
    assert!(report.coverage_after_stage1 < 0.5);
}

#[test]
fn group_size_does_not_change_the_atlas() {
    let scene = small_scene(3);
    let (a, _) = run(
        &scene,
        PipelineConfig {
            group_size: 1,
            ..small_config()
        },
    );
    let (b, _) = run(
        &scene,
        PipelineConfig {
            group_size: 3,
            ..small_config()
        },
    );
    let worst = a
        .albedo()
        .data()
        .iter()
        .zip(b.albedo().data())
        .chain(a.rm().data().iter().zip(b.rm().data()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    assert!(worst <= 1e-5, "max texel difference {worst}");
}

#[test]
fn runs_are_deterministic() {
    let scene = small_scene(2);
    let (a, ra) = run(&scene, small_config());
    let (b, rb) = run(&scene, small_config());
    assert_eq!(a, b);
    assert_eq!(ra.generation_views, rb.generation_views);
    assert_eq!(ra.coverage_trajectory, rb.coverage_trajectory);
}

#[test]
fn coverage_trajectory_never_drops() {
    for views in [1, 3] {
        let (_, report) = run(&small_scene(views), small_config());
        assert_eq!(report.coverage_trajectory.len(), report.groups.len() + 1);
        assert!(report.coverage_trajectory.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(report.final_coverage, *report.coverage_trajectory.last().unwrap());
    }
}

#[test]
fn generation_order_follows_initial_masks() {
    let (_, report) = run(&small_scene(1), small_config());
    let counts: Vec<usize> = report.generation_views.iter().map(|v| v.initial_mask_pixels).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn each_group_sees_the_atlas_after_the_previous_bake() {
    let (_, report) = run(
        &small_scene(1),
        PipelineConfig {
            group_size: 1,
            ..small_config()
        },
    );
    let generating: Vec<u64> = report
        .groups
        .iter()
        .filter(|g| !g.generated.is_empty())
        .map(|g| g.atlas_version)
        .collect();
    assert!(generating.len() >= 2);
    assert!(generating.windows(2).all(|w| w[1] > w[0]), "{generating:?}");
}

#[test]
fn early_stop_when_target_is_reached() {
    let (_, report) = run(
        &small_scene(3),
        PipelineConfig {
            rho: 0.5,
            group_size: 1,
            ..small_config()
        },
    );
    // three inputs already cover more than half the cube
    assert!(report.coverage_after_stage1 >= 0.5);
    assert!(report.stopped_early);
    assert_eq!(report.groups.len(), 1);
}

#[test]
fn views_with_empty_masks_are_skipped() {
    let (_, report) = run(&small_scene(3), small_config());
    for g in &report.groups {
        for &pos in &g.generated {
            assert!(g.views.contains(&pos));
        }
    }
    let empty = report
        .generation_views
        .iter()
        .filter(|v| v.initial_mask_pixels == 0)
        .count();
    assert!(empty >= 1);
    let generated: usize = report.groups.iter().map(|g| g.generated.len()).sum();
    assert!(generated <= report.generation_views.len() - empty);
}

#[test]
fn more_inputs_do_not_hurt() {
    let config = small_config();
    let one = small_scene(1);
    let three = small_scene(3);
    let (a1, _) = run(&one, config.clone());
    let (a3, _) = run(&three, config.clone());
    // with an exact oracle both are near-perfect; neither may collapse
    assert!(albedo_psnr(&one, &a1, &config) >= 30.0);
    assert!(albedo_psnr(&three, &a3, &config) >= 30.0);
}

#[test]
fn bake_scopes_agree_for_an_exact_predictor() {
    let scene = small_scene(2);
    let (a, _) = run(&scene, small_config());
    let (b, _) = run(
        &scene,
        PipelineConfig {
            generation_bake_scope: GenerationBakeScope::Full,
            ..small_config()
        },
    );
    let config = small_config();
    let (pa, pb) = (albedo_psnr(&scene, &a, &config), albedo_psnr(&scene, &b, &config));
    assert!((pa - pb).abs() < 3.0, "{pa} vs {pb}");
}

#[test]
fn covered_atlas_yields_no_generation() {
    let scene = small_scene(1);
    let config = small_config();
    let ctx = Reconstruction::new(&scene.mesh, &config).unwrap();
    let mut atlas = UVMaterialAtlas::new(config.uv_resolution);
    let rig = ViewRig::from_config(&config);
    let mut oracle = oracle(&scene);
    for camera in base_axis_views(&scene.mesh, &rig).unwrap() {
        let view = oracle.render(&camera);
        ctx.bake(&mut atlas, &camera, &view, None).unwrap();
    }
    let before = atlas.clone();
    let mut report = RunReport::default();
    let cameras = ctx.generation_cameras(&atlas, &mut report).unwrap();
    assert!(report.selections.is_empty());
    ctx.stage2(cameras, &mut oracle, &mut atlas, None, &mut report).unwrap();
    assert!(report.groups.iter().all(|g| g.generated.is_empty()));
    assert_eq!(atlas, before);
}

#[test]
fn composite_with_empty_mask_is_the_prior() {
    let scene = small_scene(1);
    let config = small_config();
    let ctx = Reconstruction::new(&scene.mesh, &config).unwrap();
    let mut atlas = UVMaterialAtlas::new(config.uv_resolution);
    let oracle = oracle(&scene);
    let camera = &scene.cameras[0].1;
    ctx.bake(&mut atlas, camera, &oracle.render(camera), None).unwrap();
    let mut bundle = render_material_priors(&atlas, &scene.mesh, &rasterize_view(&scene.mesh, camera), config.tau);
    bundle.mask.data_mut().fill(0.0);
    let noise = MaterialView::zeros(bundle.mask.width(), bundle.mask.height());
    assert_eq!(composite(&noise, &bundle).unwrap(), bundle.priors());
}

/// Returns the wrong number of views.
struct Short(OraclePredictor);

impl MaterialPredictor for Short {
    fn name(&self) -> &str {
        "short"
    }

    fn predict(&mut self, request: &matmart::predictor::PredictRequest) -> matmart::Result<Vec<MaterialView>> {
        let mut out = self.0.predict(request)?;
        out.pop();
        Ok(out)
    }

    fn generate(&mut self, request: &matmart::predictor::GenerateRequest) -> matmart::Result<Vec<MaterialView>> {
        self.0.generate(request)
    }
}

#[test]
fn miscounted_predictions_fail_and_leave_a_partial_atlas() {
    let scene = small_scene(2);
    let dir = tempfile::tempdir().unwrap();
    let mut predictor = Short(oracle(&scene));
    let err = reconstruct(&job(&scene, small_config()), &mut predictor, Some(dir.path())).unwrap_err();
    assert!(matches!(err, Error::Predictor { .. }));
    assert!(dir.path().join("partial").join("albedo.png").exists());
}

#[test]
fn invalid_jobs_are_rejected() {
    let scene = small_scene(1);
    let mut bad = job(&scene, small_config());
    bad.views.clear();
    assert!(reconstruct(&bad, &mut oracle(&scene), None).is_err());
    let bad = job(
        &scene,
        PipelineConfig {
            group_size: 0,
            ..small_config()
        },
    );
    assert!(matches!(
        reconstruct(&bad, &mut oracle(&scene), None),
        Err(Error::Config(_))
    ));
    let mut bad = job(&scene, small_config());
    bad.views[0].camera = Camera::look_at(
        glam::DVec3::new(0.0, 0.0, 3.0),
        glam::DVec3::ZERO,
        glam::DVec3::Y,
        64,
        64,
        64.0,
    )
    .unwrap();
    assert!(reconstruct(&bad, &mut oracle(&scene), None).is_err());
}
