//! `matmart` command-line interface.

mod alloc;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use matmart::bake::texel_coverage;
use matmart::metrics::{covered_mask, score_materials, MaterialScores};
use matmart::pipeline::{reconstruct, write_outputs, InputView, Reconstruction, ReconstructionJob};
use matmart::predictor::{MaterialPredictor, NoisyOraclePredictor, OraclePredictor, ToyVmcaPredictor};
use matmart::raster::rasterize_uv;
use matmart::scene::{generate_scene, write_scene, AlbedoPattern, SceneSpec, ShapeKind};
use matmart::types::io::{
    load_atlas, load_cameras, load_image, load_material_view, load_mesh, load_rgb, load_rm, save_atlas,
};
use matmart::types::{GenerationBakeScope, PipelineConfig, ReferencePolicy, SPrimeMode, UVMaterialAtlas};
use matmart::views::{base_axis_views, greedy_select, sample_sphere_candidates, GreedyParams, ViewRig};
use matmart::vmca::checks::{gradient_suite, memory_suite, oracle_suite};

#[global_allocator]
static ALLOC: alloc::Counting = alloc::Counting;

#[derive(Parser, Debug)]
#[command(
    name = "matmart",
    version,
    about = "PBR material reconstruction for UV-mapped meshes"
)]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full two-stage reconstruction.
    Reconstruct(ReconstructArgs),
    /// Write a synthetic test scene.
    SceneGen(SceneGenArgs),
    /// Print the greedily selected extra views for an atlas as JSON.
    SelectViews(SelectViewsArgs),
    /// Blend one material view into an atlas on disk.
    Bake(BakeArgs),
    /// Print material metrics as JSON.
    Evaluate(EvaluateArgs),
    /// Run the attention kernel self-checks.
    VmcaCheck(VmcaCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PredictorKind {
    Oracle,
    NoisyOracle,
    Toy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SPrimeArg {
    PerTexel,
    CameraAxis,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReferenceArg {
    First,
    Previous,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Generated,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Cube,
    Sphere,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Checker,
    Gradient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Space {
    Uv,
    View,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    #[arg(long = "uv-res", default_value_t = 1024)]
    uv_res: usize,
    #[arg(long = "view-res", default_value_t = 512)]
    view_res: usize,
    /// Target texel coverage.
    #[arg(long, default_value_t = 0.95)]
    rho: f64,
    #[arg(long = "max-extra-views", default_value_t = 10)]
    max_extra_views: usize,
    #[arg(long, default_value_t = 300)]
    candidates: usize,
    #[arg(long = "group-size", default_value_t = 3)]
    group_size: usize,
    /// Blend exponent applied to the view cosine.
    #[arg(long, default_value_t = 6.0)]
    lambda: f64,
    /// Weight at which a texel counts as covered.
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "s-prime-mode", value_enum, default_value_t = SPrimeArg::PerTexel)]
    s_prime_mode: SPrimeArg,
    /// Minimum view cosine for a texel to count toward a candidate's gain.
    #[arg(long = "s-min", default_value_t = 0.0)]
    s_min: f64,
    #[arg(long = "target-fill", default_value_t = 0.9)]
    target_fill: f64,
    /// Camera distance as a multiple of the bounding radius.
    #[arg(long = "camera-distance", default_value_t = 2.5)]
    camera_distance: f64,
    /// Seam dilation radius in texels at export; 0 disables it.
    #[arg(long, default_value_t = 4)]
    dilation: usize,
    #[arg(long = "reference-policy", value_enum, default_value_t = ReferenceArg::First)]
    reference_policy: ReferenceArg,
    #[arg(long = "bake-scope", value_enum, default_value_t = ScopeArg::Generated)]
    bake_scope: ScopeArg,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            uv_resolution: self.uv_res,
            view_resolution: self.view_res,
            rho: self.rho,
            max_extra_views: self.max_extra_views,
            candidate_count: self.candidates,
            group_size: self.group_size,
            lambda: self.lambda,
            tau: self.tau,
            seed: self.seed,
            s_prime_mode: match self.s_prime_mode {
                SPrimeArg::PerTexel => SPrimeMode::PerTexel,
                SPrimeArg::CameraAxis => SPrimeMode::CameraAxis,
            },
            s_min: self.s_min,
            target_fill: self.target_fill,
            camera_distance_factor: self.camera_distance,
            dilation_radius: (self.dilation > 0).then_some(self.dilation),
            reference_policy: match self.reference_policy {
                ReferenceArg::First => ReferencePolicy::First,
                ReferenceArg::Previous => ReferencePolicy::Previous,
            },
            generation_bake_scope: match self.bake_scope {
                ScopeArg::Generated => GenerationBakeScope::Generated,
                ScopeArg::Full => GenerationBakeScope::Full,
            },
        }
    }
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// OBJ mesh with UVs and normals.
    #[arg(long)]
    mesh: PathBuf,
    /// Directory holding `<camera name>.png` for every camera.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PredictorKind::Oracle)]
    predictor: PredictorKind,
    /// Ground-truth albedo texture (oracle predictors).
    #[arg(long = "gt-albedo")]
    gt_albedo: Option<PathBuf>,
    /// Ground-truth roughness/metallic texture (oracle predictors).
    #[arg(long = "gt-rm")]
    gt_rm: Option<PathBuf>,
    /// Largest per-channel bias of the noisy oracle.
    #[arg(long = "noise-amplitude", default_value_t = 0.1)]
    noise_amplitude: f32,
    /// Token grid side of the toy predictor.
    #[arg(long = "toy-grid", default_value_t = 16)]
    toy_grid: usize,
    /// Latent width of the toy predictor.
    #[arg(long = "toy-width", default_value_t = 16)]
    toy_width: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct SceneGenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ShapeArg::Cube)]
    shape: ShapeArg,
    #[arg(long, value_enum, default_value_t = PatternArg::Checker)]
    pattern: PatternArg,
    /// Checker cells per UV side.
    #[arg(long, default_value_t = 8)]
    checker: usize,
    #[arg(long = "uv-res", default_value_t = 512)]
    uv_res: usize,
    #[arg(long = "view-res", default_value_t = 512)]
    view_res: u32,
    #[arg(long, default_value_t = 3)]
    views: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shade inputs with a headlight.
    #[arg(long)]
    lambertian: bool,
}

#[derive(Args, Debug)]
struct SelectViewsArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Atlas directory; omit to start from an empty atlas.
    #[arg(long)]
    atlas: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct BakeArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Atlas directory, updated in place and created if missing.
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Camera to use; defaults to the first one.
    #[arg(long)]
    view: Option<String>,
    /// Albedo image of the view.
    #[arg(long)]
    albedo: PathBuf,
    /// Roughness/metallic image of the view.
    #[arg(long)]
    rm: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value_t = Space::Uv)]
    space: Space,
    #[arg(long = "gt-albedo")]
    gt_albedo: PathBuf,
    #[arg(long = "gt-rm")]
    gt_rm: PathBuf,
    /// Atlas directory (uv space).
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Mesh defining occupied texels (uv space).
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Predicted albedo image (view space).
    #[arg(long)]
    albedo: Option<PathBuf>,
    /// Predicted roughness/metallic image (view space).
    #[arg(long)]
    rm: Option<PathBuf>,
    /// Mask image selecting pixels to score, nonzero = scored (view space).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
}

#[derive(Args, Debug)]
struct VmcaCheckArgs {
    #[arg(long, default_value_t = 100)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure with its exit code: 1 for bad input, 2 for a failure while running.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<matmart::Error> for Failure {
    fn from(e: matmart::Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Invalid(message.into())
}

/// Errors while reading inputs are the caller's problem.
fn input<T>(r: matmart::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Invalid(e.to_string()))
}

fn validated(args: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let config = args.config();
    input(config.validate())?;
    Ok(config)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json values serialize")
    );
}

fn build_predictor(
    args: &ReconstructArgs,
    mesh: &matmart::types::TriangleMesh,
    seed: u64,
) -> Result<Box<dyn MaterialPredictor>, Failure> {
    let oracle = || -> Result<OraclePredictor, Failure> {
        let (Some(a), Some(rm)) = (&args.gt_albedo, &args.gt_rm) else {
            return Err(invalid("oracle predictors need --gt-albedo and --gt-rm"));
        };
        input(OraclePredictor::new(mesh.clone(), load_rgb(a)?, load_rm(rm)?))
    };
    Ok(match args.predictor {
        PredictorKind::Oracle => Box::new(oracle()?),
        PredictorKind::NoisyOracle => {
            if !(args.noise_amplitude >= 0.0 && args.noise_amplitude <= 1.0) {
                return Err(invalid("--noise-amplitude must lie in [0, 1]"));
            }
            Box::new(NoisyOraclePredictor::new(oracle()?, seed, args.noise_amplitude))
        }
        PredictorKind::Toy => Box::new(input(ToyVmcaPredictor::new(args.toy_grid, args.toy_width, seed))?),
    })
}

fn cmd_reconstruct(args: &ReconstructArgs) -> CmdResult {
    let config = validated(&args.pipeline)?;
    let mesh = input(load_mesh(&args.mesh))?;
    let views = input(load_cameras(&args.cameras))?
        .into_iter()
        .map(|(name, camera)| {
            let image = load_rgb(&args.images.join(format!("{name}.png")))?;
            Ok(InputView { name, image, camera })
        })
        .collect::<matmart::Result<Vec<_>>>();
    let views = input(views)?;
    let mut predictor = build_predictor(args, &mesh, config.seed)?;
    let job = ReconstructionJob { mesh, views, config };
    input(job.validate())?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;
    let (atlas, report) = reconstruct(&job, predictor.as_mut(), Some(&args.out))?;
    write_outputs(&args.out, &atlas, &report)?;
    info!(
        "final coverage {:.4} after {} groups in {:.2}s",
        report.final_coverage,
        report.groups.len(),
        report.timings.total_seconds
    );
    Ok(())
}

fn cmd_scene_gen(args: &SceneGenArgs) -> CmdResult {
    let spec = SceneSpec {
        shape: match args.shape {
            ShapeArg::Cube => ShapeKind::Cube,
            ShapeArg::Sphere => ShapeKind::Sphere,
        },
        pattern: match args.pattern {
            PatternArg::Checker => AlbedoPattern::Checker,
            PatternArg::Gradient => AlbedoPattern::Gradient,
        },
        checker: args.checker,
        uv_resolution: args.uv_res,
        view_resolution: args.view_res,
        views: args.views,
        seed: args.seed,
        lambertian: args.lambertian,
    };
    let scene = input(generate_scene(&spec))?;
    write_scene(&scene, &args.out)?;
    Ok(())
}

fn load_or_new_atlas(dir: Option<&Path>, resolution: usize) -> Result<UVMaterialAtlas, Failure> {
    match dir {
        Some(d) if d.join("atlas.json").exists() => input(load_atlas(d)),
        _ => Ok(UVMaterialAtlas::new(resolution)),
    }
}

fn cmd_select_views(args: &SelectViewsArgs) -> CmdResult {
    let mut config = validated(&args.pipeline)?;
    let mesh = input(load_mesh(&args.mesh))?;
    let atlas = load_or_new_atlas(args.atlas.as_deref(), config.uv_resolution)?;
    config.uv_resolution = atlas.resolution();
    let uv = rasterize_uv(&mesh, config.uv_resolution);
    let rig = ViewRig::from_config(&config);
    let base = base_axis_views(&mesh, &rig)?;
    let candidates = sample_sphere_candidates(&mesh, config.candidate_count, config.seed, &rig)?;
    let outcome = greedy_select(
        &mesh,
        &atlas,
        &uv,
        &base,
        &candidates,
        &GreedyParams::from_config(&config),
    )?;
    let selections: Vec<_> = outcome
        .selections
        .iter()
        .map(|s| {
            json!({
                "candidate": s.candidate,
                "gain": s.gain,
                "coverage": s.coverage,
                "camera": candidates[s.candidate].to_record(&format!("candidate-{}", s.candidate)),
            })
        })
        .collect();
    print_json(&json!({
        "atlas_coverage": texel_coverage(&atlas, &uv, config.tau),
        "start_coverage": outcome.start_coverage,
        "selections": selections,
    }));
    Ok(())
}

fn cmd_bake(args: &BakeArgs) -> CmdResult {
    let mut config = validated(&args.pipeline)?;
    let mesh = input(load_mesh(&args.mesh))?;
    let cameras = input(load_cameras(&args.cameras))?;
    let camera = match &args.view {
        Some(name) => cameras
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| invalid(format!("no camera named `{name}`")))?,
        None => cameras.first().ok_or_else(|| invalid("camera file is empty"))?,
    };
    let view = input(load_material_view(&args.albedo, &args.rm))?;
    if view.width() != camera.1.width as usize || view.height() != camera.1.height as usize {
        return Err(invalid(format!("view images do not match camera `{}`", camera.0)));
    }
    let mut atlas = load_or_new_atlas(Some(&args.atlas), config.uv_resolution)?;
    config.uv_resolution = atlas.resolution();
    let ctx = Reconstruction::new(&mesh, &config)?;
    ctx.bake(&mut atlas, &camera.1, &view, None)?;
    save_atlas(&atlas, &args.atlas)?;
    print_json(&json!({ "view": camera.0, "coverage": ctx.coverage(&atlas) }));
    Ok(())
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, space: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| invalid(format!("--{flag} is required for --space {space}")))
}

fn cmd_evaluate(args: &EvaluateArgs) -> CmdResult {
    let gt_albedo = input(load_rgb(&args.gt_albedo))?;
    let gt_rm = input(load_rm(&args.gt_rm))?;
    let scores: MaterialScores = match args.space {
        Space::Uv => {
            let atlas = input(load_atlas(required(&args.atlas, "atlas", "uv")?))?;
            let mesh = input(load_mesh(required(&args.mesh, "mesh", "uv")?))?;
            if gt_albedo.width() != atlas.resolution() || gt_rm.width() != atlas.resolution() {
                return Err(invalid("ground-truth textures and atlas differ in resolution"));
            }
            let uv = rasterize_uv(&mesh, atlas.resolution());
            let mask = covered_mask(&atlas, &uv, args.tau);
            let coverage = texel_coverage(&atlas, &uv, args.tau);
            score_materials(atlas.albedo(), atlas.rm(), &gt_albedo, &gt_rm, &mask, coverage)?
        }
        Space::View => {
            let albedo = input(load_rgb(required(&args.albedo, "albedo", "view")?))?;
            let rm = input(load_rm(required(&args.rm, "rm", "view")?))?;
            let n = albedo.len_pixels();
            let mask: Vec<bool> = match &args.mask {
                Some(p) => {
                    let m = input(load_image(p))?;
                    if m.len_pixels() != n {
                        return Err(invalid("mask does not match the image size"));
                    }
                    (0..n).map(|i| m.at(i).iter().any(|&v| v > 0.0)).collect()
                }
                None => vec![true; n],
            };
            let coverage = mask.iter().filter(|&&m| m).count() as f64 / n.max(1) as f64;
            input(score_materials(&albedo, &rm, &gt_albedo, &gt_rm, &mask, coverage))?
        }
    };
    print_json(&serde_json::to_value(&scores).expect("scores serialize"));
    Ok(())
}

fn cmd_vmca_check(args: &VmcaCheckArgs) -> CmdResult {
    if args.batches == 0 {
        return Err(invalid("--batches must be at least 1"));
    }
    let measure = |f: &mut dyn FnMut()| alloc::peak_bytes(f);
    let suites = [
        oracle_suite(args.batches, args.seed),
        gradient_suite(args.batches, args.seed)?,
        memory_suite(Some(&measure))?,
    ];
    for s in &suites {
        eprintln!("{}: {}/{} passed (worst {:.3e})", s.name, s.passed, s.total, s.worst);
    }
    print_json(&serde_json::to_value(&suites).expect("reports serialize"));
    if suites.iter().all(|s| s.ok()) {
        Ok(())
    } else {
        Err(Failure::Runtime("attention kernel checks failed".into()))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("MATMART_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("MATMART_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::SceneGen(a) => cmd_scene_gen(a),
        Command::SelectViews(a) => cmd_select_views(a),
        Command::Bake(a) => cmd_bake(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::VmcaCheck(a) => cmd_vmca_check(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
