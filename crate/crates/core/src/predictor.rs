//! The material-model contract and its stand-in implementations.
//!
//! [`OraclePredictor`] samples ground-truth textures, [`NoisyOraclePredictor`] adds a per-call
//! colour bias that is inherited through the reference view, and [`ToyVmcaPredictor`] runs an
//! untrained attention block end to end.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{rasterize_view, render_texture, ViewGBuffer, ViewPriorBundle};
use crate::types::{Camera, ImageBuffer, MaterialView, TriangleMesh};
use crate::vmca::{toy_block_forward, Matrix, Task, ToyBlockParams};

/// An input photo and the camera it was taken with.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetImage {
    pub image: ImageBuffer,
    pub camera: Camera,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictRequest {
    pub targets: Vec<TargetImage>,
    pub reference: Option<MaterialView>,
}

/// Priors to complete and the camera they were rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTarget {
    pub bundle: ViewPriorBundle,
    pub camera: Camera,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerateRequest {
    pub targets: Vec<GenerationTarget>,
    pub reference: Option<MaterialView>,
}

fn check_reference(reference: &Option<MaterialView>, w: usize, h: usize) -> Result<()> {
    match reference {
        Some(r) if r.width() != w || r.height() != h => Err(Error::Shape(format!(
            "reference is {}x{}, targets are {w}x{h}",
            r.width(),
            r.height()
        ))),
        _ => Ok(()),
    }
}

fn check_camera(camera: &Camera, w: usize, h: usize) -> Result<()> {
    if camera.width as usize != w || camera.height as usize != h {
        return Err(Error::Shape(format!(
            "image is {w}x{h} but its camera is {}x{}",
            camera.width, camera.height
        )));
    }
    Ok(())
}

impl PredictRequest {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.targets.first() else {
            return Ok(());
        };
        let (w, h) = (first.image.width(), first.image.height());
        for t in &self.targets {
            if t.image.width() != w || t.image.height() != h || t.image.channels() != 3 {
                return Err(Error::Shape("target images must be RGB and share one size".into()));
            }
            check_camera(&t.camera, w, h)?;
        }
        check_reference(&self.reference, w, h)
    }
}

impl GenerateRequest {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.targets.first() else {
            return Err(Error::Shape("a generation group needs at least one view".into()));
        };
        let (w, h) = (first.bundle.mask.width(), first.bundle.mask.height());
        for t in &self.targets {
            let b = &t.bundle;
            let sizes = [&b.albedo, &b.rm, &b.mask, &b.normal, &b.position, &b.depth];
            if !sizes.iter().all(|img| img.width() == w && img.height() == h) {
                return Err(Error::Shape("generation bundles must share one size".into()));
            }
            check_camera(&t.camera, w, h)?;
        }
        check_reference(&self.reference, w, h)
    }
}

/// A material estimator for photos and a generator for partially known views.
pub trait MaterialPredictor {
    fn name(&self) -> &str;

    /// One material view per target image.
    fn predict(&mut self, request: &PredictRequest) -> Result<Vec<MaterialView>>;

    /// One material view per bundle. Pixels outside the generation mask may hold anything; the
    /// caller composites with the priors.
    fn generate(&mut self, request: &GenerateRequest) -> Result<Vec<MaterialView>>;
}

/// `mask · generated + (1 − mask) · prior`, taking the prior bit for bit wherever the mask is 0.
pub fn composite(generated: &MaterialView, bundle: &ViewPriorBundle) -> Result<MaterialView> {
    let prior = bundle.priors();
    if generated.width() != prior.width() || generated.height() != prior.height() {
        return Err(Error::Shape("generated view and priors differ in size".into()));
    }
    let mut out = prior;
    for i in 0..bundle.mask.len_pixels() {
        if bundle.mask.at(i)[0] > 0.5 {
            out.albedo.at_mut(i).copy_from_slice(generated.albedo.at(i));
            out.rm.at_mut(i).copy_from_slice(generated.rm.at(i));
        }
    }
    Ok(out)
}

/// Renders ground-truth textures into every requested view, ignoring image content.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    mesh: TriangleMesh,
    albedo: ImageBuffer,
    rm: ImageBuffer,
}

impl OraclePredictor {
    pub fn new(mesh: TriangleMesh, albedo: ImageBuffer, rm: ImageBuffer) -> Result<Self> {
        if albedo.channels() != 3 || rm.channels() != 2 {
            return Err(Error::Shape("ground truth needs RGB albedo and 2-channel rm".into()));
        }
        Ok(Self { mesh, albedo, rm })
    }

    pub fn render(&self, camera: &Camera) -> MaterialView {
        let gbuf = rasterize_view(&self.mesh, camera);
        self.render_gbuffer(&gbuf)
    }

    fn render_gbuffer(&self, gbuf: &ViewGBuffer) -> MaterialView {
        let mut albedo = render_texture(&self.mesh, gbuf, &self.albedo);
        let mut rm = render_texture(&self.mesh, gbuf, &self.rm);
        albedo.clamp_unit();
        rm.clamp_unit();
        MaterialView { albedo, rm }
    }
}

impl MaterialPredictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&mut self, request: &PredictRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        Ok(request.targets.iter().map(|t| self.render(&t.camera)).collect())
    }

    fn generate(&mut self, request: &GenerateRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        Ok(request.targets.iter().map(|t| self.render(&t.camera)).collect())
    }
}

/// Oracle output shifted by a constant colour bias per call. A call that receives a reference
/// produced by this predictor reuses that reference's bias instead of drawing a new one.
#[derive(Debug, Clone)]
pub struct NoisyOraclePredictor {
    oracle: OraclePredictor,
    rng: ChaCha8Rng,
    amplitude: f32,
    issued: HashMap<u64, [f32; 3]>,
}

impl NoisyOraclePredictor {
    pub fn new(oracle: OraclePredictor, seed: u64, amplitude: f32) -> Self {
        Self {
            oracle,
            rng: ChaCha8Rng::seed_from_u64(seed),
            amplitude,
            issued: HashMap::new(),
        }
    }

    /// Bias applied to a view this predictor returned, if it did.
    pub fn bias_of(&self, view: &MaterialView) -> Option<[f32; 3]> {
        self.issued.get(&Self::fingerprint(view)).copied()
    }

    fn fingerprint(view: &MaterialView) -> u64 {
        let mut h = DefaultHasher::new();
        view.albedo.width().hash(&mut h);
        for v in view.albedo.data() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn bias_for(&mut self, reference: Option<&MaterialView>) -> [f32; 3] {
        if let Some(bias) = reference.and_then(|r| self.issued.get(&Self::fingerprint(r))) {
            return *bias;
        }
        if reference.is_some() {
            debug!("reference was not produced by this predictor; drawing a fresh bias");
        }
        let a = self.amplitude;
        [0; 3].map(|_| self.rng.gen_range(-a..=a))
    }

    fn finish(&mut self, views: Vec<(MaterialView, ViewGBuffer)>, bias: [f32; 3]) -> Vec<MaterialView> {
        views
            .into_iter()
            .map(|(mut view, gbuf)| {
                for i in 0..gbuf.width * gbuf.height {
                    if gbuf.is_covered(i) {
                        for (v, b) in view.albedo.at_mut(i).iter_mut().zip(bias) {
                            *v = (*v + b).clamp(0.0, 1.0);
                        }
                    }
                }
                self.issued.insert(Self::fingerprint(&view), bias);
                view
            })
            .collect()
    }

    fn render_all<'a>(&self, cameras: impl Iterator<Item = &'a Camera>) -> Vec<(MaterialView, ViewGBuffer)> {
        cameras
            .map(|c| {
                let gbuf = rasterize_view(&self.oracle.mesh, c);
                (self.oracle.render_gbuffer(&gbuf), gbuf)
            })
            .collect()
    }
}

impl MaterialPredictor for NoisyOraclePredictor {
    fn name(&self) -> &str {
        "noisy-oracle"
    }

    fn predict(&mut self, request: &PredictRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        let bias = self.bias_for(request.reference.as_ref());
        let views = self.render_all(request.targets.iter().map(|t| &t.camera));
        Ok(self.finish(views, bias))
    }

    fn generate(&mut self, request: &GenerateRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        let bias = self.bias_for(request.reference.as_ref());
        let views = self.render_all(request.targets.iter().map(|t| &t.camera));
        Ok(self.finish(views, bias))
    }
}

/// Features per token: colour or albedo prior (3), rm prior (2), generation mask (1), normal (3).
const FEATURES: usize = 9;
/// Reference features: albedo (3) and rm (2).
const REF_FEATURES: usize = 5;

/// Untrained attention-block predictor. Views are pooled to a token grid, pushed through the toy
/// block and decoded back to full resolution with bilinear upsampling.
#[derive(Debug, Clone)]
pub struct ToyVmcaPredictor {
    grid: usize,
    block: ToyBlockParams,
    encode_albedo: Matrix,
    encode_rm: Matrix,
    encode_reference: Matrix,
    decode_albedo: Matrix,
    decode_rm: Matrix,
}

impl ToyVmcaPredictor {
    pub fn new(grid: usize, d: usize, seed: u64) -> Result<Self> {
        if grid == 0 || d == 0 {
            return Err(Error::Config("token grid and width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = ToyBlockParams::seeded(d, 2, rng.gen());
        Ok(Self {
            grid,
            block,
            encode_albedo: Matrix::random(FEATURES, d, 1.0, &mut rng),
            encode_rm: Matrix::random(FEATURES, d, 1.0, &mut rng),
            encode_reference: Matrix::random(REF_FEATURES, d, 1.0, &mut rng),
            decode_albedo: Matrix::random(d, 3, 1.0 / (d as f64).sqrt(), &mut rng),
            decode_rm: Matrix::random(d, 2, 1.0 / (d as f64).sqrt(), &mut rng),
        })
    }

    /// Averages `layers` over each token cell, counting only pixels where `valid` holds.
    fn pool(&self, layers: &[&ImageBuffer], valid: &dyn Fn(usize) -> bool) -> Matrix {
        let (w, h) = (layers[0].width(), layers[0].height());
        let g = self.grid;
        let width: usize = layers.iter().map(|l| l.channels()).sum();
        let mut sums = Matrix::zeros(g * g, width);
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !valid(i) {
                    continue;
                }
                let cell = (y * g / h) * g + x * g / w;
                counts[cell] += 1;
                let row = sums.row_mut(cell);
                let mut c = 0;
                for l in layers {
                    for v in l.at(i) {
                        row[c] += *v as f64;
                        c += 1;
                    }
                }
            }
        }
        for (cell, &n) in counts.iter().enumerate() {
            if n > 0 {
                for v in sums.row_mut(cell) {
                    *v /= n as f64;
                }
            }
        }
        sums
    }

    /// Bilinear upsampling of a g×g token image, sigmoid-squashed, zero off the object.
    fn decode(&self, tokens: &Matrix, w: usize, h: usize, covered: &dyn Fn(usize) -> bool) -> ImageBuffer {
        let g = self.grid;
        let c = tokens.cols();
        let mut out = ImageBuffer::zeros(w, h, c);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !covered(i) {
                    continue;
                }
                let gx = ((x as f64 + 0.5) * g as f64 / w as f64 - 0.5).clamp(0.0, (g - 1) as f64);
                let gy = ((y as f64 + 0.5) * g as f64 / h as f64 - 0.5).clamp(0.0, (g - 1) as f64);
                let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(g - 1), (y0 + 1).min(g - 1));
                let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
                for k in 0..c {
                    let t = |xx: usize, yy: usize| tokens.get(yy * g + xx, k);
                    let v = t(x0, y0) * (1.0 - tx) * (1.0 - ty)
                        + t(x1, y0) * tx * (1.0 - ty)
                        + t(x0, y1) * (1.0 - tx) * ty
                        + t(x1, y1) * tx * ty;
                    out.at_mut(i)[k] = (1.0 / (1.0 + (-v).exp())) as f32;
                }
            }
        }
        out
    }

    fn reference_latents(&self, reference: Option<&MaterialView>) -> Result<Option<(Matrix, Matrix)>> {
        let Some(r) = reference else { return Ok(None) };
        let feats = self.pool(&[&r.albedo, &r.rm], &|_| true);
        let lat = feats.matmul(&self.encode_reference)?;
        Ok(Some((lat.clone(), lat)))
    }

    fn run(
        &self,
        features: &Matrix,
        reference: &Option<(Matrix, Matrix)>,
        w: usize,
        h: usize,
        covered: &dyn Fn(usize) -> bool,
    ) -> Result<MaterialView> {
        let a = features.matmul(&self.encode_albedo)?;
        let rm = features.matmul(&self.encode_rm)?;
        let r = reference.as_ref().map(|(x, y)| (x, y));
        let out_a = toy_block_forward(&self.block, &a, &rm, r, Task::Albedo)?;
        let out_rm = toy_block_forward(&self.block, &a, &rm, r, Task::Rm)?;
        let albedo = self.decode(&out_a.albedo.matmul(&self.decode_albedo)?, w, h, covered);
        let rm = self.decode(&out_rm.rm.matmul(&self.decode_rm)?, w, h, covered);
        Ok(MaterialView { albedo, rm })
    }
}

impl MaterialPredictor for ToyVmcaPredictor {
    fn name(&self) -> &str {
        "toy"
    }

    fn predict(&mut self, request: &PredictRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        let reference = self.reference_latents(request.reference.as_ref())?;
        request
            .targets
            .iter()
            .map(|t| {
                let (w, h) = (t.image.width(), t.image.height());
                // the object is wherever the photo is not pure black
                let covered = |i: usize| t.image.at(i).iter().any(|&v| v > 0.0);
                // photos carry colour only; the prior, mask and normal features stay zero
                let rgb = self.pool(&[&t.image], &covered);
                let feats = Matrix::from_fn(rgb.rows(), FEATURES, |r, c| if c < 3 { rgb.get(r, c) } else { 0.0 });
                self.run(&feats, &reference, w, h, &covered)
            })
            .collect()
    }

    fn generate(&mut self, request: &GenerateRequest) -> Result<Vec<MaterialView>> {
        request.validate()?;
        let reference = self.reference_latents(request.reference.as_ref())?;
        request
            .targets
            .iter()
            .map(|t| {
                let b = &t.bundle;
                let (w, h) = (b.mask.width(), b.mask.height());
                let covered = |i: usize| b.normal.at(i).iter().any(|&v| v != 0.0);
                let feats = self.pool(&[&b.albedo, &b.rm, &b.mask, &b.normal], &covered);
                self.run(&feats, &reference, w, h, &covered)
            })
            .collect()
    }
}
