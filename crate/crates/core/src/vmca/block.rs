//! Toy transformer block: cross-component attention, view-material cross-attention, then
//! cross-attention against a task embedding. Every attention sits in a residual branch, so a
//! block with zero output projections is the identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot, softmax_in_place, vmca_forward, AttentionBatch, Matrix};
use crate::error::{Error, Result};

/// Which material the block is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Albedo,
    Rm,
}

/// Single-head projections for one attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl AttentionParams {
    fn zeros(d: usize) -> Self {
        Self {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
        }
    }

    fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        Self {
            wq: Matrix::random(d, d, scale, rng),
            wk: Matrix::random(d, d, scale, rng),
            wv: Matrix::random(d, d, scale, rng),
            wo: Matrix::random(d, d, scale, rng),
        }
    }

    fn check(&self, d: usize) -> bool {
        [&self.wq, &self.wk, &self.wv, &self.wo]
            .iter()
            .all(|m| m.rows() == d && m.cols() == d && m.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBlockParams {
    pub d: usize,
    pub cross_component: AttentionParams,
    pub view_material: AttentionParams,
    pub task: AttentionParams,
    /// Task tokens for albedo and for roughness/metallic.
    pub albedo_embedding: Matrix,
    pub rm_embedding: Matrix,
}

impl ToyBlockParams {
    pub fn zeros(d: usize, task_tokens: usize) -> Self {
        Self {
            d,
            cross_component: AttentionParams::zeros(d),
            view_material: AttentionParams::zeros(d),
            task: AttentionParams::zeros(d),
            albedo_embedding: Matrix::zeros(task_tokens, d),
            rm_embedding: Matrix::zeros(task_tokens, d),
        }
    }

    pub fn seeded(d: usize, task_tokens: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            d,
            cross_component: AttentionParams::random(d, &mut rng),
            view_material: AttentionParams::random(d, &mut rng),
            task: AttentionParams::random(d, &mut rng),
            albedo_embedding: Matrix::random(task_tokens, d, 1.0, &mut rng),
            rm_embedding: Matrix::random(task_tokens, d, 1.0, &mut rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        let attn = [&self.cross_component, &self.view_material, &self.task];
        let emb = [&self.albedo_embedding, &self.rm_embedding];
        if d == 0
            || !attn.iter().all(|a| a.check(d))
            || !emb.iter().all(|e| e.cols() == d && e.rows() >= 1 && e.is_finite())
        {
            return Err(Error::Shape("toy block parameters are inconsistent".into()));
        }
        Ok(())
    }

    fn embedding(&self, task: Task) -> &Matrix {
        match task {
            Task::Albedo => &self.albedo_embedding,
            Task::Rm => &self.rm_embedding,
        }
    }
}

/// Plain scaled dot-product attention of `q` over `k`/`v`.
fn attend(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut out = Matrix::zeros(q.rows(), v.cols());
    let mut scores = vec![0.0; k.rows()];
    for i in 0..q.rows() {
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(q.row(i), k.row(j)) * scale;
        }
        softmax_in_place(&mut scores);
        let row = out.row_mut(i);
        for (j, &w) in scores.iter().enumerate() {
            for (o, x) in row.iter_mut().zip(v.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

/// `x + attn(x Wq, src Wk, src Wv) Wo`
fn residual_cross(p: &AttentionParams, x: &Matrix, src: &Matrix) -> Result<Matrix> {
    let q = x.matmul(&p.wq)?;
    let k = src.matmul(&p.wk)?;
    let v = src.matmul(&p.wv)?;
    x.add(&attend(&q, &k, &v).matmul(&p.wo)?)
}

/// `x + vmca(x, reference)[targets] Wo`
fn residual_vmca(p: &AttentionParams, x: &Matrix, reference: &Matrix) -> Result<Matrix> {
    let batch = AttentionBatch::new(
        x.matmul(&p.wq)?,
        x.matmul(&p.wk)?,
        x.matmul(&p.wv)?,
        reference.matmul(&p.wk)?,
        reference.matmul(&p.wv)?,
    )?;
    let z = vmca_forward(&batch);
    x.add(&z.slice_rows(0, x.rows()).matmul(&p.wo)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub albedo: Matrix,
    pub rm: Matrix,
    /// Reference latents, forwarded unchanged.
    pub reference_albedo: Matrix,
    pub reference_rm: Matrix,
}

/// Applies the three attentions to a pair of latent token sets. A missing reference is replaced
/// by zero latents shaped like the targets.
pub fn toy_block_forward(
    params: &ToyBlockParams,
    latent_albedo: &Matrix,
    latent_rm: &Matrix,
    reference: Option<(&Matrix, &Matrix)>,
    task: Task,
) -> Result<BlockOutput> {
    params.validate()?;
    let d = params.d;
    if latent_albedo.cols() != d || latent_rm.cols() != d || latent_albedo.rows() == 0 || latent_rm.rows() == 0 {
        return Err(Error::Shape(format!("latents must be non-empty with {d} columns")));
    }
    let (ref_a, ref_rm) = match reference {
        Some((a, rm)) => {
            if a.cols() != d || rm.cols() != d {
                return Err(Error::Shape("reference latents have the wrong width".into()));
            }
            (a.clone(), rm.clone())
        }
        None => (
            Matrix::zeros(latent_albedo.rows(), d),
            Matrix::zeros(latent_rm.rows(), d),
        ),
    };

    let cc = &params.cross_component;
    let a1 = residual_cross(cc, latent_albedo, latent_rm)?;
    let rm1 = residual_cross(cc, latent_rm, latent_albedo)?;

    let a2 = residual_vmca(&params.view_material, &a1, &ref_a)?;
    let rm2 = residual_vmca(&params.view_material, &rm1, &ref_rm)?;

    let emb = params.embedding(task);
    let a3 = residual_cross(&params.task, &a2, emb)?;
    let rm3 = residual_cross(&params.task, &rm2, emb)?;

    Ok(BlockOutput {
        albedo: a3,
        rm: rm3,
        reference_albedo: ref_a,
        reference_rm: ref_rm,
    })
}
