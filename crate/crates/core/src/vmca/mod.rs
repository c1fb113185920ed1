//! View-material cross-attention.
//!
//! Target tokens query the concatenation of target and reference keys; reference values are
//! emitted unchanged after the target rows:
//!
//! ```text
//! Z = softmax(Q_t [K_t; K_r]ᵀ / √d) [V_t; V_r]  ⊕  V_r
//! ```
//!
//! Only the targets of the current round and the fixed reference slot are ever live, so attention
//! memory does not grow with the number of views processed.

mod block;
pub mod checks;
mod matrix;

pub use block::{toy_block_forward, AttentionParams, BlockOutput, Task, ToyBlockParams};
pub use matrix::Matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Inputs to one attention call. The reference may be empty (first round, no reference).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBatch {
    pub q_tgt: Matrix,
    pub k_tgt: Matrix,
    pub v_tgt: Matrix,
    pub k_ref: Matrix,
    pub v_ref: Matrix,
}

impl AttentionBatch {
    pub fn new(q_tgt: Matrix, k_tgt: Matrix, v_tgt: Matrix, k_ref: Matrix, v_ref: Matrix) -> Result<Self> {
        let batch = Self {
            q_tgt,
            k_tgt,
            v_tgt,
            k_ref,
            v_ref,
        };
        batch.validate()?;
        Ok(batch)
    }

    /// Batch without reference tokens.
    pub fn targets_only(q_tgt: Matrix, k_tgt: Matrix, v_tgt: Matrix) -> Result<Self> {
        let d = q_tgt.cols();
        Self::new(q_tgt, k_tgt, v_tgt, Matrix::zeros(0, d), Matrix::zeros(0, d))
    }

    /// Seeded random batch with entries in [-1, 1].
    pub fn random(n_t: usize, n_r: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |rows| Matrix::random(rows, d, 1.0, &mut rng);
        Self {
            q_tgt: m(n_t),
            k_tgt: m(n_t),
            v_tgt: m(n_t),
            k_ref: m(n_r),
            v_ref: m(n_r),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let n_t = self.n_t();
        let n_r = self.n_r();
        if n_t == 0 || d == 0 {
            return Err(Error::Shape(
                "attention needs at least one target token and d >= 1".into(),
            ));
        }
        let shapes_ok = [&self.k_tgt, &self.v_tgt]
            .iter()
            .all(|m| m.rows() == n_t && m.cols() == d)
            && [&self.k_ref, &self.v_ref]
                .iter()
                .all(|m| m.rows() == n_r && m.cols() == d);
        if !shapes_ok {
            return Err(Error::Shape("attention inputs disagree in shape".into()));
        }
        let all = [&self.q_tgt, &self.k_tgt, &self.v_tgt, &self.k_ref, &self.v_ref];
        if !all.iter().all(|m| m.is_finite()) {
            return Err(Error::Shape("attention inputs must be finite".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.q_tgt.cols()
    }

    pub fn n_t(&self) -> usize {
        self.q_tgt.rows()
    }

    pub fn n_r(&self) -> usize {
        self.k_ref.rows()
    }

    /// Key row `j` of the implicit concatenation [K_t; K_r].
    fn key(&self, j: usize) -> &[f64] {
        if j < self.n_t() {
            self.k_tgt.row(j)
        } else {
            self.k_ref.row(j - self.n_t())
        }
    }

    fn value(&self, j: usize) -> &[f64] {
        if j < self.n_t() {
            self.v_tgt.row(j)
        } else {
            self.v_ref.row(j - self.n_t())
        }
    }
}

/// Row-wise softmax of Q_t [K_t; K_r]ᵀ / √d, stabilized by row-max subtraction.
fn attention_probs(batch: &AttentionBatch) -> Matrix {
    let (n_t, m) = (batch.n_t(), batch.n_t() + batch.n_r());
    let scale = 1.0 / (batch.d() as f64).sqrt();
    let mut p = Matrix::zeros(n_t, m);
    for i in 0..n_t {
        let q = batch.q_tgt.row(i);
        let row = p.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = dot(q, batch.key(j)) * scale;
        }
        softmax_in_place(row);
    }
    p
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in row.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in row.iter_mut() {
        *s /= sum;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass: `n_t + n_r` rows, the last `n_r` copied verbatim from `v_ref`.
pub fn vmca_forward(batch: &AttentionBatch) -> Matrix {
    let (n_t, n_r, d) = (batch.n_t(), batch.n_r(), batch.d());
    let mut z = Matrix::zeros(n_t + n_r, d);
    let p = attention_probs(batch);
    for i in 0..n_t {
        let out = z.row_mut(i);
        for (j, &w) in p.row(i).iter().enumerate() {
            for (o, v) in out.iter_mut().zip(batch.value(j)) {
                *o += w * v;
            }
        }
    }
    z.data_mut()[n_t * d..].copy_from_slice(batch.v_ref.data());
    z
}

/// Gradients of a scalar loss with respect to every attention input.
#[derive(Debug, Clone, PartialEq)]
pub struct VmcaGradients {
    pub q_tgt: Matrix,
    pub k_tgt: Matrix,
    pub v_tgt: Matrix,
    pub k_ref: Matrix,
    pub v_ref: Matrix,
}

/// Backward pass given dL/dZ.
pub fn vmca_backward(batch: &AttentionBatch, dz: &Matrix) -> Result<VmcaGradients> {
    let (n_t, n_r, d) = (batch.n_t(), batch.n_r(), batch.d());
    let m = n_t + n_r;
    if dz.rows() != m || dz.cols() != d {
        return Err(Error::Shape(format!(
            "upstream gradient is {}x{}, expected {m}x{d}",
            dz.rows(),
            dz.cols()
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let p = attention_probs(batch);

    // dV = Pᵀ dO, dP = dO Vᵀ
    let mut dv = Matrix::zeros(m, d);
    let mut ds = Matrix::zeros(n_t, m);
    for i in 0..n_t {
        let d_out = dz.row(i);
        for j in 0..m {
            let w = p.get(i, j);
            for (g, o) in dv.row_mut(j).iter_mut().zip(d_out) {
                *g += w * o;
            }
            ds.set(i, j, dot(d_out, batch.value(j)));
        }
        // softmax Jacobian: dS = P ⊙ (dP − Σ_j P dP)
        let row_dot: f64 = (0..m).map(|j| p.get(i, j) * ds.get(i, j)).sum();
        for j in 0..m {
            ds.set(i, j, p.get(i, j) * (ds.get(i, j) - row_dot));
        }
    }

    let mut dq = Matrix::zeros(n_t, d);
    let mut dk = Matrix::zeros(m, d);
    for i in 0..n_t {
        for j in 0..m {
            let g = ds.get(i, j) * scale;
            if g == 0.0 {
                continue;
            }
            for (o, k) in dq.row_mut(i).iter_mut().zip(batch.key(j)) {
                *o += g * k;
            }
            for (o, q) in dk.row_mut(j).iter_mut().zip(batch.q_tgt.row(i)) {
                *o += g * q;
            }
        }
    }

    let mut v_ref = dv.slice_rows(n_t, m);
    for (g, up) in v_ref.data_mut().iter_mut().zip(&dz.data()[n_t * d..]) {
        *g += up;
    }
    Ok(VmcaGradients {
        q_tgt: dq,
        k_tgt: dk.slice_rows(0, n_t),
        v_tgt: dv.slice_rows(0, n_t),
        k_ref: dk.slice_rows(n_t, m),
        v_ref,
    })
}

/// Largest number of simultaneously live attention elements during a progressive run.
///
/// A reference round holds the targets' Q, K and V, the reference K and V, the score matrix and
/// the output. Nothing depends on how many views the run covers, so `n_views` is accepted only
/// to make that explicit.
pub fn peak_attention_memory(
    n_views: usize,
    n_t_per_round: usize,
    n_r: usize,
    d: usize,
    tokens_per_view: usize,
) -> usize {
    let _ = n_views;
    let tt = n_t_per_round * tokens_per_view;
    let tr = n_r * tokens_per_view;
    (3 * tt + 2 * tr) * d + tt * (tt + tr) + (tt + tr) * d
}

/// Shape of a progressive attention run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressiveShape {
    pub n_views: usize,
    pub n_t_per_round: usize,
    pub n_r: usize,
    pub d: usize,
    pub tokens_per_view: usize,
}

/// Runs attention over `n_views` synthetic views, `n_t_per_round` at a time. The first round has
/// no reference; its first `n_r` views' keys and values then fill the reference slot for every
/// later round. Returns the sum of all target outputs.
///
/// Tensors are allocated at exact size and dropped at the end of each round, so an allocation
/// tracker sees exactly the live attention working set.
pub fn progressive_attention_run(shape: &ProgressiveShape, seed: u64) -> Result<f64> {
    let ProgressiveShape {
        n_views,
        n_t_per_round,
        n_r,
        d,
        tokens_per_view,
    } = *shape;
    if n_views == 0 || n_t_per_round == 0 || d == 0 || tokens_per_view == 0 {
        return Err(Error::Config("progressive run needs positive sizes".into()));
    }
    if n_r > n_t_per_round {
        return Err(Error::Config("reference views must come from the first round".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k_ref = Matrix::zeros(0, d);
    let mut v_ref = Matrix::zeros(0, d);
    let mut total = 0.0;
    let mut start = 0;
    while start < n_views {
        let views = n_t_per_round.min(n_views - start);
        let tt = views * tokens_per_view;
        let q = Matrix::random(tt, d, 1.0, &mut rng);
        let k = Matrix::random(tt, d, 1.0, &mut rng);
        let v = Matrix::random(tt, d, 1.0, &mut rng);
        let batch = AttentionBatch::new(q, k, v, k_ref, v_ref)?;
        let z = vmca_forward(&batch);
        total += z.data()[..tt * d].iter().sum::<f64>();
        drop(z);
        let AttentionBatch {
            k_tgt,
            v_tgt,
            k_ref: kr,
            v_ref: vr,
            ..
        } = batch;
        if start == 0 {
            let tr = n_r * tokens_per_view;
            k_ref = k_tgt.slice_rows(0, tr);
            v_ref = v_tgt.slice_rows(0, tr);
        } else {
            k_ref = kr;
            v_ref = vr;
        }
        start += views;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn uniform_two_token_example() {
        let batch = AttentionBatch::new(scalar(0.0), scalar(0.0), scalar(2.0), scalar(0.0), scalar(4.0)).unwrap();
        let z = vmca_forward(&batch);
        assert_eq!(z.data(), &[3.0, 4.0]);

        let dz = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let g = vmca_backward(&batch, &dz).unwrap();
        assert_eq!(g.v_tgt.data(), &[0.5]);
        assert_eq!(g.v_ref.data(), &[0.5]);
        assert_eq!(g.q_tgt.data(), &[0.0]);
    }

    #[test]
    fn no_reference_is_self_attention() {
        let b = AttentionBatch::random(4, 0, 3, 1);
        let z = vmca_forward(&b);
        assert_eq!(z.rows(), 4);
    }

    #[test]
    fn shape_errors() {
        assert!(AttentionBatch::new(
            Matrix::zeros(2, 3),
            Matrix::zeros(2, 3),
            Matrix::zeros(1, 3),
            Matrix::zeros(0, 3),
            Matrix::zeros(0, 3)
        )
        .is_err());
        let b = AttentionBatch::random(2, 1, 3, 0);
        assert!(vmca_backward(&b, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn memory_bound_ignores_view_count() {
        assert_eq!(
            peak_attention_memory(2, 1, 1, 8, 16),
            peak_attention_memory(64, 1, 1, 8, 16)
        );
        assert!(peak_attention_memory(2, 1, 1, 8, 32) > 2 * peak_attention_memory(2, 1, 1, 8, 16));
    }
}
