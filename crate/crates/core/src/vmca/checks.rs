//! Self-check suites for the attention kernel, shared by the `vmca-check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    peak_attention_memory, progressive_attention_run, vmca_backward, vmca_forward, AttentionBatch, Matrix,
    ProgressiveShape,
};
use crate::error::Result;

/// Pass count and worst error of one suite.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    pub worst: f64,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

/// Attention over an explicitly concatenated key/value matrix, straight from the definition.
pub fn dense_reference(batch: &AttentionBatch) -> Matrix {
    let k = batch.k_tgt.vstack(&batch.k_ref).expect("same width");
    let v = batch.v_tgt.vstack(&batch.v_ref).expect("same width");
    let d = batch.d() as f64;
    let mut out = Matrix::zeros(batch.n_t(), batch.d());
    for i in 0..batch.n_t() {
        let logits: Vec<f64> = (0..k.rows())
            .map(|j| (0..batch.d()).map(|c| batch.q_tgt.get(i, c) * k.get(j, c)).sum::<f64>() / d.sqrt())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = e.iter().sum();
        for c in 0..batch.d() {
            let val: f64 = (0..k.rows()).map(|j| e[j] / sum * v.get(j, c)).sum();
            out.set(i, c, val);
        }
    }
    out.vstack(&batch.v_ref).expect("same width")
}

/// Random batch sized within the suite limits (n_t ≤ 8, n_r ≤ 4, d ≤ 16).
pub fn random_suite_batch(rng: &mut ChaCha8Rng) -> AttentionBatch {
    let n_t = rng.gen_range(1..=8);
    let n_r = rng.gen_range(0..=4);
    let d = rng.gen_range(1..=16);
    AttentionBatch::random(n_t, n_r, d, rng.gen())
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central-difference gradients of L = ⟨Z, dz⟩ in the order q, k_t, v_t, k_r, v_r.
pub fn numeric_gradients(batch: &AttentionBatch, dz: &Matrix, h: f64) -> [Matrix; 5] {
    let loss = |b: &AttentionBatch| -> f64 { vmca_forward(b).data().iter().zip(dz.data()).map(|(z, g)| z * g).sum() };
    let mut grads = [
        Matrix::zeros(batch.q_tgt.rows(), batch.d()),
        Matrix::zeros(batch.k_tgt.rows(), batch.d()),
        Matrix::zeros(batch.v_tgt.rows(), batch.d()),
        Matrix::zeros(batch.k_ref.rows(), batch.d()),
        Matrix::zeros(batch.v_ref.rows(), batch.d()),
    ];
    for (slot, grad) in grads.iter_mut().enumerate() {
        for idx in 0..grad.data().len() {
            let mut plus = batch.clone();
            let mut minus = batch.clone();
            field(&mut plus, slot).data_mut()[idx] += h;
            field(&mut minus, slot).data_mut()[idx] -= h;
            grad.data_mut()[idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
    }
    grads
}

fn field(b: &mut AttentionBatch, slot: usize) -> &mut Matrix {
    match slot {
        0 => &mut b.q_tgt,
        1 => &mut b.k_tgt,
        2 => &mut b.v_tgt,
        3 => &mut b.k_ref,
        _ => &mut b.v_ref,
    }
}

/// Forward vs dense reference (≤ 1e-6) and bit-exact reference passthrough.
pub fn oracle_suite(count: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let batch = random_suite_batch(&mut rng);
        let z = vmca_forward(&batch);
        let err = z.max_abs_diff(&dense_reference(&batch));
        let tail = &z.data()[batch.n_t() * batch.d()..];
        let passthrough = tail
            .iter()
            .zip(batch.v_ref.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        worst = worst.max(err);
        if err <= 1e-6 && passthrough {
            passed += 1;
        }
    }
    SuiteReport {
        name: "oracle".into(),
        passed,
        total: count,
        worst,
    }
}

/// Analytic vs central-difference gradients, relative error ≤ 1e-4.
pub fn gradient_suite(count: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let batch = random_suite_batch(&mut rng);
        let dz = Matrix::random(batch.n_t() + batch.n_r(), batch.d(), 1.0, &mut rng);
        let g = vmca_backward(&batch, &dz)?;
        let numeric = numeric_gradients(&batch, &dz, 1e-4);
        let analytic = [&g.q_tgt, &g.k_tgt, &g.v_tgt, &g.k_ref, &g.v_ref];
        let err = analytic
            .iter()
            .zip(&numeric)
            .flat_map(|(a, n)| a.data().iter().zip(n.data()).map(|(&x, &y)| relative_error(x, y)))
            .fold(0.0, f64::max);
        worst = worst.max(err);
        if err <= 1e-4 {
            passed += 1;
        }
    }
    Ok(SuiteReport {
        name: "gradient".into(),
        passed,
        total: count,
        worst,
    })
}

/// Peak-memory checks. `measure` runs a closure and returns the peak number of bytes it held
/// live; without one only the view-count independence of the bound is checked.
pub fn memory_suite(measure: Option<&dyn Fn(&mut dyn FnMut()) -> usize>) -> Result<SuiteReport> {
    let shapes = [(1, 1, 8, 16), (2, 1, 4, 8), (1, 1, 16, 4)];
    let mut passed = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for &(n_t, n_r, d, tpv) in &shapes {
        total += 1;
        if peak_attention_memory(2, n_t, n_r, d, tpv) == peak_attention_memory(64, n_t, n_r, d, tpv) {
            passed += 1;
        }
        let Some(measure) = measure else { continue };
        for n_views in [2 * n_t, 8, 64] {
            total += 1;
            let shape = ProgressiveShape {
                n_views,
                n_t_per_round: n_t,
                n_r,
                d,
                tokens_per_view: tpv,
            };
            let mut result = Ok(0.0);
            let bytes = measure(&mut || result = progressive_attention_run(&shape, 7));
            result?;
            let expected = peak_attention_memory(n_views, n_t, n_r, d, tpv) as f64;
            let rel = (bytes as f64 / std::mem::size_of::<f64>() as f64 - expected).abs() / expected;
            worst = worst.max(rel);
            if rel <= 0.01 {
                passed += 1;
            }
        }
    }
    Ok(SuiteReport {
        name: "memory".into(),
        passed,
        total,
        worst,
    })
}
