//! Brute-force references for attention, metrics and coverage, written without the library code
//! under test.

use glam::DVec3;
use matmart::bake::{blend, BakeContribution};
use matmart::raster::{UVGBuffer, ViewProjection};
use matmart::types::{Camera, ImageBuffer, UVMaterialAtlas};
use matmart::vmca::{vmca_forward, AttentionBatch, Matrix};

use super::project;

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Attention written out over plain nested vectors, keys and values explicitly concatenated.
pub fn dense_oracle(b: &AttentionBatch) -> Vec<Vec<f64>> {
    let q = to_rows(&b.q_tgt);
    let keys: Vec<Vec<f64>> = to_rows(&b.k_tgt).into_iter().chain(to_rows(&b.k_ref)).collect();
    let values: Vec<Vec<f64>> = to_rows(&b.v_tgt).into_iter().chain(to_rows(&b.v_ref)).collect();
    let d = b.d();
    let mut out = Vec::new();
    for qi in &q {
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| qi.iter().zip(k).map(|(a, c)| a * c).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        out.push(
            (0..d)
                .map(|c| values.iter().zip(&w).map(|(v, wi)| v[c] * wi / s).sum())
                .collect(),
        );
    }
    out.extend(to_rows(&b.v_ref));
    out
}

/// Best PSNR over scales found by a coarse grid followed by repeated local refinement, per channel.
pub fn grid_search_psnr(pred: &ImageBuffer, gt: &ImageBuffer, mask: &[bool]) -> f64 {
    let c = pred.channels();
    let mut total_err = 0.0;
    let mut n = 0usize;
    for k in 0..c {
        let err = |s: f64| -> f64 {
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| (s * pred.at(i)[k] as f64 - gt.at(i)[k] as f64).powi(2))
                .sum()
        };
        let (mut best, mut step) = (0.0f64, 0.05);
        let mut s = 0.0;
        while s <= 10.0 {
            if err(s) < err(best) {
                best = s;
            }
            s += step;
        }
        for _ in 0..60 {
            step *= 0.5;
            for cand in [best - step, best + step] {
                if err(cand) < err(best) {
                    best = cand;
                }
            }
        }
        total_err += err(best);
        n += mask.iter().filter(|&&m| m).count();
    }
    -10.0 * (total_err / n as f64).log10()
}

/// Gaussian-weighted statistics computed window by window with plain loops.
pub fn naive_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let mut g = [[0.0f64; 11]; 11];
    let mut s = 0.0;
    for (y, row) in g.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (x as f64 - 5.0, y as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / 4.5).exp();
            s += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let (w, h) = (a.width(), a.height());
    let mut per_channel = 0.0;
    for k in 0..a.channels() {
        let mut acc = 0.0;
        let mut count = 0;
        for oy in 0..=h - 11 {
            for ox in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in 0..11 {
                    for x in 0..11 {
                        let wgt = g[y][x] / s;
                        let i = (oy + y) * w + ox + x;
                        let (p, q) = (a.at(i)[k] as f64, b.at(i)[k] as f64);
                        mx += wgt * p;
                        my += wgt * q;
                        sxx += wgt * p * p;
                        syy += wgt * q * q;
                        sxy += wgt * p * q;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        per_channel += acc / count as f64;
    }
    per_channel / a.channels() as f64
}

/// Atlas with weight 1 on every occupied texel for which `keep` holds.
pub fn atlas_where(uv: &UVGBuffer, keep: impl Fn(usize) -> bool) -> UVMaterialAtlas {
    let res = uv.resolution;
    let mut s = vec![0f32; res * res];
    for &ti in &uv.occupied {
        if keep(ti as usize) {
            s[ti as usize] = 1.0;
        }
    }
    let projection = ViewProjection {
        albedo: ImageBuffer::zeros(res, res, 3),
        rm: ImageBuffer::zeros(res, res, 2),
        s_prime: ImageBuffer::from_raw(res, res, 1, s).unwrap(),
    };
    let mut atlas = UVMaterialAtlas::new(res);
    blend(&mut atlas, &BakeContribution::new(projection, 6.0).unwrap()).unwrap();
    atlas
}

/// Texels of one flat face that each candidate sees with cosine above `s_min` inside its frame.
/// A convex face occludes nothing, so no depth test is needed.
pub fn face_gains(uv: &UVGBuffer, face: &[usize], normal: DVec3, candidates: &[Camera], s_min: f64) -> Vec<usize> {
    candidates
        .iter()
        .map(|c| {
            face.iter()
                .filter(|&&t| {
                    let pos = uv.texel_position(t);
                    let inside = project(c, pos)
                        .is_some_and(|q| q.x >= 0.0 && q.y >= 0.0 && q.x < c.width as f64 && q.y < c.height as f64);
                    normal.dot((c.center() - pos).normalize()) > s_min && inside
                })
                .count()
        })
        .collect()
}

/// L = Σ Z ⊙ G; central differences of L w.r.t. one input entry.
pub fn fd(b: &AttentionBatch, g: &Matrix, pick: fn(&mut AttentionBatch) -> &mut Matrix, idx: usize) -> f64 {
    let h = 1e-4;
    let loss = |b: &AttentionBatch| -> f64 { vmca_forward(b).data().iter().zip(g.data()).map(|(z, w)| z * w).sum() };
    let mut p = b.clone();
    pick(&mut p).data_mut()[idx] += h;
    let mut m = b.clone();
    pick(&mut m).data_mut()[idx] -= h;
    (loss(&p) - loss(&m)) / (2.0 * h)
}
