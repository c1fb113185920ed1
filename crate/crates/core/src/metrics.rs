//! Scale-invariant PSNR, SSIM and masked MSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::UVGBuffer;
use crate::types::{ImageBuffer, UVMaterialAtlas};

/// PSNR reported for a prediction that reproduces the target exactly.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shapes(pred: &ImageBuffer, gt: &ImageBuffer, mask: Option<&[bool]>) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(Error::Shape("prediction and ground truth differ in shape".into()));
    }
    if let Some(m) = mask {
        if m.len() != pred.len_pixels() {
            return Err(Error::Shape("mask does not match the image size".into()));
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::EmptyMask);
        }
    }
    Ok(())
}

fn selected(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

/// Least-squares scale ⟨pred, gt⟩ / ⟨pred, pred⟩ of one channel over the mask (1 for zero pred).
pub fn optimal_scale(pred: &ImageBuffer, gt: &ImageBuffer, mask: Option<&[bool]>, channel: usize) -> f64 {
    let (mut pg, mut pp) = (0.0, 0.0);
    for i in 0..pred.len_pixels() {
        if selected(mask, i) {
            let p = pred.at(i)[channel] as f64;
            pg += p * gt.at(i)[channel] as f64;
            pp += p * p;
        }
    }
    if pp == 0.0 {
        1.0
    } else {
        pg / pp
    }
}

/// PSNR (peak 1) after scaling each channel of `pred` by its least-squares optimum.
pub fn si_psnr(pred: &ImageBuffer, gt: &ImageBuffer, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(pred, gt, mask)?;
    if pred.len_pixels() == 0 {
        return Err(Error::EmptyMask);
    }
    let c = pred.channels();
    let scales: Vec<f64> = (0..c).map(|k| optimal_scale(pred, gt, mask, k)).collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..pred.len_pixels() {
        if !selected(mask, i) {
            continue;
        }
        for (k, s) in scales.iter().enumerate() {
            let e = s * pred.at(i)[k] as f64 - gt.at(i)[k] as f64;
            sum += e * e;
            n += 1;
        }
    }
    let mse = sum / n as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Mean squared difference over masked elements of every channel.
pub fn mse(pred: &ImageBuffer, gt: &ImageBuffer, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(pred, gt, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..pred.len_pixels() {
        if !selected(mask, i) {
            continue;
        }
        for (p, g) in pred.at(i).iter().zip(gt.at(i)) {
            let e = *p as f64 - *g as f64;
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// MSE of a single channel.
pub fn mse_channel(pred: &ImageBuffer, gt: &ImageBuffer, mask: Option<&[bool]>, channel: usize) -> Result<f64> {
    check_shapes(pred, gt, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..pred.len_pixels() {
        if selected(mask, i) {
            let e = pred.at(i)[channel] as f64 - gt.at(i)[channel] as f64;
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(img: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM (11×11 Gaussian window, σ 1.5, dynamic range 1), averaged over valid window
/// positions and then over channels.
pub fn ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check_shapes(pred, gt, None)?;
    let (w, h) = (pred.width(), pred.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let g = gaussian_window();
    let c = pred.channels();
    let mut total = 0.0;
    for k in 0..c {
        let x: Vec<f64> = (0..w * h).map(|i| pred.at(i)[k] as f64).collect();
        let y: Vec<f64> = (0..w * h).map(|i| gt.at(i)[k] as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, w, h, &g);
        let my = filter_valid(&y, w, h, &g);
        let sxx = filter_valid(&xx, w, h, &g);
        let syy = filter_valid(&yy, w, h, &g);
        let sxy = filter_valid(&xy, w, h, &g);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (a, b) = (mx[i], my[i]);
            let var_x = sxx[i] - a * a;
            let var_y = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            sum += ((2.0 * a * b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((a * a + b * b + SSIM_C1) * (var_x + var_y + SSIM_C2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / c as f64)
}

/// Texels that are occupied and have reached `tau`.
pub fn covered_mask(atlas: &UVMaterialAtlas, uv: &UVGBuffer, tau: f64) -> Vec<bool> {
    let mut mask = vec![false; atlas.resolution() * atlas.resolution()];
    for &ti in &uv.occupied {
        let ti = ti as usize;
        mask[ti] = atlas.weight(ti) as f64 >= tau;
    }
    mask
}

/// Atlas-vs-ground-truth scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialScores {
    pub si_psnr_albedo: f64,
    pub ssim_albedo: f64,
    pub mse_roughness: f64,
    pub mse_metallic: f64,
    pub coverage: f64,
}

/// Scores albedo and roughness/metallic images against ground truth over `mask`. SSIM uses the
/// full images since it is a windowed statistic.
pub fn score_materials(
    albedo: &ImageBuffer,
    rm: &ImageBuffer,
    gt_albedo: &ImageBuffer,
    gt_rm: &ImageBuffer,
    mask: &[bool],
    coverage: f64,
) -> Result<MaterialScores> {
    Ok(MaterialScores {
        si_psnr_albedo: si_psnr(albedo, gt_albedo, Some(mask))?,
        ssim_albedo: ssim(albedo, gt_albedo)?,
        mse_roughness: mse_channel(rm, gt_rm, Some(mask), 0)?,
        mse_metallic: mse_channel(rm, gt_rm, Some(mask), 1)?,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, f: impl Fn(usize) -> f32) -> ImageBuffer {
        ImageBuffer::from_raw(w, h, c, (0..w * h * c).map(f).collect()).unwrap()
    }

    #[test]
    fn identical_and_scaled_hit_cap() {
        let gt = img(4, 4, 3, |i| (i as f32 * 0.37).fract());
        assert_eq!(si_psnr(&gt, &gt, None).unwrap(), PSNR_CAP);
        let half = img(4, 4, 3, |i| 0.5 * (i as f32 * 0.37).fract());
        assert!(si_psnr(&half, &gt, None).unwrap() > 90.0);
    }

    #[test]
    fn constant_offset_mse() {
        let a = img(3, 3, 2, |_| 0.2);
        let b = img(3, 3, 2, |_| 0.3);
        assert!((mse(&a, &b, None).unwrap() - 0.01).abs() < 1e-7);
        assert_eq!(mse(&a, &a, None).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_errors() {
        let a = img(3, 3, 1, |_| 0.2);
        let m = vec![false; 9];
        assert!(matches!(si_psnr(&a, &a, Some(&m)), Err(Error::EmptyMask)));
        assert!(matches!(mse(&a, &a, Some(&m)), Err(Error::EmptyMask)));
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let zero = img(16, 16, 1, |_| 0.0);
        let one = img(16, 16, 1, |_| 1.0);
        let expect = SSIM_C1 / (1.0 + SSIM_C1);
        assert!((ssim(&one, &zero).unwrap() - expect).abs() < 1e-9);
        assert!((ssim(&zero, &zero).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&img(10, 16, 1, |_| 0.0), &img(10, 16, 1, |_| 0.0)).is_err());
    }
}
