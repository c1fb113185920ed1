//! Progressive weighted texture blending and texel-coverage accounting.
//!
//! Each projected view contributes materials T′ with weights W′ = S′^λ. The atlas keeps the
//! running weighted mean `T ← (T′·W′ + T·W) / (W′ + W)`, `W ← W′ + W`, which is algebraically
//! the batch weighted mean of every contribution so far.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{UVGBuffer, ViewProjection};
use crate::types::{ImageBuffer, UVMaterialAtlas};

/// One view's texel-space contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BakeContribution {
    pub albedo: ImageBuffer,
    pub rm: ImageBuffer,
    pub s_prime: ImageBuffer,
    /// W′ = S′^λ.
    pub weight: ImageBuffer,
}

impl BakeContribution {
    pub fn new(projection: ViewProjection, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        let ViewProjection { albedo, rm, s_prime } = projection;
        if !(albedo.width() == s_prime.width() && rm.width() == s_prime.width() && albedo.height() == s_prime.height())
        {
            return Err(Error::Shape("contribution grids differ in size".into()));
        }
        let w: Vec<f32> = s_prime
            .data()
            .iter()
            .map(|&s| if s > 0.0 { (s as f64).powf(lambda) as f32 } else { 0.0 })
            .collect();
        let weight = ImageBuffer::from_raw(s_prime.width(), s_prime.height(), 1, w)?;
        Ok(Self {
            albedo,
            rm,
            s_prime,
            weight,
        })
    }

    pub fn resolution(&self) -> usize {
        self.weight.width()
    }
}

/// Blends a contribution into the atlas in place.
pub fn blend(atlas: &mut UVMaterialAtlas, contribution: &BakeContribution) -> Result<()> {
    let res = atlas.resolution();
    if contribution.resolution() != res || contribution.weight.height() != res {
        return Err(Error::Shape(format!(
            "contribution is {}x{}, atlas is {res}x{res}",
            contribution.weight.width(),
            contribution.weight.height()
        )));
    }
    let UVMaterialAtlas {
        albedo, rm, weights, ..
    } = atlas;
    albedo
        .data_mut()
        .par_chunks_mut(3)
        .zip(rm.data_mut().par_chunks_mut(2))
        .zip(weights.data_mut().par_iter_mut())
        .enumerate()
        .for_each(|(i, ((t_albedo, t_rm), w))| {
            let w_new = contribution.weight.data()[i];
            if w_new <= 0.0 {
                return;
            }
            let total = w_new + *w;
            let mix = |t: &mut [f32], t_new: &[f32]| {
                for (old, new) in t.iter_mut().zip(t_new) {
                    *old = (new * w_new + *old * *w) / total;
                }
            };
            mix(t_albedo, contribution.albedo.at(i));
            mix(t_rm, contribution.rm.at(i));
            *w = total;
        });
    atlas.version += 1;
    Ok(())
}

/// Fraction of occupied texels whose weight has reached `tau`; 1 for an empty layout.
pub fn texel_coverage(atlas: &UVMaterialAtlas, uv: &UVGBuffer, tau: f64) -> f64 {
    texel_coverage_of(atlas.weights().data(), uv, tau)
}

pub(crate) fn texel_coverage_of(weights: &[f32], uv: &UVGBuffer, tau: f64) -> f64 {
    if uv.occupied.is_empty() {
        return 1.0;
    }
    let covered = uv
        .occupied
        .iter()
        .filter(|&&i| weights[i as usize] as f64 >= tau)
        .count();
    covered as f64 / uv.occupied.len() as f64
}

/// Copies each empty texel's nearest baked neighbour (Euclidean distance ≤ `radius`, ties broken
/// by scan order) into it. Weights are left untouched, so dilated texels still count as
/// uncovered.
pub fn dilate_atlas(atlas: &UVMaterialAtlas, radius: usize) -> UVMaterialAtlas {
    let mut out = atlas.clone();
    if radius == 0 {
        return out;
    }
    let res = atlas.resolution();
    let weights = atlas.weights().data();
    let r = radius as isize;
    let r2 = (radius * radius) as isize;
    let sources: Vec<Option<usize>> = (0..res * res)
        .into_par_iter()
        .map(|i| {
            if weights[i] > 0.0 {
                return None;
            }
            let (x, y) = ((i % res) as isize, (i / res) as isize);
            let mut best: Option<(isize, usize)> = None;
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= res as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    let d2 = dx * dx + dy * dy;
                    if xx < 0 || xx >= res as isize || d2 > r2 {
                        continue;
                    }
                    let j = yy as usize * res + xx as usize;
                    if weights[j] <= 0.0 {
                        continue;
                    }
                    // scan order is row-major, so a smaller index wins ties
                    if best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                        best = Some((d2, j));
                    }
                }
            }
            best.map(|(_, j)| j)
        })
        .collect();
    for (i, src) in sources.into_iter().enumerate() {
        if let Some(j) = src {
            let a = atlas.albedo().at(j).to_vec();
            out.albedo.at_mut(i).copy_from_slice(&a);
            let m = atlas.rm().at(j).to_vec();
            out.rm.at_mut(i).copy_from_slice(&m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_texel(t_new: f32, s: f32, lambda: f64) -> BakeContribution {
        let projection = ViewProjection {
            albedo: ImageBuffer::from_raw(1, 1, 3, vec![t_new; 3]).unwrap(),
            rm: ImageBuffer::from_raw(1, 1, 2, vec![t_new; 2]).unwrap(),
            s_prime: ImageBuffer::from_raw(1, 1, 1, vec![s]).unwrap(),
        };
        BakeContribution::new(projection, lambda).unwrap()
    }

    #[test]
    fn worked_example_lambda_six() {
        let mut atlas = UVMaterialAtlas::new(1);
        atlas.albedo.data_mut().fill(0.2);
        atlas.rm.data_mut().fill(0.2);
        atlas.weights.data_mut()[0] = 1.0;
        let c = single_texel(0.8, 0.5, 6.0);
        assert_eq!(c.weight.data()[0], 0.015625);
        blend(&mut atlas, &c).unwrap();
        // (0.8 * 0.015625 + 0.2 * 1) / 1.015625
        let expected = (0.8 * 0.015625 + 0.2) / 1.015625;
        assert!((atlas.albedo().data()[0] as f64 - expected).abs() < 1e-6);
        assert!((expected - 0.20923).abs() < 1e-5);
        assert_eq!(atlas.weight(0), 1.015625);
        assert_eq!(atlas.version(), 1);
    }

    #[test]
    fn empty_atlas_takes_contribution() {
        let mut atlas = UVMaterialAtlas::new(1);
        blend(&mut atlas, &single_texel(0.7, 0.9, 6.0)).unwrap();
        assert_eq!(atlas.albedo().data()[0], 0.7);
        assert_eq!(atlas.weight(0), (0.9f32 as f64).powf(6.0) as f32);
    }

    #[test]
    fn zero_weight_leaves_texel_alone() {
        let mut atlas = UVMaterialAtlas::new(1);
        blend(&mut atlas, &single_texel(0.7, 0.0, 6.0)).unwrap();
        assert_eq!(atlas.albedo().data()[0], 0.0);
        assert_eq!(atlas.weight(0), 0.0);
    }

    #[test]
    fn resolution_mismatch_is_error() {
        let mut atlas = UVMaterialAtlas::new(2);
        assert!(matches!(
            blend(&mut atlas, &single_texel(0.5, 1.0, 6.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dilate_radius_zero_is_identity() {
        let mut atlas = UVMaterialAtlas::new(3);
        atlas.weights.data_mut()[4] = 1.0;
        atlas.albedo.at_mut(4).fill(0.5);
        assert_eq!(dilate_atlas(&atlas, 0), atlas);
    }

    #[test]
    fn dilate_single_texel_fills_four_neighbourhood() {
        let mut atlas = UVMaterialAtlas::new(3);
        atlas.weights.data_mut()[4] = 1.0;
        atlas.albedo.at_mut(4).fill(0.5);
        let out = dilate_atlas(&atlas, 1);
        for i in 0..9 {
            let expect = if [1, 3, 4, 5, 7].contains(&i) { 0.5 } else { 0.0 };
            assert_eq!(out.albedo().at(i)[0], expect, "texel {i}");
        }
        assert_eq!(out.weights(), atlas.weights());
    }

    #[test]
    fn dilate_tie_prefers_scan_order() {
        let mut atlas = UVMaterialAtlas::new(3);
        // texel 4 (center) is equidistant from 1 (above) and 7 (below)
        for (i, v) in [(1, 0.25), (7, 0.75)] {
            atlas.weights.data_mut()[i] = 1.0;
            atlas.albedo.at_mut(i).fill(v);
        }
        let out = dilate_atlas(&atlas, 1);
        assert_eq!(out.albedo().at(4)[0], 0.25);
    }
}
