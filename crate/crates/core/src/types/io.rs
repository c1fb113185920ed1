use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer as PngBuffer, Luma, Rgb, Rgba};
use serde::{Deserialize, Serialize};

use super::atlas::UVMaterialAtlas;
use super::camera::{Camera, CameraRecord};
use super::image::{ImageBuffer, MaterialView};
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Sidecar written next to the atlas PNGs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtlasMeta {
    pub resolution: usize,
    /// Weights in weights.png are divided by this value before quantization.
    pub max_weight: f64,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    TriangleMesh::from_obj_str(&read_text(path)?)
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    write_text(path, &mesh.to_obj_string())
}

pub fn load_cameras(path: &Path) -> Result<Vec<(String, Camera)>> {
    let records: Vec<CameraRecord> = serde_json::from_str(&read_text(path)?)?;
    records
        .iter()
        .map(|r| Camera::from_record(r).map(|c| (r.name.clone(), c)))
        .collect()
}

pub fn save_cameras(cameras: &[(String, Camera)], path: &Path) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(|(n, c)| c.to_record(n)).collect();
    write_text(path, &serde_json::to_string_pretty(&records)?)
}

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads a PNG into [0,1] floats. Channel count follows the file (gray=1, gray+alpha=2, rgb=3, rgba=4).
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLumaA8(b) => (2, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(b) => (2, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgba16(b) => (4, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        other => {
            let b = other.to_rgba32f();
            (4, b.into_raw())
        }
    };
    ImageBuffer::from_raw(w, h, channels, data)
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Saves a buffer as PNG. Two-channel buffers are written as RGB with blue = 0.
pub fn save_image(path: &Path, img: &ImageBuffer, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let c = img.channels();
    let expand = |d: &[f32]| -> Vec<f32> {
        if c == 2 {
            d.chunks_exact(2).flat_map(|p| [p[0], p[1], 0.0]).collect()
        } else {
            d.to_vec()
        }
    };
    let values = expand(img.data());
    let dynamic = match (depth, c) {
        (BitDepth::Eight, 1) => DynamicImage::ImageLuma8(
            PngBuffer::<Luma<u8>, _>::from_raw(w, h, values.iter().map(|&v| quantize8(v)).collect()).unwrap(),
        ),
        (BitDepth::Eight, 2 | 3) => DynamicImage::ImageRgb8(
            PngBuffer::<Rgb<u8>, _>::from_raw(w, h, values.iter().map(|&v| quantize8(v)).collect()).unwrap(),
        ),
        (BitDepth::Eight, _) => DynamicImage::ImageRgba8(
            PngBuffer::<Rgba<u8>, _>::from_raw(w, h, values.iter().map(|&v| quantize8(v)).collect()).unwrap(),
        ),
        (BitDepth::Sixteen, 1) => DynamicImage::ImageLuma16(
            PngBuffer::<Luma<u16>, _>::from_raw(w, h, values.iter().map(|&v| quantize16(v)).collect()).unwrap(),
        ),
        (BitDepth::Sixteen, 2 | 3) => DynamicImage::ImageRgb16(
            PngBuffer::<Rgb<u16>, _>::from_raw(w, h, values.iter().map(|&v| quantize16(v)).collect()).unwrap(),
        ),
        (BitDepth::Sixteen, _) => DynamicImage::ImageRgba16(
            PngBuffer::<Rgba<u16>, _>::from_raw(w, h, values.iter().map(|&v| quantize16(v)).collect()).unwrap(),
        ),
    };
    dynamic.save(path).map_err(|e| image_error(path, e))
}

/// Keeps the first `channels` channels of an image (used to read rm.png back as 2 channels).
pub fn take_channels(img: &ImageBuffer, channels: usize) -> Result<ImageBuffer> {
    if img.channels() < channels {
        return Err(Error::Shape(format!(
            "image has {} channels, need {channels}",
            img.channels()
        )));
    }
    let src = img.channels();
    let data = img
        .data()
        .chunks_exact(src)
        .flat_map(|p| p[..channels].iter().copied())
        .collect();
    ImageBuffer::from_raw(img.width(), img.height(), channels, data)
}

/// Loads a 3-channel albedo texture (alpha dropped, gray expanded).
pub fn load_rgb(path: &Path) -> Result<ImageBuffer> {
    let img = load_image(path)?;
    match img.channels() {
        3 => Ok(img),
        4 => take_channels(&img, 3),
        1 => {
            let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
            ImageBuffer::from_raw(img.width(), img.height(), 3, data)
        }
        c => Err(image_error(path, format!("cannot read {c}-channel image as rgb"))),
    }
}

pub fn load_rm(path: &Path) -> Result<ImageBuffer> {
    take_channels(&load_image(path)?, 2).map_err(|e| image_error(path, e))
}

pub fn save_material_view(view: &MaterialView, albedo: &Path, rm: &Path) -> Result<()> {
    save_image(albedo, &view.albedo, BitDepth::Eight)?;
    save_image(rm, &view.rm, BitDepth::Eight)
}

pub fn load_material_view(albedo: &Path, rm: &Path) -> Result<MaterialView> {
    MaterialView::new(load_rgb(albedo)?, load_rm(rm)?)
}

/// Writes albedo.png, rm.png, weights.png (16-bit, normalized by the max weight) and atlas.json.
pub fn save_atlas(atlas: &UVMaterialAtlas, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_image(&dir.join("albedo.png"), atlas.albedo(), BitDepth::Eight)?;
    save_image(&dir.join("rm.png"), atlas.rm(), BitDepth::Eight)?;
    let max = atlas.max_weight();
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let normalized: Vec<f32> = atlas.weights().data().iter().map(|w| w * scale).collect();
    let res = atlas.resolution();
    save_image(
        &dir.join("weights.png"),
        &ImageBuffer::from_raw(res, res, 1, normalized)?,
        BitDepth::Sixteen,
    )?;
    let meta = AtlasMeta {
        resolution: res,
        max_weight: max as f64,
    };
    write_text(&dir.join("atlas.json"), &serde_json::to_string_pretty(&meta)?)
}

pub fn load_atlas(dir: &Path) -> Result<UVMaterialAtlas> {
    let meta: AtlasMeta = serde_json::from_str(&read_text(&dir.join("atlas.json"))?)?;
    let albedo = load_rgb(&dir.join("albedo.png"))?;
    let rm = load_rm(&dir.join("rm.png"))?;
    let weights_png = load_image(&dir.join("weights.png"))?;
    let weights = take_channels(&weights_png, 1)?;
    for (name, img) in [("albedo", &albedo), ("rm", &rm), ("weights", &weights)] {
        if img.width() != meta.resolution || img.height() != meta.resolution {
            return Err(Error::Shape(format!(
                "{name} texture is {}x{}, atlas.json says {}",
                img.width(),
                img.height(),
                meta.resolution
            )));
        }
    }
    let scale = meta.max_weight as f32;
    let weights = ImageBuffer::from_raw(
        meta.resolution,
        meta.resolution,
        1,
        weights.data().iter().map(|w| w * scale).collect(),
    )?;
    Ok(UVMaterialAtlas::from_parts(albedo, rm, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cameras_json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cams.json");
        write_text(
            &path,
            r#"[{"name":"a","rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0],
                "fx":100,"fy":100,"cx":64,"cy":64,"width":128,"height":128}]"#,
        )
        .unwrap();
        let cams = load_cameras(&path).unwrap();
        assert_eq!(cams.len(), 1);
        assert_eq!(cams[0].0, "a");

        write_text(
            &path,
            r#"[{"name":"flip","rotation":[1,0,0,0,1,0,0,0,-1],"translation":[0,0,0],
                "fx":100,"fy":100,"cx":64,"cy":64,"width":128,"height":128}]"#,
        )
        .unwrap();
        let err = load_cameras(&path).unwrap_err();
        assert!(err.to_string().contains("flip"));

        write_text(&path, "[{").unwrap();
        assert!(matches!(load_cameras(&path), Err(Error::Json(_))));
    }

    #[test]
    fn two_channel_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rm.png");
        let img = ImageBuffer::material(2, 2, 2, vec![0.1, 0.9, 0.5, 0.0, 1.0, 0.25, 0.3, 0.7]).unwrap();
        save_image(&path, &img, BitDepth::Eight).unwrap();
        let raw = load_image(&path).unwrap();
        assert_eq!(raw.channels(), 3);
        assert!(raw.data().chunks(3).all(|p| p[2] == 0.0));
        let back = load_rm(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn sixteen_bit_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.png");
        let data: Vec<f32> = (0..64).map(|i| (i as f32 * 0.37).fract()).collect();
        let img = ImageBuffer::from_raw(8, 8, 1, data.clone()).unwrap();
        save_image(&path, &img, BitDepth::Sixteen).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in data.iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_mesh(Path::new("/nonexistent/mesh.obj")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
