use crate::error::{Error, Result};

/// Interleaved floating point image, row-major, `channels` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!((1..=4).contains(&channels), "channels must be 1..=4");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Unconstrained buffer (positions, depths, weights).
    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if !(1..=4).contains(&channels) {
            return Err(Error::Shape(format!("{channels} channels, expected 1..=4")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Material-valued buffer; values are clamped into [0,1] (NaN becomes 0).
    pub fn material(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::from_raw(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn at(&self, index: usize) -> &[f32] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut [f32] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }
}

/// Per-view material estimate: albedo plus packed roughness (channel 0) and metallic (channel 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialView {
    pub albedo: ImageBuffer,
    pub rm: ImageBuffer,
}

impl MaterialView {
    pub fn new(mut albedo: ImageBuffer, mut rm: ImageBuffer) -> Result<Self> {
        if albedo.channels() != 3 || rm.channels() != 2 {
            return Err(Error::Shape(
                "material view needs 3-channel albedo and 2-channel rm".into(),
            ));
        }
        if albedo.width() != rm.width() || albedo.height() != rm.height() {
            return Err(Error::Shape("albedo and rm dimensions differ".into()));
        }
        albedo.clamp_unit();
        rm.clamp_unit();
        Ok(Self { albedo, rm })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            albedo: ImageBuffer::zeros(width, height, 3),
            rm: ImageBuffer::zeros(width, height, 2),
        }
    }

    pub fn width(&self) -> usize {
        self.albedo.width()
    }

    pub fn height(&self) -> usize {
        self.albedo.height()
    }
}
