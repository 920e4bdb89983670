use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::model::Dtype;

/// Pixel storage types an [`ImagePlane`] can hold.
pub trait Sample: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const DTYPE: Dtype;
    /// Nominal value range in storage units.
    const RANGE: (f64, f64);
}

impl Sample for u8 {
    const DTYPE: Dtype = Dtype::U8;
    const RANGE: (f64, f64) = (0.0, 255.0);
}

impl Sample for u16 {
    const DTYPE: Dtype = Dtype::U16;
    const RANGE: (f64, f64) = (0.0, 65535.0);
}

impl Sample for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const RANGE: (f64, f64) = (0.0, 1.0);
}

/// Row-major, channel-interleaved raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Sample> ImagePlane<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::DimMismatch(format!(
                "{width}x{height}x{channels} raster needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(ImagePlane {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        ImagePlane {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        ImagePlane {
            width,
            height,
            channels,
            data,
        }
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

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    pub fn value_range(&self) -> (f64, f64) {
        T::RANGE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Extracts channel `c` as a single-channel plane.
    pub fn channel(&self, c: usize) -> ImagePlane<T> {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

impl ImagePlane<u8> {
    /// Maps `0..=255` onto `[0, 1]`.
    pub fn to_unit_f32(&self) -> ImagePlane<f32> {
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f32::from(v) / 255.0).collect(),
        }
    }
}

/// Binary foreground raster, `true` = person.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl MaskGrid {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(MaskGrid {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        MaskGrid {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        MaskGrid {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// 1.0 on foreground, 0.0 elsewhere.
    pub fn indicator(&self) -> ImagePlane<f32> {
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    /// 3 × u8.
    Rgb8,
    /// 1 × u16.
    Gray16,
    /// 1 × u8, strictly {0, 255}.
    Mask8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Rgb8(ImagePlane<u8>),
    Gray16(ImagePlane<u16>),
    Mask(MaskGrid),
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn wrong_kind(path: &Path, expected: Expected, img: &DynamicImage) -> Error {
    Error::Format(format!(
        "{}: expected {expected:?}, file is {:?}",
        path.display(),
        img.color()
    ))
}

pub fn load_image(path: impl AsRef<Path>, expected: Expected) -> Result<Loaded> {
    let path = path.as_ref();
    let img = decode(path)?;
    match (expected, img) {
        (Expected::Rgb8, DynamicImage::ImageRgb8(buf)) => {
            let (w, h) = buf.dimensions();
            ImagePlane::new(w as usize, h as usize, 3, buf.into_raw()).map(Loaded::Rgb8)
        }
        (Expected::Gray16, DynamicImage::ImageLuma16(buf)) => {
            let (w, h) = buf.dimensions();
            ImagePlane::new(w as usize, h as usize, 1, buf.into_raw()).map(Loaded::Gray16)
        }
        (Expected::Mask8, DynamicImage::ImageLuma8(buf)) => {
            let (w, h) = buf.dimensions();
            let mut bits = Vec::with_capacity((w * h) as usize);
            for (x, y, px) in buf.enumerate_pixels() {
                match px.0[0] {
                    0 => bits.push(false),
                    255 => bits.push(true),
                    value => return Err(Error::MaskValue { x, y, value }),
                }
            }
            MaskGrid::new(w as usize, h as usize, bits).map(Loaded::Mask)
        }
        (expected, img) => Err(wrong_kind(path, expected, &img)),
    }
}

pub fn load_rgb8(path: impl AsRef<Path>) -> Result<ImagePlane<u8>> {
    match load_image(path, Expected::Rgb8)? {
        Loaded::Rgb8(img) => Ok(img),
        _ => unreachable!(),
    }
}

pub fn load_gray16(path: impl AsRef<Path>) -> Result<ImagePlane<u16>> {
    match load_image(path, Expected::Gray16)? {
        Loaded::Gray16(img) => Ok(img),
        _ => unreachable!(),
    }
}

pub fn load_mask8(path: impl AsRef<Path>) -> Result<MaskGrid> {
    match load_image(path, Expected::Mask8)? {
        Loaded::Mask(m) => Ok(m),
        _ => unreachable!(),
    }
}

fn save_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

fn require_channels<T: Sample>(img: &ImagePlane<T>, channels: usize) -> Result<()> {
    if img.channels() != channels {
        return Err(Error::DimMismatch(format!(
            "expected {channels} channel(s), image has {}",
            img.channels()
        )));
    }
    Ok(())
}

pub fn save_rgb8(img: &ImagePlane<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    require_channels(img, 3)?;
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("length checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_err(path, e))
}

pub fn save_gray16(img: &ImagePlane<u16>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    require_channels(img, 1)?;
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("length checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_err(path, e))
}

pub fn save_mask8(mask: &MaskGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw)
            .expect("length checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_err(path, e))
}
