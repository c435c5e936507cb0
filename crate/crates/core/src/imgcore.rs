//! Raster containers, file I/O and training augmentations.
//!
//! All rasters are row-major. Colour images are stored planar
//! (`data[c * h * w + y * w + x]`), which is also the layout the network
//! consumes, so no transposition happens between I/O and inference.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Luma, Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planar RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "image {width}x{height}x3 needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!("image value {v} outside [0,1]")));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let n = width * height;
        let mut data = Vec::with_capacity(n * 3);
        for c in rgb {
            data.extend(std::iter::repeat(c.clamp(0.0, 1.0)).take(n));
        }
        Image {
            width,
            height,
            data,
        }
    }

    /// Build from a closure returning RGB for each `(x, y)`; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let n = width * height;
        let mut data = vec![0.0; n * 3];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    data[c * n + y * width + x] = px[c].clamp(0.0, 1.0);
                }
            }
        }
        Image {
            width,
            height,
            data,
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

    /// Planar data, channel-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        [self.get(x, y, 0), self.get(x, y, 1), self.get(x, y, 2)]
    }

    /// Luminance `0.299 R + 0.587 G + 0.114 B`.
    pub fn luminance(&self) -> SoftMask {
        let n = self.width * self.height;
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        let data = (0..n)
            .map(|i| (0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).clamp(0.0, 1.0))
            .collect();
        SoftMask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            Rgb(p.map(quantize8))
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::EmptyImage);
        }
        Ok(Image::from_fn(w, h, |x, y| {
            let p = img.get_pixel(x as u32, y as u32).0;
            p.map(|v| f32::from(v) / 255.0)
        }))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| image_err(path, e))
    }

    /// Crop the window `[x0, x0 + w) x [y0, y0 + h)`; out-of-range reads replicate the edge.
    pub fn crop_replicate(&self, x0: isize, y0: isize, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let sx = clamp_index(x0 + x as isize, self.width);
            let sy = clamp_index(y0 + y as isize, self.height);
            self.pixel(sx, sy)
        })
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y))
    }
}

/// Soft single-channel map in `[0, 1]` (predictions, alpha mattes).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Alpha mattes share the soft-mask representation.
pub type AlphaMatte = SoftMask;

impl SoftMask {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!("mask value {v} outside [0,1]")));
        }
        Ok(SoftMask {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        SoftMask {
            width,
            height,
            data: vec![v.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        SoftMask {
            width,
            height,
            data,
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn crop_replicate(&self, x0: isize, y0: isize, w: usize, h: usize) -> SoftMask {
        SoftMask::from_fn(w, h, |x, y| {
            self.get(
                clamp_index(x0 + x as isize, self.width),
                clamp_index(y0 + y as isize, self.height),
            )
        })
    }

    pub fn to_luma8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([quantize8(self.get(x as usize, y as usize))])
        })
    }

    /// 8-bit grayscale PNG; values are quantized to `round(v * 255)`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| image_err(path, e))
    }
}

/// Strictly binary mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            data,
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// 1.0 for foreground, 0.0 for background.
    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn crop_replicate(&self, x0: isize, y0: isize, w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            self.get(
                clamp_index(x0 + x as isize, self.width),
                clamp_index(y0 + y as isize, self.height),
            )
        })
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn to_luma8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    /// 8-bit grayscale PNG, 255 = foreground.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| image_err(path, e))
    }
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Decode(other.to_string()),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat(path.display().to_string())),
    }
    let img = reader.decode().map_err(|e| image_err(path, e))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    Ok(img)
}

/// Decode in-memory PNG/PNM bytes.
pub fn decode_bytes(bytes: &[u8]) -> Result<DynamicImage> {
    let reader = ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Decode(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        _ => return Err(Error::UnsupportedFormat("expected PNG or PNM bytes".into())),
    }
    let img = reader.decode().map_err(|e| Error::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    Ok(img)
}

fn is_16bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

/// Convert a decoded image; integer samples are divided by the maximum sample value.
pub fn image_from_dynamic(img: &DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    if is_16bit(img) {
        let rgb = img.to_rgb16();
        Ok(Image::from_fn(w, h, |x, y| {
            rgb.get_pixel(x as u32, y as u32).0.map(|v| f32::from(v) / 65535.0)
        }))
    } else {
        Image::from_rgb8(&img.to_rgb8())
    }
}

fn gray_from_dynamic(img: &DynamicImage) -> Vec<f32> {
    if is_16bit(img) {
        img.to_luma16().pixels().map(|p| f32::from(p.0[0]) / 65535.0).collect()
    } else {
        img.to_luma8().pixels().map(|p| f32::from(p.0[0]) / 255.0).collect()
    }
}

/// Load a PNG or binary PPM/PGM (8 or 16 bit) as an RGB image in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    image_from_dynamic(&decode(path.as_ref())?)
}

/// Load a grayscale map as a soft mask in `[0, 1]`.
pub fn load_soft_mask(path: impl AsRef<Path>) -> Result<SoftMask> {
    let img = decode(path.as_ref())?;
    SoftMask::new(img.width() as usize, img.height() as usize, gray_from_dynamic(&img))
}

/// Load a mask and binarize it at 0.5.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(binarize(&load_soft_mask(path)?, 0.5))
}

pub fn mask_from_dynamic(img: &DynamicImage) -> Result<BinaryMask> {
    let soft = SoftMask::new(img.width() as usize, img.height() as usize, gray_from_dynamic(img))?;
    Ok(binarize(&soft, 0.5))
}

/// Load a benchmark label map: 0 is background, the maximum value is
/// foreground and any intermediate value marks an unlabeled pixel.
/// Returns the mask and, if any pixel is unlabeled, the labeled-pixel mask.
pub fn load_labeled_mask(path: impl AsRef<Path>) -> Result<(BinaryMask, Option<BinaryMask>)> {
    let img = decode(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = gray_from_dynamic(&img);
    let mask = BinaryMask::new(w, h, values.iter().map(|&v| v >= 1.0).collect())?;
    let labeled: Vec<bool> = values.iter().map(|&v| v <= 0.0 || v >= 1.0).collect();
    let valid = if labeled.iter().all(|&b| b) {
        None
    } else {
        Some(BinaryMask::new(w, h, labeled)?)
    };
    Ok((mask, valid))
}

/// Foreground where `value > threshold` (strict).
pub fn binarize(m: &SoftMask, threshold: f32) -> BinaryMask {
    BinaryMask {
        width: m.width,
        height: m.height,
        data: m.data.iter().map(|&v| v > threshold).collect(),
    }
}

/// Bilinear sample of a planar channel at continuous coordinates, with edge clamping.
pub(crate) fn bilinear_sample(plane: &[f32], width: usize, height: usize, fx: f32, fy: f32) -> f32 {
    let fx = fx.clamp(0.0, (width - 1) as f32);
    let fy = fy.clamp(0.0, (height - 1) as f32);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = fx - x0 as f32;
    let ty = fy - y0 as f32;
    let top = plane[y0 * width + x0] * (1.0 - tx) + plane[y0 * width + x1] * tx;
    let bottom = plane[y1 * width + x0] * (1.0 - tx) + plane[y1 * width + x1] * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Ranges for the photometric and geometric training augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Square crop side in pixels.
    pub crop: usize,
    pub gamma: (f32, f32),
    pub brightness: (f32, f32),
    pub flip_probability: f32,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            crop: 96,
            gamma: (0.7, 1.5),
            brightness: (0.75, 1.25),
            flip_probability: 0.5,
        }
    }
}

impl AugmentParams {
    /// Crop only: no flip, gamma or brightness change.
    pub fn crop_only(crop: usize) -> Self {
        AugmentParams {
            crop,
            gamma: (1.0, 1.0),
            brightness: (1.0, 1.0),
            flip_probability: 0.0,
        }
    }
}

/// A concrete draw of the augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub x0: isize,
    pub y0: isize,
    pub flip: bool,
    pub gamma: f32,
    pub brightness: f32,
}

const CROP_RETRIES: usize = 10;

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f32, f32)) -> f32 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draw a crop window containing at least one foreground pixel, plus flip and
/// photometric factors.
pub fn draw_augmentation<R: Rng + ?Sized>(
    gt: &BinaryMask,
    rng: &mut R,
    params: &AugmentParams,
) -> Result<AugmentDraw> {
    if gt.is_empty() {
        return Err(Error::EmptyMask);
    }
    let crop = params.crop;
    let (w, h) = gt.dims();
    let span_x = w.saturating_sub(crop);
    let span_y = h.saturating_sub(crop);
    let window_has_fg = |x0: isize, y0: isize| {
        (0..crop.min(h)).any(|dy| {
            (0..crop.min(w)).any(|dx| gt.get((x0 as usize) + dx, (y0 as usize) + dy))
        })
    };
    let mut chosen = None;
    for _ in 0..CROP_RETRIES {
        let x0 = rng.random_range(0..=span_x) as isize;
        let y0 = rng.random_range(0..=span_y) as isize;
        if window_has_fg(x0, y0) {
            chosen = Some((x0, y0));
            break;
        }
    }
    let (x0, y0) = match chosen {
        Some(c) => c,
        None => {
            let fg: Vec<usize> = (0..w * h).filter(|&i| gt.data[i]).collect();
            let i = fg[rng.random_range(0..fg.len())];
            let (fx, fy) = ((i % w) as isize, (i / w) as isize);
            let half = (crop / 2) as isize;
            (
                (fx - half).clamp(0, span_x as isize),
                (fy - half).clamp(0, span_y as isize),
            )
        }
    };
    let flip = rng.random::<f32>() < params.flip_probability;
    let gamma = uniform_in(rng, params.gamma);
    let brightness = uniform_in(rng, params.brightness);
    Ok(AugmentDraw {
        x0,
        y0,
        flip,
        gamma,
        brightness,
    })
}

/// Apply a drawn augmentation. Images smaller than the crop are padded by
/// edge replication.
pub fn apply_augmentation(
    image: &Image,
    gt: &BinaryMask,
    crop: usize,
    draw: &AugmentDraw,
) -> (Image, BinaryMask) {
    let mut img = image.crop_replicate(draw.x0, draw.y0, crop, crop);
    let mut mask = gt.crop_replicate(draw.x0, draw.y0, crop, crop);
    if draw.flip {
        img = img.flip_horizontal();
        mask = mask.flip_horizontal();
    }
    if draw.gamma != 1.0 || draw.brightness != 1.0 {
        let (g, b) = (draw.gamma, draw.brightness);
        img = img.map(|v| v.powf(g) * b);
    }
    (img, mask)
}

/// Random crop, horizontal flip, gamma `x -> x^g` and brightness `x -> clamp(x * b)`,
/// with the same geometry applied to image and mask.
pub fn augment<R: Rng + ?Sized>(
    image: &Image,
    gt: &BinaryMask,
    rng: &mut R,
    params: &AugmentParams,
) -> Result<(Image, BinaryMask)> {
    if image.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: gt.dims(),
        });
    }
    let draw = draw_augmentation(gt, rng, params)?;
    Ok(apply_augmentation(image, gt, params.crop, &draw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binarize_is_strict() {
        let m = SoftMask::new(4, 1, vec![0.2, 0.5, 0.51, 0.9]).unwrap();
        assert_eq!(binarize(&m, 0.5).data(), &[false, false, true, true]);
        assert!(binarize(&SoftMask::filled(3, 3, 0.5), 0.5).is_empty());
        assert_eq!(binarize(&SoftMask::filled(3, 3, 0.7), 0.5).count(), 9);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(1, 1, vec![0.0, 1.1, 0.0]).is_err());
        assert!(Image::new(0, 1, vec![]).is_err());
        assert!(SoftMask::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn identity_augmentation() {
        let img = Image::from_fn(8, 6, |x, y| [x as f32 / 8.0, y as f32 / 6.0, 0.5]);
        let gt = BinaryMask::from_fn(8, 6, |x, y| x > 2 && y > 1);
        let draw = AugmentDraw {
            x0: 0,
            y0: 0,
            flip: false,
            gamma: 1.0,
            brightness: 1.0,
        };
        let (out, mask) = apply_augmentation(&img, &gt, 8, &draw);
        // square crop of a non-square image replicates the last row
        assert_eq!(out.crop_replicate(0, 0, 8, 6), img);
        assert_eq!(mask.crop_replicate(0, 0, 8, 6), gt);
    }

    #[test]
    fn flip_moves_pixels_consistently() {
        let img = Image::from_fn(5, 5, |x, y| [x as f32 / 4.0, y as f32 / 4.0, 0.0]);
        let gt = BinaryMask::from_fn(5, 5, |x, y| x == 1 && y == 3);
        let draw = AugmentDraw {
            x0: 0,
            y0: 0,
            flip: true,
            gamma: 1.0,
            brightness: 1.0,
        };
        let (out, mask) = apply_augmentation(&img, &gt, 5, &draw);
        assert!(mask.get(3, 3));
        assert_eq!(mask.count(), 1);
        assert_eq!(out.pixel(3, 2), img.pixel(1, 2));
    }

    #[test]
    fn gamma_two_squares_values() {
        let img = Image::filled(2, 2, [0.5, 0.5, 0.5]);
        let gt = BinaryMask::full(2, 2);
        let draw = AugmentDraw {
            x0: 0,
            y0: 0,
            flip: false,
            gamma: 2.0,
            brightness: 1.0,
        };
        let (out, _) = apply_augmentation(&img, &gt, 2, &draw);
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn crop_always_contains_foreground() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::filled(200, 150, [0.3, 0.3, 0.3]);
        let gt = BinaryMask::from_fn(200, 150, |x, y| x == 190 && y == 5);
        for _ in 0..50 {
            let (_, m) = augment(&img, &gt, &mut rng, &AugmentParams::default()).unwrap();
            assert_eq!(m.dims(), (96, 96));
            assert_eq!(m.count(), 1);
        }
    }

    #[test]
    fn small_images_are_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::filled(10, 20, [0.1, 0.2, 0.3]);
        let gt = BinaryMask::from_fn(10, 20, |x, _| x < 5);
        let (out, m) = augment(&img, &gt, &mut rng, &AugmentParams::crop_only(32)).unwrap();
        assert_eq!(out.dims(), (32, 32));
        assert_eq!(m.dims(), (32, 32));
        assert!(out.data().iter().zip([0.1f32, 0.2, 0.3].iter().flat_map(|&v| std::iter::repeat(v).take(1024))).all(|(a, b)| *a == b));
    }

    #[test]
    fn empty_gt_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = Image::filled(4, 4, [0.0; 3]);
        let gt = BinaryMask::empty(4, 4);
        assert!(matches!(
            augment(&img, &gt, &mut rng, &AugmentParams::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn luminance_weights() {
        let img = Image::filled(1, 1, [1.0, 0.0, 0.0]);
        assert!((img.luminance().get(0, 0) - 0.299).abs() < 1e-7);
    }
}
