//! Synthetic training data: foreground mattes composited onto backgrounds.
//!
//! A manifest line fully determines one sample: the foreground and background
//! ids, the placement (scale, offset, flip) and a seed that picks the
//! background crop. Rendering a line twice gives identical pixels.
//!
//! Asset ids are either file paths or `builtin:fg<N>` / `builtin:bg<N>`, which
//! name the procedurally generated pack in [`builtin`].

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::{
    bilinear_sample, binarize, decode_bytes, image_from_dynamic, load_image, AlphaMatte, BinaryMask, Image, SoftMask,
};
use crate::{Error, Result};

pub mod builtin;

/// A foreground object with colour and transparency.
#[derive(Clone, Debug, PartialEq)]
pub struct ForegroundAsset {
    pub id: String,
    pub color: Image,
    pub alpha: AlphaMatte,
}

impl ForegroundAsset {
    pub fn new(id: impl Into<String>, color: Image, alpha: AlphaMatte) -> Result<Self> {
        if color.dims() != alpha.dims() {
            return Err(Error::DimensionMismatch {
                expected: color.dims(),
                actual: alpha.dims(),
            });
        }
        if alpha.data().iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidArgument("foreground alpha is zero everywhere".into()));
        }
        Ok(ForegroundAsset {
            id: id.into(),
            color,
            alpha,
        })
    }

    /// Load an RGBA PNG; the alpha channel becomes the matte.
    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = decode_bytes(&bytes)?;
        let color = image_from_dynamic(&img)?;
        let rgba = img.to_rgba16();
        let alpha = SoftMask::new(
            rgba.width() as usize,
            rgba.height() as usize,
            rgba.pixels().map(|p| f32::from(p.0[3]) / 65535.0).collect(),
        )?;
        Self::new(id, color, alpha)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (w, h) = self.color.dims();
        let img = image::RgbaImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let c = self.color.pixel(x, y);
            let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgba([q(c[0]), q(c[1]), q(c[2]), q(self.alpha.get(x, y))])
        });
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Where and how the foreground lands inside the output crop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Longer foreground side as a fraction of the crop side.
    pub scale: f64,
    pub dx: i64,
    pub dy: i64,
    pub flip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub fg: String,
    pub bg: String,
    pub placement: Placement,
    pub seed: u64,
}

/// A synthesized `(image, alpha, mask)` triple.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSample {
    pub image: Image,
    pub alpha: AlphaMatte,
    pub mask: BinaryMask,
    pub provenance: Provenance,
}

/// Output size and placement distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub crop: usize,
    pub scale_range: (f64, f64),
    pub flip_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            crop: 96,
            scale_range: (0.4, 1.0),
            flip_probability: 0.5,
        }
    }
}

/// Size of the foreground once scaled into a crop.
pub fn scaled_size(fg_dims: (usize, usize), crop: usize, scale: f64) -> (usize, usize) {
    let (fw, fh) = fg_dims;
    let factor = scale * crop as f64 / fw.max(fh) as f64;
    let sw = ((fw as f64 * factor).round() as usize).clamp(1, crop);
    let sh = ((fh as f64 * factor).round() as usize).clamp(1, crop);
    (sw, sh)
}

/// Background crop offset drawn from the sample seed.
pub fn background_window(bg: &Image, crop: usize, seed: u64) -> (isize, isize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = rng.random_range(0..=bg.width().saturating_sub(crop)) as isize;
    let by = rng.random_range(0..=bg.height().saturating_sub(crop)) as isize;
    (bx, by)
}

/// Resample the foreground colour and alpha into crop coordinates.
fn place_foreground(fg: &ForegroundAsset, crop: usize, p: &Placement) -> Result<(Vec<[f32; 3]>, Vec<f32>)> {
    let (sw, sh) = scaled_size(fg.color.dims(), crop, p.scale);
    if p.dx < 0 || p.dy < 0 || p.dx as usize + sw > crop || p.dy as usize + sh > crop {
        return Err(Error::InvalidArgument(format!(
            "scaled foreground {sw}x{sh} at ({}, {}) does not fit a {crop} crop",
            p.dx, p.dy
        )));
    }
    let (fw, fh) = fg.color.dims();
    let sx = fw as f32 / sw as f32;
    let sy = fh as f32 / sh as f32;
    let planes = [fg.color.channel(0), fg.color.channel(1), fg.color.channel(2)];
    let mut color = vec![[0.0f32; 3]; crop * crop];
    let mut alpha = vec![0.0f32; crop * crop];
    for ly in 0..sh {
        let v = (ly as f32 + 0.5) * sy - 0.5;
        for lx in 0..sw {
            let col = if p.flip { sw - 1 - lx } else { lx };
            let u = (col as f32 + 0.5) * sx - 0.5;
            let i = (p.dy as usize + ly) * crop + p.dx as usize + lx;
            alpha[i] = bilinear_sample(fg.alpha.data(), fw, fh, u, v).clamp(0.0, 1.0);
            for c in 0..3 {
                color[i][c] = bilinear_sample(planes[c], fw, fh, u, v).clamp(0.0, 1.0);
            }
        }
    }
    Ok((color, alpha))
}

/// `C = alpha * F + (1 - alpha) * B` in stored colour space; the mask is the
/// resampled alpha thresholded at 0.5.
pub fn composite(
    fg: &ForegroundAsset,
    bg_id: &str,
    bg: &Image,
    placement: Placement,
    seed: u64,
    crop: usize,
) -> Result<CompositeSample> {
    let (color, alpha) = place_foreground(fg, crop, &placement)?;
    let alpha = SoftMask::new(crop, crop, alpha)?;
    let mask = binarize(&alpha, 0.5);
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (bx, by) = background_window(bg, crop, seed);
    let back = bg.crop_replicate(bx, by, crop, crop);
    let a = alpha.data();
    let image = Image::from_fn(crop, crop, |x, y| {
        let i = y * crop + x;
        let b = back.pixel(x, y);
        std::array::from_fn(|c| a[i] * color[i][c] + (1.0 - a[i]) * b[c])
    });
    Ok(CompositeSample {
        image,
        alpha,
        mask,
        provenance: Provenance {
            fg: fg.id.clone(),
            bg: bg_id.to_string(),
            placement,
            seed,
        },
    })
}

/// One manifest line: `{"fg","bg","scale","dx","dy","flip","seed"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fg: String,
    pub bg: String,
    pub scale: f64,
    pub dx: i64,
    pub dy: i64,
    pub flip: bool,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn placement(&self) -> Placement {
        Placement {
            scale: self.scale,
            dx: self.dx,
            dy: self.dy,
            flip: self.flip,
        }
    }

    /// Stable sample id.
    pub fn sample_id(&self, index: usize) -> String {
        format!("{index:05}")
    }
}

pub fn manifest_to_jsonl(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
        .collect()
}

pub fn manifest_from_jsonl(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Resolves asset ids to pixels. Relative paths are taken from `base`.
#[derive(Clone, Debug, Default)]
pub struct AssetLibrary {
    pub base: Option<PathBuf>,
}

impl AssetLibrary {
    pub fn new(base: Option<PathBuf>) -> Self {
        AssetLibrary { base }
    }

    fn path(&self, id: &str) -> PathBuf {
        let p = PathBuf::from(id);
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }
    }

    pub fn foreground(&self, id: &str) -> Result<ForegroundAsset> {
        if let Some(i) = builtin::parse_id(id, "fg") {
            return Ok(builtin::foreground(i));
        }
        ForegroundAsset::load(id, &self.path(id))
    }

    pub fn background(&self, id: &str) -> Result<Image> {
        if let Some(i) = builtin::parse_id(id, "bg") {
            return Ok(builtin::background(i));
        }
        load_image(self.path(id))
    }

    /// Render one manifest line.
    pub fn render(&self, entry: &ManifestEntry, crop: usize) -> Result<CompositeSample> {
        let fg = self.foreground(&entry.fg)?;
        let bg = self.background(&entry.bg)?;
        composite(&fg, &entry.bg, &bg, entry.placement(), entry.seed, crop)
    }
}

const PLACEMENT_RETRIES: usize = 10;

/// Draw `n` manifest lines over the given asset ids.
pub fn generate_manifest(
    library: &AssetLibrary,
    fg_ids: &[String],
    bg_ids: &[String],
    n: usize,
    seed: u64,
    config: &SynthConfig,
) -> Result<Vec<ManifestEntry>> {
    if n > 0 && (fg_ids.is_empty() || bg_ids.is_empty()) {
        return Err(Error::InvalidArgument("empty asset pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let fg_id = &fg_ids[rng.random_range(0..fg_ids.len())];
        let bg_id = &bg_ids[rng.random_range(0..bg_ids.len())];
        let fg = library.foreground(fg_id)?;
        let bg = library.background(bg_id)?;
        let mut entry = None;
        for _ in 0..PLACEMENT_RETRIES {
            let (lo, hi) = config.scale_range;
            let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let (sw, sh) = scaled_size(fg.color.dims(), config.crop, scale);
            let dx = rng.random_range(0..=config.crop - sw) as i64;
            let dy = rng.random_range(0..=config.crop - sh) as i64;
            let flip = rng.random_bool(config.flip_probability.clamp(0.0, 1.0));
            let sample_seed: u64 = rng.random();
            let candidate = ManifestEntry {
                fg: fg_id.clone(),
                bg: bg_id.clone(),
                scale,
                dx,
                dy,
                flip,
                seed: sample_seed,
            };
            match composite(&fg, bg_id, &bg, candidate.placement(), sample_seed, config.crop) {
                Ok(_) => {
                    entry = Some(candidate);
                    break;
                }
                Err(Error::EmptyMask) => continue,
                Err(e) => return Err(e),
            }
        }
        out.push(entry.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "foreground {fg_id} stays below alpha 0.5 after {PLACEMENT_RETRIES} placements"
            ))
        })?);
    }
    Ok(out)
}

/// Asset files (PNG/PPM/PGM) in a directory, sorted by name.
pub fn list_assets(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm"))
        })
        .collect();
    files.sort();
    Ok(files)
}
