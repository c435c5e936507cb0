//! Click simulation and click encoding.
//!
//! The simulated user always clicks the pixel of the largest mislabeled
//! region that is farthest from both the region boundary and the image sides.
//! Error regions are 4-connected; every tie is broken in row-major order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::{binarize, BinaryMask, SoftMask};
use crate::{Error, Result};

/// A user interaction at pixel `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub x: usize,
    pub y: usize,
    /// `true` marks foreground.
    #[serde(rename = "pos")]
    pub positive: bool,
    /// 1-based position in the session.
    #[serde(rename = "k")]
    pub ordinal: u32,
}

impl Click {
    pub fn positive(x: usize, y: usize, ordinal: u32) -> Self {
        Click {
            x,
            y,
            positive: true,
            ordinal,
        }
    }

    pub fn negative(x: usize, y: usize, ordinal: u32) -> Self {
        Click {
            x,
            y,
            positive: false,
            ordinal,
        }
    }

    pub fn with_ordinal(self, ordinal: u32) -> Self {
        Click { ordinal, ..self }
    }

    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        if self.x >= width || self.y >= height {
            return Err(Error::ClickOutOfBounds {
                x: self.x,
                y: self.y,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Serialize a click list as a JSON array of `{"x","y","pos","k"}` objects.
pub fn clicks_to_json(clicks: &[Click]) -> String {
    serde_json::to_string(clicks).expect("clicks serialize")
}

pub fn clicks_from_json(s: &str) -> Result<Vec<Click>> {
    Ok(serde_json::from_str(s)?)
}

/// Connected-component labels of a binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    /// 0 for background, `1..=count` for components.
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelMap {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel counts indexed by label (index 0 holds the background count).
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count as usize + 1];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == label).collect(),
        )
        .expect("same dims")
    }
}

/// Maximal 4-connected components, labelled in order of first row-major encounter.
pub fn connected_components(mask: &BinaryMask) -> LabelMap {
    let (w, h) = mask.dims();
    let data = mask.data();
    label_components(w, h, |i| data[i], |_, _| true)
}

/// Labels pixels where `member` holds; neighbours join when `joins(i, j)` also holds.
fn label_components(
    w: usize,
    h: usize,
    member: impl Fn(usize) -> bool,
    joins: impl Fn(usize, usize) -> bool,
) -> LabelMap {
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !member(start) || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if labels[j] == 0 && member(j) && joins(i, j) {
                    labels[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        count: next,
    }
}

/// Squared distance transform of a 1-D sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                // k > 0 here: z[0] is -inf
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from each foreground pixel to the nearest
/// background pixel. Background pixels are 0; if there is no background at
/// all, every pixel is `+inf`.
pub fn edt_squared(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let n = w.max(h);
    let mut grid: Vec<f64> = mask
        .data()
        .iter()
        .map(|&fg| if fg { f64::INFINITY } else { 0.0 })
        .collect();
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

/// Euclidean distance transform (see [`edt_squared`]).
pub fn edt(mask: &BinaryMask) -> Vec<f64> {
    edt_squared(mask).into_iter().map(f64::sqrt).collect()
}

/// Whether a mislabeled region is missing foreground or has spurious foreground.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    FalseNegative,
    FalsePositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionInfo {
    pub label: u32,
    pub pixels: usize,
    pub kind: ErrorKind,
}

/// The mislabeled pixels of a prediction, split into 4-connected regions.
#[derive(Clone, Debug)]
pub struct LabeledRegions {
    pub labels: LabelMap,
    pub regions: Vec<RegionInfo>,
}

impl LabeledRegions {
    /// Largest region; ties go to the smallest label.
    pub fn largest(&self) -> Option<&RegionInfo> {
        self.regions
            .iter()
            .fold(None, |best: Option<&RegionInfo>, r| match best {
                Some(b) if b.pixels >= r.pixels => Some(b),
                _ => Some(r),
            })
    }
}

/// Split `pred != gt` into 4-connected regions of a single error kind; pixels outside `valid` never count as errors.
pub fn error_regions(
    pred: &BinaryMask,
    gt: &BinaryMask,
    valid: Option<&BinaryMask>,
) -> Result<LabeledRegions> {
    check_dims(pred.dims(), gt.dims())?;
    if let Some(v) = valid {
        check_dims(v.dims(), gt.dims())?;
    }
    let (w, h) = gt.dims();
    let wrong: Vec<bool> = (0..w * h)
        .map(|i| pred.data()[i] != gt.data()[i] && valid.map_or(true, |v| v.data()[i]))
        .collect();
    // A false-negative pixel never shares a region with a false-positive one.
    let g = gt.data();
    let labels = label_components(w, h, |i| wrong[i], |i, j| g[i] == g[j]);
    let sizes = labels.sizes();
    let mut kinds = vec![None; labels.count as usize + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l != 0 && kinds[l as usize].is_none() {
            kinds[l as usize] = Some(if gt.data()[i] {
                ErrorKind::FalseNegative
            } else {
                ErrorKind::FalsePositive
            });
        }
    }
    let regions = (1..=labels.count)
        .map(|l| RegionInfo {
            label: l,
            pixels: sizes[l as usize],
            kind: kinds[l as usize].expect("every label has a pixel"),
        })
        .collect();
    Ok(LabeledRegions { labels, regions })
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// A simulated click together with the error region it targets.
#[derive(Clone, Debug)]
pub struct Placement {
    pub click: Click,
    pub region: BinaryMask,
    pub kind: ErrorKind,
}

/// Squared border distance `min(1 + x, 1 + y, W - x, H - y)^2`.
fn border_distance_sq(x: usize, y: usize, w: usize, h: usize) -> f64 {
    let d = (1 + x).min(1 + y).min(w - x).min(h - y) as f64;
    d * d
}

/// Place the next corrective click on an already-binarized prediction.
pub fn place_click(
    pred: &BinaryMask,
    gt: &BinaryMask,
    valid: Option<&BinaryMask>,
) -> Result<Placement> {
    let regions = error_regions(pred, gt, valid)?;
    let target = *regions.largest().ok_or(Error::AlreadyCorrect)?;
    let region = regions.labels.component_mask(target.label);
    let inner = edt_squared(&region);
    let (w, h) = gt.dims();
    let mut best: Option<(f64, usize)> = None;
    for (i, &d2) in inner.iter().enumerate() {
        if !region.data()[i] {
            continue;
        }
        let score = d2.min(border_distance_sq(i % w, i / w, w, h));
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    let (_, i) = best.expect("region is nonempty");
    let click = Click {
        x: i % w,
        y: i / w,
        positive: target.kind == ErrorKind::FalseNegative,
        ordinal: 1,
    };
    Ok(Placement {
        click,
        region,
        kind: target.kind,
    })
}

/// Next simulated click for a soft prediction binarized at 0.5.
///
/// The returned click has ordinal 1; callers renumber it within their session.
pub fn next_click(pred: &SoftMask, gt: &BinaryMask) -> Result<Click> {
    Ok(place_click(&binarize(pred, 0.5), gt, None)?.click)
}

/// Gaussian widths of the three encoding scales, in pixels.
pub const DEFAULT_SIGMAS: [f32; 3] = [2.0, 6.0, 18.0];

/// Six-plane click rasterization: positive clicks at three scales, then
/// negative clicks at three scales.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickEncoding {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ClickEncoding {
    pub const CHANNELS: usize = 6;

    pub fn zeros(width: usize, height: usize) -> Self {
        ClickEncoding {
            width,
            height,
            data: vec![0.0; width * height * Self::CHANNELS],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Planar data, channel-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.channel(c)[y * self.width + x]
    }
}

/// Rasterize clicks as Gaussians `exp(-d^2 / (2 sigma^2))`, combined per pixel
/// by maximum and truncated to zero beyond `4 sigma`.
pub fn encode_clicks(
    clicks: &[Click],
    width: usize,
    height: usize,
    sigmas: [f32; 3],
) -> Result<ClickEncoding> {
    if sigmas.iter().any(|&s| !(s > 0.0)) || !(sigmas[0] < sigmas[1] && sigmas[1] < sigmas[2]) {
        return Err(Error::InvalidArgument(format!(
            "sigmas must be positive and strictly increasing, got {sigmas:?}"
        )));
    }
    let mut enc = ClickEncoding::zeros(width, height);
    let n = width * height;
    for click in clicks {
        click.check_bounds(width, height)?;
        let base = if click.positive { 0 } else { 3 };
        for (s, &sigma) in sigmas.iter().enumerate() {
            let plane = &mut enc.data[(base + s) * n..(base + s + 1) * n];
            let sigma = f64::from(sigma);
            let cutoff = 4.0 * sigma;
            let reach = cutoff.floor() as usize;
            let inv = 1.0 / (2.0 * sigma * sigma);
            let y_lo = click.y.saturating_sub(reach);
            let y_hi = (click.y + reach).min(height - 1);
            let x_lo = click.x.saturating_sub(reach);
            let x_hi = (click.x + reach).min(width - 1);
            for y in y_lo..=y_hi {
                let dy = y as f64 - click.y as f64;
                for x in x_lo..=x_hi {
                    let dx = x as f64 - click.x as f64;
                    let d2 = dx * dx + dy * dy;
                    if d2 > cutoff * cutoff {
                        continue;
                    }
                    let v = (-d2 * inv).exp() as f32;
                    let p = &mut plane[y * width + x];
                    if v > *p {
                        *p = v;
                    }
                }
            }
        }
    }
    Ok(enc)
}

/// Sampling ranges for bundled (all-at-once) click simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundledParams {
    pub max_positive: usize,
    pub max_negative: usize,
    /// Minimum spacing between clicks of the same polarity (best effort).
    pub min_spacing: f64,
    /// Negative clicks land at a distance in `[near, far]` from the object.
    pub negative_band: (f64, f64),
}

impl Default for BundledParams {
    fn default() -> Self {
        BundledParams {
            max_positive: 5,
            max_negative: 5,
            min_spacing: 5.0,
            negative_band: (3.0, 20.0),
        }
    }
}

const SPACING_TRIES: usize = 32;

fn sample_spaced<R: Rng + ?Sized>(
    candidates: &[usize],
    n: usize,
    width: usize,
    min_spacing: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::with_capacity(n);
    'outer: for _ in 0..n {
        for _ in 0..SPACING_TRIES {
            let c = candidates[rng.random_range(0..candidates.len())];
            let far_enough = picked.iter().all(|&p| {
                let dx = (p % width) as f64 - (c % width) as f64;
                let dy = (p / width) as f64 - (c / width) as f64;
                dx * dx + dy * dy >= min_spacing * min_spacing
            });
            if far_enough {
                picked.push(c);
                continue 'outer;
            }
        }
        break;
    }
    picked
}

/// Random positive clicks on the object and negative clicks in a band around it.
/// Positives come first; ordinals run from 1.
pub fn bundled_clicks<R: Rng + ?Sized>(
    gt: &BinaryMask,
    rng: &mut R,
    params: &BundledParams,
) -> Result<Vec<Click>> {
    if gt.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = gt.dims();
    let fg: Vec<usize> = (0..w * h).filter(|&i| gt.data()[i]).collect();
    let n_pos = rng.random_range(1..=params.max_positive.max(1));
    let positives = sample_spaced(&fg, n_pos, w, params.min_spacing, rng);

    // distance of each background pixel to the object
    let background = BinaryMask::new(w, h, gt.data().iter().map(|&b| !b).collect())?;
    let dist = edt(&background);
    let (near, far) = params.negative_band;
    let band: Vec<usize> = (0..w * h)
        .filter(|&i| !gt.data()[i] && dist[i] >= near && dist[i] <= far)
        .collect();
    let n_neg = rng.random_range(0..=params.max_negative);
    let negatives = if band.is_empty() || n_neg == 0 {
        Vec::new()
    } else {
        sample_spaced(&band, n_neg, w, params.min_spacing, rng)
    };

    let mut clicks = Vec::with_capacity(positives.len() + negatives.len());
    for (i, positive) in positives
        .iter()
        .map(|&i| (i, true))
        .chain(negatives.iter().map(|&i| (i, false)))
    {
        clicks.push(Click {
            x: i % w,
            y: i / w,
            positive,
            ordinal: clicks.len() as u32 + 1,
        });
    }
    Ok(clicks)
}
