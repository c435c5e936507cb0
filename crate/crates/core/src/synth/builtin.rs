//! A procedurally generated asset pack, so training and tests need no files.
//!
//! Foregrounds cycle through three shape families: soft blobs, blobs with thin
//! strands, and shapes punched with a checker of holes. Backgrounds cycle
//! through value noise, stripes, checkerboards and noisy gradients. Every asset
//! is a pure function of its index.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate_manifest, AssetLibrary, ForegroundAsset, ManifestEntry, SynthConfig};
use crate::imgcore::{Image, SoftMask};
use crate::Result;

/// Number of foregrounds and backgrounds in the pack.
pub const PACK_SIZE: usize = 40;
/// Foreground side in pixels.
pub const FG_SIDE: usize = 96;
/// Background side in pixels.
pub const BG_SIDE: usize = 128;

/// Parse `builtin:<kind><N>`.
pub fn parse_id(id: &str, kind: &str) -> Option<usize> {
    id.strip_prefix("builtin:")?.strip_prefix(kind)?.parse().ok()
}

pub fn fg_id(i: usize) -> String {
    format!("builtin:fg{i}")
}

pub fn bg_id(i: usize) -> String {
    format!("builtin:bg{i}")
}

fn rng_for(kind: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(kind.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64)
}

fn smoothstep(e0: f32, e1: f32, x: f32) -> f32 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn random_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    std::array::from_fn(|_| rng.random_range(0.05..0.95))
}

/// Smooth random field in [0, 1] on a `cells` x `cells` lattice.
struct ValueNoise {
    cells: usize,
    values: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let values = (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f32>()).collect();
        ValueNoise { cells, values }
    }

    fn at(&self, u: f32, v: f32) -> f32 {
        let n = self.cells;
        let x = (u * n as f32).clamp(0.0, n as f32 - 1e-4);
        let y = (v * n as f32).clamp(0.0, n as f32 - 1e-4);
        let (x0, y0) = (x as usize, y as usize);
        let (tx, ty) = (smoothstep(0.0, 1.0, x - x0 as f32), smoothstep(0.0, 1.0, y - y0 as f32));
        let g = |i: usize, j: usize| self.values[j * (n + 1) + i];
        let a = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
        let b = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
        a * (1.0 - ty) + b * ty
    }
}

fn fractal(rng: &mut ChaCha8Rng, base_cells: usize) -> impl Fn(f32, f32) -> f32 {
    let octaves: Vec<ValueNoise> = (0..3).map(|o| ValueNoise::new(rng, base_cells << o)).collect();
    move |u, v| {
        let mut acc = 0.0;
        let mut amp = 0.5;
        let mut norm = 0.0;
        for o in &octaves {
            acc += amp * o.at(u, v);
            norm += amp;
            amp *= 0.5;
        }
        acc / norm
    }
}

fn blob_field(rng: &mut ChaCha8Rng) -> impl Fn(f32, f32) -> f32 {
    let n = rng.random_range(2..=5);
    let lobes: Vec<(f32, f32, f32)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.35..0.65),
                rng.random_range(0.35..0.65),
                rng.random_range(0.10..0.18),
            )
        })
        .collect();
    move |u, v| {
        lobes
            .iter()
            .map(|&(cx, cy, r)| (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * r * r)).exp())
            .sum()
    }
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Foreground `index` of the pack.
pub fn foreground(index: usize) -> ForegroundAsset {
    let mut rng = rng_for(1, index);
    let side = FG_SIDE;
    let px = 1.0 / side as f32;
    let field = blob_field(&mut rng);
    let threshold = 0.6f32;
    let soft = rng.random_range(0.03..0.12);
    let body = |u: f32, v: f32| smoothstep(threshold - soft, threshold + soft, field(u, v));

    let alpha: Vec<f32> = match index % 3 {
        0 => (0..side * side)
            .map(|i| body(((i % side) as f32 + 0.5) * px, ((i / side) as f32 + 0.5) * px))
            .collect(),
        1 => {
            let strands: Vec<Vec<(f32, f32)>> = (0..rng.random_range(5..10))
                .map(|_| {
                    let mut angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
                    let mut p = (0.5f32, 0.5f32);
                    let mut pts = vec![p];
                    for _ in 0..6 {
                        angle += rng.random_range(-0.5..0.5);
                        p = (p.0 + 0.075 * angle.cos(), p.1 + 0.075 * angle.sin());
                        pts.push((p.0.clamp(0.02, 0.98), p.1.clamp(0.02, 0.98)));
                    }
                    pts
                })
                .collect();
            let width = rng.random_range(1.5..2.5) * px;
            (0..side * side)
                .map(|i| {
                    let p = (((i % side) as f32 + 0.5) * px, ((i / side) as f32 + 0.5) * px);
                    let d = strands
                        .iter()
                        .flat_map(|s| s.windows(2).map(move |w| dist_to_segment(p, w[0], w[1])))
                        .fold(f32::INFINITY, f32::min);
                    let strand = (1.0 - (d - width).max(0.0) / (1.5 * px)).clamp(0.0, 1.0);
                    body(p.0, p.1).max(strand)
                })
                .collect()
        }
        _ => {
            let cell = rng.random_range(14..22) as f32 * px;
            let hole = rng.random_range(0.45..0.7);
            let r = rng.random_range(0.32..0.46);
            (0..side * side)
                .map(|i| {
                    let (u, v) = (((i % side) as f32 + 0.5) * px, ((i / side) as f32 + 0.5) * px);
                    let disc = smoothstep(r + 1.5 * px, r - 1.5 * px, ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt());
                    let (cu, cv) = ((u / cell).floor() as i64, (v / cell).floor() as i64);
                    let (fu, fv) = ((u / cell).fract() - 0.5, (v / cell).fract() - 0.5);
                    let in_hole = (cu + cv) % 2 == 0 && fu.abs() < hole / 2.0 && fv.abs() < hole / 2.0;
                    if in_hole {
                        0.0
                    } else {
                        disc
                    }
                })
                .collect()
        }
    };

    let c0 = random_color(&mut rng);
    let c1 = random_color(&mut rng);
    let noise = fractal(&mut rng, 4);
    let color = Image::from_fn(side, side, |x, y| {
        let (u, v) = ((x as f32 + 0.5) * px, (y as f32 + 0.5) * px);
        let t = (0.6 * u + 0.4 * v + 0.4 * (noise(u, v) - 0.5)).clamp(0.0, 1.0);
        std::array::from_fn(|c| (c0[c] * (1.0 - t) + c1[c] * t).clamp(0.0, 1.0))
    });
    let alpha = SoftMask::new(side, side, alpha).expect("alpha within [0, 1]");
    ForegroundAsset::new(fg_id(index), color, alpha).expect("pack foreground is valid")
}

/// Background `index` of the pack.
pub fn background(index: usize) -> Image {
    let mut rng = rng_for(2, index);
    let side = BG_SIDE;
    let px = 1.0 / side as f32;
    let c0 = random_color(&mut rng);
    let c1 = random_color(&mut rng);
    let cells = rng.random_range(3..7);
    let noise = fractal(&mut rng, cells);
    let freq = rng.random_range(4.0..14.0f32);
    let angle = rng.random_range(0.0..std::f32::consts::PI);
    let (ca, sa) = (angle.cos(), angle.sin());
    let kind = index % 4;
    Image::from_fn(side, side, |x, y| {
        let (u, v) = ((x as f32 + 0.5) * px, (y as f32 + 0.5) * px);
        let n = noise(u, v);
        let t = match kind {
            0 => n,
            1 => 0.5 + 0.4 * (std::f32::consts::TAU * freq * (ca * u + sa * v)).sin() + 0.2 * (n - 0.5),
            2 => {
                let (i, j) = ((u * freq).floor() as i64, (v * freq).floor() as i64);
                if (i + j) % 2 == 0 {
                    0.15 + 0.3 * n
                } else {
                    0.55 + 0.3 * n
                }
            }
            _ => 0.7 * (ca * u + sa * v).rem_euclid(1.0) + 0.3 * n,
        }
        .clamp(0.0, 1.0);
        std::array::from_fn(|c| (c0[c] * (1.0 - t) + c1[c] * t).clamp(0.0, 1.0))
    })
}

/// Foregrounds `0..TOY_TRAIN_FG` feed the toy training split; the rest are held out.
pub const TOY_TRAIN_FG: usize = 32;
/// Composites in the toy training split.
pub const TOY_TRAIN_SIZE: usize = 32;
/// Composites in the held-out toy split.
pub const TOY_HELDOUT_SIZE: usize = 8;

/// The toy benchmark: a training manifest over the first 32 foregrounds and
/// backgrounds, and a held-out manifest over the remaining 8 of each.
pub fn toy_split(seed: u64) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    let lib = AssetLibrary::default();
    let cfg = SynthConfig::default();
    let ids = |f: fn(usize) -> String, r: std::ops::Range<usize>| r.map(f).collect::<Vec<_>>();
    let train = generate_manifest(
        &lib,
        &ids(fg_id, 0..TOY_TRAIN_FG),
        &ids(bg_id, 0..TOY_TRAIN_FG),
        TOY_TRAIN_SIZE,
        seed,
        &cfg,
    )?;
    let heldout = generate_manifest(
        &lib,
        &ids(fg_id, TOY_TRAIN_FG..PACK_SIZE),
        &ids(bg_id, TOY_TRAIN_FG..PACK_SIZE),
        TOY_HELDOUT_SIZE,
        seed.wrapping_add(1),
        &cfg,
    )?;
    Ok((train, heldout))
}

/// Write the pack as `fg/fgNN.png` (RGBA) and `bg/bgNN.png`.
pub fn export(fg_dir: &Path, bg_dir: &Path) -> Result<()> {
    for dir in [fg_dir, bg_dir] {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    }
    for i in 0..PACK_SIZE {
        foreground(i).save_png(&fg_dir.join(format!("fg{i:02}.png")))?;
        background(i).save_png(bg_dir.join(format!("bg{i:02}.png")))?;
    }
    Ok(())
}
