//! The two-stream segmentation network.
//!
//! Image stream: RGB + click maps through four strided conv blocks (output
//! stride 8) and a dilated context conv, all weight-standardized with group
//! norm. Interaction stream: click maps + previous mask through six plain
//! conv blocks with strides 1, 2, 1, 2, 2, 1. Both streams meet in pyramid
//! pooling, then a U-Net style decoder with skips from both streams at
//! strides 4 and 2 and from the raw inputs at full resolution. The head is a
//! 1x1 conv clipped to `[0, 1]`.
//!
//! Channel widths are the reference widths scaled by `width_multiplier`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{group_count, Block, BlockCache, Conv, ConvCache, GroupNorm, NormPlacement, Param, PyramidCache, PyramidPooling};
use super::ops::{self, ConvGeom};
use super::tensor::{Real, Tensor};
use crate::clicks::{ClickEncoding, DEFAULT_SIGMAS};
use crate::guided::{guided_filter_image, GuidedParams};
use crate::imgcore::{Image, SoftMask};
use crate::{Error, Result};

const IMAGE_STREAM_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
const INTERACTION_WIDTHS: [usize; 6] = [64, 128, 256, 256, 256, 256];
const INTERACTION_STRIDES: [usize; 6] = [1, 2, 1, 2, 2, 1];
const PYRAMID_BRANCH_WIDTH: usize = 256;
/// Variance floor of the per-image colour standardization at the input.
const INPUT_EPS: f64 = 1e-3;
const DECODER_WIDTHS: [usize; 6] = [256, 256, 256, 64, 32, 16];

/// Architecture and inference settings; echoed into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub width_multiplier: f64,
    /// Lower bound on every scaled layer width.
    pub min_channels: usize,
    /// Click-encoding Gaussian widths in pixels.
    pub sigmas: [f32; 3],
    pub pyramid_bins: Vec<usize>,
    /// Group-norm groups per layer are `min(max_groups, channels)`.
    pub max_groups: usize,
    pub leaky_slope: f64,
    /// Initial bias of the output conv, so training starts inside the clip range.
    pub head_bias: f64,
    /// Guided-filter refinement applied to predictions at inference.
    pub guided: Option<GuidedParams>,
    /// Back-propagate through the guided filter during training (experimental).
    pub guided_in_training: bool,
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            width_multiplier: 0.25,
            min_channels: 16,
            sigmas: DEFAULT_SIGMAS,
            pyramid_bins: vec![1, 2, 4],
            max_groups: 32,
            leaky_slope: 0.01,
            head_bias: 0.5,
            guided: None,
            guided_in_training: false,
            init_seed: 0,
        }
    }
}

impl NetConfig {
    fn scaled(&self, w: usize) -> usize {
        ((w as f64 * self.width_multiplier).round() as usize).max(self.min_channels).max(1)
    }

    /// Input sides must be multiples of this.
    pub const STRIDE: usize = 8;

    /// Smallest accepted input side.
    pub fn min_side(&self) -> usize {
        Self::STRIDE * self.pyramid_bins.iter().copied().max().unwrap_or(1)
    }
}

/// Network inputs as `(1, C, H, W)` tensors.
#[derive(Clone, Debug)]
pub struct NetInputs<T> {
    pub image: Tensor<T>,
    pub clicks: Tensor<T>,
    pub prev_mask: Tensor<T>,
}

impl<T: Real> NetInputs<T> {
    pub fn new(image: &Image, clicks: &ClickEncoding, prev_mask: &SoftMask) -> Result<Self> {
        let (w, h) = image.dims();
        if (clicks.width(), clicks.height()) != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: (clicks.width(), clicks.height()),
            });
        }
        if prev_mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: prev_mask.dims(),
            });
        }
        Ok(NetInputs {
            image: Tensor::from_f32(&[1, 3, h, w], image.data())?,
            clicks: Tensor::from_f32(&[1, ClickEncoding::CHANNELS, h, w], clicks.data())?,
            prev_mask: Tensor::from_f32(&[1, 1, h, w], prev_mask.data())?,
        })
    }

    pub fn spatial(&self) -> (usize, usize) {
        let s = self.image.shape();
        (s[2], s[3])
    }
}

#[derive(Clone, Debug)]
pub struct MicroSegNet<T> {
    config: NetConfig,
    image_blocks: Vec<Block<T>>,
    interaction_blocks: Vec<Block<T>>,
    pyramid: PyramidPooling<T>,
    decoder: Vec<Block<T>>,
    head: Conv<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    hw: (usize, usize),
    image_caches: Vec<BlockCache<T>>,
    interaction_caches: Vec<BlockCache<T>>,
    pyramid_cache: PyramidCache<T>,
    decoder_caches: Vec<BlockCache<T>>,
    head_cache: ConvCache<T>,
    logits: Tensor<T>,
    widths: TapeWidths,
}

#[derive(Clone, Debug)]
struct TapeWidths {
    img2: usize,
    img3: usize,
    int2: usize,
    int4: usize,
    int6: usize,
    pyramid: usize,
    dec2: usize,
    dec3: usize,
    dec4: usize,
}

impl<T: Real> Tape<T> {
    /// Pre-clip output of the network.
    pub fn logits(&self) -> &Tensor<T> {
        &self.logits
    }

    /// Sign pattern of every non-smooth point (activations and the output
    /// clip). Finite differences are only meaningful between parameter values
    /// that share a pattern.
    pub fn activation_pattern(&self) -> Vec<u8> {
        let mut bits = Vec::new();
        let blocks = self
            .image_caches
            .iter()
            .chain(&self.interaction_caches)
            .chain(&self.decoder_caches)
            .map(BlockCache::pre_activation)
            .chain(self.pyramid_cache.pre_activations());
        for t in blocks {
            bits.extend(t.data().iter().map(|&v| u8::from(v > T::zero())));
        }
        bits.extend(self.logits.data().iter().map(|&v| {
            if v < T::zero() {
                0
            } else if v > T::one() {
                2
            } else {
                1
            }
        }));
        bits
    }
}

impl<T: Real> MicroSegNet<T> {
    pub fn new(config: NetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let slope = config.leaky_slope;
        let gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let max_groups = config.max_groups;
        let conv3 = |stride: usize, dilation: usize| ConvGeom {
            stride,
            dilation,
            pad: dilation,
        };
        let block = |name: &str,
                     cin: usize,
                     cout: usize,
                     geom: ConvGeom,
                     placement: NormPlacement,
                     rng: &mut ChaCha8Rng| {
            let normed = placement != NormPlacement::None;
            Block {
                conv: Conv::new(name, cin, cout, 3, geom, normed, gain, rng),
                norm: normed.then(|| GroupNorm::new(&format!("{name}.gn"), cout, group_count(cout, max_groups))),
                placement,
                slope,
            }
        };

        let iw: Vec<usize> = IMAGE_STREAM_WIDTHS.iter().map(|&w| config.scaled(w)).collect();
        let image_strides = [1, 2, 2, 2];
        let mut image_blocks = Vec::new();
        let mut cin = 3 + ClickEncoding::CHANNELS;
        for (i, &stride) in image_strides.iter().enumerate() {
            image_blocks.push(block(
                &format!("image.block{}", i + 1),
                cin,
                iw[i],
                conv3(stride, 1),
                NormPlacement::BeforeActivation,
                &mut rng,
            ));
            cin = iw[i];
        }
        image_blocks.push(block("image.context", cin, iw[4], conv3(1, 2), NormPlacement::BeforeActivation, &mut rng));

        let sw: Vec<usize> = INTERACTION_WIDTHS.iter().map(|&w| config.scaled(w)).collect();
        let mut interaction_blocks = Vec::new();
        let mut cin = ClickEncoding::CHANNELS + 1;
        for (i, &stride) in INTERACTION_STRIDES.iter().enumerate() {
            interaction_blocks.push(block(
                &format!("interaction.conv{}", i + 1),
                cin,
                sw[i],
                conv3(stride, 1),
                NormPlacement::None,
                &mut rng,
            ));
            cin = sw[i];
        }

        let pyramid = PyramidPooling::new(
            "pyramid",
            iw[4],
            config.scaled(PYRAMID_BRANCH_WIDTH),
            &config.pyramid_bins,
            slope,
            gain,
            &mut rng,
        );

        let dw: Vec<usize> = DECODER_WIDTHS.iter().map(|&w| config.scaled(w)).collect();
        let dec_in = [
            pyramid.out_channels(iw[4]) + sw[5],
            dw[0],
            dw[1] + iw[2] + sw[3],
            dw[2] + iw[1] + sw[1],
            dw[3] + 3 + ClickEncoding::CHANNELS,
            dw[4],
        ];
        let mut decoder = Vec::new();
        for i in 0..6 {
            let placement = if i < 4 {
                NormPlacement::AfterActivation
            } else {
                NormPlacement::None
            };
            decoder.push(block(
                &format!("decoder.conv{}", i + 1),
                dec_in[i],
                dw[i],
                conv3(1, 1),
                placement,
                &mut rng,
            ));
        }
        let pointwise = ConvGeom {
            stride: 1,
            dilation: 1,
            pad: 0,
        };
        let mut head = Conv::new("decoder.conv7", dw[5], 1, 1, pointwise, false, 1.0, &mut rng);
        head.bias.tensor.data_mut()[0] = T::of(config.head_bias);

        MicroSegNet {
            config,
            image_blocks,
            interaction_blocks,
            pyramid,
            decoder,
            head,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut NetConfig {
        &mut self.config
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p: Vec<&Param<T>> = Vec::new();
        for b in &self.image_blocks {
            p.extend(b.params());
        }
        for b in &self.interaction_blocks {
            p.extend(b.params());
        }
        p.extend(self.pyramid.params());
        for b in &self.decoder {
            p.extend(b.params());
        }
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p: Vec<&mut Param<T>> = Vec::new();
        for b in &mut self.image_blocks {
            p.extend(b.params_mut());
        }
        for b in &mut self.interaction_blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.pyramid.params_mut());
        for b in &mut self.decoder {
            p.extend(b.params_mut());
        }
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.tensor.zero_grad();
        }
    }

    fn check_input(&self, inputs: &NetInputs<T>) -> Result<()> {
        let (h, w) = inputs.spatial();
        let min = self.config.min_side();
        if h % NetConfig::STRIDE != 0 || w % NetConfig::STRIDE != 0 || h < min || w < min {
            return Err(Error::Shape(format!(
                "network input must be a multiple of {} and at least {min} per side, got {w}x{h}",
                NetConfig::STRIDE
            )));
        }
        if inputs.clicks.shape() != [1, ClickEncoding::CHANNELS, h, w] || inputs.prev_mask.shape() != [1, 1, h, w] {
            return Err(Error::Shape("click or mask input does not match the image".into()));
        }
        Ok(())
    }

    /// Forward pass; the output is `(1, 1, H, W)` in `[0, 1]`.
    pub fn forward(&self, inputs: &NetInputs<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(inputs)?;
        let (h, w) = inputs.spatial();

        let image = ops::standardize_channels(&inputs.image, INPUT_EPS)?;
        let mut x = ops::concat_channels(&[&image, &inputs.clicks])?;
        let mut image_feats = Vec::new();
        let mut image_caches = Vec::new();
        for b in &self.image_blocks {
            let (y, c) = b.forward(&x)?;
            image_caches.push(c);
            image_feats.push(y.clone());
            x = y;
        }

        let mut s = ops::concat_channels(&[&inputs.clicks, &inputs.prev_mask])?;
        let mut int_feats = Vec::new();
        let mut interaction_caches = Vec::new();
        for b in &self.interaction_blocks {
            let (y, c) = b.forward(&s)?;
            interaction_caches.push(c);
            int_feats.push(y.clone());
            s = y;
        }

        let (pooled, pyramid_cache) = self.pyramid.forward(&image_feats[4])?;
        let d0 = ops::concat_channels(&[&pooled, &int_feats[5]])?;
        let mut decoder_caches = Vec::new();
        let (d1, c) = self.decoder[0].forward(&d0)?;
        decoder_caches.push(c);
        let (d2, c) = self.decoder[1].forward(&d1)?;
        decoder_caches.push(c);
        let u2 = ops::resize_bilinear(&d2, h / 4, w / 4)?;
        let c3 = ops::concat_channels(&[&u2, &image_feats[2], &int_feats[3]])?;
        let (d3, c) = self.decoder[2].forward(&c3)?;
        decoder_caches.push(c);
        let u3 = ops::resize_bilinear(&d3, h / 2, w / 2)?;
        let c4 = ops::concat_channels(&[&u3, &image_feats[1], &int_feats[1]])?;
        let (d4, c) = self.decoder[3].forward(&c4)?;
        decoder_caches.push(c);
        let u4 = ops::resize_bilinear(&d4, h, w)?;
        let c5 = ops::concat_channels(&[&u4, &image, &inputs.clicks])?;
        let (d5, c) = self.decoder[4].forward(&c5)?;
        decoder_caches.push(c);
        let (d6, c) = self.decoder[5].forward(&d5)?;
        decoder_caches.push(c);
        let (logits, head_cache) = self.head.forward(&d6)?;
        let out = ops::clip01(&logits);

        let widths = TapeWidths {
            img2: image_feats[1].shape()[1],
            img3: image_feats[2].shape()[1],
            int2: int_feats[1].shape()[1],
            int4: int_feats[3].shape()[1],
            int6: int_feats[5].shape()[1],
            pyramid: pooled.shape()[1],
            dec2: d2.shape()[1],
            dec3: d3.shape()[1],
            dec4: d4.shape()[1],
        };
        Ok((
            out,
            Tape {
                hw: (h, w),
                image_caches,
                interaction_caches,
                pyramid_cache,
                decoder_caches,
                head_cache,
                logits,
                widths,
            },
        ))
    }

    /// Back-propagate `d_out` (gradient of the clipped output) into the
    /// parameter gradient buffers.
    pub fn backward(&mut self, tape: &Tape<T>, d_out: &Tensor<T>) -> Result<()> {
        let (h, w) = tape.hw;
        let wd = &tape.widths;
        let d_logits = ops::clip01_backward(&tape.logits, d_out);
        let dd6 = self.head.backward(&tape.head_cache, &d_logits)?;
        let dd5 = self.decoder[5].backward(&tape.decoder_caches[5], &dd6)?;
        let dc5 = self.decoder[4].backward(&tape.decoder_caches[4], &dd5)?;
        let mut parts = ops::split_channels(&dc5, &[wd.dec4, 3, ClickEncoding::CHANNELS])?.into_iter();
        let du4 = parts.next().expect("split");
        let dd4 = ops::resize_bilinear_backward(&du4, h / 2, w / 2)?;
        let dc4 = self.decoder[3].backward(&tape.decoder_caches[3], &dd4)?;
        let mut parts = ops::split_channels(&dc4, &[wd.dec3, wd.img2, wd.int2])?.into_iter();
        let du3 = parts.next().expect("split");
        let d_img2 = parts.next().expect("split");
        let d_int2 = parts.next().expect("split");
        let dd3 = ops::resize_bilinear_backward(&du3, h / 4, w / 4)?;
        let dc3 = self.decoder[2].backward(&tape.decoder_caches[2], &dd3)?;
        let mut parts = ops::split_channels(&dc3, &[wd.dec2, wd.img3, wd.int4])?.into_iter();
        let du2 = parts.next().expect("split");
        let d_img3 = parts.next().expect("split");
        let d_int4 = parts.next().expect("split");
        let dd2 = ops::resize_bilinear_backward(&du2, h / 8, w / 8)?;
        let dd1 = self.decoder[1].backward(&tape.decoder_caches[1], &dd2)?;
        let dd0 = self.decoder[0].backward(&tape.decoder_caches[0], &dd1)?;
        let mut parts = ops::split_channels(&dd0, &[wd.pyramid, wd.int6])?.into_iter();
        let d_pooled = parts.next().expect("split");
        let d_int6 = parts.next().expect("split");

        // interaction stream, with skip gradients merged at conv4 and conv2
        let mut g = d_int6;
        for i in (0..6).rev() {
            if i == 3 {
                g.add_assign(&d_int4);
            }
            if i == 1 {
                g.add_assign(&d_int2);
            }
            g = self.interaction_blocks[i].backward(&tape.interaction_caches[i], &g)?;
        }

        let mut g = self.pyramid.backward(&tape.pyramid_cache, &d_pooled)?;
        for i in (0..5).rev() {
            if i == 2 {
                g.add_assign(&d_img3);
            }
            if i == 1 {
                g.add_assign(&d_img2);
            }
            g = self.image_blocks[i].backward(&tape.image_caches[i], &g)?;
        }
        Ok(())
    }

    /// Pad (edge replication) to a valid network size, run, crop back.
    pub fn predict_raw(&self, image: &Image, clicks: &ClickEncoding, prev_mask: &SoftMask) -> Result<SoftMask> {
        let (w, h) = image.dims();
        let min = self.config.min_side();
        let pw = w.max(min).next_multiple_of(NetConfig::STRIDE);
        let ph = h.max(min).next_multiple_of(NetConfig::STRIDE);
        let inputs = if (pw, ph) == (w, h) {
            NetInputs::new(image, clicks, prev_mask)?
        } else {
            let img = image.crop_replicate(0, 0, pw, ph);
            let prev = prev_mask.crop_replicate(0, 0, pw, ph);
            let mut enc = Vec::with_capacity(ClickEncoding::CHANNELS * pw * ph);
            for c in 0..ClickEncoding::CHANNELS {
                let plane = clicks.channel(c);
                for y in 0..ph {
                    for x in 0..pw {
                        enc.push(if x < w && y < h { plane[y * w + x] } else { 0.0 });
                    }
                }
            }
            NetInputs {
                image: Tensor::from_f32(&[1, 3, ph, pw], img.data())?,
                clicks: Tensor::from_f32(&[1, ClickEncoding::CHANNELS, ph, pw], &enc)?,
                prev_mask: Tensor::from_f32(&[1, 1, ph, pw], prev.data())?,
            }
        };
        let (out, _) = self.forward(&inputs)?;
        let data = out.data();
        SoftMask::new(
            w,
            h,
            (0..w * h)
                .map(|i| data[(i / w) * pw + i % w].f64() as f32)
                .collect(),
        )
    }

    /// Inference with the optional guided-filter refinement.
    pub fn predict(&self, image: &Image, clicks: &ClickEncoding, prev_mask: &SoftMask) -> Result<SoftMask> {
        let raw = self.predict_raw(image, clicks, prev_mask)?;
        match self.config.guided {
            Some(params) => guided_filter_image(image, &raw, params),
            None => Ok(raw),
        }
    }
}
