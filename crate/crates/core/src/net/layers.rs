//! Parameterized layers with cached forward state for the backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{self, ConvGeom, GroupNormCache, StandardizeCache};
use super::tensor::{Real, Tensor};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    NormScale,
    NormShift,
}

/// A named trainable tensor; its gradient buffer is always present.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

impl<T: Real> Param<T> {
    fn new(name: String, kind: ParamKind, tensor: Tensor<T>) -> Self {
        Param {
            name,
            kind,
            tensor: tensor.tracked(),
        }
    }

    pub fn grad(&self) -> &[T] {
        self.tensor.grad().expect("params are tracked")
    }
}

/// Square-kernel convolution, optionally with weight standardization.
#[derive(Clone, Debug)]
pub struct Conv<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geom: ConvGeom,
    pub standardize: bool,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    ws: Option<StandardizeCache<T>>,
}

impl<T: Real> Conv<T> {
    /// Fan-in scaled normal initialization, `std = gain / sqrt(fan_in)`; zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        geom: ConvGeom,
        standardize: bool,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * k * k;
        let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("valid std");
        let w: Vec<T> = (0..cout * fan_in).map(|_| T::of(normal.sample(rng))).collect();
        Conv {
            weight: Param::new(
                format!("{name}.weight"),
                ParamKind::ConvWeight,
                Tensor::from_vec(&[cout, cin, k, k], w).expect("shape"),
            ),
            bias: Param::new(format!("{name}.bias"), ParamKind::ConvBias, Tensor::zeros(&[cout])),
            geom,
            standardize,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let ws = if self.standardize {
            Some(ops::weight_standardize(&self.weight.tensor)?)
        } else {
            None
        };
        let w = ws.as_ref().map_or(&self.weight.tensor, |c| &c.w_hat);
        let y = ops::conv2d(x, w, Some(&self.bias.tensor), self.geom)?;
        Ok((
            y,
            ConvCache {
                input: x.clone(),
                ws,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let w = cache.ws.as_ref().map_or(&self.weight.tensor, |c| &c.w_hat);
        let (dx, dw, db) = ops::conv2d_backward(&cache.input, w, dy, self.geom)?;
        let dw = match &cache.ws {
            Some(ws) => ops::weight_standardize_backward(ws, &dw),
            None => dw,
        };
        self.weight.tensor.accumulate_grad(dw.data());
        self.bias.tensor.accumulate_grad(db.data());
        Ok(dx)
    }
}

/// Group normalization with learned per-channel scale and shift.
#[derive(Clone, Debug)]
pub struct GroupNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub groups: usize,
}

/// Number of groups for `channels`: `min(max_groups, channels)`, reduced
/// until it divides the channel count.
pub fn group_count(channels: usize, max_groups: usize) -> usize {
    let mut g = max_groups.min(channels).max(1);
    while channels % g != 0 {
        g -= 1;
    }
    g
}

impl<T: Real> GroupNorm<T> {
    pub fn new(name: &str, channels: usize, groups: usize) -> Self {
        let ones = Tensor::from_vec(&[channels], vec![T::one(); channels]).expect("shape");
        GroupNorm {
            gamma: Param::new(format!("{name}.gamma"), ParamKind::NormScale, ones),
            beta: Param::new(format!("{name}.beta"), ParamKind::NormShift, Tensor::zeros(&[channels])),
            groups,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, GroupNormCache<T>)> {
        ops::group_norm(x, self.groups, &self.gamma.tensor, &self.beta.tensor)
    }

    pub fn backward(&mut self, cache: &GroupNormCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (dx, dg, db) = ops::group_norm_backward(cache, &self.gamma.tensor, dy)?;
        self.gamma.tensor.accumulate_grad(dg.data());
        self.beta.tensor.accumulate_grad(db.data());
        Ok(dx)
    }
}

/// Where a block's group norm sits relative to its activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormPlacement {
    None,
    /// conv -> GN -> LeakyReLU
    BeforeActivation,
    /// conv -> LeakyReLU -> GN
    AfterActivation,
}

/// Convolution followed by LeakyReLU and an optional group norm.
#[derive(Clone, Debug)]
pub struct Block<T> {
    pub conv: Conv<T>,
    pub norm: Option<GroupNorm<T>>,
    pub placement: NormPlacement,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    conv: ConvCache<T>,
    norm: Option<GroupNormCache<T>>,
    pre_activation: Tensor<T>,
}

impl<T> BlockCache<T> {
    pub fn pre_activation(&self) -> &Tensor<T> {
        &self.pre_activation
    }
}

impl<T: Real> Block<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        let (z, conv) = self.conv.forward(x)?;
        match (self.placement, &self.norm) {
            (NormPlacement::BeforeActivation, Some(norm)) => {
                let (n, nc) = norm.forward(&z)?;
                let y = ops::leaky_relu(&n, self.slope);
                Ok((
                    y,
                    BlockCache {
                        conv,
                        norm: Some(nc),
                        pre_activation: n,
                    },
                ))
            }
            (NormPlacement::AfterActivation, Some(norm)) => {
                let a = ops::leaky_relu(&z, self.slope);
                let (y, nc) = norm.forward(&a)?;
                Ok((
                    y,
                    BlockCache {
                        conv,
                        norm: Some(nc),
                        pre_activation: z,
                    },
                ))
            }
            _ => {
                let y = ops::leaky_relu(&z, self.slope);
                Ok((
                    y,
                    BlockCache {
                        conv,
                        norm: None,
                        pre_activation: z,
                    },
                ))
            }
        }
    }

    pub fn backward(&mut self, cache: &BlockCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let dz = match (self.placement, self.norm.as_mut(), cache.norm.as_ref()) {
            (NormPlacement::BeforeActivation, Some(norm), Some(nc)) => {
                let dn = ops::leaky_relu_backward(&cache.pre_activation, dy, self.slope);
                norm.backward(nc, &dn)?
            }
            (NormPlacement::AfterActivation, Some(norm), Some(nc)) => {
                let da = norm.backward(nc, dy)?;
                ops::leaky_relu_backward(&cache.pre_activation, &da, self.slope)
            }
            _ => ops::leaky_relu_backward(&cache.pre_activation, dy, self.slope),
        };
        self.conv.backward(&cache.conv, &dz)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = vec![&self.conv.weight, &self.conv.bias];
        if let Some(n) = &self.norm {
            p.push(&n.gamma);
            p.push(&n.beta);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = vec![&mut self.conv.weight, &mut self.conv.bias];
        if let Some(n) = &mut self.norm {
            p.push(&mut n.gamma);
            p.push(&mut n.beta);
        }
        p
    }
}

/// Multi-bin average pooling; each branch is a 1x1 conv + LeakyReLU,
/// upsampled back and concatenated after the input channels.
#[derive(Clone, Debug)]
pub struct PyramidPooling<T> {
    pub bins: Vec<usize>,
    pub branches: Vec<Conv<T>>,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct PyramidCache<T> {
    input_hw: (usize, usize),
    branches: Vec<(ConvCache<T>, Tensor<T>)>,
}

impl<T> PyramidCache<T> {
    pub fn pre_activations(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.branches.iter().map(|(_, z)| z)
    }
}

impl<T: Real> PyramidPooling<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        cin: usize,
        branch_width: usize,
        bins: &[usize],
        slope: f64,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let pointwise = ConvGeom {
            stride: 1,
            dilation: 1,
            pad: 0,
        };
        PyramidPooling {
            bins: bins.to_vec(),
            branches: bins
                .iter()
                .map(|b| Conv::new(&format!("{name}.bin{b}"), cin, branch_width, 1, pointwise, false, gain, rng))
                .collect(),
            slope,
        }
    }

    pub fn out_channels(&self, cin: usize) -> usize {
        cin + self.branches.iter().map(Conv::out_channels).sum::<usize>()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PyramidCache<T>)> {
        let (_, _, h, w) = x.dims4()?;
        let mut outs = Vec::with_capacity(self.bins.len());
        let mut caches = Vec::with_capacity(self.bins.len());
        for (&b, conv) in self.bins.iter().zip(&self.branches) {
            let pooled = ops::adaptive_avg_pool(x, b)?;
            let (z, cc) = conv.forward(&pooled)?;
            let a = ops::leaky_relu(&z, self.slope);
            outs.push(ops::resize_bilinear(&a, h, w)?);
            caches.push((cc, z));
        }
        let mut parts: Vec<&Tensor<T>> = vec![x];
        parts.extend(outs.iter());
        Ok((
            ops::concat_channels(&parts)?,
            PyramidCache {
                input_hw: (h, w),
                branches: caches,
            },
        ))
    }

    pub fn backward(&mut self, cache: &PyramidCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = cache.input_hw;
        let cin = dy.shape()[1] - self.branches.iter().map(Conv::out_channels).sum::<usize>();
        let mut widths = vec![cin];
        widths.extend(self.branches.iter().map(Conv::out_channels));
        let mut grads = ops::split_channels(dy, &widths)?.into_iter();
        let mut dx = grads.next().expect("identity part");
        for ((conv, (cc, z)), (g, &b)) in self
            .branches
            .iter_mut()
            .zip(&cache.branches)
            .zip(grads.zip(&self.bins))
        {
            let da = ops::resize_bilinear_backward(&g, b, b)?;
            let dz = ops::leaky_relu_backward(z, &da, self.slope);
            let dpooled = conv.backward(cc, &dz)?;
            dx.add_assign(&ops::adaptive_avg_pool_backward(&dpooled, h, w)?);
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.branches.iter().flat_map(|c| [&c.weight, &c.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.branches
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }
}
