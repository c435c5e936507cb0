//! Differentiable operators on NCHW tensors.
//!
//! Each operator is a forward function plus a backward function that maps the
//! gradient of the output to gradients of the inputs (and parameters).

use super::tensor::{debug_check_finite, gemm, Mat, Real, Tensor};
use crate::{Error, Result};

/// Stride, dilation and zero padding of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvGeom {
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Stride 1, dilation 1, padding that preserves size for kernel `k`.
    pub fn same(k: usize) -> Self {
        ConvGeom {
            stride: 1,
            dilation: 1,
            pad: k / 2,
        }
    }

    pub fn output_len(&self, len: usize, k: usize) -> Result<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = len + 2 * self.pad;
        if padded < span || self.stride == 0 {
            return Err(Error::Shape(format!("kernel span {span} exceeds padded input {padded}")));
        }
        Ok((padded - span) / self.stride + 1)
    }
}

struct ConvShape {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_shape<T: Real>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeom) -> Result<ConvShape> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4()?;
    if wcin != cin {
        return Err(Error::Shape(format!("conv expects {wcin} input channels, got {cin}")));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!("conv kernels must be square and odd, got {kh}x{kw}")));
    }
    Ok(ConvShape {
        n,
        cin,
        h,
        w: wd,
        cout,
        k: kh,
        ho: g.output_len(h, kh)?,
        wo: g.output_len(wd, kw)?,
    })
}

fn is_pointwise(s: &ConvShape, g: ConvGeom) -> bool {
    s.k == 1 && g.stride == 1 && g.pad == 0
}

/// Unfold one sample `(cin, h, w)` into columns `(cin*k*k, ho*wo)`.
fn im2col<T: Real>(x: &[T], s: &ConvShape, g: ConvGeom, cols: &mut [T]) {
    let howo = s.ho * s.wo;
    for c in 0..s.cin {
        let plane = &x[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let row = (c * s.k + ky) * s.k + kx;
                let dst = &mut cols[row * howo..(row + 1) * howo];
                let oy_off = (ky * g.dilation) as isize - g.pad as isize;
                let ox_off = (kx * g.dilation) as isize - g.pad as isize;
                for oy in 0..s.ho {
                    let iy = (oy * g.stride) as isize + oy_off;
                    let drow = &mut dst[oy * s.wo..(oy + 1) * s.wo];
                    if iy < 0 || iy >= s.h as isize {
                        drow.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride) as isize + ox_off;
                        *d = if ix < 0 || ix >= s.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold columns back, accumulating into `dx` of one sample.
fn col2im<T: Real>(cols: &[T], s: &ConvShape, g: ConvGeom, dx: &mut [T]) {
    let howo = s.ho * s.wo;
    for c in 0..s.cin {
        let plane = &mut dx[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let row = (c * s.k + ky) * s.k + kx;
                let src = &cols[row * howo..(row + 1) * howo];
                let oy_off = (ky * g.dilation) as isize - g.pad as isize;
                let ox_off = (kx * g.dilation) as isize - g.pad as isize;
                for oy in 0..s.ho {
                    let iy = (oy * g.stride) as isize + oy_off;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for ox in 0..s.wo {
                        let ix = (ox * g.stride) as isize + ox_off;
                        if ix >= 0 && ix < s.w as isize {
                            drow[ix as usize] += src[oy * s.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation `y = w * x + b`. `w` is `(cout, cin, k, k)`, `b` is `(cout)`.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, g: ConvGeom) -> Result<Tensor<T>> {
    let s = conv_shape(x, w, g)?;
    if let Some(b) = b {
        if b.len() != s.cout {
            return Err(Error::Shape(format!("bias has {} entries for {} outputs", b.len(), s.cout)));
        }
    }
    let howo = s.ho * s.wo;
    let ckk = s.cin * s.k * s.k;
    let mut y = Tensor::zeros(&[s.n, s.cout, s.ho, s.wo]);
    let mut cols = if is_pointwise(&s, g) {
        Vec::new()
    } else {
        vec![T::zero(); ckk * howo]
    };
    for i in 0..s.n {
        let xi = &x.data()[i * s.cin * s.h * s.w..(i + 1) * s.cin * s.h * s.w];
        let yi = &mut y.data_mut()[i * s.cout * howo..(i + 1) * s.cout * howo];
        if let Some(b) = b {
            for (co, chunk) in yi.chunks_mut(howo).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b.data()[co]);
            }
        }
        let colm = if is_pointwise(&s, g) {
            xi
        } else {
            im2col(xi, &s, g, &mut cols);
            &cols
        };
        gemm(Mat::new(w.data(), s.cout, ckk), Mat::new(colm, ckk, howo), yi, b.is_some());
    }
    debug_check_finite(&y, "conv2d");
    Ok(y)
}

/// Gradients of [`conv2d`]: `(dx, dw, db)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    g: ConvGeom,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let s = conv_shape(x, w, g)?;
    if dy.shape() != [s.n, s.cout, s.ho, s.wo] {
        return Err(Error::Shape(format!("conv output gradient has shape {:?}", dy.shape())));
    }
    let howo = s.ho * s.wo;
    let ckk = s.cin * s.k * s.k;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[s.cout]);
    let pointwise = is_pointwise(&s, g);
    let mut cols = vec![T::zero(); if pointwise { 0 } else { ckk * howo }];
    let mut dcols = vec![T::zero(); if pointwise { 0 } else { ckk * howo }];
    for i in 0..s.n {
        let xi = &x.data()[i * s.cin * s.h * s.w..(i + 1) * s.cin * s.h * s.w];
        let dyi = &dy.data()[i * s.cout * howo..(i + 1) * s.cout * howo];
        for (co, chunk) in dyi.chunks(howo).enumerate() {
            db.data_mut()[co] += chunk.iter().copied().sum::<T>();
        }
        let dxi = &mut dx.data_mut()[i * s.cin * s.h * s.w..(i + 1) * s.cin * s.h * s.w];
        if pointwise {
            gemm(Mat::new(dyi, s.cout, howo), Mat::new(xi, ckk, howo).t(), dw.data_mut(), true);
            gemm(Mat::new(w.data(), s.cout, ckk).t(), Mat::new(dyi, s.cout, howo), dxi, true);
        } else {
            im2col(xi, &s, g, &mut cols);
            gemm(Mat::new(dyi, s.cout, howo), Mat::new(&cols, ckk, howo).t(), dw.data_mut(), true);
            gemm(Mat::new(w.data(), s.cout, ckk).t(), Mat::new(dyi, s.cout, howo), &mut dcols, false);
            col2im(&dcols, &s, g, dxi);
        }
    }
    Ok((dx, dw, db))
}

/// Per-output-channel standardization of a `(cout, cin, k, k)` kernel.
#[derive(Clone, Debug)]
pub struct StandardizeCache<T> {
    pub w_hat: Tensor<T>,
    rstd: Vec<T>,
    guarded: Vec<bool>,
}

/// Variance floor: kernels with variance below this are scaled by a constant.
pub const WS_EPS: f64 = 1e-5;

/// `w_hat = (w - mean) / sqrt(var + eps)` over each output channel's fan-in.
pub fn weight_standardize<T: Real>(w: &Tensor<T>) -> Result<StandardizeCache<T>> {
    let cout = *w.shape().first().ok_or_else(|| Error::Shape("empty kernel shape".into()))?;
    let fan_in = w.len() / cout.max(1);
    if fan_in < 2 {
        return Err(Error::Shape("weight standardization needs fan-in >= 2".into()));
    }
    let mut w_hat = Tensor::zeros(w.shape());
    let mut rstd = Vec::with_capacity(cout);
    let mut guarded = Vec::with_capacity(cout);
    let nf = T::of(fan_in as f64);
    for (src, dst) in w.data().chunks(fan_in).zip(w_hat.data_mut().chunks_mut(fan_in)) {
        let mean = src.iter().copied().sum::<T>() / nf;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let floor = var < T::of(WS_EPS);
        let r = T::one() / if floor { T::of(WS_EPS) } else { var }.sqrt();
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = (v - mean) * r;
        }
        rstd.push(r);
        guarded.push(floor);
    }
    Ok(StandardizeCache { w_hat, rstd, guarded })
}

/// Gradient of [`weight_standardize`] with respect to the raw kernel.
pub fn weight_standardize_backward<T: Real>(cache: &StandardizeCache<T>, d_hat: &Tensor<T>) -> Tensor<T> {
    let cout = cache.rstd.len();
    let fan_in = cache.w_hat.len() / cout;
    let nf = T::of(fan_in as f64);
    let mut dw = Tensor::zeros(cache.w_hat.shape());
    for o in 0..cout {
        let xh = &cache.w_hat.data()[o * fan_in..(o + 1) * fan_in];
        let dh = &d_hat.data()[o * fan_in..(o + 1) * fan_in];
        let sum_d = dh.iter().copied().sum::<T>();
        let sum_dx = dh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        let r = cache.rstd[o];
        let dst = &mut dw.data_mut()[o * fan_in..(o + 1) * fan_in];
        if cache.guarded[o] {
            for (d, &a) in dst.iter_mut().zip(dh) {
                *d = r * (a - sum_d / nf);
            }
            continue;
        }
        for ((d, &a), &b) in dst.iter_mut().zip(dh).zip(xh) {
            *d = r / nf * (nf * a - sum_d - b * sum_dx);
        }
    }
    dw
}

/// Per-sample, per-channel standardization without learned parameters,
/// `(x - mean) / sqrt(var + eps)` over the spatial extent.
pub fn standardize_channels<T: Real>(x: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    let (_, _, h, w) = x.dims4()?;
    let hw = h * w;
    let mut y = x.clone();
    let nf = T::of(hw as f64);
    for plane in y.data_mut().chunks_mut(hw) {
        let mean = plane.iter().copied().sum::<T>() / nf;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let r = T::one() / (var + T::of(eps)).sqrt();
        for v in plane.iter_mut() {
            *v = (*v - mean) * r;
        }
    }
    Ok(y)
}

pub const GN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GroupNormCache<T> {
    x_hat: Tensor<T>,
    rstd: Vec<T>,
    groups: usize,
}

/// Group normalization with per-channel affine `gamma`, `beta`.
pub fn group_norm<T: Real>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, GroupNormCache<T>)> {
    let (n, c, h, w) = x.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Shape(format!("{c} channels are not divisible into {groups} groups")));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape("group norm affine parameters must have one entry per channel".into()));
    }
    let cpg = c / groups;
    let hw = h * w;
    let m = cpg * hw;
    let nm = T::of(m as f64);
    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let mut rstd = Vec::with_capacity(n * groups);
    for i in 0..n {
        for gi in 0..groups {
            let off = (i * c + gi * cpg) * hw;
            let src = &x.data()[off..off + m];
            let mean = src.iter().copied().sum::<T>() / nm;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nm;
            let r = T::one() / (var + T::of(GN_EPS)).sqrt();
            rstd.push(r);
            for j in 0..m {
                let ch = gi * cpg + j / hw;
                let xh = (src[j] - mean) * r;
                x_hat.data_mut()[off + j] = xh;
                y.data_mut()[off + j] = xh * gamma.data()[ch] + beta.data()[ch];
            }
        }
    }
    debug_check_finite(&y, "group_norm");
    Ok((y, GroupNormCache { x_hat, rstd, groups }))
}

/// Gradients of [`group_norm`]: `(dx, dgamma, dbeta)`.
pub fn group_norm_backward<T: Real>(
    cache: &GroupNormCache<T>,
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = cache.x_hat.dims4()?;
    let groups = cache.groups;
    let cpg = c / groups;
    let hw = h * w;
    let m = cpg * hw;
    let nm = T::of(m as f64);
    let mut dx = Tensor::zeros(cache.x_hat.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let mut dxh = vec![T::zero(); m];
    for i in 0..n {
        for gi in 0..groups {
            let off = (i * c + gi * cpg) * hw;
            let xh = &cache.x_hat.data()[off..off + m];
            let d = &dy.data()[off..off + m];
            for j in 0..m {
                let ch = gi * cpg + j / hw;
                dgamma.data_mut()[ch] += d[j] * xh[j];
                dbeta.data_mut()[ch] += d[j];
                dxh[j] = d[j] * gamma.data()[ch];
            }
            let sum_d = dxh.iter().copied().sum::<T>();
            let sum_dx = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
            let r = cache.rstd[i * groups + gi];
            for j in 0..m {
                dx.data_mut()[off + j] = r / nm * (nm * dxh[j] - sum_d - xh[j] * sum_dx);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::of(slope);
    x.map(|v| if v > T::zero() { v } else { v * s })
}

/// Uses the pre-activation `x`; the derivative at exactly 0 is taken as `slope`.
pub fn leaky_relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::of(slope);
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *d *= s;
        }
    }
    dx
}

pub fn clip01<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()).min(T::one()))
}

/// Subgradient 1 on `[0, 1]`, 0 outside.
pub fn clip01_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v < T::zero() || v > T::one() {
            *d = T::zero();
        }
    }
    dx
}

/// Source taps for half-pixel-centre bilinear resizing along one axis.
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize to `(out_h, out_w)` with half-pixel centres (no corner alignment).
pub fn resize_bilinear<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("resize target must be nonempty".into()));
    }
    let ty = bilinear_taps(out_h, h);
    let tx = bilinear_taps(out_w, w);
    let mut y = Tensor::zeros(&[n, c, out_h, out_w]);
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut y.data_mut()[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                dst[oy * out_w + ox] = hy * (hx * src[y0 * w + x0] + lx * src[y0 * w + x1])
                    + ly * (hx * src[y1 * w + x0] + lx * src[y1 * w + x1]);
            }
        }
    }
    Ok(y)
}

/// Gradient of [`resize_bilinear`] back to an `(h, w)` input.
pub fn resize_bilinear_backward<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c, out_h, out_w) = dy.dims4()?;
    let ty = bilinear_taps(out_h, h);
    let tx = bilinear_taps(out_w, w);
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    for p in 0..n * c {
        let src = &dy.data()[p * out_h * out_w..(p + 1) * out_h * out_w];
        let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                let g = src[oy * out_w + ox];
                dst[y0 * w + x0] += g * hy * hx;
                dst[y0 * w + x1] += g * hy * lx;
                dst[y1 * w + x0] += g * ly * hx;
                dst[y1 * w + x1] += g * ly * lx;
            }
        }
    }
    Ok(dx)
}

fn pool_bounds(i: usize, bins: usize, len: usize) -> (usize, usize) {
    (i * len / bins, ((i + 1) * len).div_ceil(bins))
}

/// Adaptive average pooling to `bins x bins`.
pub fn adaptive_avg_pool<T: Real>(x: &Tensor<T>, bins: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if bins == 0 || bins > h || bins > w {
        return Err(Error::Shape(format!("cannot pool {h}x{w} into {bins} bins")));
    }
    let mut y = Tensor::zeros(&[n, c, bins, bins]);
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for by in 0..bins {
            let (y0, y1) = pool_bounds(by, bins, h);
            for bx in 0..bins {
                let (x0, x1) = pool_bounds(bx, bins, w);
                let mut s = T::zero();
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        s += src[yy * w + xx];
                    }
                }
                y.data_mut()[(p * bins + by) * bins + bx] = s / T::of(((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(y)
}

pub fn adaptive_avg_pool_backward<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c, bins, _) = dy.dims4()?;
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    for p in 0..n * c {
        let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
        for by in 0..bins {
            let (y0, y1) = pool_bounds(by, bins, h);
            for bx in 0..bins {
                let (x0, x1) = pool_bounds(bx, bins, w);
                let g = dy.data()[(p * bins + by) * bins + bx] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        dst[yy * w + xx] += g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (n, _, h, w) = parts
        .first()
        .ok_or_else(|| Error::Shape("concat of nothing".into()))?
        .dims4()?;
    let mut total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::Shape(format!(
                "concat spatial mismatch: {:?} vs {:?}",
                p.shape(),
                parts[0].shape()
            )));
        }
        total += pc;
    }
    let mut y = Tensor::zeros(&[n, total, h, w]);
    let hw = h * w;
    for i in 0..n {
        let mut off = i * total * hw;
        for p in parts {
            let pc = p.shape()[1];
            y.data_mut()[off..off + pc * hw].copy_from_slice(&p.data()[i * pc * hw..(i + 1) * pc * hw]);
            off += pc * hw;
        }
    }
    Ok(y)
}

/// Split a channel-concatenated gradient back into parts of the given widths.
pub fn split_channels<T: Real>(dy: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = dy.dims4()?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::Shape(format!("split widths {widths:?} do not sum to {c}")));
    }
    let hw = h * w;
    let mut out: Vec<Tensor<T>> = widths.iter().map(|&pc| Tensor::zeros(&[n, pc, h, w])).collect();
    for i in 0..n {
        let mut off = i * c * hw;
        for (t, &pc) in out.iter_mut().zip(widths) {
            t.data_mut()[i * pc * hw..(i + 1) * pc * hw].copy_from_slice(&dy.data()[off..off + pc * hw]);
            off += pc * hw;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 3], (0..9).map(f64::from).collect()).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let g = ConvGeom {
            stride: 1,
            dilation: 1,
            pad: 0,
        };
        assert_eq!(conv2d(&x, &w, None, g).unwrap().data(), x.data());
    }

    #[test]
    fn ones_kernel_center_is_nine() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 5, 5], vec![1.0; 25]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &w, None, ConvGeom::same(3)).unwrap();
        assert_eq!(y.data()[12], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn strided_dilated_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 2, 12, 12]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let g = ConvGeom {
            stride: 2,
            dilation: 1,
            pad: 1,
        };
        assert_eq!(conv2d(&x, &w, None, g).unwrap().shape(), &[1, 4, 6, 6]);
        let g = ConvGeom {
            stride: 1,
            dilation: 2,
            pad: 2,
        };
        assert_eq!(conv2d(&x, &w, None, g).unwrap().shape(), &[1, 4, 12, 12]);
        assert!(conv2d(&x, &Tensor::zeros(&[4, 3, 3, 3]), None, g).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[4, 2, 2, 2]), None, g).is_err());
    }

    #[test]
    fn group_norm_standardizes() {
        let x = Tensor::<f64>::from_vec(&[1, 4, 2, 2], (0..16).map(|i| (i * i) as f64 * 0.3).collect()).unwrap();
        let gamma = Tensor::from_vec(&[4], vec![1.0; 4]).unwrap();
        let beta = Tensor::zeros(&[4]);
        let (y, _) = group_norm(&x, 2, &gamma, &beta).unwrap();
        for g in y.data().chunks(8) {
            let mean = g.iter().sum::<f64>() / 8.0;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5);
        }
        let c = Tensor::<f64>::from_vec(&[1, 4, 2, 2], vec![3.0; 16]).unwrap();
        assert!(group_norm(&c, 2, &gamma, &beta).unwrap().0.data().iter().all(|&v| v == 0.0));
        assert!(group_norm(&c, 3, &gamma, &beta).is_err());
    }

    #[test]
    fn standardization_is_idempotent_and_guards_constants() {
        let w = Tensor::<f64>::from_vec(&[2, 1, 3, 3], (0..18).map(|i| (i as f64).sin()).collect()).unwrap();
        let once = weight_standardize(&w).unwrap().w_hat;
        let twice = weight_standardize(&once).unwrap().w_hat;
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let c = Tensor::<f64>::from_vec(&[1, 1, 3, 3], vec![0.7; 9]).unwrap();
        assert!(weight_standardize(&c).unwrap().w_hat.data().iter().all(|&v| v.abs() < 1e-12));
        assert!(weight_standardize(&Tensor::<f64>::zeros(&[3, 1, 1, 1])).is_err());
    }

    #[test]
    fn resize_and_pool_constants() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 4, 6], vec![0.25; 24]).unwrap();
        assert!(resize_bilinear(&x, 8, 12).unwrap().data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = adaptive_avg_pool(&x, 4).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(adaptive_avg_pool(&x, 5).is_err());
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f32>::from_vec(&[1, 2, 2, 2], (5..13).map(|v| v as f32).collect()).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2, 2]);
        let parts = split_channels(&c, &[1, 2]).unwrap();
        assert_eq!(parts[0].data(), a.data());
        assert_eq!(parts[1].data(), b.data());
    }
}
