//! Guided-filter mask refinement.
//!
//! Window means come from summed-area tables, so the filter costs O(1) per
//! pixel regardless of radius. Windows are clipped at the image border and
//! averaged over the pixels actually inside.

use crate::imgcore::{Image, SoftMask};
use crate::{Error, Result};

/// Summed-area table with a zero first row and column.
#[derive(Clone, Debug)]
pub struct BoxSum {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl BoxSum {
    pub fn new(data: &[f64], width: usize, height: usize) -> Self {
        assert_eq!(data.len(), width * height);
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += data[y * width + x];
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        BoxSum {
            width,
            height,
            table,
        }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0] + self.table[y0 * s + x0]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

fn window(c: usize, r: usize, len: usize) -> (usize, usize) {
    (c.saturating_sub(r), (c + r + 1).min(len))
}

/// Clipped window sums with radius `r`.
pub fn box_sum(data: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let table = BoxSum::new(data, width, height);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1) = window(y, r, height);
        for x in 0..width {
            let (x0, x1) = window(x, r, width);
            out.push(table.sum(x0, y0, x1, y1));
        }
    }
    out
}

/// In-bounds pixel count of each clipped window.
pub fn window_counts(width: usize, height: usize, r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1) = window(y, r, height);
        for x in 0..width {
            let (x0, x1) = window(x, r, width);
            out.push(((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Mean over the `(2r+1)^2` window clipped to the image.
pub fn box_mean(data: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    box_sum(data, width, height, r)
        .into_iter()
        .zip(window_counts(width, height, r))
        .map(|(s, n)| s / n)
        .collect()
}

/// Adjoint of [`box_mean`]: `M^T g = box_sum(g / counts)` since windows are symmetric.
fn box_mean_adjoint(g: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let scaled: Vec<f64> = g
        .iter()
        .zip(window_counts(width, height, r))
        .map(|(v, n)| v / n)
        .collect();
    box_sum(&scaled, width, height, r)
}

/// Filter parameters; the defaults are a 5x5 window and `eps = 1e-4`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GuidedParams {
    pub radius: usize,
    pub eps: f64,
}

impl Default for GuidedParams {
    fn default() -> Self {
        GuidedParams { radius: 2, eps: 1e-4 }
    }
}

impl GuidedParams {
    fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidArgument("guided filter radius must be >= 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("guided filter eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-window linear coefficients and the unclamped output.
struct GuidedFields {
    mean_guide: Vec<f64>,
    var_guide: Vec<f64>,
    output: Vec<f64>,
}

fn guided_fields(guide: &[f64], input: &[f64], width: usize, height: usize, p: GuidedParams) -> GuidedFields {
    let r = p.radius;
    // The filter commutes with adding a constant, so work on `input - input[0]`:
    // a constant input then stays exactly constant.
    let shift = input.first().copied().unwrap_or(0.0);
    let input: Vec<f64> = input.iter().map(|v| v - shift).collect();
    let mean_i = box_mean(guide, width, height, r);
    let mean_p = box_mean(&input, width, height, r);
    let ip: Vec<f64> = guide.iter().zip(&input).map(|(a, b)| a * b).collect();
    let ii: Vec<f64> = guide.iter().map(|a| a * a).collect();
    let mean_ip = box_mean(&ip, width, height, r);
    let mean_ii = box_mean(&ii, width, height, r);
    let n = width * height;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut var_i = vec![0.0; n];
    for k in 0..n {
        let cov = mean_ip[k] - mean_i[k] * mean_p[k];
        var_i[k] = mean_ii[k] - mean_i[k] * mean_i[k];
        a[k] = cov / (var_i[k] + p.eps);
        b[k] = mean_p[k] - a[k] * mean_i[k];
    }
    let mean_a = box_mean(&a, width, height, r);
    let mean_b = box_mean(&b, width, height, r);
    let output = (0..n).map(|i| mean_a[i] * guide[i] + mean_b[i] + shift).collect();
    GuidedFields {
        mean_guide: mean_i,
        var_guide: var_i,
        output,
    }
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Guided filter over raw planes, clamped to `[0, 1]`.
pub fn guided_filter_raw(guide: &[f64], input: &[f64], width: usize, height: usize, params: GuidedParams) -> Result<Vec<f64>> {
    params.validate()?;
    if guide.len() != width * height || input.len() != width * height {
        return Err(Error::Shape("guided filter planes must be width*height long".into()));
    }
    Ok(guided_fields(guide, input, width, height, params)
        .output
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect())
}

/// Refine `input` with a grayscale guide.
pub fn guided_filter(guide: &SoftMask, input: &SoftMask, params: GuidedParams) -> Result<SoftMask> {
    check_dims(guide.dims(), input.dims())?;
    let (w, h) = input.dims();
    let out = guided_filter_raw(&to_f64(guide.data()), &to_f64(input.data()), w, h, params)?;
    SoftMask::new(w, h, out.into_iter().map(|v| v as f32).collect())
}

/// Refine `input` guided by the luminance of a colour image.
pub fn guided_filter_image(guide: &Image, input: &SoftMask, params: GuidedParams) -> Result<SoftMask> {
    check_dims(guide.dims(), input.dims())?;
    guided_filter(&guide.luminance(), input, params)
}

/// Gradient of `sum(g * clamp(q))` with respect to the filtered input.
///
/// With the guide fixed the filter is linear in its input, so this is the
/// exact adjoint. The clamp passes gradient where the unclamped output lies
/// strictly inside `(0, 1)`.
pub fn guided_filter_backward(
    guide: &[f64],
    input: &[f64],
    grad_output: &[f64],
    width: usize,
    height: usize,
    params: GuidedParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = width * height;
    if guide.len() != n || input.len() != n || grad_output.len() != n {
        return Err(Error::Shape("guided filter planes must be width*height long".into()));
    }
    let r = params.radius;
    let fields = guided_fields(guide, input, width, height, params);
    let gq: Vec<f64> = (0..n)
        .map(|i| {
            let q = fields.output[i];
            if q > 0.0 && q < 1.0 {
                grad_output[i]
            } else {
                0.0
            }
        })
        .collect();
    // q = M(a) * I + M(b)
    let g_mean_a: Vec<f64> = gq.iter().zip(guide).map(|(g, i)| g * i).collect();
    let g_a = box_mean_adjoint(&g_mean_a, width, height, r);
    let g_b = box_mean_adjoint(&gq, width, height, r);
    // b = mean_p - a * mean_i ; a = (mean_ip - mean_i * mean_p) / (var + eps)
    let mut g_mean_p = vec![0.0; n];
    let mut g_mean_ip = vec![0.0; n];
    for k in 0..n {
        let g_a_total = g_a[k] - g_b[k] * fields.mean_guide[k];
        let inv = 1.0 / (fields.var_guide[k] + params.eps);
        g_mean_ip[k] = g_a_total * inv;
        g_mean_p[k] = g_b[k] - g_a_total * inv * fields.mean_guide[k];
    }
    let from_p = box_mean_adjoint(&g_mean_p, width, height, r);
    let from_ip = box_mean_adjoint(&g_mean_ip, width, height, r);
    Ok((0..n).map(|i| from_p[i] + from_ip[i] * guide[i]).collect())
}
