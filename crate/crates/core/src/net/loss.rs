//! Soft-IoU plus click-location loss.
//!
//! `L = 1 - sum(a * g) / sum(max(a, g)) + sum_c (a_c - g_c)^2`
//! where `a` is the prediction, `g` the ground truth and `c` ranges over the
//! clicks placed so far. When both the prediction and the ground truth are
//! empty the union is zero and the IoU term is defined as 0.

use super::tensor::Real;
use crate::clicks::Click;
use crate::imgcore::BinaryMask;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    pub soft_iou: T,
    pub click: T,
    /// Gradient of `total` with respect to each prediction value.
    pub grad: Vec<T>,
}

/// Loss over a prediction plane of `gt.width() * gt.height()` values.
pub fn soft_iou_click_loss<T: Real>(pred: &[T], gt: &BinaryMask, clicks: &[Click]) -> Result<LossValue<T>> {
    let (w, h) = gt.dims();
    if pred.len() != w * h {
        return Err(Error::Shape(format!(
            "prediction has {} values for a {w}x{h} mask",
            pred.len()
        )));
    }
    for c in clicks {
        c.check_bounds(w, h)?;
    }
    let gtv = gt.data();
    let mut inter = T::zero();
    let mut union = T::zero();
    for (&a, &g) in pred.iter().zip(gtv) {
        let g = if g { T::one() } else { T::zero() };
        inter += a * g;
        union += a.max(g);
    }
    let mut grad = vec![T::zero(); pred.len()];
    let soft_iou = if union > T::zero() {
        let u2 = union * union;
        for (i, (&a, &g)) in pred.iter().zip(gtv).enumerate() {
            let g = if g { T::one() } else { T::zero() };
            // d max(a, g) / da taken as 1 when a >= g
            let du = if a >= g { T::one() } else { T::zero() };
            grad[i] = -(g * union - inter * du) / u2;
        }
        T::one() - inter / union
    } else {
        T::zero()
    };
    let mut click = T::zero();
    for c in clicks {
        let i = c.y * w + c.x;
        let g = if gtv[i] { T::one() } else { T::zero() };
        let d = pred[i] - g;
        click += d * d;
        grad[i] += d + d;
    }
    Ok(LossValue {
        total: soft_iou + click,
        soft_iou,
        click,
        grad,
    })
}
