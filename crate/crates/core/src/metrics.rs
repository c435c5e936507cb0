//! Evaluation metrics over iterated-click accuracy curves.

use serde::{Deserialize, Serialize};

use crate::imgcore::{binarize, BinaryMask, SoftMask};
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "clickseg-report/1";

/// IoU after each click of one image, for clicks `1..=K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoUCurve {
    pub id: String,
    pub iou: Vec<f64>,
    /// Correction accuracy of each click, `None` where no click was placed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correction: Vec<Option<f64>>,
}

impl IoUCurve {
    pub fn new(id: impl Into<String>, iou: Vec<f64>) -> Self {
        IoUCurve {
            id: id.into(),
            iou,
            correction: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.iou.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iou.is_empty()
    }

    /// IoU after `n` clicks (1-based).
    pub fn at(&self, n: usize) -> f64 {
        self.iou[n - 1]
    }
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `|pred & gt| / |pred | gt|`; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    iou_valid(pred, gt, None)
}

/// IoU restricted to the pixels marked in `valid`.
pub fn iou_valid(pred: &BinaryMask, gt: &BinaryMask, valid: Option<&BinaryMask>) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    if let Some(v) = valid {
        check_dims(gt.dims(), v.dims())?;
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if valid.is_some_and(|v| !v.data()[i]) {
            continue;
        }
        inter += u64::from(p && g);
        union += u64::from(p || g);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Smallest click count reaching `threshold`, or the curve length when never reached.
pub fn noc(curve: &IoUCurve, threshold: f64) -> usize {
    curve
        .iou
        .iter()
        .position(|&v| v >= threshold)
        .map_or(curve.len(), |i| i + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub mean: f64,
    /// Normal-approximation 95% half-width, `1.96 * s / sqrt(n)`.
    pub ci95_normal: f64,
}

/// Per-image area under the curve: the mean IoU over its clicks.
pub fn curve_auc(curve: &IoUCurve) -> f64 {
    curve.iou.iter().sum::<f64>() / curve.len() as f64
}

/// Mean per-image AuC with a 95% normal confidence half-width.
pub fn auc(curves: &[IoUCurve]) -> Result<AucSummary> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("auc of an empty curve set".into()));
    }
    if let Some(c) = curves.iter().find(|c| c.is_empty()) {
        return Err(Error::InvalidArgument(format!("curve {} is empty", c.id)));
    }
    let per_image: Vec<f64> = curves.iter().map(curve_auc).collect();
    let n = per_image.len() as f64;
    let mean = per_image.iter().sum::<f64>() / n;
    let ci95_normal = if per_image.len() < 2 {
        0.0
    } else {
        // Shifted by the first value so identical curves give exactly zero spread.
        let d: Vec<f64> = per_image.iter().map(|a| a - per_image[0]).collect();
        let d_mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - d_mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * var.sqrt() / n.sqrt()
    };
    Ok(AucSummary { mean, ci95_normal })
}

/// Fraction of the clicked region that the new prediction labels correctly.
pub fn correction_accuracy(new_pred: &SoftMask, gt: &BinaryMask, click_region: &BinaryMask) -> Result<f64> {
    check_dims(gt.dims(), new_pred.dims())?;
    check_dims(gt.dims(), click_region.dims())?;
    let region = click_region.count();
    if region == 0 {
        return Err(Error::InvalidArgument("empty click region".into()));
    }
    let bin = binarize(new_pred, 0.5);
    let fixed = click_region
        .data()
        .iter()
        .zip(bin.data().iter().zip(gt.data()))
        .filter(|(&r, (&p, &g))| r && p == g)
        .count();
    Ok(fixed as f64 / region as f64)
}

/// [`correction_accuracy`] with the precondition that the region was
/// entirely mislabeled by `prev_pred`.
pub fn correction_accuracy_checked(
    prev_pred: &SoftMask,
    new_pred: &SoftMask,
    gt: &BinaryMask,
    click_region: &BinaryMask,
) -> Result<f64> {
    check_dims(gt.dims(), prev_pred.dims())?;
    let prev = binarize(prev_pred, 0.5);
    let all_wrong = click_region
        .data()
        .iter()
        .zip(prev.data().iter().zip(gt.data()))
        .all(|(&r, (&p, &g))| !r || p != g);
    if !all_wrong {
        return Err(Error::InvalidArgument(
            "click region was not entirely mislabeled by the previous prediction".into(),
        ));
    }
    correction_accuracy(new_pred, gt, click_region)
}

/// Entry `[t][n]` is the fraction of curves with `curve[clicks[n]] >= thresholds[t]`.
pub fn threshold_proportions(curves: &[IoUCurve], thresholds: &[f64], clicks: &[usize]) -> Result<Vec<Vec<f64>>> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0,1]")));
    }
    for &n in clicks {
        if n == 0 || curves.iter().any(|c| n > c.len()) {
            return Err(Error::InvalidArgument(format!("click index {n} out of range")));
        }
    }
    let total = curves.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            clicks
                .iter()
                .map(|&n| {
                    if curves.is_empty() {
                        0.0
                    } else {
                        curves.iter().filter(|c| c.at(n) >= t).count() as f64 / total
                    }
                })
                .collect()
        })
        .collect())
}

/// Pointwise mean of equal-length curves.
pub fn mean_curve(curves: &[IoUCurve]) -> Vec<f64> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let n = curves.len() as f64;
    (0..first.len())
        .map(|k| curves.iter().map(|c| c.iou[k]).sum::<f64>() / n)
        .collect()
}

/// Mean correction accuracy per click over the images where it is defined.
pub fn mean_correction_curve(curves: &[IoUCurve]) -> Vec<Option<f64>> {
    let k = curves.iter().map(|c| c.correction.len()).max().unwrap_or(0);
    (0..k)
        .map(|i| {
            let vals: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.correction.get(i).copied().flatten())
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Free-form method tag used to label plots.
    pub method: String,
    pub seed: u64,
    pub max_clicks: usize,
    pub thresholds: Vec<f64>,
    /// NoC value assigned to images that never reach a threshold.
    pub noc_cap: usize,
    pub guided: bool,
    pub ci: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NocEntry {
    pub threshold: f64,
    pub mean_clicks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub thresholds: Vec<f64>,
    pub clicks: Vec<usize>,
    pub proportions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub config: ReportConfig,
    pub images: Vec<IoUCurve>,
    pub mean_curve: Vec<f64>,
    pub auc: AucSummary,
    pub noc: Vec<NocEntry>,
    pub threshold_proportions: ThresholdTable,
    pub correction_accuracy: Vec<Option<f64>>,
}

impl BenchmarkReport {
    /// Assemble all aggregates from per-image curves (sorted by id first).
    pub fn from_curves(
        method: impl Into<String>,
        seed: u64,
        max_clicks: usize,
        thresholds: &[f64],
        guided: bool,
        mut images: Vec<IoUCurve>,
    ) -> Result<Self> {
        if let Some(c) = images.iter().find(|c| c.len() != max_clicks) {
            return Err(Error::InvalidArgument(format!(
                "curve {} has {} entries, expected {max_clicks}",
                c.id,
                c.len()
            )));
        }
        images.sort_by(|a, b| a.id.cmp(&b.id));
        let noc = thresholds
            .iter()
            .map(|&t| NocEntry {
                threshold: t,
                mean_clicks: images.iter().map(|c| noc(c, t) as f64).sum::<f64>() / images.len() as f64,
            })
            .collect();
        let clicks: Vec<usize> = (1..=max_clicks).collect();
        let proportions = threshold_proportions(&images, thresholds, &clicks)?;
        Ok(BenchmarkReport {
            schema: REPORT_SCHEMA.to_string(),
            config: ReportConfig {
                method: method.into(),
                seed,
                max_clicks,
                thresholds: thresholds.to_vec(),
                noc_cap: max_clicks,
                guided,
                ci: "ci95_normal".into(),
            },
            mean_curve: mean_curve(&images),
            auc: auc(&images)?,
            noc,
            threshold_proportions: ThresholdTable {
                thresholds: thresholds.to_vec(),
                clicks,
                proportions,
            },
            correction_accuracy: mean_correction_curve(&images),
            images,
        })
    }

    /// Recompute every aggregate from the stored per-image curves.
    pub fn recompute(&self) -> Result<Self> {
        Self::from_curves(
            self.config.method.clone(),
            self.config.seed,
            self.config.max_clicks,
            &self.config.thresholds,
            self.config.guided,
            self.images.clone(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: BenchmarkReport = serde_json::from_str(s)?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::InvalidArgument(format!("unknown report schema {}", report.schema)));
        }
        Ok(report)
    }

    /// Flat CSV: `id,iou_1,...,iou_K`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("id");
        for k in 1..=self.config.max_clicks {
            out.push_str(&format!(",iou_{k}"));
        }
        out.push('\n');
        for c in &self.images {
            out.push_str(&csv_field(&c.id));
            for v in &c.iou {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
