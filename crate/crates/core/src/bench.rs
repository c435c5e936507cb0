//! The iterated-click evaluation protocol.
//!
//! Every image starts from an empty previous mask. At each of `K` steps a
//! click is simulated on the largest error of the previous prediction, the
//! segmenter is queried, and the IoU of its 0.5-binarized output is recorded.
//! When the prediction becomes perfect the remaining entries repeat the last
//! IoU, so every curve has exactly `K` entries.
//!
//! Any [`Segmenter`] can be evaluated: the network, the two reference stubs,
//! or an external program speaking the JSON-lines protocol of
//! [`ExternalSegmenter`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clicks::{encode_clicks, place_click, Click};
use crate::imgcore::{binarize, load_image, load_labeled_mask, load_soft_mask, BinaryMask, Image, SoftMask};
use crate::metrics::{correction_accuracy_checked, iou_valid, BenchmarkReport, IoUCurve};
use crate::net::{MicroSegNet, Real};
use crate::{Error, Result};

/// What a segmenter sees at each step.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRequest<'a> {
    pub image_id: &'a str,
    pub image: &'a Image,
    pub clicks: &'a [Click],
    pub prev_mask: &'a SoftMask,
}

/// Anything that maps (image, clicks, previous mask) to a soft mask.
pub trait Segmenter: Sync {
    fn segment(&self, request: &SegmentRequest<'_>) -> Result<SoftMask>;
}

/// The network as a segmenter. Guided refinement follows the network config.
pub struct NetSegmenter<T> {
    pub net: MicroSegNet<T>,
}

impl<T: Real> Segmenter for NetSegmenter<T> {
    fn segment(&self, r: &SegmentRequest<'_>) -> Result<SoftMask> {
        let (w, h) = r.image.dims();
        let enc = encode_clicks(r.clicks, w, h, self.net.config().sigmas)?;
        self.net.predict(r.image, &enc, r.prev_mask)
    }
}

/// Reference stub that answers with the ground truth.
pub struct OracleStub {
    gts: HashMap<String, BinaryMask>,
}

impl OracleStub {
    pub fn new(dataset: &Dataset) -> Self {
        OracleStub {
            gts: dataset.samples.iter().map(|s| (s.id.clone(), s.gt.clone())).collect(),
        }
    }
}

impl Segmenter for OracleStub {
    fn segment(&self, r: &SegmentRequest<'_>) -> Result<SoftMask> {
        self.gts
            .get(r.image_id)
            .map(BinaryMask::to_soft)
            .ok_or_else(|| Error::InvalidArgument(format!("oracle has no ground truth for {}", r.image_id)))
    }
}

/// Reference stub that always predicts background.
pub struct ZeroStub;

impl Segmenter for ZeroStub {
    fn segment(&self, r: &SegmentRequest<'_>) -> Result<SoftMask> {
        Ok(SoftMask::zeros(r.image.width(), r.image.height()))
    }
}

/// An evaluation image with optional ignore region.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSample {
    pub id: String,
    pub image: Image,
    pub gt: BinaryMask,
    /// Pixels that count; `None` means all of them.
    pub valid: Option<BinaryMask>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<BenchSample>,
}

impl Dataset {
    /// Load `images/<id>.png` with `masks/<id>.png`. Mask value 0 is
    /// background, the maximum value is foreground, anything else is ignored.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let images = dir.join("images");
        let masks = dir.join("masks");
        let mut samples = Vec::new();
        for path in crate::synth::list_assets(&images)? {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::InvalidArgument(format!("bad file name {}", path.display())))?
                .to_string();
            let mask_path = ["png", "pgm", "ppm"]
                .iter()
                .map(|ext| masks.join(format!("{id}.{ext}")))
                .find(|p| p.exists())
                .ok_or_else(|| Error::InvalidArgument(format!("no mask for image {id} in {}", masks.display())))?;
            let image = load_image(&path)?;
            let (gt, valid) = load_labeled_mask(&mask_path)?;
            if image.dims() != gt.dims() {
                return Err(Error::DimensionMismatch {
                    expected: image.dims(),
                    actual: gt.dims(),
                });
            }
            samples.push(BenchSample { id, image, gt, valid });
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument(format!("no images under {}", images.display())));
        }
        Ok(Dataset { samples })
    }

    /// Write the `images/` + `masks/` layout read by [`Dataset::load`].
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["images", "masks"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for s in &self.samples {
            s.image.save_png(dir.join("images").join(format!("{}.png", s.id)))?;
            let (w, h) = s.gt.dims();
            let labels = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                let ignored = s.valid.as_ref().is_some_and(|v| !v.get(x, y));
                image::Luma([if ignored {
                    128
                } else if s.gt.get(x, y) {
                    255
                } else {
                    0
                }])
            });
            let path = dir.join("masks").join(format!("{}.png", s.id));
            labels
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| Error::Decode(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub method: String,
    pub max_clicks: usize,
    pub thresholds: Vec<f64>,
    /// Recorded in the report; refinement itself is a property of the segmenter.
    pub guided: bool,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            method: "clickseg".into(),
            max_clicks: 20,
            thresholds: vec![0.85, 0.90, 0.95, 0.99],
            guided: false,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_clicks == 0 {
            return Err(Error::InvalidArgument("max_clicks must be at least 1".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("thresholds must be sorted".into()));
        }
        Ok(())
    }
}

/// Curve of one image under the protocol.
pub fn evaluate_image(segmenter: &dyn Segmenter, sample: &BenchSample, max_clicks: usize) -> Result<IoUCurve> {
    if sample.gt.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = sample.image.dims();
    let valid = sample.valid.as_ref();
    let mut prev = SoftMask::zeros(w, h);
    let mut clicks: Vec<Click> = Vec::with_capacity(max_clicks);
    let mut iou = Vec::with_capacity(max_clicks);
    let mut correction = Vec::with_capacity(max_clicks);
    for k in 1..=max_clicks {
        let placement = match place_click(&binarize(&prev, 0.5), &sample.gt, valid) {
            Ok(p) => p,
            Err(Error::AlreadyCorrect) => {
                let last = iou.last().copied().unwrap_or(1.0);
                iou.resize(max_clicks, last);
                correction.resize(max_clicks, None);
                break;
            }
            Err(e) => return Err(e),
        };
        clicks.push(placement.click.with_ordinal(k as u32));
        let pred = segmenter.segment(&SegmentRequest {
            image_id: &sample.id,
            image: &sample.image,
            clicks: &clicks,
            prev_mask: &prev,
        })?;
        if pred.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: pred.dims(),
            });
        }
        iou.push(iou_valid(&binarize(&pred, 0.5), &sample.gt, valid)?);
        correction.push(Some(correction_accuracy_checked(&prev, &pred, &sample.gt, &placement.region)?));
        prev = pred;
    }
    Ok(IoUCurve {
        id: sample.id.clone(),
        iou,
        correction,
    })
}

/// Evaluate every image (in parallel) and assemble the report, sorted by id.
pub fn run_protocol(segmenter: &dyn Segmenter, dataset: &Dataset, cfg: &ProtocolConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let curves = dataset
        .samples
        .par_iter()
        .map(|s| evaluate_image(segmenter, s, cfg.max_clicks))
        .collect::<Result<Vec<_>>>()?;
    BenchmarkReport::from_curves(
        cfg.method.clone(),
        cfg.seed,
        cfg.max_clicks,
        &cfg.thresholds,
        cfg.guided,
        curves,
    )
}

/// Request line sent to an external segmenter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub id: String,
    pub image: PathBuf,
    pub clicks: Vec<Click>,
    pub prev_mask: PathBuf,
}

/// Response line: path of an 8- or 16-bit grayscale soft mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub mask: PathBuf,
}

struct ExternalIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    written: HashMap<String, PathBuf>,
    counter: u64,
}

/// A long-running child process answering one JSON request line with one
/// JSON response line. Images and previous masks are handed over as PNG files
/// in a scratch directory.
pub struct ExternalSegmenter {
    io: Mutex<ExternalIo>,
    scratch: tempfile::TempDir,
}

impl ExternalSegmenter {
    pub fn spawn(program: impl AsRef<std::ffi::OsStr>, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program.as_ref())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start {:?}: {e}", program.as_ref())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let scratch = tempfile::tempdir().map_err(|e| Error::External(format!("scratch dir: {e}")))?;
        Ok(ExternalSegmenter {
            io: Mutex::new(ExternalIo {
                child,
                stdin,
                stdout,
                written: HashMap::new(),
                counter: 0,
            }),
            scratch,
        })
    }
}

impl Segmenter for ExternalSegmenter {
    fn segment(&self, r: &SegmentRequest<'_>) -> Result<SoftMask> {
        let mut io = self.io.lock().map_err(|_| Error::External("adapter poisoned".into()))?;
        let image = match io.written.get(r.image_id) {
            Some(p) => p.clone(),
            None => {
                let p = self.scratch.path().join(format!("image-{}.png", io.written.len()));
                r.image.save_png(&p)?;
                io.written.insert(r.image_id.to_string(), p.clone());
                p
            }
        };
        io.counter += 1;
        let prev_mask = self.scratch.path().join(format!("prev-{}.png", io.counter));
        r.prev_mask.save_png(&prev_mask)?;
        let request = ExternalRequest {
            id: r.image_id.to_string(),
            image,
            clicks: r.clicks.to_vec(),
            prev_mask,
        };
        let line = serde_json::to_string(&request)? + "\n";
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::External(format!("write request: {e}")))?;
        let mut reply = String::new();
        let n = io
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::External(format!("read response: {e}")))?;
        if n == 0 {
            return Err(Error::External("segmenter closed its output".into()));
        }
        let response: ExternalResponse = serde_json::from_str(reply.trim())
            .map_err(|e| Error::External(format!("bad response {:?}: {e}", reply.trim())))?;
        let mask = load_soft_mask(&response.mask)?;
        if mask.dims() != r.image.dims() {
            return Err(Error::DimensionMismatch {
                expected: r.image.dims(),
                actual: mask.dims(),
            });
        }
        Ok(mask)
    }
}

impl Drop for ExternalSegmenter {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Mean-IoU-per-click plot with one polyline per report, labelled by method.
pub fn plot_svg(reports: &[BenchmarkReport]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (56.0, 150.0, 20.0, 44.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let kmax = reports.iter().map(|r| r.mean_curve.len()).max().unwrap_or(1).max(2);
    let x = |k: usize| left + pw * (k - 1) as f64 / (kmax - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    s += &format!(
        "<g stroke=\"black\" fill=\"none\"><line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/><line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\"/></g>\n",
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    s += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        s += &format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>\n",
            left - 6.0,
            y(v) + 4.0
        );
    }
    for k in 1..=kmax {
        if k == 1 || k % 5 == 0 {
            s += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{k}</text>\n", x(k), top + ph + 16.0);
        }
    }
    s += &format!(
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">clicks</text>\n<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\">mean IoU</text>\n</g>\n",
        left + pw / 2.0,
        h - 8.0,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = r
            .mean_curve
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{:.2},{:.2}", x(k + 1), y(v)))
            .collect();
        let method = xml_escape(&r.config.method);
        s += &format!(
            "<polyline data-method=\"{method}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        s += &format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{method} (AuC {:.4})</text>\n",
            left + pw + 10.0,
            r.auc.mean
        );
    }
    s + "</svg>\n"
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
