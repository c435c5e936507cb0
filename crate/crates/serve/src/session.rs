//! Session state and the model pool, independent of the transport.

use std::collections::VecDeque;
use std::io::Cursor;
use std::sync::Mutex;
use std::time::{Instant, SystemTime};

use base64::Engine;
use clickseg::bench::{SegmentRequest, Segmenter};
use clickseg::clicks::Click;
use clickseg::guided::{guided_filter_image, GuidedParams};
use clickseg::imgcore::{binarize, BinaryMask, Image, SoftMask};
use clickseg::metrics::iou;
use serde::{Deserialize, Serialize};

use crate::{rle, ServeError};

/// Default number of undo states kept per session.
pub const DEFAULT_HISTORY_CAP: usize = 64;

/// A fixed set of models; each inference call holds one exclusively.
pub struct ModelPool {
    slots: Vec<Mutex<Box<dyn Segmenter + Send>>>,
}

impl ModelPool {
    pub fn new(models: Vec<Box<dyn Segmenter + Send>>) -> Self {
        assert!(!models.is_empty(), "model pool needs at least one model");
        ModelPool {
            slots: models.into_iter().map(Mutex::new).collect(),
        }
    }

    pub fn single(model: impl Segmenter + Send + 'static) -> Self {
        Self::new(vec![Box::new(model)])
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Run `f` on a free model, waiting on the first one if all are busy.
    pub fn with_model<R>(&self, f: impl FnOnce(&dyn Segmenter) -> R) -> R {
        for slot in &self.slots {
            if let Ok(guard) = slot.try_lock() {
                return f(guard.as_ref());
            }
        }
        let guard = self.slots[0].lock().unwrap_or_else(|p| p.into_inner());
        f(guard.as_ref())
    }
}

/// Server reply after every session operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskUpdate {
    pub mask_rle: Vec<u32>,
    pub w: usize,
    pub h: usize,
    /// IoU against the uploaded ground truth, if any.
    pub iou: Option<f64>,
    /// Inference time in milliseconds (0 when no inference ran).
    pub ms: f64,
    /// Clicks currently applied, oldest first.
    pub clicks: Vec<Click>,
    /// Whether `undo` will succeed.
    pub can_undo: bool,
    /// 8-bit soft mask as base64 PNG, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_png: Option<String>,
}

/// Final state handed out by the export endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub id: String,
    pub w: usize,
    pub h: usize,
    /// Binarized mask, 8-bit grayscale PNG (255 = foreground), base64.
    pub mask_png: String,
    pub clicks: Vec<Click>,
    pub iou: Option<f64>,
}

/// One image being annotated.
///
/// `undo_masks` holds the mask in force before each of the most recent clicks.
/// It is capped; once the oldest entries are evicted those clicks can no
/// longer be undone, so `undo_masks.len() + evicted == clicks.len()`.
pub struct Session {
    pub id: String,
    pub image: Image,
    pub gt: Option<BinaryMask>,
    pub guided: Option<GuidedParams>,
    pub created: SystemTime,
    clicks: Vec<Click>,
    current: SoftMask,
    undo_masks: VecDeque<SoftMask>,
    evicted: usize,
    cap: usize,
}

pub fn png_bytes(img: &image::GrayImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

impl Session {
    pub fn new(id: String, image: Image, gt: Option<BinaryMask>, guided: Option<GuidedParams>, cap: usize) -> Self {
        let (w, h) = image.dims();
        Session {
            id,
            image,
            gt,
            guided,
            created: SystemTime::now(),
            clicks: Vec::new(),
            current: SoftMask::zeros(w, h),
            undo_masks: VecDeque::new(),
            evicted: 0,
            cap: cap.max(1),
        }
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn current(&self) -> &SoftMask {
        &self.current
    }

    pub fn can_undo(&self) -> bool {
        !self.undo_masks.is_empty()
    }

    pub fn mask(&self) -> BinaryMask {
        binarize(&self.current, 0.5)
    }

    pub fn update(&self, ms: f64, soft: bool) -> MaskUpdate {
        let mask = self.mask();
        MaskUpdate {
            mask_rle: rle::encode(&mask),
            w: mask.width(),
            h: mask.height(),
            iou: self.gt.as_ref().map(|g| iou(&mask, g).expect("gt dims checked at open")),
            ms,
            clicks: self.clicks.clone(),
            can_undo: self.can_undo(),
            soft_png: soft.then(|| b64(&png_bytes(&self.current.to_luma8()))),
        }
    }

    /// Add a click, run the model on all clicks so far and the current mask.
    pub fn apply_click(&mut self, pool: &ModelPool, x: usize, y: usize, positive: bool) -> Result<f64, ServeError> {
        let (w, h) = self.image.dims();
        if x >= w || y >= h {
            return Err(ServeError::BadRequest(format!("click ({x}, {y}) is outside the {w}x{h} image")));
        }
        let mut clicks = self.clicks.clone();
        clicks.push(Click {
            x,
            y,
            positive,
            ordinal: clicks.len() as u32 + 1,
        });
        let start = Instant::now();
        let raw = pool.with_model(|m| {
            m.segment(&SegmentRequest {
                image_id: &self.id,
                image: &self.image,
                clicks: &clicks,
                prev_mask: &self.current,
            })
        })?;
        let pred = match self.guided {
            Some(p) => guided_filter_image(&self.image, &raw, p)?,
            None => raw,
        };
        if pred.dims() != (w, h) {
            return Err(ServeError::Internal(format!("model returned a {:?} mask for a {w}x{h} image", pred.dims())));
        }
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.clicks = clicks;
        self.undo_masks.push_back(std::mem::replace(&mut self.current, pred));
        if self.undo_masks.len() > self.cap {
            self.undo_masks.pop_front();
            self.evicted += 1;
        }
        Ok(ms)
    }

    pub fn undo(&mut self) -> Result<(), ServeError> {
        if self.clicks.is_empty() {
            return Err(ServeError::BadRequest("nothing to undo".into()));
        }
        let Some(prev) = self.undo_masks.pop_back() else {
            return Err(ServeError::BadRequest(format!(
                "undo history exhausted: only the last {} states are kept",
                self.cap
            )));
        };
        self.clicks.pop();
        self.current = prev;
        Ok(())
    }

    pub fn reset(&mut self) {
        let (w, h) = self.image.dims();
        self.clicks.clear();
        self.current = SoftMask::zeros(w, h);
        self.undo_masks.clear();
        self.evicted = 0;
    }

    pub fn export(&self) -> SessionExport {
        let mask = self.mask();
        SessionExport {
            id: self.id.clone(),
            w: mask.width(),
            h: mask.height(),
            mask_png: b64(&png_bytes(&mask.to_luma8())),
            clicks: self.clicks.clone(),
            iou: self.gt.as_ref().map(|g| iou(&mask, g).expect("gt dims checked at open")),
        }
    }
}
