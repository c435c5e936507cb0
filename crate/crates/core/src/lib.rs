//! Click-driven interactive segmentation.
//!
//! The crate covers the whole interactive loop at desk scale:
//!
//! * [`imgcore`] raster containers, PNG/PNM I/O and training augmentations,
//! * [`clicks`] error-region click simulation and multi-scale Gaussian click
//!   encoding, with the connected-component and distance-transform kernels
//!   they rely on,
//! * [`metrics`] IoU, NoC, AuC, correction accuracy and threshold tables,
//! * [`guided`] integral-image box means and the guided-filter refinement,
//! * [`synth`] alpha-compositing of foreground mattes onto backgrounds,
//! * [`net`] a small two-stream segmentation network with hand-written,
//!   finite-difference-checked reverse-mode gradients,
//! * [`train`] click-by-click and bundled-click training with RAdam,
//! * [`bench`] the iterated-click evaluation protocol and its report.

pub mod bench;
pub mod clicks;
mod error;
pub mod guided;
pub mod imgcore;
pub mod metrics;
pub mod net;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
