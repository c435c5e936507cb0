//! A small two-stream segmentation network with hand-written gradients.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod ops;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{soft_iou_click_loss, LossValue};
pub use model::{MicroSegNet, NetConfig, NetInputs, Tape};
pub use tensor::{Real, Tensor};
