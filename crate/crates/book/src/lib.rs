//! The README and the book under `book/src`, compiled as doc-tests so their
//! examples cannot drift from the code.

#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/clicks.md")]
pub mod clicks {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/guided.md")]
pub mod guided {}

#[doc = include_str!("../../../book/src/synth.md")]
pub mod synth {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/bench.md")]
pub mod bench {}

#[doc = include_str!("../../../book/src/serve.md")]
pub mod serve {}
