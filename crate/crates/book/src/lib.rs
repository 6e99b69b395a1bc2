//! The guide's chapters, compiled as documentation so that every snippet
//! runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/replicas.md")]
pub mod replicas {}

#[doc = include_str!("../../../book/src/deletions.md")]
pub mod deletions {}

#[doc = include_str!("../../../book/src/matching.md")]
pub mod matching {}

#[doc = include_str!("../../../book/src/noiseless.md")]
pub mod noiseless {}

#[doc = include_str!("../../../book/src/capacity.md")]
pub mod capacity {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
