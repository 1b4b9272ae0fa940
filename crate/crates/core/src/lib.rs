//! Allocation-only kernels for visual-textual to visual-only retrieval distillation.
//!
//! Everything in this crate is a pure function of its inputs: no IO, no
//! threads, no global state. Transcendental functions come from `libm` so
//! results are bit-identical across targets.
//!
//! * [`encoder`] toy dual encoders with analytic backward passes
//! * [`loss`] cosine similarity, InfoNCE, alignment, soft-label KL, adaptive weights
//! * [`optim`] Adam / SGD
//! * [`train`] in-batch contrastive pre-training and teacher-to-student distillation
//! * [`search`] exact cosine top-k and score interpolation
//! * [`metrics`] Recall@k / MRR@k with gold-id and answer-containment judging
//! * [`layout`] layout-preserving assembly of OCR boxes
//! * [`synth`] seeded synthetic corpora, queries and OCR pages
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod error;
pub mod layout;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod search;
pub mod synth;
pub mod train;
mod vector;

pub use encoder::{EncoderParams, FeatureRecord, Layer, ModelKind, ModelParams, QueryRecord};
pub use error::{Error, Result};
pub use vector::{dot, l2_norm, EmbeddingVector};
