//! Snippet- and rating-conditioned review answer generation.
//!
//! Everything numeric in this crate runs on a small reverse-mode autodiff
//! tape over dense `f64` tensors: a bidirectional GRU review encoder with
//! snippet attention and rating gating, an attentive GRU decoder with beam
//! search, the joint generation + rating-classification objective, and the
//! BLEU / METEOR / ROUGE-L evaluation harness with retrieval baselines.
//!
//! The crate is `no_std` + `alloc`; file formats, ingestion and the command
//! line front end live in the companion `revgen-cli` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod gru;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod rng;
pub mod snippet;
pub mod tape;
pub mod tensor;
pub mod text;
pub mod trainer;
pub mod vocab;

mod math;

pub use tape::{Tape, Var};
pub use tensor::Tensor;
