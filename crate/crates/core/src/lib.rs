//! Depth prediction from frozen vision/text transformers conditioned by a
//! single learnable prompt matrix (the *mirror*), plus everything needed to
//! train and evaluate the model on procedurally generated scenes:
//!
//! - [`tensor`]: a small reverse-mode tensor tape (f32 for training, f64 for
//!   gradient checking) with the primitives the model needs and nothing more.
//! - [`encoder`] / [`decoder`] / [`model`]: the frozen encoder pair, the
//!   mirror, and the FiLM-modulated deconvolutional decoder.
//! - [`train`] / [`optim`] / [`loss`]: scale-invariant log loss, AdamW with
//!   cosine annealing, and a deterministic, resumable training loop.
//! - [`metrics`] / [`consistency`]: the standard depth metric suite with
//!   evaluation crops, and pose-based reprojection consistency scoring.
//! - [`synth`]: analytic scene rendering used as training and test data.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all file formats and
//! the command-line surface live in the companion `mirrordepth-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod consistency;
pub mod decoder;
pub mod depth;
pub mod element;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod train;

pub use element::Element;
pub use error::{Error, Result};
pub use tensor::{Tape, TensorId};
