//! Allocation-only core of a memory-augmented camouflaged object detection
//! pipeline: a small reverse-mode tensor engine, the adapter-equipped
//! encoder, the clustering prototype memory, inference pattern reconstruction, the ConvLSTM decoder, losses,
//! evaluation metrics, the synthetic scene generator and the two-stage
//! trainer. Everything here is a pure function of its inputs and seeds;
//! file formats and the CLI live in the `retromem` crate.

#![no_std]

extern crate alloc;

pub mod autograd;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod ipr;
pub mod loss;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod real;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
