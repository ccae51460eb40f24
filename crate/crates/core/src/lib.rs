//! Structure-aware fusion adapter for frozen protein language model
//! embeddings.
//!
//! Per-residue PLM embeddings are fused with FoldSeek 3Di and DSSP SS8 token
//! streams through rotary cross-modal multi-head attention, mean-pooled and
//! classified by a small two-layer head. Only the adapter is trained; the PLM
//! output is a constant input.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`], [`tape`]: dense kernels and reverse-mode differentiation
//! - [`vocab`], [`rope`]: tokenization and rotary position embedding
//! - [`adapter`]: the fusion stages, head and parameter bookkeeping
//! - [`loss`], [`optim`], [`metrics`]: objectives, AdamW and evaluation
//! - [`data`], [`checkpoint`]: file formats, mock embeddings, batching
//! - [`config`], [`trainer`], [`cli`]: run configuration, training loop and
//!   the `ses` command line

pub mod adapter;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod rope;
pub mod synthetic;
pub mod tape;
pub mod trainer;
pub mod vocab;

pub use adapter::{count_parameters, AdapterConfig, AdapterParams, TaskType};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tape::{Mode, Tape};
