//! Heterogeneous graph neural network with inter-modal attention.
//!
//! This crate implements semi-supervised node classification on multi-modal
//! heterogeneous networks: typed nodes and edges where nodes carry feature
//! vectors from several modalities (e.g. text and vision embeddings). The
//! propagation layer nests an inter-modal attention over modality-specific
//! inter-node attentions, modulates aggregation weights by cross-modal
//! similarity consistency, and penalizes attention mass assigned to
//! modalities a neighbor does not natively possess.
//!
//! Layout:
//! - [`data`]: graph/schema/feature/split types, on-disk formats, missing
//!   modality completion, a synthetic benchmark generator.
//! - [`numerics`]: dense f64 tensors, a reverse-mode autodiff tape, Adam,
//!   and a finite-difference gradient oracle.
//! - [`model`]: parameters, configuration (including every ablation switch),
//!   and the full forward pass with loss terms.
//! - [`trainer`]: the training loop with early stopping, evaluation metrics,
//!   multi-seed runs, attention export, and an empirical complexity probe.

pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
