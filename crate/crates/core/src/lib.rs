//! Small-footprint highway DNN acoustic models trained with cross-entropy,
//! teacher-student distillation, lattice-based sMBR, and unsupervised
//! speaker adaptation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: matrices, reproducible random streams, stable kernels.
//! - [`network`]: plain and highway networks, forward and backward passes.
//! - [`losses`]: frame-level cross-entropy, distillation and hybrid losses.
//! - [`sequence`]: lattices, forward-backward and the sMBR criterion.
//! - [`trainer`]: SGD with momentum and the training/adaptation loops.
//! - [`workbench`]: synthetic corpora, splicing, lattice generation and
//!   file formats.

pub mod error;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod sequence;
pub mod trainer;
pub mod workbench;

pub use error::{Error, Result};
pub use losses::{ce_loss, hybrid_loss, kd_loss, HardLabels, LossResult, SoftTargets};
pub use network::{
    count_params, Architecture, ForwardTrace, GradientSet, Network, NetworkConfig, TensorId,
};
pub use numerics::{Matrix, Rng};
pub use sequence::{Lattice, ReferenceAlignment, SmbrConfig, SmbrResult};

