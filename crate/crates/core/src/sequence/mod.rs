//! Sequence-level training: frame-synchronous lattices, log-domain
//! forward-backward, and the state-level minimum Bayes risk (sMBR)
//! criterion.
//!
//! Every lattice arc covers exactly one frame and carries one HMM state.
//! The accuracy of a path is the number of frames whose state matches the
//! reference alignment, and the sMBR value is its expectation under the
//! normalised path posterior.

mod lattice;
mod smbr;

pub use lattice::{Lattice, LatticeArc, ReferenceAlignment};
pub use smbr::{
    forward_backward, smbr_kd_objective, smbr_objective, ForwardBackward, SmbrConfig, SmbrResult,
    DEFAULT_ACOUSTIC_SCALE, DEFAULT_PRIOR_FLOOR,
};
