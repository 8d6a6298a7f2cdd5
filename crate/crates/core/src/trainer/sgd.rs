use crate::error::{Error, Result};
use crate::network::{GradientSet, Network, Parameters};

use super::UpdateScope;

/// Velocity buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Parameters,
}

impl MomentumState {
    pub fn new(net: &Network) -> Self {
        Self {
            velocity: net.params().zeros_like(),
        }
    }
}

/// `v = momentum * v - lr * g; θ += v` on the tensors selected by `scope`.
/// Tensors outside the scope are not touched, and neither are their
/// velocities.
pub fn sgd_step(
    net: &mut Network,
    grads: &GradientSet,
    state: &mut MomentumState,
    lr: f64,
    momentum: f64,
    scope: UpdateScope,
) -> Result<()> {
    if scope == UpdateScope::GatesOnly && !net.config().is_highway() {
        return Err(Error::invalid("gates-only update on a network without gates"));
    }
    if !net.params().same_shape(&grads.params) || !net.params().same_shape(&state.velocity) {
        return Err(Error::shape("gradient or momentum buffers do not match the network"));
    }
    let grads = grads.params.tensors();
    let velocity = state.velocity.tensors_mut();
    let params = net.params_mut().tensors_mut();
    for (((id, theta), (_, v)), g) in params.into_iter().zip(velocity).zip(grads) {
        if scope == UpdateScope::GatesOnly && !id.is_gate() {
            continue;
        }
        for ((p, v), g) in theta.iter_mut().zip(v.iter_mut()).zip(g.data) {
            *v = momentum * *v - lr * g;
            *p += *v;
        }
    }
    Ok(())
}
