use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{ForwardTrace, GatePair, Network, Parameters};

/// Gradient of a scalar loss with respect to every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub params: Parameters,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            params: net.params().zeros_like(),
        }
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        if !self.params.same_shape(&other.params) {
            return Err(Error::shape("gradient sets differ in shape"));
        }
        for ((_, a), b) in self.params.tensors_mut().into_iter().zip(other.params.tensors()) {
            for (x, y) in a.iter_mut().zip(b.data) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.params.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.squared_norm()
    }
}

/// `d * σ'` given the sigmoid output `s`.
fn through_sigmoid(grad: &Matrix, s: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (g, v) in out.as_mut_slice().iter_mut().zip(s.as_slice()) {
        *g *= v * (1.0 - v);
    }
    out
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (x, y) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x *= y;
    }
    out
}

impl Network {
    /// Reverse-mode gradient of the loss whose derivative with respect to the
    /// logits of `trace` is `dlogits`.
    ///
    /// Highway layers propagate through the sigmoid branch, both gates, and
    /// the direct carry path. Gate gradients from layers `1..L` are summed in
    /// ascending layer order.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Matrix) -> Result<GradientSet> {
        let n = trace.frames();
        if dlogits.shape() != (n, self.config.output_dim) {
            return Err(Error::shape(format!(
                "dlogits is {:?}, expected ({n}, {})",
                dlogits.shape(),
                self.config.output_dim
            )));
        }
        if trace.layers.len() != self.num_layers() || trace.logits.shape() != dlogits.shape() {
            return Err(Error::shape("trace was not produced by this network"));
        }

        let mut grads = GradientSet::zeros_like(self);
        let top = &trace.layers.last().unwrap().output;
        grads.params.output.weight = dlogits.transpose_matmul(top)?;
        grads.params.output.bias = dlogits.sum_rows();
        let mut dh = dlogits.matmul(&self.params.output.weight)?;

        let mut gate_terms: Vec<GatePair> = Vec::new();
        for l in (0..self.num_layers()).rev() {
            let lt = &trace.layers[l];
            let prev = if l == 0 {
                &trace.input
            } else {
                &trace.layers[l - 1].output
            };
            let dense = &self.params.hidden[l];
            match (&lt.gates, self.layer(l).gates) {
                (Some(gt), Some(g)) => {
                    let da = through_sigmoid(&hadamard(&dh, &gt.transform), &lt.activation);
                    let dt = through_sigmoid(&hadamard(&dh, &lt.activation), &gt.transform);
                    let dc = through_sigmoid(&hadamard(&dh, prev), &gt.carry);

                    grads.params.hidden[l].weight = da.transpose_matmul(prev)?;
                    grads.params.hidden[l].bias = da.sum_rows();
                    gate_terms.push(GatePair {
                        transform: dt.transpose_matmul(prev)?,
                        carry: dc.transpose_matmul(prev)?,
                    });

                    let mut dprev = hadamard(&dh, &gt.carry);
                    dprev.add_scaled(&da.matmul(&dense.weight)?, 1.0)?;
                    dprev.add_scaled(&dt.matmul(&g.transform)?, 1.0)?;
                    dprev.add_scaled(&dc.matmul(&g.carry)?, 1.0)?;
                    dh = dprev;
                }
                (None, None) => {
                    let da = through_sigmoid(&dh, &lt.activation);
                    grads.params.hidden[l].weight = da.transpose_matmul(prev)?;
                    grads.params.hidden[l].bias = da.sum_rows();
                    if l > 0 {
                        dh = da.matmul(&dense.weight)?;
                    }
                }
                _ => return Err(Error::shape("trace gate layout does not match network")),
            }
        }

        if let Some(acc) = grads.params.gates.as_mut() {
            // gate_terms were pushed from the top layer down.
            for term in gate_terms.iter().rev() {
                acc.transform.add_scaled(&term.transform, 1.0)?;
                acc.carry.add_scaled(&term.carry, 1.0)?;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Architecture, NetworkConfig, TensorId};
    use crate::numerics::{uniform_init, Rng};

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let c = NetworkConfig::new(Architecture::Highway, 5, 4, 3, 3);
        let net = Network::build(c, 1).unwrap();
        let x = uniform_init(4, 5, -1.0, 1.0, &mut Rng::new(1, "x")).unwrap();
        let tr = net.forward(&x, 1.0).unwrap();
        let g = net.backward(&tr, &Matrix::zeros(4, 3)).unwrap();
        for t in g.params.tensors() {
            assert!(t.data.iter().all(|v| *v == 0.0), "{:?}", t.id);
        }
    }

    #[test]
    fn gradient_shapes_match_network() {
        let c = NetworkConfig::new(Architecture::Highway, 5, 4, 3, 3);
        let net = Network::build(c, 1).unwrap();
        let x = uniform_init(2, 5, -1.0, 1.0, &mut Rng::new(2, "x")).unwrap();
        let tr = net.forward(&x, 1.0).unwrap();
        let g = net.backward(&tr, &Matrix::filled(2, 3, 0.1)).unwrap();
        assert!(g.params.same_shape(net.params()));
        assert!(g.params.tensors().iter().any(|t| t.id == TensorId::GateCarry));
        assert!(net.backward(&tr, &Matrix::zeros(3, 3)).is_err());
    }
}
