use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax_rows, Matrix};

use super::{Network, NetworkConfig};

/// Gate activations of one highway layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub transform: Matrix,
    pub carry: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `W_l h_{l-1} + b_l`.
    pub pre_activation: Matrix,
    /// `σ(pre_activation)`.
    pub activation: Matrix,
    pub gates: Option<GateTrace>,
    /// `h_l`: equal to `activation` for plain layers.
    pub output: Matrix,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub temperature: f64,
    pub input: Matrix,
    pub layers: Vec<LayerTrace>,
    pub logits: Matrix,
    pub posteriors: Matrix,
}

impl ForwardTrace {
    pub fn frames(&self) -> usize {
        self.input.rows()
    }
}

/// Fused `[W_l; W_T; W_c]` matrices (`3H x H`) for hidden layers `1..L`.
/// Layer 0 cannot be fused because its weight is `H x input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedGates {
    pub unpacked_layers: Vec<usize>,
    pub packed: Vec<(usize, Matrix)>,
}

fn add_bias(m: &mut Matrix, bias: &[f64]) {
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn highway_combine(
    activation: &Matrix,
    transform: &Matrix,
    carry: &Matrix,
    prev: &Matrix,
) -> Matrix {
    let mut out = Matrix::zeros(activation.rows(), activation.cols());
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        *o = activation.as_slice()[i] * transform.as_slice()[i]
            + prev.as_slice()[i] * carry.as_slice()[i];
    }
    out
}

impl Network {
    fn check_input(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.config.input_dim {
            return Err(Error::shape(format!(
                "features have {} columns, network expects {}",
                features.cols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass with posteriors at `temperature`.
    pub fn forward(&self, features: &Matrix, temperature: f64) -> Result<ForwardTrace> {
        self.check_input(features)?;
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.num_layers());
        for l in 0..self.num_layers() {
            let view = self.layer(l);
            let prev = layers.last().map_or(features, |t| &t.output);
            let mut pre = prev.matmul_transposed(&view.dense.weight)?;
            add_bias(&mut pre, &view.dense.bias);
            let activation = pre.map(sigmoid);
            let trace = match view.gates {
                Some(g) => {
                    let transform = prev.matmul_transposed(&g.transform)?.map(sigmoid);
                    let carry = prev.matmul_transposed(&g.carry)?.map(sigmoid);
                    LayerTrace {
                        output: highway_combine(&activation, &transform, &carry, prev),
                        pre_activation: pre,
                        activation,
                        gates: Some(GateTrace { transform, carry }),
                    }
                }
                None => LayerTrace {
                    output: activation.clone(),
                    pre_activation: pre,
                    activation,
                    gates: None,
                },
            };
            layers.push(trace);
        }
        self.finish(features, layers, temperature)
    }

    fn finish(
        &self,
        features: &Matrix,
        layers: Vec<LayerTrace>,
        temperature: f64,
    ) -> Result<ForwardTrace> {
        let top = &layers.last().expect("at least one hidden layer").output;
        let mut logits = top.matmul_transposed(&self.params.output.weight)?;
        add_bias(&mut logits, &self.params.output.bias);
        let posteriors = softmax_rows(&logits, temperature)?;
        Ok(ForwardTrace {
            temperature,
            input: features.clone(),
            layers,
            logits,
            posteriors,
        })
    }

    /// Posteriors only.
    pub fn posteriors(&self, features: &Matrix, temperature: f64) -> Result<Matrix> {
        Ok(self.forward(features, temperature)?.posteriors)
    }

    pub fn pack_gates(&self) -> Result<PackedGates> {
        let g = self.gates().ok_or_else(|| {
            Error::InvalidArchitecture("gate packing needs a highway network".into())
        })?;
        let packed = (1..self.num_layers())
            .map(|l| {
                let w = &self.layer(l).dense.weight;
                Matrix::vstack(&[w, &g.transform, &g.carry]).map(|m| (l, m))
            })
            .collect::<Result<_>>()?;
        Ok(PackedGates {
            unpacked_layers: vec![0],
            packed,
        })
    }

    /// Forward pass that computes each highway layer's three pre-activation
    /// blocks with one multiply by the packed matrix.
    pub fn forward_packed(
        &self,
        packed: &PackedGates,
        features: &Matrix,
        temperature: f64,
    ) -> Result<ForwardTrace> {
        self.check_input(features)?;
        if packed.packed.len() + packed.unpacked_layers.len() != self.num_layers() {
            return Err(Error::shape("packed matrices do not cover every layer"));
        }
        let h = self.config.hidden_dim;
        let first = self.layer(0).dense;
        let mut pre = features.matmul_transposed(&first.weight)?;
        add_bias(&mut pre, &first.bias);
        let activation = pre.map(sigmoid);
        let mut layers = vec![LayerTrace {
            output: activation.clone(),
            pre_activation: pre,
            activation,
            gates: None,
        }];
        for (l, fused) in &packed.packed {
            if fused.shape() != (3 * h, h) {
                return Err(Error::shape(format!("packed matrix for layer {l}")));
            }
            let prev = &layers.last().unwrap().output;
            let all = prev.matmul_transposed(fused)?;
            let n = all.rows();
            let mut pre = Matrix::zeros(n, h);
            let mut transform = Matrix::zeros(n, h);
            let mut carry = Matrix::zeros(n, h);
            for r in 0..n {
                let row = all.row(r);
                pre.row_mut(r).copy_from_slice(&row[..h]);
                transform.row_mut(r).copy_from_slice(&row[h..2 * h]);
                carry.row_mut(r).copy_from_slice(&row[2 * h..]);
            }
            add_bias(&mut pre, &self.layer(*l).dense.bias);
            let activation = pre.map(sigmoid);
            let transform = transform.map(sigmoid);
            let carry = carry.map(sigmoid);
            let output = highway_combine(&activation, &transform, &carry, prev);
            layers.push(LayerTrace {
                pre_activation: pre,
                activation,
                gates: Some(GateTrace { transform, carry }),
                output,
            });
        }
        self.finish(features, layers, temperature)
    }
}

impl NetworkConfig {
    /// Shape of the fused matrix for hidden layer `index`, or `None` for the
    /// input projection.
    pub fn packed_shape(&self, index: usize) -> Option<(usize, usize)> {
        (self.is_highway() && index > 0 && index < self.num_hidden_layers)
            .then_some((3 * self.hidden_dim, self.hidden_dim))
    }
}
