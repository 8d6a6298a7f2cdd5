use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::NetworkConfig;

/// Affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// The tied, bias-free transform and carry gate matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GatePair {
    pub transform: Matrix,
    pub carry: Matrix,
}

/// Every trainable tensor of a network. Also used, shape for shape, for
/// gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub hidden: Vec<DenseLayer>,
    pub gates: Option<GatePair>,
    pub output: DenseLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorId {
    HiddenWeight(usize),
    HiddenBias(usize),
    GateTransform,
    GateCarry,
    OutputWeight,
    OutputBias,
}

impl TensorId {
    pub fn is_gate(self) -> bool {
        matches!(self, TensorId::GateTransform | TensorId::GateCarry)
    }

    pub fn name(self) -> String {
        match self {
            TensorId::HiddenWeight(l) => format!("hidden.{l}.weight"),
            TensorId::HiddenBias(l) => format!("hidden.{l}.bias"),
            TensorId::GateTransform => "gate.transform".into(),
            TensorId::GateCarry => "gate.carry".into(),
            TensorId::OutputWeight => "output.weight".into(),
            TensorId::OutputBias => "output.bias".into(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gate.transform" => return Some(TensorId::GateTransform),
            "gate.carry" => return Some(TensorId::GateCarry),
            "output.weight" => return Some(TensorId::OutputWeight),
            "output.bias" => return Some(TensorId::OutputBias),
            _ => {}
        }
        let rest = name.strip_prefix("hidden.")?;
        let (idx, kind) = rest.split_once('.')?;
        let idx = idx.parse().ok()?;
        match kind {
            "weight" => Some(TensorId::HiddenWeight(idx)),
            "bias" => Some(TensorId::HiddenBias(idx)),
            _ => None,
        }
    }
}

/// Borrowed tensor with its logical shape. Biases are `1 x n`.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub id: TensorId,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl Parameters {
    /// All-zero tensors shaped like `config`.
    pub fn zeros(config: &NetworkConfig) -> Self {
        let h = config.hidden_dim;
        let hidden = (0..config.num_hidden_layers)
            .map(|l| DenseLayer {
                weight: Matrix::zeros(h, if l == 0 { config.input_dim } else { h }),
                bias: vec![0.0; h],
            })
            .collect();
        let gates = config.is_highway().then(|| GatePair {
            transform: Matrix::zeros(h, h),
            carry: Matrix::zeros(h, h),
        });
        Self {
            hidden,
            gates,
            output: DenseLayer {
                weight: Matrix::zeros(config.output_dim, h),
                bias: vec![0.0; config.output_dim],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let zero_dense = |d: &DenseLayer| DenseLayer {
            weight: Matrix::zeros(d.weight.rows(), d.weight.cols()),
            bias: vec![0.0; d.bias.len()],
        };
        Self {
            hidden: self.hidden.iter().map(zero_dense).collect(),
            gates: self.gates.as_ref().map(|g| GatePair {
                transform: Matrix::zeros(g.transform.rows(), g.transform.cols()),
                carry: Matrix::zeros(g.carry.rows(), g.carry.cols()),
            }),
            output: zero_dense(&self.output),
        }
    }

    /// Tensors in canonical order: hidden layers, gates, output.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(2 * self.hidden.len() + 4);
        for (l, d) in self.hidden.iter().enumerate() {
            out.push(TensorRef {
                id: TensorId::HiddenWeight(l),
                rows: d.weight.rows(),
                cols: d.weight.cols(),
                data: d.weight.as_slice(),
            });
            out.push(TensorRef {
                id: TensorId::HiddenBias(l),
                rows: 1,
                cols: d.bias.len(),
                data: &d.bias,
            });
        }
        if let Some(g) = &self.gates {
            for (id, m) in [
                (TensorId::GateTransform, &g.transform),
                (TensorId::GateCarry, &g.carry),
            ] {
                out.push(TensorRef {
                    id,
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.as_slice(),
                });
            }
        }
        out.push(TensorRef {
            id: TensorId::OutputWeight,
            rows: self.output.weight.rows(),
            cols: self.output.weight.cols(),
            data: self.output.weight.as_slice(),
        });
        out.push(TensorRef {
            id: TensorId::OutputBias,
            rows: 1,
            cols: self.output.bias.len(),
            data: &self.output.bias,
        });
        out
    }

    /// Mutable tensors in the same order as [`Parameters::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(TensorId, &mut [f64])> {
        let mut out: Vec<(TensorId, &mut [f64])> = Vec::new();
        for (l, d) in self.hidden.iter_mut().enumerate() {
            out.push((TensorId::HiddenWeight(l), d.weight.as_mut_slice()));
            out.push((TensorId::HiddenBias(l), &mut d.bias));
        }
        if let Some(g) = &mut self.gates {
            out.push((TensorId::GateTransform, g.transform.as_mut_slice()));
            out.push((TensorId::GateCarry, g.carry.as_mut_slice()));
        }
        out.push((TensorId::OutputWeight, self.output.weight.as_mut_slice()));
        out.push((TensorId::OutputBias, &mut self.output.bias));
        out
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> Option<&mut [f64]> {
        match id {
            TensorId::HiddenWeight(l) => self.hidden.get_mut(l).map(|d| d.weight.as_mut_slice()),
            TensorId::HiddenBias(l) => self.hidden.get_mut(l).map(|d| d.bias.as_mut_slice()),
            TensorId::GateTransform => self.gates.as_mut().map(|g| g.transform.as_mut_slice()),
            TensorId::GateCarry => self.gates.as_mut().map(|g| g.carry.as_mut_slice()),
            TensorId::OutputWeight => Some(self.output.weight.as_mut_slice()),
            TensorId::OutputBias => Some(self.output.bias.as_mut_slice()),
        }
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len()
            && a
                .iter()
                .zip(&b)
                .all(|(x, y)| x.id == y.id && x.rows == y.rows && x.cols == y.cols)
    }

    pub(crate) fn check_shapes(&self, config: &NetworkConfig) -> Result<()> {
        if !self.same_shape(&Parameters::zeros(config)) {
            return Err(Error::shape(format!(
                "parameter tensors do not match configuration {config:?}"
            )));
        }
        Ok(())
    }

    /// Squared L2 norm over every tensor.
    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_names_round_trip() {
        for id in [
            TensorId::HiddenWeight(0),
            TensorId::HiddenBias(12),
            TensorId::GateTransform,
            TensorId::GateCarry,
            TensorId::OutputWeight,
            TensorId::OutputBias,
        ] {
            assert_eq!(TensorId::parse(&id.name()), Some(id));
        }
        assert_eq!(TensorId::parse("hidden.x.weight"), None);
        assert_eq!(TensorId::parse("gate.bias"), None);
    }
}
