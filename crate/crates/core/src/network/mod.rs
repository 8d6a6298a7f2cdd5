//! Plain and highway feed-forward acoustic models.
//!
//! Hidden layer 0 projects the spliced input to `H` units with a sigmoid.
//! For a highway network every later hidden layer computes
//!
//! ```text
//! h_l = σ(W_l h_{l-1} + b_l) ∘ σ(W_T h_{l-1}) + h_{l-1} ∘ σ(W_c h_{l-1})
//! ```
//!
//! where the transform gate `W_T` and carry gate `W_c` are a single
//! bias-free pair shared by all of those layers. Layer 0 is always plain
//! because its input is not `H`-dimensional.

mod backward;
mod forward;
mod params;

pub use backward::GradientSet;
pub use forward::{ForwardTrace, GateTrace, LayerTrace, PackedGates};
pub use params::{DenseLayer, GatePair, Parameters, TensorId, TensorRef};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{uniform_init, Rng};

/// Initial weights are drawn from `[-INIT_RANGE, INIT_RANGE)`.
pub const INIT_RANGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Plain,
    Highway,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "dnn" => Ok(Architecture::Plain),
            "highway" | "hdnn" => Ok(Architecture::Highway),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Plain => "plain",
            Architecture::Highway => "highway",
        })
    }
}

/// Shape of a network. `num_hidden_layers` counts the input projection, so
/// `L = 10` means one `H x input_dim` layer followed by nine `H x H` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_hidden_layers: usize,
    pub output_dim: usize,
    pub architecture: Architecture,
}

impl NetworkConfig {
    pub fn new(
        architecture: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        num_hidden_layers: usize,
        output_dim: usize,
    ) -> Self {
        Self {
            input_dim,
            hidden_dim,
            num_hidden_layers,
            output_dim,
            architecture,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_hidden_layers", self.num_hidden_layers),
            ("output_dim", self.output_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn is_highway(&self) -> bool {
        self.architecture == Architecture::Highway
    }
}

/// Closed-form parameter count.
pub fn count_params(config: &NetworkConfig) -> usize {
    let h = config.hidden_dim;
    let base = config.input_dim * h
        + h
        + (config.num_hidden_layers - 1) * (h * h + h)
        + h * config.output_dim
        + config.output_dim;
    match config.architecture {
        Architecture::Plain => base,
        Architecture::Highway => base + 2 * h * h,
    }
}

/// Gate tensors versus everything else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPartition {
    pub gates: Vec<TensorId>,
    pub rest: Vec<TensorId>,
    pub gate_count: usize,
    pub rest_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: Parameters,
}

/// Read-only view of one hidden layer. Highway layers past the first see the
/// network's single gate pair.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub index: usize,
    pub dense: &'a DenseLayer,
    pub gates: Option<&'a GatePair>,
}

#[derive(Debug)]
pub struct LayerViewMut<'a> {
    pub index: usize,
    pub dense: &'a mut DenseLayer,
    pub gates: Option<&'a mut GatePair>,
}

impl Network {
    /// Weights (gates and output included) uniform in `[-0.5, 0.5)`, biases
    /// zero. Each tensor draws from its own named stream of `seed`.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = |rows, cols, name: &str| {
            uniform_init(rows, cols, -INIT_RANGE, INIT_RANGE, &mut Rng::new(seed, name))
        };
        let h = config.hidden_dim;
        let mut hidden = Vec::with_capacity(config.num_hidden_layers);
        for l in 0..config.num_hidden_layers {
            let fan_in = if l == 0 { config.input_dim } else { h };
            hidden.push(DenseLayer {
                weight: init(h, fan_in, &format!("init/hidden/{l}"))?,
                bias: vec![0.0; h],
            });
        }
        let gates = if config.is_highway() {
            Some(GatePair {
                transform: init(h, h, "init/gate/transform")?,
                carry: init(h, h, "init/gate/carry")?,
            })
        } else {
            None
        };
        let output = DenseLayer {
            weight: init(config.output_dim, h, "init/output")?,
            bias: vec![0.0; config.output_dim],
        };
        Ok(Self {
            config,
            params: Parameters {
                hidden,
                gates,
                output,
            },
        })
    }

    /// Assembles a network from explicit tensors, checking every shape.
    pub fn from_parameters(config: NetworkConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn gates(&self) -> Option<&GatePair> {
        self.params.gates.as_ref()
    }

    pub fn gates_mut(&mut self) -> Option<&mut GatePair> {
        self.params.gates.as_mut()
    }

    pub fn num_layers(&self) -> usize {
        self.params.hidden.len()
    }

    pub fn layer(&self, index: usize) -> LayerView<'_> {
        LayerView {
            index,
            dense: &self.params.hidden[index],
            gates: if index > 0 {
                self.params.gates.as_ref()
            } else {
                None
            },
        }
    }

    pub fn layer_mut(&mut self, index: usize) -> LayerViewMut<'_> {
        let Parameters { hidden, gates, .. } = &mut self.params;
        LayerViewMut {
            index,
            dense: &mut hidden[index],
            gates: if index > 0 { gates.as_mut() } else { None },
        }
    }

    pub fn output(&self) -> &DenseLayer {
        &self.params.output
    }

    /// Parameter count by enumerating allocated tensors.
    pub fn num_params(&self) -> usize {
        self.params.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn param_partition(&self) -> ParamPartition {
        let mut part = ParamPartition {
            gates: Vec::new(),
            rest: Vec::new(),
            gate_count: 0,
            rest_count: 0,
        };
        for t in self.params.tensors() {
            if t.id.is_gate() {
                part.gates.push(t.id);
                part.gate_count += t.data.len();
            } else {
                part.rest.push(t.id);
                part.rest_count += t.data.len();
            }
        }
        part
    }

    /// Euclidean distance between the parameter vectors of two networks of
    /// the same shape.
    pub fn param_distance(&self, other: &Network) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.params.tensors().iter().zip(other.params.tensors()) {
            for (x, y) in a.data.iter().zip(b.data) {
                acc += (x - y) * (x - y);
            }
        }
        acc.sqrt()
    }
}
