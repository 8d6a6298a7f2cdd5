use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::sequence::{Lattice, LatticeArc, ReferenceAlignment};

/// Graph weights of generated arcs lie in `[-MAX_GRAPH_PENALTY, 0)`.
const MAX_GRAPH_PENALTY: f64 = 0.5;

/// Stand-in denominator lattice: one node per frame boundary, the reference
/// state plus `branch_factor - 1` distinct confusable states on every frame.
pub fn build_lattice(
    alignment: &ReferenceAlignment,
    num_states: usize,
    branch_factor: usize,
    rng: &mut Rng,
) -> Result<Lattice> {
    if branch_factor == 0 {
        return Err(Error::invalid("branch factor must be at least 1"));
    }
    if branch_factor > num_states {
        return Err(Error::invalid(format!(
            "branch factor {branch_factor} exceeds {num_states} states"
        )));
    }
    let frames = alignment.len();
    let mut arcs = Vec::with_capacity(frames * branch_factor);
    for (t, &truth) in alignment.states().iter().enumerate() {
        if truth >= num_states {
            return Err(Error::invalid(format!("reference state {truth} out of range")));
        }
        let mut others: Vec<usize> = (0..num_states).filter(|&s| s != truth).collect();
        rng.shuffle(&mut others);
        let mut states = vec![truth];
        states.extend_from_slice(&others[..branch_factor - 1]);
        for state in states {
            arcs.push(LatticeArc {
                from: t,
                to: t + 1,
                frame: t,
                state,
                graph_logweight: if branch_factor == 1 {
                    0.0
                } else {
                    -rng.uniform(0.0, MAX_GRAPH_PENALTY)
                },
            });
        }
    }
    Lattice::new(frames, frames + 1, arcs)
}
