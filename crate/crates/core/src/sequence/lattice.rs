use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeArc {
    pub from: usize,
    pub to: usize,
    pub frame: usize,
    pub state: usize,
    pub graph_logweight: f64,
}

/// Frame-synchronous DAG of state arcs. Node `0` is the start (boundary 0),
/// node `num_nodes - 1` the end (boundary `num_frames`), and nodes are
/// numbered in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    num_frames: usize,
    num_nodes: usize,
    arcs: Vec<LatticeArc>,
    node_frame: Vec<usize>,
}

impl Lattice {
    pub fn new(num_frames: usize, num_nodes: usize, arcs: Vec<LatticeArc>) -> Result<Self> {
        let bad = |msg: String| Err(Error::invalid(format!("malformed lattice: {msg}")));
        if num_frames == 0 || num_nodes < 2 {
            return bad(format!("{num_frames} frames, {num_nodes} nodes"));
        }
        let mut node_frame: Vec<Option<usize>> = vec![None; num_nodes];
        node_frame[0] = Some(0);
        node_frame[num_nodes - 1] = Some(num_frames);
        for (i, a) in arcs.iter().enumerate() {
            if a.to >= num_nodes || a.from >= a.to {
                return bad(format!("arc {i} ({} -> {}) breaks node order", a.from, a.to));
            }
            if a.frame >= num_frames {
                return bad(format!("arc {i} on frame {} of {num_frames}", a.frame));
            }
            if !a.graph_logweight.is_finite() {
                return bad(format!("arc {i} has non-finite graph weight"));
            }
            for (node, boundary) in [(a.from, a.frame), (a.to, a.frame + 1)] {
                match node_frame[node] {
                    Some(b) if b != boundary => {
                        return bad(format!(
                            "node {node} sits on boundary {b} and {boundary}"
                        ))
                    }
                    _ => node_frame[node] = Some(boundary),
                }
            }
        }
        let node_frame: Vec<usize> = match node_frame.iter().position(Option::is_none) {
            Some(n) => return bad(format!("node {n} has no arcs")),
            None => node_frame.into_iter().flatten().collect(),
        };
        if node_frame[1..].contains(&0) {
            return bad("more than one start node".into());
        }
        if node_frame[..num_nodes - 1].contains(&num_frames) {
            return bad("more than one end node".into());
        }

        let lat = Self {
            num_frames,
            num_nodes,
            arcs,
            node_frame,
        };
        let mut reach = vec![false; num_nodes];
        reach[0] = true;
        for &i in &lat.arcs_by_source() {
            let a = &lat.arcs[i];
            if reach[a.from] {
                reach[a.to] = true;
            }
        }
        if !reach[num_nodes - 1] {
            return Err(Error::DegenerateLattice(
                "no complete path from start to end".into(),
            ));
        }
        Ok(lat)
    }

    /// Single-path lattice following `states`, with zero graph weights.
    pub fn linear(states: &[usize]) -> Result<Self> {
        let arcs = states
            .iter()
            .enumerate()
            .map(|(t, &s)| LatticeArc {
                from: t,
                to: t + 1,
                frame: t,
                state: s,
                graph_logweight: 0.0,
            })
            .collect();
        Self::new(states.len(), states.len() + 1, arcs)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    pub fn end_node(&self) -> usize {
        self.num_nodes - 1
    }

    pub fn node_frame(&self, node: usize) -> usize {
        self.node_frame[node]
    }

    pub fn max_state(&self) -> usize {
        self.arcs.iter().map(|a| a.state).max().unwrap_or(0)
    }

    /// Arc indices ordered by source node (stable).
    pub(crate) fn arcs_by_source(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.arcs.len()).collect();
        idx.sort_by_key(|&i| self.arcs[i].from);
        idx
    }

    /// True if `states` is a complete path through the lattice.
    pub fn contains_path(&self, states: &[usize]) -> bool {
        if states.len() != self.num_frames {
            return false;
        }
        let mut frontier = vec![0usize];
        for (t, &s) in states.iter().enumerate() {
            let mut next: Vec<usize> = self
                .arcs
                .iter()
                .filter(|a| a.frame == t && a.state == s && frontier.contains(&a.from))
                .map(|a| a.to)
                .collect();
            next.sort_unstable();
            next.dedup();
            if next.is_empty() {
                return false;
            }
            frontier = next;
        }
        frontier.contains(&self.end_node())
    }

    /// Text form: header `T num_nodes num_arcs`, then one
    /// `from to t state graph_logweight` line per arc.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.num_frames, self.num_nodes, self.arcs.len());
        for a in &self.arcs {
            writeln!(
                s,
                "{} {} {} {} {}",
                a.from, a.to, a.frame, a.state, a.graph_logweight
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty lattice text"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad lattice header {header:?}: {e}")))?;
        let [frames, nodes, num_arcs] = head[..] else {
            return Err(Error::invalid(format!("bad lattice header {header:?}")));
        };
        let mut arcs = Vec::with_capacity(num_arcs);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parse = || -> std::result::Result<LatticeArc, String> {
                let [from, to, t, state, w] = f[..] else {
                    return Err("expected 5 fields".into());
                };
                Ok(LatticeArc {
                    from: from.parse().map_err(|e| format!("{e}"))?,
                    to: to.parse().map_err(|e| format!("{e}"))?,
                    frame: t.parse().map_err(|e| format!("{e}"))?,
                    state: state.parse().map_err(|e| format!("{e}"))?,
                    graph_logweight: w.parse().map_err(|e| format!("{e}"))?,
                })
            };
            arcs.push(parse().map_err(|e| Error::invalid(format!("bad arc {line:?}: {e}")))?);
        }
        if arcs.len() != num_arcs {
            return Err(Error::invalid(format!(
                "header promises {num_arcs} arcs, found {}",
                arcs.len()
            )));
        }
        Self::new(frames, nodes, arcs)
    }
}

/// Ground-truth state per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceAlignment(pub Vec<usize>);

impl ReferenceAlignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    /// One line of space-separated state ids.
    pub fn to_text(&self) -> String {
        let mut s = self
            .0
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        text.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|e| Error::invalid(format!("bad state id {t:?}: {e}")))
            })
            .collect::<Result<_>>()
            .map(ReferenceAlignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(from: usize, to: usize, frame: usize, state: usize) -> LatticeArc {
        LatticeArc {
            from,
            to,
            frame,
            state,
            graph_logweight: -0.125,
        }
    }

    #[test]
    fn text_round_trip() {
        let lat = Lattice::new(
            2,
            4,
            vec![arc(0, 1, 0, 3), arc(0, 2, 0, 1), arc(1, 3, 1, 0), arc(2, 3, 1, 2)],
        )
        .unwrap();
        let text = lat.to_text();
        assert!(text.starts_with("2 4 4\n0 1 0 3 -0.125\n"));
        assert_eq!(Lattice::from_text(&text).unwrap(), lat);

        let ali = ReferenceAlignment(vec![4, 0, 11]);
        assert_eq!(ali.to_text(), "4 0 11\n");
        assert_eq!(ReferenceAlignment::from_text(&ali.to_text()).unwrap(), ali);
    }

    #[test]
    fn rejects_structural_errors() {
        // arc skips a frame boundary
        assert!(Lattice::new(2, 3, vec![arc(0, 2, 0, 0), arc(0, 1, 0, 0)]).is_err());
        // second start node
        assert!(Lattice::new(1, 3, vec![arc(0, 2, 0, 0), arc(1, 2, 0, 0)]).is_err());
        // header/arc count mismatch
        assert!(Lattice::from_text("1 2 2\n0 1 0 0 0\n").is_err());
        assert!(Lattice::from_text("1 2\n0 1 0 0 0\n").is_err());
    }

    #[test]
    fn dead_end_lattice_is_degenerate() {
        // 0 -> 1 at frame 0, 2 -> 3 at frame 1, but nothing joins 1 and 2.
        let r = Lattice::new(2, 4, vec![arc(0, 1, 0, 0), arc(2, 3, 1, 0)]);
        assert!(matches!(r, Err(Error::DegenerateLattice(_))));
    }

    #[test]
    fn linear_lattice_contains_its_path() {
        let lat = Lattice::linear(&[2, 2, 0]).unwrap();
        assert!(lat.contains_path(&[2, 2, 0]));
        assert!(!lat.contains_path(&[2, 1, 0]));
        assert!(!lat.contains_path(&[2, 2]));
    }
}
