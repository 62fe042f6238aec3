use serde::{Deserialize, Serialize};

use crate::domain::{AgentState, PredictionInstance, STATE_DIM};

/// Relative position (2), relative velocity (2), Euclidean distance (1).
pub const EDGE_DIM: usize = 5;

pub const DEFAULT_RADIUS: f64 = 30.0;

/// Which agent a graph node stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSource {
    Target,
    /// Index into `PredictionInstance::neighbors`.
    Neighbor(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficGraph {
    pub node_features: Vec<[f64; STATE_DIM]>,
    pub node_sources: Vec<NodeSource>,
    pub edge_index: Vec<(usize, usize)>,
    pub edge_features: Vec<[f64; EDGE_DIM]>,
    pub target_node: usize,
}

impl TrafficGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_index.len()
    }

    /// Outgoing edges of `node` as `(neighbor, edge feature)` pairs.
    pub fn out_edges(&self, node: usize) -> Vec<(usize, [f64; EDGE_DIM])> {
        self.edge_index
            .iter()
            .zip(&self.edge_features)
            .filter(|((from, _), _)| *from == node)
            .map(|((_, to), e)| (*to, *e))
            .collect()
    }
}

pub fn edge_feature(from: &AgentState, to: &AgentState) -> [f64; EDGE_DIM] {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    [dx, dy, to.vx - from.vx, to.vy - from.vy, dx.hypot(dy)]
}

/// Target plus every neighbour whose last observed position lies within
/// `radius` of the target's; directed edges both ways between node pairs
/// within `radius` of each other.
pub fn build_graph(instance: &PredictionInstance, radius: f64) -> TrafficGraph {
    let target_last = *instance.last_observed();
    let mut states = vec![target_last];
    let mut node_sources = vec![NodeSource::Target];
    for (k, n) in instance.neighbors.iter().enumerate() {
        let Some(last) = n.last_observed() else {
            continue;
        };
        let s = n.history[last];
        let d = (s.x - target_last.x).hypot(s.y - target_last.y);
        if d <= radius {
            states.push(s);
            node_sources.push(NodeSource::Neighbor(k));
        }
    }
    let mut edge_index = Vec::new();
    let mut edge_features = Vec::new();
    for i in 0..states.len() {
        for j in 0..states.len() {
            if i == j {
                continue;
            }
            let e = edge_feature(&states[i], &states[j]);
            if e[4] <= radius {
                edge_index.push((i, j));
                edge_features.push(e);
            }
        }
    }
    TrafficGraph {
        node_features: states.iter().map(|s| s.features([0.0, 0.0])).collect(),
        node_sources,
        edge_index,
        edge_features,
        target_node: 0,
    }
}
