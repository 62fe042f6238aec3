//! Recurrent history encoder with a single graph-attention update of the target node.
//!
//! Every node's masked history runs through one shared GRU. The target's
//! hidden state is then refined by attention over its inclusive neighbourhood:
//!
//! ```text
//! α_ι = softmax_ι( aᵀ · LeakyReLU_0.2( W_score [h_target ‖ h_ι ‖ e_ι] ) )
//! h'  = b + Σ_ι α_ι · W_value h_ι
//! ```
//!
//! Scoring and value projections are separate matrices; the self term uses a
//! zero edge feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{NodeSource, TrafficGraph, EDGE_DIM};
use crate::domain::{normalize_state, AgentState, PredictionInstance, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{BoundGru, BoundLinear, GruCell, Linear, ParamId, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Scales applied to edge features before scoring.
pub const EDGE_SCALE: [f64; EDGE_DIM] = [10.0, 10.0, 10.0, 10.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub attention_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            attention_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub gru: GruCell,
    pub score_proj: Linear,
    pub score_vec: ParamId,
    pub value_proj: Linear,
    pub bias: ParamId,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Self {
        let h = config.hidden_dim;
        let gru = GruCell::new(store, "encoder.gru", STATE_DIM, h, rng);
        let score_proj = Linear::new(store, "encoder.gat.score", 2 * h + EDGE_DIM, config.attention_dim, false, rng);
        let score_vec = store.normal("encoder.gat.a", 1, config.attention_dim, 1.0, rng);
        let value_proj = Linear::new(store, "encoder.gat.value", h, h, false, rng);
        let bias = store.zeros("encoder.gat.bias", 1, h);
        Self {
            config,
            gru,
            score_proj,
            score_vec,
            value_proj,
            bias,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore, trainable: bool) -> BoundEncoder {
        let p = |tape: &mut Tape, id| {
            if trainable {
                tape.param(store, id)
            } else {
                tape.frozen(store, id)
            }
        };
        BoundEncoder {
            hidden_dim: self.config.hidden_dim,
            gru: self.gru.bind(tape, store, trainable),
            score_proj: self.score_proj.bind(tape, store, trainable),
            score_vec: p(tape, self.score_vec),
            value_proj: self.value_proj.bind(tape, store, trainable),
            bias: p(tape, self.bias),
        }
    }
}

/// A masked history ready for the recurrent pass.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeHistory {
    pub features: Vec<[f64; STATE_DIM]>,
    pub mask: Vec<bool>,
}

impl NodeHistory {
    fn from_states(states: &[AgentState], mask: &[bool]) -> Self {
        Self {
            features: states
                .iter()
                .map(|s| normalize_state(&s.features([0.0, 0.0])))
                .collect(),
            mask: mask.to_vec(),
        }
    }
}

/// Histories of every graph node, in node order.
pub fn node_histories(instance: &PredictionInstance, graph: &TrafficGraph) -> Result<Vec<NodeHistory>> {
    let len = instance.history_len();
    graph
        .node_sources
        .iter()
        .map(|src| match *src {
            NodeSource::Target => Ok(NodeHistory::from_states(
                &instance.target_history.states,
                &vec![true; len],
            )),
            NodeSource::Neighbor(k) => {
                let n = instance
                    .neighbors
                    .get(k)
                    .ok_or_else(|| Error::invalid(format!("graph refers to missing neighbour {k}")))?;
                if n.history.len() != len || n.history_mask.len() != len {
                    return Err(Error::invalid(format!(
                        "neighbour {} history has {} steps, expected {len}",
                        n.agent_id,
                        n.history.len()
                    )));
                }
                Ok(NodeHistory::from_states(&n.history, &n.history_mask))
            }
        })
        .collect()
}

pub fn scaled_edge(e: &[f64; EDGE_DIM]) -> [f64; EDGE_DIM] {
    let mut out = [0.0; EDGE_DIM];
    for k in 0..EDGE_DIM {
        out[k] = e[k] / EDGE_SCALE[k];
    }
    out
}

#[derive(Clone, Debug)]
pub struct BoundEncoder {
    pub hidden_dim: usize,
    gru: BoundGru,
    score_proj: BoundLinear,
    score_vec: Var,
    value_proj: BoundLinear,
    bias: Var,
}

impl BoundEncoder {
    /// Final GRU hidden state of one masked history; masked steps leave it unchanged.
    pub fn encode_history(&self, tape: &mut Tape, history: &NodeHistory) -> Var {
        let mut h = tape.row(&vec![0.0; self.hidden_dim]);
        for (x, &valid) in history.features.iter().zip(&history.mask) {
            if valid {
                let xv = tape.row(x);
                h = self.gru.step(tape, xv, h);
            }
        }
        h
    }

    pub fn encode_node_histories(&self, tape: &mut Tape, histories: &[NodeHistory]) -> Vec<Var> {
        histories.iter().map(|h| self.encode_history(tape, h)).collect()
    }

    /// Attention over the inclusive neighbourhood. `neighborhood[0]` must be
    /// the target itself with a zero edge feature.
    pub fn attention_weights(&self, tape: &mut Tape, target: Var, neighborhood: &[(Var, [f64; EDGE_DIM])]) -> Var {
        let scores: Vec<Var> = neighborhood
            .iter()
            .map(|(h, e)| {
                let ev = tape.row(&scaled_edge(e));
                let cat = tape.concat(&[target, *h, ev]);
                let proj = self.score_proj.forward(tape, cat);
                let act = tape.leaky_relu(proj, LEAKY_SLOPE);
                tape.dot(act, self.score_vec)
            })
            .collect();
        let logits = tape.concat(&scores);
        tape.softmax(logits)
    }

    /// `b + Σ α_ι W_value h_ι`
    pub fn gat_update(&self, tape: &mut Tape, weights: Var, members: &[Var]) -> Var {
        let mixed = tape.weighted_sum(weights, members);
        let projected = self.value_proj.forward(tape, mixed);
        tape.add(projected, self.bias)
    }

    /// Latent `h_L` for the target node. With `use_gnn == false` the target's
    /// recurrent encoding is returned unchanged.
    pub fn encode(
        &self,
        tape: &mut Tape,
        instance: &PredictionInstance,
        graph: &TrafficGraph,
        use_gnn: bool,
    ) -> Result<Var> {
        if !use_gnn {
            let target = node_histories(instance, graph)?
                .into_iter()
                .nth(graph.target_node)
                .ok_or_else(|| Error::invalid("graph has no target node"))?;
            return Ok(self.encode_history(tape, &target));
        }
        let histories = node_histories(instance, graph)?;
        let hs = self.encode_node_histories(tape, &histories);
        let t = graph.target_node;
        let mut neighborhood = vec![(hs[t], [0.0; EDGE_DIM])];
        for (j, e) in graph.out_edges(t) {
            neighborhood.push((hs[j], e));
        }
        let weights = self.attention_weights(tape, hs[t], &neighborhood);
        let members: Vec<Var> = neighborhood.iter().map(|(h, _)| *h).collect();
        Ok(self.gat_update(tape, weights, &members))
    }
}
