//! Replay buffer of demonstrated transitions labelled with the learned reward.

use serde::{Deserialize, Serialize};

use super::td3::Td3Agent;
use super::{policy_state, ACTION_DIM, POLICY_STATE_DIM};
use crate::domain::{Action, AgentState, Trajectory};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::reward::{pair_features, RewardNet};
use crate::trainer::Prepared;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Transitions plus, for demonstration buffers, the reward term `R(s, a)`
/// that stays fixed while the imitation penalty is relabelled.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
    /// `Some(R(s, a))` per transition when the penalty is applied.
    base_rewards: Option<Vec<f64>>,
}

impl ReplayBuffer {
    /// Buffer whose rewards are stored as given and never relabelled.
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            transitions: Vec::new(),
            base_rewards: None,
        }
    }

    pub fn push(&mut self, t: Transition) {
        assert_eq!(t.s.len(), self.state_dim, "state dimension");
        assert_eq!(t.a.len(), self.action_dim, "action dimension");
        if let Some(base) = &mut self.base_rewards {
            base.push(t.r);
        }
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Whether rewards carry the actor-dependent imitation penalty.
    pub fn is_penalized(&self) -> bool {
        self.base_rewards.is_some()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Recomputes `r = R(s, a) − ‖a − π(s)‖²` with the agent's current actor.
    /// No-op for buffers without a fixed reward term.
    pub fn relabel(&mut self, agent: &Td3Agent) {
        let Some(base) = &self.base_rewards else {
            return;
        };
        let rows: Vec<f64> = self.transitions.iter().flat_map(|t| t.s.iter().copied()).collect();
        let pi = agent.act_batch(&rows);
        let d = self.action_dim;
        for (i, t) in self.transitions.iter_mut().enumerate() {
            let penalty: f64 = t.a.iter().zip(&pi[i * d..(i + 1) * d]).map(|(a, p)| (a - p).powi(2)).sum();
            t.r = base[i] - penalty;
        }
    }
}

/// `r = R(s, a | θ_RF) − ‖a − π(s)‖²` for one state-action pair.
pub fn label_reward(reward: &RewardNet, rf: &ParamStore, agent: &Td3Agent, state: &AgentState, action: Action) -> f64 {
    let r = reward.reward(rf, &pair_features(state, action));
    let pi = agent.act(&policy_state(state));
    r - (action.dx - pi[0]).powi(2) - (action.dy - pi[1]).powi(2)
}

/// Full observed-plus-future target trajectory of every instance.
pub fn demonstrations(data: &[Prepared]) -> Result<Vec<Trajectory>> {
    data.iter()
        .map(|p| {
            let inst = &p.instance;
            let mut states = inst.target_history.states.clone();
            states.extend_from_slice(&inst.target_future.states);
            Trajectory::new(inst.target_history.agent_id, states, inst.target_history.dt)
        })
        .collect()
}

/// One transition per consecutive state pair of every demonstration, with
/// `done` on the last pair of each trajectory and rewards labelled by
/// [`label_reward`].
pub fn build_replay(demos: &[Trajectory], reward: &RewardNet, rf: &ParamStore, agent: &Td3Agent) -> Result<ReplayBuffer> {
    if demos.is_empty() {
        return Err(Error::invalid("no demonstrations for the replay buffer"));
    }
    let mut transitions = Vec::new();
    let mut features = Vec::new();
    for traj in demos {
        let n = traj.states.len();
        for (k, w) in traj.states.windows(2).enumerate() {
            let action = Action::between(w[0].position(), w[1].position());
            features.extend_from_slice(&pair_features(&w[0], action));
            transitions.push(Transition {
                s: policy_state(&w[0]).to_vec(),
                a: action.as_array().to_vec(),
                r: 0.0,
                s_next: policy_state(&w[1]).to_vec(),
                done: k + 2 == n,
            });
        }
    }
    let base = reward.rewards(rf, &features);
    let mut buffer = ReplayBuffer {
        state_dim: POLICY_STATE_DIM,
        action_dim: ACTION_DIM,
        transitions,
        base_rewards: Some(base),
    };
    buffer.relabel(agent);
    Ok(buffer)
}
