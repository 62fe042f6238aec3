//! Explicit driving policy: reward-labelled replay, TD3 training and the
//! cumulative-offset rollout used for out-of-domain prediction.

mod ood;
mod replay;
mod td3;

pub use ood::{cumulative_offsets, evaluate_with_policy, ood_predict, policy_rollout};
pub use replay::{build_replay, demonstrations, label_reward, ReplayBuffer, Transition};
pub use td3::{td3_train, Actor, PolicyEpochLog, Td3Agent, Td3Config, Td3Optim, UpdateStats};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentState, STATE_DIM};
use crate::error::{Error, Result};

/// Normalized velocity (2) and acceleration (2). Position is left out so the
/// policy does not depend on where in the scene the agent is.
pub const POLICY_STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

const VEL_SCALE: f64 = 10.0;
const ACC_SCALE: f64 = 5.0;

pub fn policy_state(state: &AgentState) -> [f64; POLICY_STATE_DIM] {
    [
        state.vx / VEL_SCALE,
        state.vy / VEL_SCALE,
        state.ax / ACC_SCALE,
        state.ay / ACC_SCALE,
    ]
}

/// Same as [`policy_state`] for a physical-unit state feature vector.
pub fn policy_state_from_features(f: &[f64; STATE_DIM]) -> [f64; POLICY_STATE_DIM] {
    policy_state(&AgentState::from_features(f, 0))
}

pub const POLICY_CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub agent: Td3Agent,
    /// Effective run configuration, as written by the caller.
    pub config_echo: String,
}

impl PolicyCheckpoint {
    pub fn new(agent: Td3Agent, config_echo: String) -> Self {
        Self {
            version: POLICY_CHECKPOINT_VERSION,
            agent,
            config_echo,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(u64::from(POLICY_CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "{} has policy version {version:?}, expected {POLICY_CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}
