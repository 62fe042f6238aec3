//! Prediction by rolling the policy over predicted states.

use rayon::prelude::*;

use super::policy_state_from_features;
use super::td3::Td3Agent;
use crate::domain::{denormalize_state, STATE_DIM};
use crate::error::Result;
use crate::eval::{compute_metrics, EvalCase, MetricConfig, MetricReport};
use crate::trainer::{Model, Prepared};

/// `x̂_t = x_L + Σ_{k ≤ t} a_k`.
pub fn cumulative_offsets(start: [f64; 2], actions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    actions
        .iter()
        .scan([0.0, 0.0], |delta, a| {
            delta[0] += a[0];
            delta[1] += a[1];
            Some([start[0] + delta[0], start[1] + delta[1]])
        })
        .collect()
}

/// Actions `π(ŝ_t)` for every predicted state, accumulated from `start`.
pub fn policy_rollout(agent: &Td3Agent, start: [f64; 2], predicted: &[[f64; STATE_DIM]]) -> Vec<[f64; 2]> {
    let rows: Vec<f64> = predicted.iter().flat_map(policy_state_from_features).collect();
    let flat = agent.act_batch(&rows);
    let actions: Vec<[f64; 2]> = flat.chunks_exact(2).map(|a| [a[0], a[1]]).collect();
    cumulative_offsets(start, &actions)
}

/// Future coordinates from the policy applied to the predictor's future
/// states; the predictor's own coordinates are discarded.
pub fn ood_predict(model: &Model, agent: &Td3Agent, p: &Prepared, use_gnn: bool) -> Result<Vec<[f64; 2]>> {
    let states = model.predict_states(p, use_gnn)?;
    let last = denormalize_state(&p.last_state);
    Ok(policy_rollout(agent, [last[0], last[1]], &states))
}

pub fn evaluate_with_policy(
    model: &Model,
    agent: &Td3Agent,
    data: &[Prepared],
    use_gnn: bool,
    metrics: &MetricConfig,
) -> Result<MetricReport> {
    let cases: Vec<EvalCase> = data
        .par_iter()
        .map(|p| Ok(p.eval_case(ood_predict(model, agent, p, use_gnn)?)))
        .collect::<Result<_>>()?;
    compute_metrics(&cases, metrics)
}
