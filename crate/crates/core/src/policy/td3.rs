//! Twin Delayed DDPG on a fixed replay buffer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::replay::ReplayBuffer;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, BoundMlp, Mlp, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub hidden: usize,
    /// Per-component action bound (m per step).
    pub a_max: f64,
    pub discount: f64,
    /// Soft target update rate.
    pub tau: f64,
    /// Target-policy smoothing noise std and clip, as fractions of `a_max`.
    pub policy_noise: f64,
    pub noise_clip: f64,
    /// Critic updates per actor update.
    pub policy_delay: u64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    pub updates_per_epoch: usize,
    /// Recompute the imitation penalty with the current actor every epoch.
    pub relabel_every_epoch: bool,
    /// Weight of the normalized Q term against the imitation penalty in the
    /// actor objective on demonstration buffers.
    pub q_weight: f64,
    pub seed: u64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: 64,
            a_max: 6.0,
            discount: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 3,
            batch_size: 128,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            epochs: 80,
            updates_per_epoch: 100,
            relabel_every_epoch: true,
            q_weight: 2.5,
            seed: 0,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max > 0.0) {
            return Err(Error::Config("a_max must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) || !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("discount and tau must lie in [0, 1]".into()));
        }
        if self.policy_delay < 1 || self.batch_size < 1 {
            return Err(Error::Config("policy_delay and batch_size must be at least 1".into()));
        }
        if self.policy_noise < 0.0 || self.noise_clip < 0.0 {
            return Err(Error::Config("target noise parameters must be non-negative".into()));
        }
        Ok(())
    }
}

/// Deterministic actor `a = a_max · tanh(MLP(s))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub mlp: Mlp,
    pub a_max: f64,
}

impl Actor {
    fn forward(&self, tape: &mut Tape, bound: &BoundMlp, s: crate::autodiff::Var) -> crate::autodiff::Var {
        let z = bound.forward(tape, s);
        let z = tape.tanh(z);
        tape.scale(z, self.a_max)
    }

    pub fn state_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn act(&self, store: &ParamStore, s: &[f64]) -> Vec<f64> {
        self.mlp
            .eval(store, s)
            .into_iter()
            .map(|z| self.a_max * z.tanh())
            .collect()
    }

    /// Actions for every row of a flattened `n × state_dim` matrix.
    pub fn act_batch(&self, store: &ParamStore, rows: &[f64]) -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new();
        let bound = self.mlp.bind(&mut tape, store, false);
        let s = tape.constant(rows.to_vec(), rows.len() / self.state_dim(), self.state_dim());
        let a = self.forward(&mut tape, &bound, s);
        tape.value(a).to_vec()
    }
}

/// Actor, twin critics and their target copies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub actor: Actor,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_params: ParamStore,
    pub critic_params: ParamStore,
    pub target_actor: ParamStore,
    pub target_critic: ParamStore,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Optimizer state; not part of the saved policy.
#[derive(Clone, Debug)]
pub struct Td3Optim {
    actor: Adam,
    critic: Adam,
}

impl Td3Optim {
    pub fn new(agent: &Td3Agent) -> Self {
        Self {
            actor: Adam::new(AdamConfig::with_lr(agent.config.actor_lr), &agent.actor_params),
            critic: Adam::new(AdamConfig::with_lr(agent.config.critic_lr), &agent.critic_params),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Mean `|Q₁(s, a) − y|` over the batch.
    pub td_error: f64,
    /// Set on the updates that also moved the actor.
    pub actor_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEpochLog {
    pub epoch: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub td_error: f64,
}

impl Td3Agent {
    pub fn new(state_dim: usize, action_dim: usize, config: Td3Config) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7464_335f_696e_6974);
        let h = config.hidden;
        let mut actor_params = ParamStore::new();
        let mlp = Mlp::new(&mut actor_params, "actor", &[state_dim, h, h, action_dim], Activation::Relu, &mut rng);
        let mut critic_params = ParamStore::new();
        let dims = [state_dim + action_dim, h, h, 1];
        let critic1 = Mlp::new(&mut critic_params, "critic1", &dims, Activation::Relu, &mut rng);
        let critic2 = Mlp::new(&mut critic_params, "critic2", &dims, Activation::Relu, &mut rng);
        Self {
            config,
            actor: Actor {
                mlp,
                a_max: config.a_max,
            },
            critic1,
            critic2,
            target_actor: actor_params.clone(),
            target_critic: critic_params.clone(),
            actor_params,
            critic_params,
            critic_updates: 0,
            actor_updates: 0,
        }
    }

    pub fn act(&self, s: &[f64]) -> Vec<f64> {
        self.actor.act(&self.actor_params, s)
    }

    pub fn act_batch(&self, rows: &[f64]) -> Vec<f64> {
        self.actor.act_batch(&self.actor_params, rows)
    }

    /// Critic input `[s, a / a_max]` for `n` rows.
    fn critic_input(&self, states: &[f64], actions: &[f64], n: usize) -> Vec<f64> {
        let (sd, ad) = (self.actor.state_dim(), self.actor.action_dim());
        let mut out = Vec::with_capacity(n * (sd + ad));
        for i in 0..n {
            out.extend_from_slice(&states[i * sd..(i + 1) * sd]);
            out.extend(actions[i * ad..(i + 1) * ad].iter().map(|a| a / self.config.a_max));
        }
        out
    }

    /// `min(Q₁', Q₂')` of the target critics.
    fn target_q(&self, states: &[f64], actions: &[f64], n: usize) -> Vec<f64> {
        let x = self.critic_input(states, actions, n);
        let mut tape = Tape::new();
        let c1 = self.critic1.bind(&mut tape, &self.target_critic, false);
        let c2 = self.critic2.bind(&mut tape, &self.target_critic, false);
        let x = tape.constant(x, n, self.actor.state_dim() + self.actor.action_dim());
        let q1 = c1.forward(&mut tape, x);
        let q2 = c2.forward(&mut tape, x);
        let q = tape.min(q1, q2);
        tape.value(q).to_vec()
    }

    /// `Q₁(s, a)` of the online critic.
    pub fn q1(&self, s: &[f64], a: &[f64]) -> f64 {
        let x = self.critic_input(s, a, 1);
        self.critic1.eval(&self.critic_params, &x)[0]
    }

    /// One TD3 step on a uniformly sampled batch: critic regression to the
    /// clipped double-Q target, then, every `policy_delay` critic updates, a
    /// deterministic policy-gradient actor step and soft target updates.
    pub fn update<R: Rng>(&mut self, optim: &mut Td3Optim, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateStats> {
        let cfg = self.config;
        let (sd, ad) = (self.actor.state_dim(), self.actor.action_dim());
        if buffer.state_dim() != sd || buffer.action_dim() != ad {
            return Err(Error::invalid("replay buffer dimensions do not match the agent"));
        }
        if buffer.len() < cfg.batch_size {
            return Err(Error::invalid(format!(
                "replay buffer holds {} transitions, fewer than the batch size {}",
                buffer.len(),
                cfg.batch_size
            )));
        }
        let n = cfg.batch_size;
        let batch: Vec<usize> = (0..n).map(|_| rng.random_range(0..buffer.len())).collect();
        let mut s = Vec::with_capacity(n * sd);
        let mut a = Vec::with_capacity(n * ad);
        let mut s2 = Vec::with_capacity(n * sd);
        let (mut r, mut not_done) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for &i in &batch {
            let t = buffer.get(i);
            s.extend_from_slice(&t.s);
            a.extend_from_slice(&t.a);
            s2.extend_from_slice(&t.s_next);
            r.push(t.r);
            not_done.push(if t.done { 0.0 } else { 1.0 });
        }

        // Target actions with clipped smoothing noise.
        let mut a2 = self.actor.act_batch(&self.target_actor, &s2);
        let (sigma, clip) = (cfg.policy_noise * cfg.a_max, cfg.noise_clip * cfg.a_max);
        for v in &mut a2 {
            let eps: f64 = StandardNormal.sample(rng);
            *v = (*v + (sigma * eps).clamp(-clip, clip)).clamp(-cfg.a_max, cfg.a_max);
        }
        let q_next = self.target_q(&s2, &a2, n);
        let y: Vec<f64> = (0..n).map(|i| r[i] + cfg.discount * not_done[i] * q_next[i]).collect();

        let mut tape = Tape::new();
        let c1 = self.critic1.bind(&mut tape, &self.critic_params, true);
        let c2 = self.critic2.bind(&mut tape, &self.critic_params, true);
        let x = tape.constant(self.critic_input(&s, &a, n), n, sd + ad);
        let target = tape.constant(y.clone(), n, 1);
        let q1 = c1.forward(&mut tape, x);
        let q2 = c2.forward(&mut tape, x);
        let e1 = tape.sub(q1, target);
        let e2 = tape.sub(q2, target);
        let l1 = tape.square(e1);
        let l1 = tape.mean(l1);
        let l2 = tape.square(e2);
        let l2 = tape.mean(l2);
        let loss = tape.add(l1, l2);
        let critic_loss = tape.scalar(loss);
        let td_error = tape.value(e1).iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        if !critic_loss.is_finite() {
            return Err(Error::TrainingFailure {
                epoch: 0,
                step: self.critic_updates as usize,
                message: "critic loss is not finite".into(),
            });
        }
        let grads = tape.backward(loss).for_store(&self.critic_params);
        optim.critic.step(&mut self.critic_params, &grads);
        self.critic_updates += 1;

        let mut actor_loss = None;
        if self.critic_updates % cfg.policy_delay == 0 {
            let mut tape = Tape::new();
            let pi = self.actor.mlp.bind(&mut tape, &self.actor_params, true);
            let c1 = self.critic1.bind(&mut tape, &self.critic_params, false);
            let st = tape.constant(s, n, sd);
            let act = self.actor.forward(&mut tape, &pi, st);
            let scaled = tape.scale(act, 1.0 / cfg.a_max);
            let x = tape.concat(&[st, scaled]);
            let q = c1.forward(&mut tape, x);
            let loss = if buffer.is_penalized() {
                // The penalty −‖a − π(s)‖² of the sampled demonstration
                // depends on the actor directly; its gradient joins the
                // policy gradient, with Q rescaled to unit magnitude.
                let q_scale = tape.value(q).iter().map(|v| v.abs()).sum::<f64>() / n as f64;
                let q = tape.mean(q);
                let q = tape.scale(q, -cfg.q_weight / q_scale.max(1e-6));
                let demo = tape.constant(a, n, ad);
                let dev = tape.sub(act, demo);
                let dev = tape.square(dev);
                let dev = tape.sum(dev);
                let dev = tape.scale(dev, 1.0 / n as f64);
                tape.add(q, dev)
            } else {
                let q = tape.mean(q);
                tape.neg(q)
            };
            let value = tape.scalar(loss);
            let grads = tape.backward(loss).for_store(&self.actor_params);
            optim.actor.step(&mut self.actor_params, &grads);
            self.actor_updates += 1;
            self.target_actor.soft_update_from(&self.actor_params, cfg.tau);
            self.target_critic.soft_update_from(&self.critic_params, cfg.tau);
            actor_loss = Some(value);
        }
        Ok(UpdateStats {
            critic_loss,
            td_error,
            actor_loss,
        })
    }
}

/// Trains `agent` on `buffer` for `config.epochs` epochs, relabelling the
/// imitation penalty with the current actor at the start of every epoch when
/// enabled. Deterministic given the config seed.
pub fn td3_train(agent: &mut Td3Agent, buffer: &mut ReplayBuffer) -> Result<Vec<PolicyEpochLog>> {
    let cfg = agent.config;
    cfg.validate()?;
    let mut optim = Td3Optim::new(agent);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7464_335f_7472_6169);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.relabel_every_epoch || epoch == 1 {
            buffer.relabel(agent);
        }
        let (mut critic, mut td, mut actor, mut n_actor) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..cfg.updates_per_epoch {
            let stats = agent.update(&mut optim, buffer, &mut rng).map_err(|e| match e {
                Error::TrainingFailure { step, message, .. } => Error::TrainingFailure { epoch, step, message },
                other => other,
            })?;
            critic += stats.critic_loss;
            td += stats.td_error;
            if let Some(l) = stats.actor_loss {
                actor += l;
                n_actor += 1;
            }
        }
        let k = cfg.updates_per_epoch.max(1) as f64;
        log.push(PolicyEpochLog {
            epoch,
            critic_loss: critic / k,
            actor_loss: if n_actor > 0 { actor / n_actor as f64 } else { 0.0 },
            td_error: td / k,
        });
    }
    Ok(log)
}
