use std::borrow::Borrow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, NetworkShape, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use super::schedule::{EpsilonConfig, EpsilonSchedule};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Double-Q targets: the online net picks `argmax_a Q(s', a)`, the target
/// net values it. Terminal transitions bootstrap to the reward alone.
pub fn td_targets<T: Borrow<Transition>>(
    batch: &[T],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("discount {gamma} outside [0, 1]")));
    }
    batch
        .iter()
        .map(|t| {
            let t = t.borrow();
            if t.terminal {
                return Ok(t.reward);
            }
            let best = argmax(&online.forward(&t.next_state)?);
            Ok(t.reward + gamma * target.forward(&t.next_state)?[best])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

/// One SGD step on the squared TD error. Returns the batch loss measured
/// before the update.
pub fn train_step<T: Borrow<Transition>>(
    online: &mut QNetwork,
    target: &QNetwork,
    batch: &[T],
    sgd: &SgdConfig,
) -> Result<f64> {
    let targets = td_targets(batch, online, target, sgd.gamma)?;
    let samples: Vec<(&[f64], usize, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(t, &y)| {
            let t = t.borrow();
            (t.state.as_slice(), t.action, y)
        })
        .collect();
    let (loss, grad) = online.loss_and_gradient(&samples)?;
    if !loss.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    online.apply_gradient(&grad, sgd.learning_rate, sgd.grad_clip);
    Ok(loss)
}

/// ε-greedy: uniform with probability ε, otherwise the greedy action.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let q = net.forward(state)?;
    let explore: f64 = rng.random();
    if explore < epsilon {
        Ok(rng.random_range(0..q.len()))
    } else {
        Ok(argmax(&q))
    }
}

pub fn sync_target(online: &QNetwork, target: &mut QNetwork) -> Result<()> {
    target.copy_from(online)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub grad_clip: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_every: u64,
    /// Training starts once the replay buffer holds this many transitions.
    pub min_replay: usize,
    /// Upper bound on training episodes.
    pub max_episodes: u32,
    pub epsilon: EpsilonConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden_layers: vec![64, 64],
            learning_rate: 0.0005,
            gamma: 0.99,
            grad_clip: 10.0,
            replay_capacity: 50_000,
            batch_size: 64,
            target_sync_every: 500,
            min_replay: 1_000,
            max_episodes: 3_000,
            epsilon: EpsilonConfig::default(),
        }
    }
}

impl DqnConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            grad_clip: Some(self.grad_clip),
        }
    }

    pub fn shape(&self, input_dim: usize, actions: usize, dueling: bool) -> NetworkShape {
        NetworkShape {
            input_dim,
            hidden: self.hidden_layers.clone(),
            actions,
            dueling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if self.max_episodes == 0 {
            return bad("at least one training episode is required");
        }
        let e = &self.epsilon;
        if !(0.0 <= e.end && e.end <= e.start && e.start <= 1.0) {
            return bad("epsilon bounds must satisfy 0 <= end <= start <= 1");
        }
        Ok(())
    }
}

/// A training context: online and target networks, replay memory, the
/// exploration schedule and the minibatch stream.
#[derive(Debug, Clone)]
pub struct Learner {
    pub online: QNetwork,
    pub target: QNetwork,
    pub replay: ReplayBuffer,
    pub schedule: EpsilonSchedule,
    config: DqnConfig,
    train_steps: u64,
    batch_rng: SimRng,
}

impl Learner {
    pub fn new(shape: NetworkShape, config: DqnConfig, seed: u64) -> Self {
        let online = QNetwork::new(shape, &mut rng::stream(seed, "init"));
        let target = online.clone();
        Learner {
            online,
            target,
            replay: ReplayBuffer::new(config.replay_capacity),
            schedule: EpsilonSchedule::new(config.epsilon),
            batch_rng: rng::stream(seed, "minibatch"),
            config,
            train_steps: 0,
        }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn remember(&mut self, transition: Transition) {
        self.replay.push(transition);
    }

    /// Trains on one minibatch once the buffer is warm; syncs the target
    /// network on its cadence.
    pub fn train_if_ready(&mut self) -> Result<Option<f64>> {
        let needed = self.config.min_replay.max(self.config.batch_size);
        if self.replay.len() < needed {
            return Ok(None);
        }
        let batch = self.replay.sample(self.config.batch_size, &mut self.batch_rng)?;
        let loss = train_step(&mut self.online, &self.target, &batch, &self.config.sgd())
            .map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence {
                    step: self.train_steps,
                },
                other => other,
            })?;
        self.train_steps += 1;
        if self.train_steps % self.config.target_sync_every.max(1) == 0 {
            sync_target(&self.online, &mut self.target)?;
        }
        Ok(Some(loss))
    }
}
