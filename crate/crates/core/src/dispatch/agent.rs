//! The dispatch agent: Q-networks, replay, schedules and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::{ActionSpace, DEFAULT_RADIUS};
use super::checkpoint::{
    params_digest, read_checkpoint, write_checkpoint, CheckpointError, CheckpointHeader,
};
use super::ddqn::{argmax, sync_target, train_step, TrainOutcome, TrainParams};
use super::network::{QFunction, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use super::schedule::{act_probability_at, epsilon_at, EPSILON_FLOOR};
use super::state::EncoderParams;
use crate::fleet::VehicleId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub sync_period: u64,
    pub grad_clip: f64,
    /// `T_n`: steps over which ε anneals and β ramps.
    pub schedule_horizon: u64,
    /// One network pair for the whole fleet; `false` gives every vehicle its own.
    pub shared_parameters: bool,
    pub action_radius: u32,
    pub encoder: EncoderParams,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            batch_size: 32,
            replay_capacity: 10_000,
            sync_period: 150,
            grad_clip: 10.0,
            schedule_horizon: 1500,
            shared_parameters: true,
            action_radius: DEFAULT_RADIUS,
            encoder: EncoderParams::default(),
        }
    }
}

impl DqnConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.encoder.input_dim()];
        sizes.extend(&self.hidden);
        sizes.push(
            ActionSpace {
                radius: self.action_radius,
            }
            .len(),
        );
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    /// Explore per the schedules and learn from replay.
    Train,
    /// Frozen parameters, ε at its floor, every idle vehicle acts.
    Eval,
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub mean_q_max: f64,
    pub loss: f64,
    pub epsilon: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct DdqnAgent {
    config: DqnConfig,
    discount: f64,
    actions: ActionSpace,
    online: Vec<QNetwork>,
    target: Vec<QNetwork>,
    buffers: Vec<ReplayBuffer>,
    step: u64,
    q_max_sum: f64,
    q_max_count: u64,
}

impl DdqnAgent {
    /// `fleet_size` only matters when parameters are not shared.
    pub fn new<R: Rng + ?Sized>(
        config: DqnConfig,
        discount: f64,
        fleet_size: usize,
        rng: &mut R,
    ) -> Self {
        let sizes = config.layer_sizes();
        let count = if config.shared_parameters {
            1
        } else {
            fleet_size.max(1)
        };
        let online: Vec<QNetwork> = (0..count).map(|_| QNetwork::new(&sizes, rng)).collect();
        let target = online.clone();
        let buffers = (0..count)
            .map(|_| ReplayBuffer::new(config.replay_capacity))
            .collect();
        Self {
            actions: ActionSpace {
                radius: config.action_radius,
            },
            config,
            discount,
            online,
            target,
            buffers,
            step: 0,
            q_max_sum: 0.0,
            q_max_count: 0,
        }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn actions(&self) -> ActionSpace {
        self.actions
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn online(&self) -> &[QNetwork] {
        &self.online
    }

    pub fn target(&self) -> &[QNetwork] {
        &self.target
    }

    pub fn replay_len(&self) -> usize {
        self.buffers.iter().map(ReplayBuffer::len).sum()
    }

    fn slot(&self, vehicle: VehicleId) -> usize {
        if self.online.len() == 1 {
            0
        } else {
            vehicle as usize % self.online.len()
        }
    }

    pub fn epsilon(&self, mode: AgentMode) -> f64 {
        match mode {
            AgentMode::Train => epsilon_at(self.step, self.config.schedule_horizon),
            AgentMode::Eval => EPSILON_FLOOR,
        }
    }

    pub fn act_probability(&self, mode: AgentMode) -> f64 {
        match mode {
            AgentMode::Train => act_probability_at(self.step, self.config.schedule_horizon),
            AgentMode::Eval => 1.0,
        }
    }

    /// ε-greedy action for `vehicle`; also records the greedy value for the
    /// training curve.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        vehicle: VehicleId,
        state: &[f64],
        mode: AgentMode,
        rng: &mut R,
    ) -> usize {
        let eps = self.epsilon(mode);
        let q = self.online[self.slot(vehicle)].q_values(state);
        let best = argmax(&q);
        self.q_max_sum += q[best];
        self.q_max_count += 1;
        if rng.gen::<f64>() < eps {
            rng.gen_range(0..self.online[0].num_actions())
        } else {
            best
        }
    }

    pub fn remember(&mut self, vehicle: VehicleId, t: Transition) {
        let s = self.slot(vehicle);
        self.buffers[s].push(t);
    }

    /// One learning iteration: a replay update per network, then the step
    /// counter advances and the target copies are synced on schedule.
    pub fn train_tick<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TrainRecord {
        let params = TrainParams {
            batch_size: self.config.batch_size,
            learning_rate: self.config.learning_rate,
            discount: self.discount,
            grad_clip: self.config.grad_clip,
        };
        let (mut loss_sum, mut updates) = (0.0, 0usize);
        for i in 0..self.online.len() {
            if let TrainOutcome::Updated { loss } = train_step(
                &self.buffers[i],
                &mut self.online[i],
                &self.target[i],
                &params,
                rng,
            ) {
                loss_sum += loss;
                updates += 1;
            }
        }
        let record = TrainRecord {
            step: self.step,
            mean_q_max: if self.q_max_count > 0 {
                self.q_max_sum / self.q_max_count as f64
            } else {
                f64::NAN
            },
            loss: if updates > 0 {
                loss_sum / updates as f64
            } else {
                f64::NAN
            },
            epsilon: self.epsilon(AgentMode::Train),
            beta: self.act_probability(AgentMode::Train),
        };
        self.q_max_sum = 0.0;
        self.q_max_count = 0;
        self.step += 1;
        for (online, target) in self.online.iter().zip(self.target.iter_mut()) {
            sync_target(online, target, self.step, self.config.sync_period);
        }
        record
    }

    pub fn digest(&self) -> String {
        params_digest(&self.online.iter().collect::<Vec<_>>())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let w = BufWriter::new(File::create(path)?);
        write_checkpoint(w, &self.online.iter().collect::<Vec<_>>(), self.step)
    }

    /// Restore online parameters and the step counter; target copies are set
    /// equal to the restored parameters.
    pub fn load(&mut self, path: &Path) -> Result<CheckpointHeader, CheckpointError> {
        let r = BufReader::new(File::open(path)?);
        let header = read_checkpoint(r, &mut self.online)?;
        self.step = header.step;
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.copy_from(o);
        }
        Ok(header)
    }
}
