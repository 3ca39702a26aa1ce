//! Double Q-learning targets, the replay training step and target syncing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{QFunction, QNetwork, TdSample};
use super::replay::{ReplayBuffer, Transition};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy action selection.
pub fn select_action<Q: QFunction + ?Sized, R: Rng + ?Sized>(
    q: &Q,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.num_actions())
    } else {
        argmax(&q.q_values(state))
    }
}

/// `z = r + γ^{1+c} Q(Ω', argmax_a Q(Ω', a; θ); θ⁻)`: the online network
/// picks the bootstrap action, the target network values it. Terminal
/// transitions return `r`.
pub fn ddqn_target<Q: QFunction + ?Sized, T: QFunction + ?Sized>(
    tr: &Transition,
    online: &Q,
    target: &T,
    discount: f64,
) -> f64 {
    if tr.terminal || discount == 0.0 {
        return tr.reward;
    }
    let best = argmax(&online.q_values(&tr.next_state));
    let value = target.q_values(&tr.next_state)[best];
    tr.reward + discount.powi(1 + tr.elapsed as i32) * value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub discount: f64,
    /// Gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            discount: 0.98,
            grad_clip: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    /// The buffer held fewer than `batch_size` transitions; nothing changed.
    Underfull,
    /// Loss of the sampled batch before the update.
    Updated { loss: f64 },
}

/// One SGD step on the mean squared TD error of a uniform batch. `target`
/// is read only.
pub fn train_step<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    online: &mut QNetwork,
    target: &QNetwork,
    params: &TrainParams,
    rng: &mut R,
) -> TrainOutcome {
    if params.batch_size == 0 || buffer.len() < params.batch_size {
        return TrainOutcome::Underfull;
    }
    let batch = buffer.sample(params.batch_size, rng);
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| ddqn_target(t, &*online, target, params.discount))
        .collect();
    let samples: Vec<TdSample<'_>> = batch
        .iter()
        .zip(&targets)
        .map(|(t, z)| TdSample {
            input: &t.state,
            action: t.action,
            target: *z,
        })
        .collect();
    let (loss, grad) = online.td_loss_and_gradient(&samples);
    online.sgd_step(&grad, params.learning_rate, params.grad_clip);
    TrainOutcome::Updated { loss }
}

/// Copy θ into θ⁻ when `step` is a positive multiple of `period`.
pub fn sync_target(online: &QNetwork, target: &mut QNetwork, step: u64, period: u64) -> bool {
    if period > 0 && step > 0 && step.is_multiple_of(period) {
        target.copy_from(online);
        true
    } else {
        false
    }
}
