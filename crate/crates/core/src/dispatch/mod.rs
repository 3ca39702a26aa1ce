//! Dispatch learning: state encoding, the action window, the Q-network and
//! double Q-learning with experience replay.

pub mod action;
pub mod agent;
pub mod checkpoint;
pub mod ddqn;
pub mod network;
pub mod replay;
pub mod schedule;
pub mod state;

pub use action::{ActionSpace, DispatchAction};
pub use agent::{AgentMode, DdqnAgent, DqnConfig, TrainRecord};
pub use checkpoint::CheckpointError;
pub use ddqn::{
    argmax, ddqn_target, select_action, sync_target, train_step, TrainOutcome, TrainParams,
};
pub use network::{QFunction, QNetwork, TdSample};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::{act_probability_at, epsilon_at};
pub use state::{encode_state, EncoderParams, StateSnapshot};
