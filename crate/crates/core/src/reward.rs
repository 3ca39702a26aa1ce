//! Global objective components and the per-agent reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("demand has {demand} zones but supply has {supply}")]
    LengthMismatch { demand: usize, supply: usize },
    #[error("vehicle {0} is dispatched to more than one zone")]
    MultipleDestinations(usize),
    #[error("dispatch indicator must be 0 or 1, got {0}")]
    NotIndicator(u8),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Weights of the five objective terms plus the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub beta: [f64; 5],
    pub discount: f64,
}

impl RewardWeights {
    /// β = (10, 1, 1, 0.05, 2), used while setting up the simulator.
    pub const INIT: RewardWeights = RewardWeights {
        beta: [10.0, 1.0, 1.0, 0.05, 2.0],
        discount: 0.98,
    };

    /// β = (10, 1, 0.5, 1, 1), used for the baseline comparison.
    pub const EVAL: RewardWeights = RewardWeights {
        beta: [10.0, 1.0, 0.5, 1.0, 1.0],
        discount: 0.98,
    };

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "init" => Some(Self::INIT),
            "eval" => Some(Self::EVAL),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(RewardError::InvalidWeights(format!(
                "weight {b} must be finite and >= 0"
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(RewardError::InvalidWeights(format!(
                "discount {} must lie in (0, 1)",
                self.discount
            )));
        }
        Ok(())
    }

    /// Same weights with the hop penalty switched off.
    pub fn without_hops(mut self) -> Self {
        self.beta[4] = 0.0;
        self
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::EVAL
    }
}

/// `Σ_i max(0, d̄_i − v_i)`.
pub fn supply_demand_gap(demand: &[f64], supply: &[f64]) -> Result<f64, RewardError> {
    if demand.len() != supply.len() {
        return Err(RewardError::LengthMismatch {
            demand: demand.len(),
            supply: supply.len(),
        });
    }
    Ok(demand
        .iter()
        .zip(supply)
        .map(|(d, v)| (d - v).max(0.0))
        .sum())
}

/// `Σ_{n,j} h[n][j] · u[n][j]` with at most one dispatch per vehicle row.
pub fn total_dispatch_time(eta: &[Vec<f64>], dispatch: &[Vec<u8>]) -> Result<f64, RewardError> {
    if eta.len() != dispatch.len() {
        return Err(RewardError::LengthMismatch {
            demand: eta.len(),
            supply: dispatch.len(),
        });
    }
    let mut total = 0.0;
    for (n, (h_row, u_row)) in eta.iter().zip(dispatch).enumerate() {
        if h_row.len() != u_row.len() {
            return Err(RewardError::LengthMismatch {
                demand: h_row.len(),
                supply: u_row.len(),
            });
        }
        let mut ones = 0;
        for (h, &u) in h_row.iter().zip(u_row) {
            match u {
                0 => {}
                1 => {
                    ones += 1;
                    total += h;
                }
                other => return Err(RewardError::NotIndicator(other)),
            }
        }
        if ones > 1 {
            return Err(RewardError::MultipleDestinations(n));
        }
    }
    Ok(total)
}

/// Sum of per-order extra travel delays.
pub fn total_detour_overhead(delays: &[f64]) -> f64 {
    delays.iter().sum()
}

/// Number of hop-transfer drops in one tick.
pub fn total_hops(hop_events: usize) -> f64 {
    hop_events as f64
}

/// `Σ_n max(e_{t,n} − e_{t−1,n}, 0)`: vehicles that became active.
pub fn fleet_activations(now: &[u8], before: &[u8]) -> f64 {
    now.iter()
        .zip(before)
        .map(|(&e, &p)| (e as i32 - p as i32).max(0) as f64)
        .sum()
}

/// The five objective terms for one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveComponents {
    pub supply_demand_gap: f64,
    pub dispatch_time: f64,
    pub detour_overhead: f64,
    pub activations: f64,
    pub hops: f64,
}

impl ObjectiveComponents {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.supply_demand_gap,
            self.dispatch_time,
            self.detour_overhead,
            self.activations,
            self.hops,
        ]
    }
}

/// `−Σ β_k · component_k`.
pub fn global_objective(c: &ObjectiveComponents, w: &RewardWeights) -> f64 {
    -c.as_array()
        .iter()
        .zip(w.beta)
        .map(|(x, b)| x * b)
        .sum::<f64>()
}

/// Per-vehicle inputs to the agent reward at one tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentRewardInputs {
    pub passengers: u32,
    pub packages: u32,
    /// Ticks spent on detours or hop drops.
    pub detour_ticks: f64,
    /// `(ω_u, δ_u)` per onboard order.
    pub orders: Vec<(f64, f64)>,
    pub active_now: u8,
    pub active_before: u8,
    /// `H_u` of every order assigned to the vehicle.
    pub hops: Vec<u32>,
}

/// `β₁(b+p) − β₂c − β₃Σω·δ − β₄max(e_t − e_{t−1}, 0) − β₅max H`.
pub fn agent_reward(x: &AgentRewardInputs, w: &RewardWeights) -> f64 {
    let [b1, b2, b3, b4, b5] = w.beta;
    let carried = (x.passengers + x.packages) as f64;
    let weighted_delay: f64 = x.orders.iter().map(|(omega, delta)| omega * delta).sum();
    let activation = (x.active_now as i32 - x.active_before as i32).max(0) as f64;
    let max_hops = x.hops.iter().copied().max().unwrap_or(0) as f64;
    b1 * carried - b2 * x.detour_ticks - b3 * weighted_delay - b4 * activation - b5 * max_hops
}
