//! State encoding: per-zone channels cropped around a vehicle plus its own
//! free capacity and calendar features.

use serde::{Deserialize, Serialize};

use crate::demand::{DemandForecast, Tick};
use crate::fleet::{FleetSnapshot, Vehicle};
use crate::geo::GridWorld;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderParams {
    /// Side of the square crop; odd.
    pub window: u32,
    /// Forecast steps averaged into the demand channel.
    pub demand_steps: usize,
    /// Look-ahead of the first projected-supply channel, ticks.
    pub near: usize,
    /// Look-ahead of the second projected-supply channel, ticks.
    pub far: usize,
    pub ticks_per_day: u64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self {
            window: 15,
            demand_steps: 15,
            near: 15,
            far: 30,
            ticks_per_day: 1440,
        }
    }
}

/// Channels per crop cell.
pub const CHANNELS: usize = 4;
/// Seats free and trunk free.
pub const OCCUPANCY_FEATURES: usize = 2;
/// sin/cos of tick-of-day and of day-of-week.
pub const TIME_FEATURES: usize = 4;

impl EncoderParams {
    pub fn cells(&self) -> usize {
        (self.window * self.window) as usize
    }

    pub fn input_dim(&self) -> usize {
        CHANNELS * self.cells() + OCCUPANCY_FEATURES + TIME_FEATURES
    }
}

/// Flattened encoder output. Layout: demand crop, available crop, near
/// projection crop, far projection crop (each row-major), then seats free,
/// trunk free, then the four time features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub features: Vec<f64>,
}

impl StateSnapshot {
    pub fn channel<'a>(&'a self, params: &EncoderParams, c: usize) -> &'a [f64] {
        let n = params.cells();
        &self.features[c * n..(c + 1) * n]
    }

    /// Value of channel `c` at crop offset `(dr, dc)` from the center.
    pub fn at(&self, params: &EncoderParams, c: usize, dr: i32, dc: i32) -> f64 {
        let half = (params.window / 2) as i32;
        let side = params.window as i32;
        let idx = (dr + half) * side + (dc + half);
        self.channel(params, c)[idx as usize]
    }

    pub fn occupancy(&self, params: &EncoderParams) -> [f64; 2] {
        let at = CHANNELS * params.cells();
        [self.features[at], self.features[at + 1]]
    }

    pub fn time_features(&self) -> &[f64] {
        &self.features[self.features.len() - TIME_FEATURES..]
    }
}

/// Build `Ω_{t,n}` for one vehicle.
pub fn encode_state(
    grid: &GridWorld,
    fleet: &FleetSnapshot,
    forecast: &DemandForecast,
    vehicle: &Vehicle,
    tick: Tick,
    params: &EncoderParams,
) -> StateSnapshot {
    assert!(params.window % 2 == 1, "crop window must be odd");
    let cells = params.cells();
    let mut features = vec![0.0; params.input_dim()];
    let half = (params.window / 2) as i64;
    let demand_to = params.demand_steps.saturating_sub(1);
    let mut cell = 0;
    for dr in -half..=half {
        for dc in -half..=half {
            let row = vehicle.location.row as i64 + dr;
            let col = vehicle.location.col as i64 + dc;
            if row >= 0 && col >= 0 && row < grid.height() as i64 && col < grid.width() as i64 {
                let zone = grid.index(crate::geo::ZoneId::new(row as u32, col as u32));
                features[cell] = forecast.mean_over(zone, 0, demand_to);
                features[cells + cell] = fleet.current[zone] as f64;
                features[2 * cells + cell] = fleet.available_by(zone, params.near) as f64;
                features[3 * cells + cell] = fleet.available_by(zone, params.far) as f64;
            }
            cell += 1;
        }
    }
    let a = vehicle.availability();
    let at = CHANNELS * cells;
    features[at] = a.seats_free as f64;
    features[at + 1] = a.trunk_free as f64;

    let day = params.ticks_per_day.max(1);
    let tod = (tick % day) as f64 / day as f64;
    let dow = ((tick / day) % 7) as f64 / 7.0;
    let tau = std::f64::consts::TAU;
    let t = at + OCCUPANCY_FEATURES;
    features[t] = (tau * tod).sin();
    features[t + 1] = (tau * tod).cos();
    features[t + 2] = (tau * dow).sin();
    features[t + 3] = (tau * dow).cos();
    StateSnapshot { features }
}
