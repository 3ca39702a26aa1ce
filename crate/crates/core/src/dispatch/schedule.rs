//! Exploration and action-probability schedules.

/// Exploration rate: linear from 1.0 down to 0.05 over `horizon` steps, then
/// held at 0.05.
pub fn epsilon_at(step: u64, horizon: u64) -> f64 {
    linear(step, horizon, 1.0, EPSILON_FLOOR)
}

pub const EPSILON_FLOOR: f64 = 0.05;

/// Probability that an idle vehicle acts this tick: linear from 0.3 up to
/// 1.0 over `horizon` steps, then held at 1.0.
pub fn act_probability_at(step: u64, horizon: u64) -> f64 {
    linear(step, horizon, 0.3, 1.0)
}

fn linear(step: u64, horizon: u64, start: f64, end: f64) -> f64 {
    if step >= horizon {
        return end;
    }
    let frac = step as f64 / horizon as f64;
    let v = start + (end - start) * frac;
    if start > end {
        v.max(end)
    } else {
        v.min(end)
    }
}
