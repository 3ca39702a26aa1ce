//! Dispatch actions: a relative move within a square window around the
//! vehicle.

use serde::{Deserialize, Serialize};

use crate::geo::{GridWorld, ZoneId};

/// Default half-width of the action window (7 zones each way, 15 x 15).
pub const DEFAULT_RADIUS: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchAction {
    pub dr: i32,
    pub dc: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub radius: u32,
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
        }
    }
}

impl ActionSpace {
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Action index of staying put.
    pub fn stay(&self) -> usize {
        self.index(DispatchAction { dr: 0, dc: 0 })
    }

    pub fn action(&self, index: usize) -> DispatchAction {
        assert!(index < self.len(), "action index {index} out of range");
        let side = self.side();
        let r = self.radius as i32;
        DispatchAction {
            dr: (index / side) as i32 - r,
            dc: (index % side) as i32 - r,
        }
    }

    pub fn index(&self, a: DispatchAction) -> usize {
        let r = self.radius as i32;
        assert!(
            a.dr.abs() <= r && a.dc.abs() <= r,
            "offset outside the action window"
        );
        (a.dr + r) as usize * self.side() + (a.dc + r) as usize
    }

    /// Target zone of an action, clamped to the grid.
    pub fn target(&self, grid: &GridWorld, from: ZoneId, index: usize) -> ZoneId {
        let a = self.action(index);
        grid.clamp(from.row as i64 + a.dr as i64, from.col as i64 + a.dc as i64)
    }

    /// Action whose offset points at `to`, if it lies inside the window.
    pub fn toward(&self, from: ZoneId, to: ZoneId) -> Option<usize> {
        let dr = to.row as i32 - from.row as i32;
        let dc = to.col as i32 - from.col as i32;
        let r = self.radius as i32;
        (dr.abs() <= r && dc.abs() <= r).then(|| self.index(DispatchAction { dr, dc }))
    }
}
