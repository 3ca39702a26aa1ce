//! Hop-trip planning for goods requests.
//!
//! A goods trip `(o, d)` is split at the hop-zone nearest to `o` among those
//! that keep the detour within twice the direct distance and make both
//! sub-legs strictly shorter. Each sub-leg is split again until no hop-zone
//! qualifies or the depth limit is hit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{Request, RequestId, RequestKind};
use crate::geo::{GeoError, GridWorld, ZoneId};

#[derive(Debug, Error)]
pub enum HopPlanError {
    #[error("request {0} is not a goods request; only packages are routed through hop-zones")]
    NotGoods(RequestId),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopTrip {
    pub request_id: RequestId,
    /// Chained `(origin, destination)` legs.
    pub legs: Vec<(ZoneId, ZoneId)>,
}

impl HopTrip {
    pub fn direct(request_id: RequestId, origin: ZoneId, destination: ZoneId) -> Self {
        Self {
            request_id,
            legs: vec![(origin, destination)],
        }
    }

    pub fn hop_count(&self) -> usize {
        self.legs.len().saturating_sub(1)
    }

    /// Interior junctions, in travel order.
    pub fn junctions(&self) -> impl Iterator<Item = ZoneId> + '_ {
        self.legs.iter().skip(1).map(|(o, _)| *o)
    }

    pub fn total_distance(&self) -> u32 {
        self.legs.iter().map(|(o, d)| o.manhattan(*d)).sum()
    }

    /// Leg starting at `zone`, if any.
    pub fn leg_from(&self, zone: ZoneId) -> Option<(ZoneId, ZoneId)> {
        self.legs.iter().copied().find(|(o, _)| *o == zone)
    }
}

/// Whether `hop` may split leg `(o, d)`.
pub fn is_eligible(o: ZoneId, d: ZoneId, hop: ZoneId) -> bool {
    let direct = o.manhattan(d);
    let (first, second) = (o.manhattan(hop), hop.manhattan(d));
    hop != o && hop != d && first + second <= 2 * direct && first < direct && second < direct
}

/// Nearest eligible hop-zone to `o` for the leg `(o, d)`; ties go to the
/// smallest `(row, col)`.
pub fn nearest_eligible(grid: &GridWorld, o: ZoneId, d: ZoneId) -> Option<ZoneId> {
    grid.hop_zones()
        .iter()
        .copied()
        .filter(|h| is_eligible(o, d, *h))
        .min_by_key(|h| o.manhattan(*h))
}

fn split(grid: &GridWorld, o: ZoneId, d: ZoneId, depth: u32, out: &mut Vec<(ZoneId, ZoneId)>) {
    if depth == 0 {
        out.push((o, d));
        return;
    }
    match nearest_eligible(grid, o, d) {
        None => out.push((o, d)),
        Some(h) => {
            split(grid, o, h, depth - 1, out);
            split(grid, h, d, depth - 1, out);
        }
    }
}

pub fn assign_hop_zones(
    req: &Request,
    grid: &GridWorld,
    max_depth: u32,
) -> Result<HopTrip, HopPlanError> {
    if req.kind != RequestKind::Goods {
        return Err(HopPlanError::NotGoods(req.id));
    }
    plan_legs(req.id, req.origin, req.destination, grid, max_depth)
}

/// Plan the legs of a package travelling from `origin` to `destination`.
pub fn plan_legs(
    request_id: RequestId,
    origin: ZoneId,
    destination: ZoneId,
    grid: &GridWorld,
    max_depth: u32,
) -> Result<HopTrip, HopPlanError> {
    grid.check(origin)?;
    grid.check(destination)?;
    let mut legs = Vec::new();
    split(grid, origin, destination, max_depth, &mut legs);
    Ok(HopTrip { request_id, legs })
}
