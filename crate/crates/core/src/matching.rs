//! Greedy request-to-vehicle matching.
//!
//! Every (request, vehicle) pair within the reject radius whose slot type
//! matches is a candidate. Candidates are processed in ascending ETA order;
//! a passenger takes a seat and a package takes trunk space in the nearest
//! vehicle that still has room. When several vehicles are equally near for a
//! request, one of them is drawn uniformly at random.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{Request, RequestId, RequestStatus};
use crate::fleet::{Slot, Vehicle, VehicleId};
use crate::geo::{EtaModel, GeoError, TravelEstimate, ZoneId};

/// A vehicle offered to the matcher, with its free capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub vehicle_id: VehicleId,
    pub location: ZoneId,
    pub seats_free: u32,
    pub trunk_free: u32,
}

impl MatchCandidate {
    pub fn from_vehicle(v: &Vehicle) -> Self {
        let a = v.availability();
        Self {
            vehicle_id: v.id,
            location: v.location,
            seats_free: a.seats_free,
            trunk_free: a.trunk_free,
        }
    }

    fn free_mut(&mut self, slot: Slot) -> &mut u32 {
        match slot {
            Slot::Seat => &mut self.seats_free,
            Slot::Trunk => &mut self.trunk_free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub request_id: RequestId,
    pub vehicle_id: VehicleId,
    pub slot: Slot,
    pub eta_ticks: u32,
}

/// Assign queued `requests` to `vehicles`. Requests that are not queued are
/// ignored; requests with no vehicle inside `reject_radius` (zone units) stay
/// unassigned.
pub fn match_requests<R: Rng + ?Sized>(
    requests: &[Request],
    vehicles: &[MatchCandidate],
    eta: &dyn EtaModel,
    reject_radius: u32,
    rng: &mut R,
) -> Result<Vec<Assignment>, GeoError> {
    let mut pairs: Vec<(TravelEstimate, usize, usize)> = Vec::new();
    for (ri, req) in requests.iter().enumerate() {
        if req.status != RequestStatus::Queued {
            continue;
        }
        let slot = Slot::for_kind(req.kind);
        for (vi, veh) in vehicles.iter().enumerate() {
            let free = match slot {
                Slot::Seat => veh.seats_free,
                Slot::Trunk => veh.trunk_free,
            };
            if free == 0 {
                continue;
            }
            let est = eta.eta(veh.location, req.origin)?;
            if est.distance <= reject_radius {
                pairs.push((est, ri, vi));
            }
        }
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    pairs.sort_unstable();

    let mut remaining = vehicles.to_vec();
    let mut assigned = vec![false; requests.len()];
    let mut out = Vec::new();
    let mut tied: Vec<usize> = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let level = pairs[start].0;
        let end = start + pairs[start..].iter().take_while(|p| p.0 == level).count();
        // pairs within a level are sorted by request, then vehicle
        let mut i = start;
        while i < end {
            let ri = pairs[i].1;
            let group_end = i + pairs[i..end].iter().take_while(|p| p.1 == ri).count();
            if !assigned[ri] {
                let slot = Slot::for_kind(requests[ri].kind);
                tied.clear();
                tied.extend(
                    pairs[i..group_end]
                        .iter()
                        .map(|p| p.2)
                        .filter(|&vi| *remaining[vi].free_mut(slot) > 0),
                );
                if !tied.is_empty() {
                    let pick = if tied.len() == 1 {
                        0
                    } else {
                        rng.gen_range(0..tied.len())
                    };
                    let vi = tied[pick];
                    *remaining[vi].free_mut(slot) -= 1;
                    assigned[ri] = true;
                    out.push(Assignment {
                        request_id: requests[ri].id,
                        vehicle_id: remaining[vi].vehicle_id,
                        slot,
                        eta_ticks: level.ticks,
                    });
                }
            }
            i = group_end;
        }
        start = end;
    }
    Ok(out)
}
