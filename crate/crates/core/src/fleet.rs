//! Vehicle state, the five-status lifecycle and capacity accounting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{RequestId, RequestKind, Tick};
use crate::geo::{EtaModel, GeoError, GridWorld, ZoneId};

pub type VehicleId = u32;

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("vehicle {vehicle}: illegal status transition {from:?} -> {to:?}")]
    IllegalTransition {
        vehicle: VehicleId,
        from: VehicleStatus,
        to: VehicleStatus,
    },
    #[error("vehicle {vehicle}: no {slot:?} capacity left for request {request}")]
    OverCapacity {
        vehicle: VehicleId,
        request: RequestId,
        slot: Slot,
    },
    #[error("vehicle {vehicle}: {message}")]
    Inconsistent { vehicle: VehicleId, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleStatus {
    Idle,
    Dispatching,
    Dispatched,
    Matched,
    Serving,
}

impl VehicleStatus {
    pub fn is_active(self) -> bool {
        self != VehicleStatus::Idle
    }

    /// Edges of the vehicle lifecycle.
    ///
    /// Besides the main cycle Idle → Dispatching → Dispatched → Matched →
    /// Serving → Idle, a serving vehicle that takes on more work goes back to
    /// Matched, and a dispatched vehicle that found no request parks as Idle.
    pub fn may_become(self, next: VehicleStatus) -> bool {
        use VehicleStatus::*;
        matches!(
            (self, next),
            (Idle, Dispatching)
                | (Dispatching, Dispatched)
                | (Dispatched, Matched)
                | (Matched, Serving)
                | (Serving, Idle)
                | (Serving, Matched)
                | (Dispatched, Idle)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Seat,
    Trunk,
}

impl Slot {
    pub fn for_kind(kind: RequestKind) -> Self {
        match kind {
            RequestKind::Passenger => Slot::Seat,
            RequestKind::Goods => Slot::Trunk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Direct,
    HopLeg,
}

/// One request a vehicle has committed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub request_id: RequestId,
    pub kind: RequestKind,
    pub origin: ZoneId,
    pub dropoff: ZoneId,
    pub leg_kind: LegKind,
    pub urgency: f64,
    pub hops: u32,
    pub created_tick: Tick,
    pub assigned_tick: Tick,
    pub pickup_tick: Option<Tick>,
    /// Unshared travel time from origin to dropoff.
    pub direct_ticks: u32,
}

impl ManifestEntry {
    pub fn onboard(&self) -> bool {
        self.pickup_tick.is_some()
    }

    /// Extra time this order has accrued relative to an unshared direct ride:
    /// elapsed time since the request was queued plus the remaining estimate,
    /// minus the direct travel time. Never negative.
    pub fn detour_delay(&self, now: Tick, remaining_ticks: u32) -> f64 {
        let elapsed = now.saturating_sub(self.created_tick) as f64;
        (elapsed + remaining_ticks as f64 - self.direct_ticks as f64).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Availability {
    pub seats_free: u32,
    pub trunk_free: u32,
}

impl Availability {
    pub fn is_available(&self) -> bool {
        self.seats_free > 0 || self.trunk_free > 0
    }

    pub fn free(&self, slot: Slot) -> u32 {
        match slot {
            Slot::Seat => self.seats_free,
            Slot::Trunk => self.trunk_free,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Odometer {
    /// Zone units driven with at least one order onboard.
    pub loaded: u64,
    /// Zone units driven empty (dispatch cruising, approach to pickups).
    pub empty: u64,
}

/// Something that happened at a stop while the vehicle advanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopEvent {
    PickedUp { request_id: RequestId, zone: ZoneId },
    Delivered { request_id: RequestId, zone: ZoneId },
    HopDropped { request_id: RequestId, zone: ZoneId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdvanceReport {
    pub events: Vec<StopEvent>,
    pub moved: u32,
    pub loaded_moves: u32,
    /// Moves made toward a pickup while already carrying someone.
    pub detour_moves: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub location: ZoneId,
    pub status: VehicleStatus,
    pub seats_total: u32,
    pub trunk_total: u32,
    pub manifest: Vec<ManifestEntry>,
    pub dispatch_target: Option<ZoneId>,
    pub route: VecDeque<ZoneId>,
    pub odometer: Odometer,
}

impl Vehicle {
    pub fn new(id: VehicleId, location: ZoneId, seats_total: u32, trunk_total: u32) -> Self {
        Self {
            id,
            location,
            status: VehicleStatus::Idle,
            seats_total,
            trunk_total,
            manifest: Vec::new(),
            dispatch_target: None,
            route: VecDeque::new(),
            odometer: Odometer::default(),
        }
    }

    /// `e_{t,n}`.
    pub fn active_flag(&self) -> u8 {
        u8::from(self.status.is_active())
    }

    /// Free seats and trunk space, counting every committed order (assigned
    /// or onboard) against capacity.
    pub fn availability(&self) -> Availability {
        let (mut seats, mut trunk) = (0u32, 0u32);
        for e in &self.manifest {
            match e.kind {
                RequestKind::Passenger => seats += 1,
                RequestKind::Goods => trunk += 1,
            }
        }
        Availability {
            seats_free: self.seats_total.saturating_sub(seats),
            trunk_free: self.trunk_total.saturating_sub(trunk),
        }
    }

    /// Passengers and packages physically onboard.
    pub fn onboard_counts(&self) -> (u32, u32) {
        let mut counts = (0, 0);
        for e in self.manifest.iter().filter(|e| e.onboard()) {
            match e.kind {
                RequestKind::Passenger => counts.0 += 1,
                RequestKind::Goods => counts.1 += 1,
            }
        }
        counts
    }

    pub fn carries_any(&self) -> bool {
        self.manifest.iter().any(ManifestEntry::onboard)
    }

    pub fn set_status(&mut self, next: VehicleStatus) -> Result<(), FleetError> {
        if self.status == next {
            return Ok(());
        }
        if !self.status.may_become(next) {
            return Err(FleetError::IllegalTransition {
                vehicle: self.id,
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    /// Send an idle vehicle toward `target`. A vehicle dispatched to its own
    /// zone is Dispatched immediately.
    pub fn dispatch(&mut self, grid: &GridWorld, target: ZoneId) -> Result<(), FleetError> {
        self.set_status(VehicleStatus::Dispatching)?;
        grid.check(target)?;
        if target == self.location {
            self.set_status(VehicleStatus::Dispatched)?;
            self.dispatch_target = None;
            self.route.clear();
        } else {
            self.dispatch_target = Some(target);
            self.route = grid.route(self.location, target)?.into();
        }
        Ok(())
    }

    /// Park a dispatched vehicle that received no work.
    pub fn park(&mut self) -> Result<(), FleetError> {
        if self.status != VehicleStatus::Dispatched {
            return Err(FleetError::IllegalTransition {
                vehicle: self.id,
                from: self.status,
                to: VehicleStatus::Idle,
            });
        }
        self.set_status(VehicleStatus::Idle)
    }

    /// Commit an order to this vehicle and reroute.
    pub fn assign(&mut self, entry: ManifestEntry, grid: &GridWorld) -> Result<(), FleetError> {
        let slot = Slot::for_kind(entry.kind);
        if self.availability().free(slot) == 0 {
            return Err(FleetError::OverCapacity {
                vehicle: self.id,
                request: entry.request_id,
                slot,
            });
        }
        self.set_status(VehicleStatus::Matched)?;
        self.manifest.push(entry);
        self.plan_route(grid)?;
        Ok(())
    }

    /// Pending stops: pickups of assigned orders and dropoffs of onboard ones.
    fn pending_stops(&self) -> impl Iterator<Item = (ZoneId, bool)> + '_ {
        self.manifest.iter().map(|e| {
            if e.onboard() {
                (e.dropoff, false)
            } else {
                (e.origin, true)
            }
        })
    }

    /// Nearest pending stop from `from`, ties to the smallest zone.
    fn next_stop_from(&self, from: ZoneId, pending: &[(ZoneId, bool)]) -> Option<(ZoneId, bool)> {
        pending
            .iter()
            .copied()
            .min_by_key(|(z, pickup)| (from.manhattan(*z), *z, !*pickup))
    }

    fn plan_route(&mut self, grid: &GridWorld) -> Result<(), FleetError> {
        let pending: Vec<_> = self.pending_stops().collect();
        self.route.clear();
        if let Some((stop, _)) = self.next_stop_from(self.location, &pending) {
            self.route = grid.route(self.location, stop)?.into();
        }
        Ok(())
    }

    /// Final zone and remaining travel time if the vehicle works off its
    /// current plan (nearest-next-stop order).
    pub fn remaining_plan(&self, eta: &dyn EtaModel) -> Result<Option<(ZoneId, u32)>, FleetError> {
        match self.status {
            VehicleStatus::Idle | VehicleStatus::Dispatched => Ok(None),
            VehicleStatus::Dispatching => {
                let target = self.dispatch_target.unwrap_or(self.location);
                Ok(Some((target, eta.eta(self.location, target)?.ticks)))
            }
            VehicleStatus::Matched | VehicleStatus::Serving => {
                // simulate the greedy stop order; a pickup unlocks its dropoff
                let mut pending: Vec<(ZoneId, bool, usize)> = self
                    .manifest
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        if e.onboard() {
                            (e.dropoff, false, i)
                        } else {
                            (e.origin, true, i)
                        }
                    })
                    .collect();
                let mut here = self.location;
                let mut ticks = 0;
                while !pending.is_empty() {
                    let (k, _) = pending
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, (z, p, _))| (here.manhattan(*z), *z, !*p))
                        .expect("nonempty");
                    let (zone, pickup, idx) = pending.swap_remove(k);
                    ticks += eta.eta(here, zone)?.ticks;
                    here = zone;
                    if pickup {
                        pending.push((self.manifest[idx].dropoff, false, idx));
                    }
                }
                Ok(Some((here, ticks)))
            }
        }
    }

    fn handle_stops(&mut self, tick: Tick, report: &mut AdvanceReport) -> bool {
        let here = self.location;
        let mut changed = false;
        let mut i = 0;
        while i < self.manifest.len() {
            let e = &self.manifest[i];
            if e.onboard() && e.dropoff == here {
                let e = self.manifest.remove(i);
                report.events.push(match e.leg_kind {
                    LegKind::Direct => StopEvent::Delivered {
                        request_id: e.request_id,
                        zone: here,
                    },
                    LegKind::HopLeg => StopEvent::HopDropped {
                        request_id: e.request_id,
                        zone: here,
                    },
                });
                changed = true;
            } else {
                i += 1;
            }
        }
        for e in self.manifest.iter_mut() {
            if !e.onboard() && e.origin == here {
                e.pickup_tick = Some(tick);
                report.events.push(StopEvent::PickedUp {
                    request_id: e.request_id,
                    zone: here,
                });
                changed = true;
            }
        }
        changed
    }

    /// Move up to `vehicle_speed` waypoints and apply the lifecycle rules:
    /// reaching the dispatch target makes the vehicle Dispatched, a pickup
    /// makes it Serving, and an empty manifest after serving makes it Idle.
    /// Idle and Dispatched vehicles do not move.
    pub fn advance(&mut self, grid: &GridWorld, tick: Tick) -> Result<AdvanceReport, FleetError> {
        let mut report = AdvanceReport::default();
        match self.status {
            VehicleStatus::Idle | VehicleStatus::Dispatched => return Ok(report),
            VehicleStatus::Dispatching => {
                for _ in 0..grid.vehicle_speed() {
                    if Some(self.location) == self.dispatch_target {
                        break;
                    }
                    let Some(next) = self.route.pop_front() else {
                        break;
                    };
                    self.step_to(next, &mut report, false);
                }
                if self.dispatch_target.is_none_or(|t| t == self.location) {
                    self.dispatch_target = None;
                    self.route.clear();
                    self.set_status(VehicleStatus::Dispatched)?;
                }
                return Ok(report);
            }
            VehicleStatus::Matched | VehicleStatus::Serving => {}
        }

        if self.handle_stops(tick, &mut report) {
            self.after_stops(grid)?;
        }
        for _ in 0..grid.vehicle_speed() {
            if self.manifest.is_empty() {
                break;
            }
            if self.route.is_empty() {
                self.plan_route(grid)?;
            }
            let Some(next) = self.route.pop_front() else {
                return Err(FleetError::Inconsistent {
                    vehicle: self.id,
                    message: format!(
                        "route exhausted at {} with {} orders in manifest",
                        self.location,
                        self.manifest.len()
                    ),
                });
            };
            let heading_to_pickup = {
                let goal = self.route.back().copied().unwrap_or(next);
                self.manifest
                    .iter()
                    .any(|e| !e.onboard() && e.origin == goal)
            };
            self.step_to(next, &mut report, heading_to_pickup);
            if self.handle_stops(tick, &mut report) {
                self.after_stops(grid)?;
            }
        }
        if self.status == VehicleStatus::Serving && self.manifest.is_empty() {
            self.route.clear();
            self.set_status(VehicleStatus::Idle)?;
        }
        Ok(report)
    }

    fn step_to(&mut self, next: ZoneId, report: &mut AdvanceReport, heading_to_pickup: bool) {
        debug_assert_eq!(self.location.manhattan(next), 1, "non-adjacent waypoint");
        let loaded = self.carries_any();
        self.location = next;
        report.moved += 1;
        if loaded {
            self.odometer.loaded += 1;
            report.loaded_moves += 1;
            if heading_to_pickup {
                report.detour_moves += 1;
            }
        } else {
            self.odometer.empty += 1;
        }
    }

    fn after_stops(&mut self, grid: &GridWorld) -> Result<(), FleetError> {
        if self.status == VehicleStatus::Matched && self.carries_any() {
            self.set_status(VehicleStatus::Serving)?;
        }
        self.plan_route(grid)
    }

    /// Check capacity and status-dependent field invariants.
    pub fn check_invariants(&self) -> Result<(), FleetError> {
        let bad = |message: String| FleetError::Inconsistent {
            vehicle: self.id,
            message,
        };
        let (mut seats, mut trunk) = (0, 0);
        for e in &self.manifest {
            match e.kind {
                RequestKind::Passenger => seats += 1,
                RequestKind::Goods => trunk += 1,
            }
        }
        if seats > self.seats_total || trunk > self.trunk_total {
            return Err(bad(format!(
                "occupancy {seats}/{} seats, {trunk}/{} trunk",
                self.seats_total, self.trunk_total
            )));
        }
        if self.dispatch_target.is_some() != (self.status == VehicleStatus::Dispatching) {
            return Err(bad(format!(
                "dispatch target {:?} in status {:?}",
                self.dispatch_target, self.status
            )));
        }
        let busy = matches!(self.status, VehicleStatus::Matched | VehicleStatus::Serving);
        if busy == self.manifest.is_empty() {
            return Err(bad(format!(
                "{} manifest entries in status {:?}",
                self.manifest.len(),
                self.status
            )));
        }
        if self.status == VehicleStatus::Matched && self.manifest.iter().all(ManifestEntry::onboard)
        {
            return Err(bad("matched without a pending pickup".into()));
        }
        Ok(())
    }
}

/// Current and projected vehicle supply per zone (`V_{t:T}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSnapshot {
    /// Vehicles free to take work now, per zone (`v_{t,i}`).
    pub current: Vec<u32>,
    /// `projected[k][i]`: busy vehicles expected to free up in zone `i`
    /// exactly `k` ticks from now.
    pub projected: Vec<Vec<u32>>,
}

impl FleetSnapshot {
    pub fn horizon(&self) -> usize {
        self.projected.len().saturating_sub(1)
    }

    /// Vehicles available in zone `i` by `k` ticks from now (current plus
    /// every projection up to `k`).
    pub fn available_by(&self, zone: usize, k: usize) -> u32 {
        let k = k.min(self.horizon());
        self.current[zone]
            + self.projected[..=k]
                .iter()
                .map(|row| row[zone])
                .sum::<u32>()
    }
}

/// Count stationary vehicles per zone and place each busy vehicle at the end
/// of its plan when it finishes within `horizon` ticks.
pub fn project_supply(
    vehicles: &[Vehicle],
    grid: &GridWorld,
    eta: &dyn EtaModel,
    horizon: usize,
) -> Result<FleetSnapshot, FleetError> {
    let m = grid.zone_count();
    let mut snap = FleetSnapshot {
        current: vec![0; m],
        projected: vec![vec![0; m]; horizon + 1],
    };
    for v in vehicles {
        match v.remaining_plan(eta)? {
            None => {
                if v.availability().is_available() {
                    snap.current[grid.index(v.location)] += 1;
                }
            }
            Some((zone, ticks)) => {
                let k = ticks as usize;
                if k <= horizon {
                    snap.projected[k][grid.index(zone)] += 1;
                }
            }
        }
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(r: u32, c: u32) -> ZoneId {
        ZoneId::new(r, c)
    }

    fn grid() -> GridWorld {
        GridWorld::new(10, 10, 150.0, 1).unwrap()
    }

    fn entry(id: RequestId, kind: RequestKind, origin: ZoneId, dropoff: ZoneId) -> ManifestEntry {
        ManifestEntry {
            request_id: id,
            kind,
            origin,
            dropoff,
            leg_kind: LegKind::Direct,
            urgency: 1.0,
            hops: 0,
            created_tick: 0,
            assigned_tick: 0,
            pickup_tick: None,
            direct_ticks: origin.manhattan(dropoff),
        }
    }

    fn loaded(passengers: u32, packages: u32) -> Vehicle {
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        for i in 0..passengers {
            let mut e = entry(i as u64, RequestKind::Passenger, z(0, 0), z(1, 1));
            e.pickup_tick = Some(0);
            v.manifest.push(e);
        }
        for i in 0..packages {
            let mut e = entry(100 + i as u64, RequestKind::Goods, z(0, 0), z(1, 1));
            e.pickup_tick = Some(0);
            v.manifest.push(e);
        }
        v
    }

    #[test]
    fn availability_examples() {
        let empty = loaded(0, 0);
        assert_eq!(
            empty.availability(),
            Availability {
                seats_free: 4,
                trunk_free: 5
            }
        );
        let full = loaded(4, 5);
        assert_eq!(
            full.availability(),
            Availability {
                seats_free: 0,
                trunk_free: 0
            }
        );
        assert!(!full.availability().is_available());
        let some = loaded(2, 0);
        assert_eq!(
            some.availability(),
            Availability {
                seats_free: 2,
                trunk_free: 5
            }
        );
        assert!(some.availability().is_available());
    }

    #[test]
    fn transition_graph_is_exact() {
        use VehicleStatus::*;
        let all = [Idle, Dispatching, Dispatched, Matched, Serving];
        let allowed = [
            (Idle, Dispatching),
            (Dispatching, Dispatched),
            (Dispatched, Matched),
            (Matched, Serving),
            (Serving, Idle),
            (Serving, Matched),
            (Dispatched, Idle),
        ];
        for a in all {
            for b in all {
                assert_eq!(a.may_become(b), allowed.contains(&(a, b)), "{a:?}->{b:?}");
            }
        }
    }

    #[test]
    fn dispatching_reaches_target() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.dispatch(&g, z(0, 2)).unwrap();
        assert_eq!(v.status, VehicleStatus::Dispatching);
        v.advance(&g, 0).unwrap();
        assert_eq!(v.status, VehicleStatus::Dispatching);
        v.advance(&g, 1).unwrap();
        assert_eq!(v.location, z(0, 2));
        assert_eq!(v.status, VehicleStatus::Dispatched);
        assert_eq!(v.dispatch_target, None);
        assert_eq!(v.odometer.empty, 2);
    }

    #[test]
    fn dispatch_to_own_zone_is_immediate() {
        let g = grid();
        let mut v = Vehicle::new(0, z(3, 3), 4, 5);
        v.dispatch(&g, z(3, 3)).unwrap();
        assert_eq!(v.status, VehicleStatus::Dispatched);
        v.check_invariants().unwrap();
    }

    #[test]
    fn idle_vehicle_does_not_move() {
        let g = grid();
        let mut v = Vehicle::new(0, z(3, 3), 4, 5);
        let before = v.clone();
        let r = v.advance(&g, 5).unwrap();
        assert_eq!(v, before);
        assert!(r.events.is_empty());
    }

    #[test]
    fn serve_one_passenger_then_idle() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.dispatch(&g, z(0, 0)).unwrap();
        v.assign(entry(7, RequestKind::Passenger, z(0, 1), z(0, 3)), &g)
            .unwrap();
        assert_eq!(v.status, VehicleStatus::Matched);
        let r = v.advance(&g, 0).unwrap();
        assert_eq!(
            r.events,
            vec![StopEvent::PickedUp {
                request_id: 7,
                zone: z(0, 1)
            }]
        );
        assert_eq!(v.status, VehicleStatus::Serving);
        v.advance(&g, 1).unwrap();
        let r = v.advance(&g, 2).unwrap();
        assert_eq!(
            r.events,
            vec![StopEvent::Delivered {
                request_id: 7,
                zone: z(0, 3)
            }]
        );
        assert_eq!(v.status, VehicleStatus::Idle);
        assert_eq!(
            v.odometer,
            Odometer {
                loaded: 2,
                empty: 1
            }
        );
    }

    #[test]
    fn serving_vehicle_takes_more_work() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.dispatch(&g, z(0, 0)).unwrap();
        v.assign(entry(1, RequestKind::Passenger, z(0, 0), z(0, 5)), &g)
            .unwrap();
        v.advance(&g, 0).unwrap();
        assert_eq!(v.status, VehicleStatus::Serving);
        v.assign(entry(2, RequestKind::Goods, z(0, 2), z(0, 4)), &g)
            .unwrap();
        assert_eq!(v.status, VehicleStatus::Matched);
        let r = v.advance(&g, 1).unwrap();
        assert_eq!(r.detour_moves, 1);
        assert_eq!(v.status, VehicleStatus::Serving);
        assert_eq!(v.onboard_counts(), (1, 1));
    }

    #[test]
    fn hop_leg_drop_event() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.dispatch(&g, z(0, 0)).unwrap();
        let mut e = entry(3, RequestKind::Goods, z(0, 0), z(0, 1));
        e.leg_kind = LegKind::HopLeg;
        v.assign(e, &g).unwrap();
        let r = v.advance(&g, 0).unwrap();
        assert_eq!(
            r.events,
            vec![
                StopEvent::PickedUp {
                    request_id: 3,
                    zone: z(0, 0)
                },
                StopEvent::HopDropped {
                    request_id: 3,
                    zone: z(0, 1)
                },
            ]
        );
        assert_eq!(v.status, VehicleStatus::Idle);
    }

    #[test]
    fn over_capacity_is_refused() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 1, 0);
        v.dispatch(&g, z(0, 0)).unwrap();
        v.assign(entry(1, RequestKind::Passenger, z(0, 1), z(0, 2)), &g)
            .unwrap();
        assert!(matches!(
            v.assign(entry(2, RequestKind::Passenger, z(0, 1), z(0, 2)), &g),
            Err(FleetError::OverCapacity {
                slot: Slot::Seat,
                ..
            })
        ));
        assert!(v
            .assign(entry(3, RequestKind::Goods, z(0, 1), z(0, 2)), &g)
            .is_err());
    }

    #[test]
    fn illegal_transition_is_refused() {
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        assert!(v.set_status(VehicleStatus::Serving).is_err());
        assert!(v.park().is_err());
    }

    #[test]
    fn exhausted_route_is_an_error() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.status = VehicleStatus::Serving;
        let mut e = entry(1, RequestKind::Passenger, z(0, 0), z(20, 20));
        e.pickup_tick = Some(0);
        v.manifest.push(e);
        assert!(v.advance(&g, 0).is_err());
    }

    #[test]
    fn supply_all_idle() {
        let g = grid();
        let fleet: Vec<_> = (0..4).map(|i| Vehicle::new(i, z(2, 2), 4, 5)).collect();
        let s = project_supply(&fleet, &g, &g, 5).unwrap();
        assert_eq!(s.current[g.index(z(2, 2))], 4);
        assert_eq!(s.current.iter().sum::<u32>(), 4);
        assert!(s.projected.iter().flatten().all(|c| *c == 0));
    }

    #[test]
    fn supply_projection_and_horizon_cut() {
        let g = grid();
        let mut near = Vehicle::new(0, z(0, 0), 4, 5);
        near.dispatch(&g, z(0, 3)).unwrap();
        let s = project_supply(&[near], &g, &g, 5).unwrap();
        assert_eq!(s.projected[3][g.index(z(0, 3))], 1);
        assert_eq!(s.available_by(g.index(z(0, 3)), 5), 1);
        assert_eq!(s.available_by(g.index(z(0, 3)), 2), 0);

        let mut far = Vehicle::new(1, z(0, 0), 4, 5);
        far.dispatch(&g, z(0, 7)).unwrap();
        let s = project_supply(&[far], &g, &g, 5).unwrap();
        assert!(s.projected.iter().flatten().all(|c| *c == 0));
        assert!(s.current.iter().all(|c| *c == 0));
    }

    #[test]
    fn remaining_plan_visits_pickup_then_dropoff() {
        let g = grid();
        let mut v = Vehicle::new(0, z(0, 0), 4, 5);
        v.dispatch(&g, z(0, 0)).unwrap();
        v.assign(entry(1, RequestKind::Passenger, z(0, 2), z(3, 2)), &g)
            .unwrap();
        assert_eq!(v.remaining_plan(&g).unwrap(), Some((z(3, 2), 5)));
    }
}
