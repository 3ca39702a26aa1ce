//! The per-tick simulation loop.
//!
//! Each tick runs, in order: request intake (with hop planning for goods),
//! dispatch of idle vehicles, matching, vehicle advancement with hop-leg
//! re-queuing, reward accounting and, when training, one learning update.
//! Vehicles are always processed in ascending id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{
    forecast_demand, ingest_trip_records, DemandError, DemandForecast, DemandHistory,
    ForecastParams, Request, RequestId, RequestIds, RequestKind, RequestStatus, Tick, Workload,
    WorkloadParams,
};
use crate::dispatch::{encode_state, AgentMode, DdqnAgent, DqnConfig, TrainRecord, Transition};
use crate::fleet::{
    project_supply, FleetError, FleetSnapshot, LegKind, ManifestEntry, StopEvent, Vehicle,
    VehicleId, VehicleStatus,
};
use crate::geo::{EtaModel, GeoError, GridWorld, ZoneId};
use crate::hopplan::{plan_legs, HopPlanError, HopTrip};
use crate::matching::{match_requests, MatchCandidate};
use crate::metrics::{compute_metrics, MetricsOptions, MetricsReport};
use crate::reward::{
    agent_reward, fleet_activations, global_objective, supply_demand_gap, AgentRewardInputs,
    ObjectiveComponents, RewardError, RewardWeights,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    HopPlan(#[from] HopPlanError),
    #[error("invariant violated at tick {tick}: {message}\nstate dump: {dump}")]
    Invariant {
        tick: Tick,
        message: String,
        dump: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Joint passengers and goods, goods relayed through hop-zones.
    FlexHops,
    /// Joint passengers and goods, goods always carried door to door.
    FlexNohops,
    /// The fleet is split into passenger-only and goods-only vehicles.
    Separate,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 3] = [
        BaselineMode::FlexHops,
        BaselineMode::FlexNohops,
        BaselineMode::Separate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::FlexHops => "flex_hops",
            BaselineMode::FlexNohops => "flex_nohops",
            BaselineMode::Separate => "separate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub width: u32,
    pub height: u32,
    pub zone_edge_m: f64,
    /// Zones per tick.
    pub vehicle_speed: u32,
    pub hop_stride: u32,
    pub hop_offset: u32,
    /// Minimum surveyed pickups for a lattice zone to become a hop-zone.
    pub hop_min_pickups: u64,
    /// Ticks of arrivals sampled to count pickups per zone; 0 skips the survey
    /// and treats every lattice zone as qualifying.
    pub hop_survey_ticks: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 20,
            height: 20,
            zone_edge_m: 150.0,
            vehicle_speed: 1,
            hop_stride: 3,
            hop_offset: 0,
            hop_min_pickups: 0,
            hop_survey_ticks: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    /// `"init"` or `"eval"`.
    pub preset: String,
    /// Replaces the preset's β when given.
    pub beta: Option<[f64; 5]>,
    pub discount: Option<f64>,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            preset: "eval".into(),
            beta: None,
            discount: None,
        }
    }
}

impl RewardSpec {
    pub fn weights(&self) -> Result<RewardWeights, EngineError> {
        let mut w = RewardWeights::preset(&self.preset).ok_or_else(|| {
            EngineError::Config(format!("unknown reward preset {:?}", self.preset))
        })?;
        if let Some(beta) = self.beta {
            w.beta = beta;
        }
        if let Some(d) = self.discount {
            w.discount = d;
        }
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub fleet_size: usize,
    pub seats: u32,
    pub trunk: u32,
    /// Trunk size of goods-only vehicles in the separate baseline.
    pub separate_trunk: u32,
    /// Share of passenger-only vehicles in the separate baseline.
    pub passenger_share: f64,
    /// Ticks per episode.
    pub ticks: u64,
    /// Forecast and supply-projection horizon, ticks.
    pub horizon: usize,
    pub minutes_per_tick: f64,
    pub reward: RewardSpec,
    pub seed: u64,
    /// Seed of the city layout (service locations, hot destinations).
    pub layout_seed: u64,
    pub reject_radius_m: f64,
    /// Ticks a new request may wait in the queue before it is rejected.
    pub patience: u64,
    pub max_hop_depth: u32,
    pub baseline: BaselineMode,
    /// Ticks simulated before logging starts, without the dispatch policy.
    pub warmup: u64,
    pub workload: WorkloadParams,
    /// Replay requests from a trip-record CSV instead of the synthetic workload.
    pub trip_records: Option<PathBuf>,
    pub forecast: ForecastParams,
    pub dqn: DqnConfig,
    pub metrics: MetricsOptions,
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            fleet_size: 50,
            seats: 4,
            trunk: 5,
            separate_trunk: 10,
            passenger_share: 0.5,
            ticks: 750,
            horizon: 30,
            minutes_per_tick: 1.0,
            reward: RewardSpec::default(),
            seed: 1,
            layout_seed: 7,
            reject_radius_m: 5000.0,
            patience: 10,
            max_hop_depth: 4,
            baseline: BaselineMode::FlexHops,
            warmup: 100,
            workload: WorkloadParams::default(),
            trip_records: None,
            forecast: ForecastParams::default(),
            dqn: DqnConfig::default(),
            metrics: MetricsOptions::default(),
            check_invariants: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.into()));
        if self.fleet_size == 0 {
            return bad("fleet_size must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.minutes_per_tick <= 0.0 || !self.minutes_per_tick.is_finite() {
            return bad("minutes_per_tick must be positive");
        }
        if !(0.0..=1.0).contains(&self.passenger_share) {
            return bad("passenger_share must lie in [0, 1]");
        }
        if self.dqn.encoder.window.is_multiple_of(2) {
            return bad("encoder window must be odd");
        }
        if self.dqn.encoder.far > self.horizon || self.dqn.encoder.near > self.horizon {
            return bad("supply look-aheads must fit inside the horizon");
        }
        self.reward.weights()?;
        Ok(())
    }
}

/// One log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: Tick,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    EpisodeStart {
        fleet_size: usize,
        minutes_per_tick: f64,
        ticks_per_day: u64,
        baseline: BaselineMode,
        seed: u64,
    },
    RequestCreated {
        request_id: RequestId,
        kind: RequestKind,
        origin: ZoneId,
        destination: ZoneId,
        urgency: f64,
        planned_hops: u32,
    },
    /// A package dropped at a hop-zone waits there for its next leg.
    LegQueued {
        request_id: RequestId,
        root_id: RequestId,
        origin: ZoneId,
        dropoff: ZoneId,
        hops: u32,
    },
    Dispatched {
        vehicle_id: VehicleId,
        target: ZoneId,
        eta_ticks: u32,
    },
    Assigned {
        request_id: RequestId,
        vehicle_id: VehicleId,
        eta_ticks: u32,
    },
    PickedUp {
        request_id: RequestId,
        root_id: RequestId,
        vehicle_id: VehicleId,
        wait_ticks: u64,
    },
    HopDropped {
        request_id: RequestId,
        root_id: RequestId,
        vehicle_id: VehicleId,
        zone: ZoneId,
        leg_distance: u32,
    },
    /// Final delivery at the destination.
    Delivered {
        request_id: RequestId,
        root_id: RequestId,
        vehicle_id: VehicleId,
        leg_distance: u32,
        direct_distance: u32,
    },
    Rejected {
        request_id: RequestId,
    },
    FleetTick {
        active: u32,
        loaded_distance: u32,
        empty_distance: u32,
    },
    Reward {
        components: ObjectiveComponents,
        objective: f64,
        agent_reward_total: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub events: Vec<Event>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Event>, _>>()?;
        Ok(Self { events })
    }
}

const STREAM_ARRIVALS: u64 = 1;
const STREAM_MATCHING: u64 = 2;
const STREAM_POLICY: u64 = 3;
const STREAM_TRAINING: u64 = 4;
const STREAM_PLACEMENT: u64 = 5;
const STREAM_SURVEY: u64 = 6;
const STREAM_LAYOUT: u64 = 7;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// What one vehicle did during a tick.
struct VehicleTick {
    /// Per-order delay increments `(ω, δ)`.
    orders: Vec<(f64, f64)>,
    detour_moves: u32,
    hops: usize,
    loaded: u32,
    empty: u32,
}

#[derive(Debug, Clone)]
struct Streams {
    arrivals: ChaCha8Rng,
    matching: ChaCha8Rng,
    policy: ChaCha8Rng,
    training: ChaCha8Rng,
}

/// An agent decision still waiting for its successor state.
#[derive(Debug, Clone)]
struct Pending {
    state: Vec<f64>,
    action: usize,
    reward: f64,
    ticks: u32,
}

#[derive(Debug, Clone)]
enum Arrivals {
    Synthetic(Workload),
    Recorded(BTreeMap<Tick, Vec<Request>>),
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    cfg: SimConfig,
    weights: RewardWeights,
    pub grid: GridWorld,
    arrivals: Arrivals,
    pub tick: Tick,
    pub vehicles: Vec<Vehicle>,
    pub requests: BTreeMap<RequestId, Request>,
    queue: Vec<RequestId>,
    hop_trips: HashMap<RequestId, HopTrip>,
    ids: RequestIds,
    history: DemandHistory,
    rng: Streams,
    pending: Vec<Option<Pending>>,
    prev_active: Vec<u8>,
    reject_radius: u32,
    beta_override: Option<f64>,
    logging: bool,
    pub log: EpisodeLog,
    pub curve: Vec<TrainRecord>,
}

impl World {
    /// Build the city, place vehicles at the origins of the first `N`
    /// generated requests and run the warmup ticks with the policy disabled.
    pub fn initialize(cfg: &SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let g = &cfg.grid;
        let mut grid = GridWorld::new(g.width, g.height, g.zone_edge_m, g.vehicle_speed)?;
        let mut layout_rng = stream(cfg.layout_seed, STREAM_LAYOUT);
        let workload = Workload::synthetic(&grid, &cfg.workload, &mut layout_rng);
        let arrivals = match &cfg.trip_records {
            None => Arrivals::Synthetic(workload.clone()),
            Some(path) => {
                let mut ids = RequestIds::default();
                let records = ingest_trip_records(
                    path,
                    &grid,
                    &mut ids,
                    cfg.workload.passenger_urgency,
                    cfg.workload.goods_urgency,
                )?;
                let mut by_tick: BTreeMap<Tick, Vec<Request>> = BTreeMap::new();
                for r in records {
                    by_tick.entry(r.created_tick).or_default().push(r);
                }
                Arrivals::Recorded(by_tick)
            }
        };

        // hop-zones from a pickup survey
        let mut counts: HashMap<ZoneId, u64> = HashMap::new();
        if g.hop_survey_ticks == 0 {
            for z in grid.zones() {
                counts.insert(z, g.hop_min_pickups);
            }
        } else {
            let mut survey = stream(cfg.layout_seed, STREAM_SURVEY);
            let mut ids = RequestIds::default();
            for t in 0..g.hop_survey_ticks {
                for r in workload.generate_tick_requests(&grid, t, &mut survey, &mut ids) {
                    *counts.entry(r.origin).or_default() += 1;
                }
            }
        }
        grid.designate_hop_zones(g.hop_stride, g.hop_offset, &counts, g.hop_min_pickups)?;

        let origins = first_origins(cfg, &grid, &workload, &arrivals);
        let n_passenger = (cfg.fleet_size as f64 * cfg.passenger_share).round() as usize;
        let vehicles = origins
            .into_iter()
            .enumerate()
            .map(|(i, loc)| {
                let (seats, trunk) = match cfg.baseline {
                    BaselineMode::Separate if i < n_passenger => (cfg.seats, 0),
                    BaselineMode::Separate => (0, cfg.separate_trunk),
                    _ => (cfg.seats, cfg.trunk),
                };
                Vehicle::new(i as VehicleId, loc, seats, trunk)
            })
            .collect::<Vec<_>>();

        let n = vehicles.len();
        let reject_radius = grid.meters_to_zones(cfg.reject_radius_m);
        let mut world = Self {
            weights: cfg.reward.weights()?,
            history: DemandHistory::new(grid.zone_count()),
            grid,
            arrivals,
            tick: 0,
            vehicles,
            requests: BTreeMap::new(),
            queue: Vec::new(),
            hop_trips: HashMap::new(),
            ids: RequestIds::default(),
            rng: Streams {
                arrivals: stream(cfg.seed, STREAM_ARRIVALS),
                matching: stream(cfg.seed, STREAM_MATCHING),
                policy: stream(cfg.seed, STREAM_POLICY),
                training: stream(cfg.seed, STREAM_TRAINING),
            },
            pending: vec![None; n],
            prev_active: vec![0; n],
            reject_radius,
            beta_override: None,
            logging: false,
            log: EpisodeLog::default(),
            curve: Vec::new(),
            cfg: cfg.clone(),
        };
        for _ in 0..cfg.warmup {
            world.step(None, AgentMode::Eval)?;
        }
        world.logging = true;
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Fix the probability that an idle vehicle consults the policy,
    /// overriding the agent's schedule.
    pub fn set_act_probability(&mut self, beta: Option<f64>) {
        self.beta_override = beta;
    }

    pub fn queued(&self) -> &[RequestId] {
        &self.queue
    }

    fn emit(&mut self, kind: EventKind) {
        if self.logging {
            self.log.events.push(Event {
                tick: self.tick,
                kind,
            });
        }
    }

    fn intake(&mut self) -> Result<(), EngineError> {
        let t = self.tick;
        self.history.touch(t);
        let fresh = match &mut self.arrivals {
            Arrivals::Synthetic(w) => {
                w.generate_tick_requests(&self.grid, t, &mut self.rng.arrivals, &mut self.ids)
            }
            Arrivals::Recorded(by_tick) => {
                let mut out = by_tick.remove(&t).unwrap_or_default();
                for r in &mut out {
                    r.id = self.ids.next_id();
                }
                out
            }
        };
        for mut req in fresh {
            self.history.record(t, self.grid.index(req.origin));
            let mut planned_hops = 0;
            if req.kind == RequestKind::Goods && self.cfg.baseline == BaselineMode::FlexHops {
                let trip = plan_legs(
                    req.id,
                    req.origin,
                    req.destination,
                    &self.grid,
                    self.cfg.max_hop_depth,
                )?;
                if trip.hop_count() > 0 {
                    planned_hops = trip.hop_count() as u32;
                    req.dropoff = trip.legs[0].1;
                    self.hop_trips.insert(req.id, trip);
                }
            }
            self.emit(EventKind::RequestCreated {
                request_id: req.id,
                kind: req.kind,
                origin: req.origin,
                destination: req.destination,
                urgency: req.urgency,
                planned_hops,
            });
            self.queue.push(req.id);
            self.requests.insert(req.id, req);
        }
        Ok(())
    }

    fn supply_and_forecast(&self) -> Result<(FleetSnapshot, DemandForecast), EngineError> {
        let snapshot = project_supply(&self.vehicles, &self.grid, &self.grid, self.cfg.horizon)?;
        let forecast = forecast_demand(
            &self.history,
            self.tick,
            self.cfg.horizon,
            &self.cfg.forecast,
        );
        Ok((snapshot, forecast))
    }

    fn dispatch(
        &mut self,
        agent: &mut Option<&mut DdqnAgent>,
        mode: AgentMode,
        snapshot: &FleetSnapshot,
        forecast: &DemandForecast,
    ) -> Result<f64, EngineError> {
        let t = self.tick;
        let mut dispatch_time = 0.0;
        let beta = self
            .beta_override
            .unwrap_or_else(|| agent.as_ref().map_or(1.0, |a| a.act_probability(mode)));
        for i in 0..self.vehicles.len() {
            if self.vehicles[i].status != VehicleStatus::Idle {
                continue;
            }
            let here = self.vehicles[i].location;
            let Some(ag) = agent.as_deref_mut() else {
                // without a policy an idle vehicle offers itself where it stands
                self.vehicles[i].dispatch(&self.grid, here)?;
                continue;
            };
            if self.rng.policy.gen::<f64>() >= beta {
                continue;
            }
            let vid = self.vehicles[i].id;
            let state = encode_state(
                &self.grid,
                snapshot,
                forecast,
                &self.vehicles[i],
                t,
                &ag.config().encoder,
            )
            .features;
            if let Some(p) = self.pending[i].take() {
                ag.remember(
                    vid,
                    Transition {
                        state: p.state,
                        action: p.action,
                        reward: p.reward,
                        next_state: state.clone(),
                        elapsed: p.ticks.saturating_sub(1),
                        terminal: false,
                    },
                );
            }
            let action = ag.select(vid, &state, mode, &mut self.rng.policy);
            let target = ag.actions().target(&self.grid, here, action);
            let eta = self.grid.eta(here, target)?;
            self.vehicles[i].dispatch(&self.grid, target)?;
            dispatch_time += eta.ticks as f64;
            self.emit(EventKind::Dispatched {
                vehicle_id: vid,
                target,
                eta_ticks: eta.ticks,
            });
            if mode == AgentMode::Train {
                self.pending[i] = Some(Pending {
                    state,
                    action,
                    reward: 0.0,
                    ticks: 0,
                });
            }
        }
        Ok(dispatch_time)
    }

    fn matching(&mut self) -> Result<(), EngineError> {
        let t = self.tick;
        let queued: Vec<Request> = self
            .queue
            .iter()
            .map(|id| self.requests[id].clone())
            .collect();
        let candidates: Vec<MatchCandidate> = self
            .vehicles
            .iter()
            .filter(|v| {
                matches!(
                    v.status,
                    VehicleStatus::Dispatched | VehicleStatus::Matched | VehicleStatus::Serving
                )
            })
            .map(MatchCandidate::from_vehicle)
            .filter(|c| c.seats_free > 0 || c.trunk_free > 0)
            .collect();
        let assignments = match_requests(
            &queued,
            &candidates,
            &self.grid,
            self.reject_radius,
            &mut self.rng.matching,
        )?;
        for a in assignments {
            let req = self
                .requests
                .get_mut(&a.request_id)
                .expect("matched request exists");
            req.assign()?;
            let entry = ManifestEntry {
                request_id: req.id,
                kind: req.kind,
                origin: req.origin,
                dropoff: req.dropoff,
                leg_kind: if req.is_hop_leg() {
                    LegKind::HopLeg
                } else {
                    LegKind::Direct
                },
                urgency: req.urgency,
                hops: req.hops,
                created_tick: req.created_tick,
                assigned_tick: t,
                pickup_tick: None,
                direct_ticks: self.grid.eta(req.origin, req.dropoff)?.ticks,
            };
            self.vehicles[a.vehicle_id as usize].assign(entry, &self.grid)?;
            self.emit(EventKind::Assigned {
                request_id: a.request_id,
                vehicle_id: a.vehicle_id,
                eta_ticks: a.eta_ticks,
            });
        }
        let requests = &self.requests;
        self.queue
            .retain(|id| requests[id].status == RequestStatus::Queued);
        for v in &mut self.vehicles {
            if v.status == VehicleStatus::Dispatched {
                v.park()?;
            }
        }
        // only original requests run out of patience; a package waiting at a
        // hop-zone stays queued until some vehicle collects it
        let mut expired = Vec::new();
        for id in &self.queue {
            let r = &self.requests[id];
            if r.parent_id.is_none() && t.saturating_sub(r.created_tick) >= self.cfg.patience {
                expired.push(*id);
            }
        }
        for id in expired {
            self.requests
                .get_mut(&id)
                .expect("queued request exists")
                .reject()?;
            self.emit(EventKind::Rejected { request_id: id });
        }
        let requests = &self.requests;
        self.queue
            .retain(|id| requests[id].status == RequestStatus::Queued);
        Ok(())
    }

    /// Advance one vehicle and settle its stop events.
    fn advance_vehicle(&mut self, i: usize) -> Result<VehicleTick, EngineError> {
        let t = self.tick;
        let speed = self.grid.vehicle_speed() as i64;
        let v = &self.vehicles[i];
        let onboard: Vec<(RequestId, u32, f64)> = v
            .manifest
            .iter()
            .filter(|e| e.onboard())
            .map(|e| (e.request_id, v.location.manhattan(e.dropoff), e.urgency))
            .collect();
        let odo = v.odometer;
        let report = self.vehicles[i].advance(&self.grid, t)?;
        let v = &self.vehicles[i];
        let loaded = (v.odometer.loaded - odo.loaded) as u32;
        let empty = (v.odometer.empty - odo.empty) as u32;
        let orders = onboard
            .into_iter()
            .map(|(rid, before, omega)| {
                let delta = match v.manifest.iter().find(|e| e.request_id == rid) {
                    None => 0.0,
                    Some(e) => {
                        let progress = before as i64 - v.location.manhattan(e.dropoff) as i64;
                        (speed - progress).max(0) as f64 / speed as f64
                    }
                };
                (omega, delta)
            })
            .collect();
        let vid = v.id;
        let mut hops = 0;
        for ev in report.events {
            match ev {
                StopEvent::PickedUp { request_id, .. } => {
                    let req = self
                        .requests
                        .get_mut(&request_id)
                        .expect("picked request exists");
                    req.pick_up(t)?;
                    let (root_id, wait_ticks) = (req.root_id(), t - req.created_tick);
                    self.emit(EventKind::PickedUp {
                        request_id,
                        root_id,
                        vehicle_id: vid,
                        wait_ticks,
                    });
                }
                StopEvent::Delivered { request_id, .. } => {
                    let req = self
                        .requests
                        .get_mut(&request_id)
                        .expect("delivered request exists");
                    req.deliver(t)?;
                    let (root_id, leg_distance) =
                        (req.root_id(), req.origin.manhattan(req.dropoff));
                    let root = &self.requests[&root_id];
                    let direct_distance = root.origin.manhattan(root.destination);
                    self.emit(EventKind::Delivered {
                        request_id,
                        root_id,
                        vehicle_id: vid,
                        leg_distance,
                        direct_distance,
                    });
                }
                StopEvent::HopDropped { request_id, zone } => {
                    hops += 1;
                    let req = self
                        .requests
                        .get_mut(&request_id)
                        .expect("dropped request exists");
                    req.deliver(t)?;
                    let root_id = req.root_id();
                    let leg_distance = req.origin.manhattan(req.dropoff);
                    self.emit(EventKind::HopDropped {
                        request_id,
                        root_id,
                        vehicle_id: vid,
                        zone,
                        leg_distance,
                    });
                    let leg = self
                        .hop_trips
                        .get(&root_id)
                        .and_then(|trip| trip.leg_from(zone));
                    let Some((_, leg_end)) = leg else {
                        return Err(self.violation(format!(
                            "package {request_id} dropped at {zone} off its hop plan"
                        )));
                    };
                    let id = self.ids.next_id();
                    let child = self.requests[&request_id].next_leg(id, zone, leg_end, t)?;
                    self.emit(EventKind::LegQueued {
                        request_id: id,
                        root_id,
                        origin: zone,
                        dropoff: leg_end,
                        hops: child.hops,
                    });
                    self.queue.push(id);
                    self.requests.insert(id, child);
                }
            }
        }
        Ok(VehicleTick {
            orders,
            detour_moves: report.detour_moves,
            hops,
            loaded,
            empty,
        })
    }

    /// Run one tick. `agent = None` makes every idle vehicle offer itself in
    /// place; otherwise the agent's policy moves idle vehicles.
    pub fn step(
        &mut self,
        mut agent: Option<&mut DdqnAgent>,
        mode: AgentMode,
    ) -> Result<(), EngineError> {
        self.intake()?;
        let (snapshot, forecast) = self.supply_and_forecast()?;
        let dispatch_time = self.dispatch(&mut agent, mode, &snapshot, &forecast)?;
        self.matching()?;

        let n = self.vehicles.len();
        let mut detour_total = 0.0;
        let mut hop_total = 0;
        let (mut loaded, mut empty) = (0, 0);
        let mut per_vehicle = Vec::with_capacity(n);
        for i in 0..n {
            let vt = self.advance_vehicle(i)?;
            detour_total += vt.orders.iter().map(|(_, d)| d).sum::<f64>();
            hop_total += vt.hops;
            loaded += vt.loaded;
            empty += vt.empty;
            per_vehicle.push((vt.orders, vt.detour_moves));
        }

        let active_now: Vec<u8> = self.vehicles.iter().map(Vehicle::active_flag).collect();
        let mut reward_total = 0.0;
        for (i, (orders, detour_moves)) in per_vehicle.into_iter().enumerate() {
            let v = &self.vehicles[i];
            let (passengers, packages) = v.onboard_counts();
            let inputs = AgentRewardInputs {
                passengers,
                packages,
                detour_ticks: detour_moves as f64,
                orders,
                active_now: active_now[i],
                active_before: self.prev_active[i],
                hops: v.manifest.iter().map(|e| e.hops).collect(),
            };
            let r = agent_reward(&inputs, &self.weights);
            reward_total += r;
            if let Some(p) = &mut self.pending[i] {
                p.reward += self.weights.discount.powi(p.ticks as i32) * r;
                p.ticks += 1;
            }
        }
        let supply: Vec<f64> = snapshot.current.iter().map(|c| *c as f64).collect();
        let components = ObjectiveComponents {
            supply_demand_gap: supply_demand_gap(&forecast.values[0], &supply)?,
            dispatch_time,
            detour_overhead: detour_total,
            activations: fleet_activations(&active_now, &self.prev_active),
            hops: hop_total as f64,
        };
        let active = active_now.iter().map(|a| *a as u32).sum();
        self.emit(EventKind::FleetTick {
            active,
            loaded_distance: loaded,
            empty_distance: empty,
        });
        self.emit(EventKind::Reward {
            components,
            objective: global_objective(&components, &self.weights),
            agent_reward_total: reward_total,
        });
        self.prev_active = active_now;

        if mode == AgentMode::Train {
            if let Some(ag) = agent {
                let record = ag.train_tick(&mut self.rng.training);
                self.curve.push(record);
            }
        }
        if self.cfg.check_invariants {
            self.check_invariants()?;
        }
        self.tick += 1;
        Ok(())
    }

    /// Close every open decision with the current state. The episode is
    /// truncated, not terminated, so these transitions still bootstrap.
    pub fn flush_pending(&mut self, agent: &mut DdqnAgent) -> Result<(), EngineError> {
        if self.pending.iter().all(Option::is_none) {
            return Ok(());
        }
        let (snapshot, forecast) = self.supply_and_forecast()?;
        for i in 0..self.vehicles.len() {
            let Some(p) = self.pending[i].take() else {
                continue;
            };
            if p.ticks == 0 {
                continue;
            }
            let v = &self.vehicles[i];
            let next = encode_state(
                &self.grid,
                &snapshot,
                &forecast,
                v,
                self.tick,
                &agent.config().encoder,
            )
            .features;
            agent.remember(
                v.id,
                Transition {
                    state: p.state,
                    action: p.action,
                    reward: p.reward,
                    next_state: next,
                    elapsed: p.ticks - 1,
                    terminal: false,
                },
            );
        }
        Ok(())
    }

    fn violation(&self, message: String) -> EngineError {
        let dump = serde_json::json!({
            "vehicles": self.vehicles,
            "queue": self.queue,
        });
        EngineError::Invariant {
            tick: self.tick,
            message,
            dump: dump.to_string(),
        }
    }

    /// Capacity, lifecycle and conservation checks across the whole world.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let mut holder: HashMap<RequestId, bool> = HashMap::new();
        for v in &self.vehicles {
            v.check_invariants()
                .map_err(|e| self.violation(e.to_string()))?;
            for e in &v.manifest {
                if holder.insert(e.request_id, e.onboard()).is_some() {
                    return Err(
                        self.violation(format!("request {} held by two vehicles", e.request_id))
                    );
                }
            }
            if self.cfg.baseline == BaselineMode::Separate {
                let kinds: BTreeSet<_> = v.manifest.iter().map(|e| e.kind).collect();
                if kinds.len() > 1 {
                    return Err(
                        self.violation(format!("vehicle {} mixes passengers and goods", v.id))
                    );
                }
            }
        }
        let queued: BTreeSet<RequestId> = self.queue.iter().copied().collect();
        if queued.len() != self.queue.len() {
            return Err(self.violation("duplicate queue entry".into()));
        }
        // per original request: (records still in the system, finished)
        let mut roots: HashMap<RequestId, (u32, u32)> = HashMap::new();
        for (id, r) in &self.requests {
            let held = holder.get(id).copied();
            let ok = match r.status {
                RequestStatus::Queued => held.is_none() && queued.contains(id),
                RequestStatus::Assigned => held == Some(false),
                RequestStatus::PickedUp => held == Some(true),
                RequestStatus::Delivered | RequestStatus::Rejected => {
                    held.is_none() && !queued.contains(id)
                }
            };
            if !ok {
                return Err(
                    self.violation(format!("request {id} is {:?} but held={held:?}", r.status))
                );
            }
            let entry = roots.entry(r.root_id()).or_default();
            match r.status {
                RequestStatus::Queued | RequestStatus::Assigned | RequestStatus::PickedUp => {
                    entry.0 += 1
                }
                RequestStatus::Rejected => entry.1 += 1,
                RequestStatus::Delivered if !r.is_hop_leg() => entry.1 += 1,
                RequestStatus::Delivered => {}
            }
        }
        for (root, (live, done)) in roots {
            if live + done != 1 {
                return Err(self.violation(format!(
                    "request {root} is in {live} live places and finished {done} times"
                )));
            }
        }
        if holder.keys().any(|id| !self.requests.contains_key(id)) {
            return Err(self.violation("manifest references an unknown request".into()));
        }
        Ok(())
    }
}

fn first_origins(
    cfg: &SimConfig,
    grid: &GridWorld,
    workload: &Workload,
    arrivals: &Arrivals,
) -> Vec<ZoneId> {
    let n = cfg.fleet_size;
    let mut origins = Vec::with_capacity(n);
    if let Arrivals::Recorded(by_tick) = arrivals {
        origins.extend(by_tick.values().flatten().map(|r| r.origin).take(n));
    }
    let mut rng = stream(cfg.seed, STREAM_PLACEMENT);
    let mut ids = RequestIds::default();
    let mut t = 0;
    while origins.len() < n {
        let batch = workload.generate_tick_requests(grid, t, &mut rng, &mut ids);
        origins.extend(batch.iter().map(|r| r.origin).take(n - origins.len()));
        t += 1;
        if t > 1_000_000 {
            // a workload with no demand at all; spread vehicles over the grid
            while origins.len() < n {
                origins.push(grid.zone_at(origins.len() % grid.zone_count()));
            }
        }
    }
    origins
}

/// The synthetic requests an episode under `cfg` would see over its warmup
/// and main ticks, in creation order.
pub fn synthetic_requests(cfg: &SimConfig) -> Result<Vec<Request>, EngineError> {
    cfg.validate()?;
    let g = &cfg.grid;
    let grid = GridWorld::new(g.width, g.height, g.zone_edge_m, g.vehicle_speed)?;
    let workload = Workload::synthetic(
        &grid,
        &cfg.workload,
        &mut stream(cfg.layout_seed, STREAM_LAYOUT),
    );
    let mut rng = stream(cfg.seed, STREAM_ARRIVALS);
    let mut ids = RequestIds::default();
    let mut out = Vec::new();
    for t in 0..cfg.warmup + cfg.ticks {
        out.extend(workload.generate_tick_requests(&grid, t, &mut rng, &mut ids));
    }
    Ok(out)
}

/// Everything an episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub log: EpisodeLog,
    pub curve: Vec<TrainRecord>,
    pub metrics: MetricsReport,
}

/// Run `cfg.ticks` ticks after warmup. With an agent in training mode the
/// agent learns every tick; in evaluation mode its parameters are untouched.
pub fn run_episode(
    cfg: &SimConfig,
    mut agent: Option<&mut DdqnAgent>,
    mode: AgentMode,
) -> Result<EpisodeOutcome, EngineError> {
    let mut world = World::initialize(cfg)?;
    if cfg.ticks > 0 {
        world.emit(EventKind::EpisodeStart {
            fleet_size: world.vehicles.len(),
            minutes_per_tick: cfg.minutes_per_tick,
            ticks_per_day: cfg.dqn.encoder.ticks_per_day,
            baseline: cfg.baseline,
            seed: cfg.seed,
        });
    }
    for _ in 0..cfg.ticks {
        world.step(agent.as_deref_mut(), mode)?;
    }
    if mode == AgentMode::Train {
        if let Some(ag) = agent {
            world.flush_pending(ag)?;
        }
    }
    let metrics = compute_metrics(&world.log, &cfg.metrics);
    Ok(EpisodeOutcome {
        log: world.log,
        curve: world.curve,
        metrics,
    })
}
