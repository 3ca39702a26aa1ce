//! Passenger and goods requests: synthetic generation, trip-record ingestion
//! and per-zone demand forecasting.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GridWorld, ZoneId};

pub type RequestId = u64;
pub type Tick = u64;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("poisson domain error: {0}")]
    Domain(String),
    #[error("request {id}: origin equals destination {zone}")]
    DegenerateTrip { id: RequestId, zone: ZoneId },
    #[error("request {id}: illegal status transition {from:?} -> {to:?}")]
    IllegalTransition {
        id: RequestId,
        from: RequestStatus,
        to: RequestStatus,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {source}")]
    Validation {
        line: u64,
        #[source]
        source: GeoError,
    },
    #[error("line {line}: origin equals destination")]
    DegenerateRecord { line: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Passenger,
    Goods,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Queued,
    Assigned,
    PickedUp,
    Delivered,
    Rejected,
}

impl RequestStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RequestStatus::Delivered | RequestStatus::Rejected)
    }

    fn may_become(self, next: RequestStatus) -> bool {
        use RequestStatus::*;
        matches!(
            (self, next),
            (Queued, Assigned) | (Assigned, PickedUp) | (PickedUp, Delivered) | (Queued, Rejected)
        )
    }
}

/// A pickup-and-delivery request.
///
/// `destination` is where the passenger or package is ultimately going and
/// `dropoff` is where the vehicle carrying this record releases it. The two
/// differ only for goods legs that end at a hop-zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub kind: RequestKind,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub dropoff: ZoneId,
    pub created_tick: Tick,
    pub urgency: f64,
    pub status: RequestStatus,
    pub pickup_tick: Option<Tick>,
    pub delivery_tick: Option<Tick>,
    /// Hop transfers this package has already made (`H_u`). Always 0 for passengers.
    pub hops: u32,
    pub parent_id: Option<RequestId>,
}

impl Request {
    pub fn new(
        id: RequestId,
        kind: RequestKind,
        origin: ZoneId,
        destination: ZoneId,
        created_tick: Tick,
        urgency: f64,
    ) -> Result<Self, DemandError> {
        if origin == destination {
            return Err(DemandError::DegenerateTrip { id, zone: origin });
        }
        Ok(Self {
            id,
            kind,
            origin,
            destination,
            dropoff: destination,
            created_tick,
            urgency,
            status: RequestStatus::Queued,
            pickup_tick: None,
            delivery_tick: None,
            hops: 0,
            parent_id: None,
        })
    }

    /// The record that carries a package over its next leg after a hop drop.
    pub fn next_leg(
        &self,
        id: RequestId,
        hop_zone: ZoneId,
        leg_end: ZoneId,
        tick: Tick,
    ) -> Result<Self, DemandError> {
        if hop_zone == leg_end {
            return Err(DemandError::DegenerateTrip { id, zone: hop_zone });
        }
        Ok(Self {
            id,
            kind: self.kind,
            origin: hop_zone,
            destination: self.destination,
            dropoff: leg_end,
            created_tick: tick,
            urgency: self.urgency,
            status: RequestStatus::Queued,
            pickup_tick: None,
            delivery_tick: None,
            hops: self.hops + 1,
            parent_id: Some(self.parent_id.unwrap_or(self.id)),
        })
    }

    /// Id of the original request this record belongs to.
    pub fn root_id(&self) -> RequestId {
        self.parent_id.unwrap_or(self.id)
    }

    pub fn is_hop_leg(&self) -> bool {
        self.dropoff != self.destination
    }

    fn transition(&mut self, next: RequestStatus) -> Result<(), DemandError> {
        if !self.status.may_become(next) {
            return Err(DemandError::IllegalTransition {
                id: self.id,
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    pub fn assign(&mut self) -> Result<(), DemandError> {
        self.transition(RequestStatus::Assigned)
    }

    pub fn pick_up(&mut self, tick: Tick) -> Result<(), DemandError> {
        self.transition(RequestStatus::PickedUp)?;
        self.pickup_tick = Some(tick.max(self.created_tick));
        Ok(())
    }

    pub fn deliver(&mut self, tick: Tick) -> Result<(), DemandError> {
        self.transition(RequestStatus::Delivered)?;
        self.delivery_tick = Some(tick.max(self.pickup_tick.unwrap_or(tick)));
        Ok(())
    }

    pub fn reject(&mut self) -> Result<(), DemandError> {
        self.transition(RequestStatus::Rejected)
    }
}

/// Monotone id source shared by generated requests and hop legs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RequestIds {
    next: RequestId,
}

impl RequestIds {
    pub fn starting_at(next: RequestId) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> RequestId {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn peek(&self) -> RequestId {
        self.next
    }
}

/// `e^{-λ} λ^x / x!`, evaluated in log space so large `x` stays finite.
pub fn poisson_pmf(x: u64, lambda: f64) -> Result<f64, DemandError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(DemandError::Domain(format!(
            "rate must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(if x == 0 { 1.0 } else { 0.0 });
    }
    let ln_lambda = lambda.ln();
    let mut log_p = -lambda;
    for k in 1..=x {
        log_p += ln_lambda - (k as f64).ln();
    }
    Ok(log_p.exp())
}

/// Largest rate handled by a single inversion pass; above it the draw is
/// split into independent chunks so `e^{-λ}` never underflows.
const INVERSION_CHUNK: f64 = 256.0;

/// Draw from Poisson(λ) by inversion of one uniform per chunk.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda.is_nan() || lambda <= 0.0 || lambda.is_infinite() {
        return 0;
    }
    let mut remaining = lambda;
    let mut total = 0;
    while remaining > 0.0 {
        let chunk = remaining.min(INVERSION_CHUNK);
        remaining -= chunk;
        let u: f64 = rng.gen();
        let mut p = (-chunk).exp();
        let mut cdf = p;
        let mut x = 0u64;
        while u > cdf {
            x += 1;
            p *= chunk / x as f64;
            cdf += p;
            if p < 1e-300 && x as f64 > chunk {
                break;
            }
        }
        total += x;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Postal,
    Meal,
    Supermarket,
}

/// A goods pickup point with a Poisson request rate per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceLocation {
    pub zone: ZoneId,
    pub kind: ServiceKind,
    pub rate: f64,
}

/// Passenger demand: per-zone origin rates plus a destination table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerDemand {
    pub origin_rates: BTreeMap<ZoneId, f64>,
    pub hot_destinations: Vec<ZoneId>,
    /// Probability that a trip ends at one of the hot destinations.
    pub hot_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub locations: Vec<ServiceLocation>,
    pub passengers: PassengerDemand,
    /// Maximum goods trip length, zone units.
    pub goods_radius: u32,
    pub passenger_urgency: f64,
    pub goods_urgency: f64,
}

/// Knobs for building a synthetic [`Workload`] on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadParams {
    /// Expected passenger requests per tick over the whole grid.
    pub passenger_rate: f64,
    /// Expected goods requests per tick over the whole grid.
    pub goods_rate: f64,
    pub locations_per_kind: usize,
    pub hot_destinations: usize,
    pub hot_fraction: f64,
    pub goods_radius_m: f64,
    pub passenger_urgency: f64,
    pub goods_urgency: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            passenger_rate: 2.0,
            goods_rate: 2.0,
            locations_per_kind: 5,
            hot_destinations: 6,
            hot_fraction: 0.5,
            // 5 miles
            goods_radius_m: 8046.72,
            passenger_urgency: 1.0,
            goods_urgency: 0.5,
        }
    }
}

impl Workload {
    /// Uniform passenger origins, a few hot destinations, and service
    /// locations of each kind placed uniformly at random with equal rates.
    pub fn synthetic<R: Rng + ?Sized>(
        grid: &GridWorld,
        params: &WorkloadParams,
        rng: &mut R,
    ) -> Self {
        let m = grid.zone_count();
        let per_zone = params.passenger_rate / m as f64;
        let origin_rates = grid.zones().map(|z| (z, per_zone)).collect();
        let hot_destinations = (0..params.hot_destinations)
            .map(|_| grid.zone_at(rng.gen_range(0..m)))
            .collect();
        let kinds = [
            ServiceKind::Postal,
            ServiceKind::Meal,
            ServiceKind::Supermarket,
        ];
        let n_locations = params.locations_per_kind * kinds.len();
        let rate = if n_locations == 0 {
            0.0
        } else {
            params.goods_rate / n_locations as f64
        };
        let mut locations = Vec::with_capacity(n_locations);
        for kind in kinds {
            for _ in 0..params.locations_per_kind {
                locations.push(ServiceLocation {
                    zone: grid.zone_at(rng.gen_range(0..m)),
                    kind,
                    rate,
                });
            }
        }
        Self {
            locations,
            passengers: PassengerDemand {
                origin_rates,
                hot_destinations,
                hot_fraction: params.hot_fraction,
            },
            goods_radius: grid.meters_to_zones(params.goods_radius_m).max(1),
            passenger_urgency: params.passenger_urgency,
            goods_urgency: params.goods_urgency,
        }
    }

    /// Draw all requests created at `tick`. Passenger zones come first in
    /// zone order, then service locations in list order; ids are taken from
    /// `ids` in that order.
    pub fn generate_tick_requests<R: Rng + ?Sized>(
        &self,
        grid: &GridWorld,
        tick: Tick,
        rng: &mut R,
        ids: &mut RequestIds,
    ) -> Vec<Request> {
        let mut out = Vec::new();
        for (&origin, &rate) in &self.passengers.origin_rates {
            for _ in 0..sample_poisson(rate, rng) {
                if let Some(dest) = self.passenger_destination(grid, origin, rng) {
                    let req = Request::new(
                        ids.next_id(),
                        RequestKind::Passenger,
                        origin,
                        dest,
                        tick,
                        self.passenger_urgency,
                    )
                    .expect("destination differs from origin");
                    out.push(req);
                }
            }
        }
        for loc in &self.locations {
            for _ in 0..sample_poisson(loc.rate, rng) {
                if let Some(dest) = goods_destination(grid, loc.zone, self.goods_radius, rng) {
                    let req = Request::new(
                        ids.next_id(),
                        RequestKind::Goods,
                        loc.zone,
                        dest,
                        tick,
                        self.goods_urgency,
                    )
                    .expect("destination differs from origin");
                    out.push(req);
                }
            }
        }
        out
    }

    fn passenger_destination<R: Rng + ?Sized>(
        &self,
        grid: &GridWorld,
        origin: ZoneId,
        rng: &mut R,
    ) -> Option<ZoneId> {
        let hot = &self.passengers.hot_destinations;
        if !hot.is_empty() && rng.gen::<f64>() < self.passengers.hot_fraction {
            let pick = hot[rng.gen_range(0..hot.len())];
            if pick != origin {
                return Some(pick);
            }
        }
        let m = grid.zone_count();
        if m < 2 {
            return None;
        }
        // uniform over zones other than the origin
        let mut idx = rng.gen_range(0..m - 1);
        if idx >= grid.index(origin) {
            idx += 1;
        }
        Some(grid.zone_at(idx))
    }
}

/// Uniform destination within `radius` of `origin`, excluding the origin.
pub fn goods_destination<R: Rng + ?Sized>(
    grid: &GridWorld,
    origin: ZoneId,
    radius: u32,
    rng: &mut R,
) -> Option<ZoneId> {
    let r = radius as i64;
    let mut candidates = Vec::new();
    for dr in -r..=r {
        let span = r - dr.abs();
        for dc in -span..=span {
            let row = origin.row as i64 + dr;
            let col = origin.col as i64 + dc;
            if (dr, dc) == (0, 0)
                || row < 0
                || col < 0
                || row >= grid.height() as i64
                || col >= grid.width() as i64
            {
                continue;
            }
            candidates.push(ZoneId::new(row as u32, col as u32));
        }
    }
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

#[derive(Debug, Deserialize)]
struct TripRecord {
    pickup_tick: Tick,
    kind: String,
    origin_row: u32,
    origin_col: u32,
    dest_row: u32,
    dest_col: u32,
}

/// Read trip records from a CSV file with header
/// `pickup_tick,kind,origin_row,origin_col,dest_row,dest_col`.
pub fn ingest_trip_records(
    path: &Path,
    grid: &GridWorld,
    ids: &mut RequestIds,
    passenger_urgency: f64,
    goods_urgency: f64,
) -> Result<Vec<Request>, DemandError> {
    let file = std::fs::File::open(path)?;
    read_trip_records(file, grid, ids, passenger_urgency, goods_urgency)
}

pub fn read_trip_records<R: std::io::Read>(
    reader: R,
    grid: &GridWorld,
    ids: &mut RequestIds,
    passenger_urgency: f64,
    goods_urgency: f64,
) -> Result<Vec<Request>, DemandError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DemandError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = [
        "pickup_tick",
        "kind",
        "origin_row",
        "origin_col",
        "dest_row",
        "dest_col",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DemandError::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| DemandError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: TripRecord =
            record
                .deserialize(Some(&headers))
                .map_err(|e| DemandError::Parse {
                    line,
                    message: e.to_string(),
                })?;
        let (kind, urgency) = match row.kind.to_ascii_lowercase().as_str() {
            "passenger" => (RequestKind::Passenger, passenger_urgency),
            "goods" => (RequestKind::Goods, goods_urgency),
            other => {
                return Err(DemandError::Parse {
                    line,
                    message: format!("unknown request kind '{other}'"),
                })
            }
        };
        let origin = grid
            .check(ZoneId::new(row.origin_row, row.origin_col))
            .map_err(|source| DemandError::Validation { line, source })?;
        let dest = grid
            .check(ZoneId::new(row.dest_row, row.dest_col))
            .map_err(|source| DemandError::Validation { line, source })?;
        if origin == dest {
            return Err(DemandError::DegenerateRecord { line });
        }
        out.push(Request::new(
            ids.next_id(),
            kind,
            origin,
            dest,
            row.pickup_tick,
            urgency,
        )?);
    }
    Ok(out)
}

/// Write requests in the trip-record CSV format.
pub fn write_trip_records<W: std::io::Write>(
    writer: W,
    requests: &[Request],
) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| DemandError::Io(std::io::Error::other(e));
    w.write_record([
        "pickup_tick",
        "kind",
        "origin_row",
        "origin_col",
        "dest_row",
        "dest_col",
    ])
    .map_err(io)?;
    for r in requests {
        let kind = match r.kind {
            RequestKind::Passenger => "passenger",
            RequestKind::Goods => "goods",
        };
        w.write_record([
            r.created_tick.to_string(),
            kind.to_string(),
            r.origin.row.to_string(),
            r.origin.col.to_string(),
            r.destination.row.to_string(),
            r.destination.col.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-tick pickup counts by zone, starting at tick 0.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DemandHistory {
    zones: usize,
    counts: Vec<Vec<u32>>,
}

impl DemandHistory {
    pub fn new(zones: usize) -> Self {
        Self {
            zones,
            counts: Vec::new(),
        }
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn record(&mut self, tick: Tick, zone_index: usize) {
        let t = tick as usize;
        while self.counts.len() <= t {
            self.counts.push(vec![0; self.zones]);
        }
        self.counts[t][zone_index] += 1;
    }

    /// Make sure `tick` has a (possibly empty) row.
    pub fn touch(&mut self, tick: Tick) {
        let t = tick as usize;
        while self.counts.len() <= t {
            self.counts.push(vec![0; self.zones]);
        }
    }

    pub fn at(&self, tick: Tick) -> Option<&[u32]> {
        self.counts.get(tick as usize).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastParams {
    /// Ticks per simulated day.
    pub period: u64,
    /// How many prior days to average at the same tick-of-day.
    pub window_days: u64,
    /// Trailing window (ticks) used when no same-tick-of-day sample exists.
    pub fallback_ticks: u64,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            period: 1440,
            window_days: 7,
            fallback_ticks: 60,
        }
    }
}

/// Expected requests per zone for ticks `start..=start + horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandForecast {
    pub start_tick: Tick,
    pub zones: usize,
    /// `values[k][i]`: expected requests in zone `i` at tick `start + k`.
    pub values: Vec<Vec<f64>>,
}

impl DemandForecast {
    pub fn zeros(start_tick: Tick, zones: usize, horizon: usize) -> Self {
        Self {
            start_tick,
            zones,
            values: vec![vec![0.0; zones]; horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Mean over steps `from..=to` (clipped to the horizon) for one zone.
    pub fn mean_over(&self, zone: usize, from: usize, to: usize) -> f64 {
        let to = to.min(self.horizon());
        if from > to {
            return 0.0;
        }
        let sum: f64 = (from..=to).map(|k| self.values[k][zone]).sum();
        sum / (to - from + 1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forecast serializes")
    }
}

/// Historical-average forecast.
///
/// Each entry is the mean count for that zone at the same tick-of-day on up to
/// `window_days` prior days. When no such tick exists yet, the mean over the
/// trailing `fallback_ticks` ticks is used instead; an empty history yields
/// zeros.
pub fn forecast_demand(
    history: &DemandHistory,
    now: Tick,
    horizon: usize,
    params: &ForecastParams,
) -> DemandForecast {
    let zones = history.zones();
    let mut fc = DemandForecast::zeros(now, zones, horizon);
    let available = (history.len() as u64).min(now);
    if available == 0 {
        return fc;
    }
    let fallback = {
        let lo = available.saturating_sub(params.fallback_ticks.max(1));
        let n = (available - lo) as f64;
        let mut acc = vec![0.0; zones];
        for t in lo..available {
            for (a, c) in acc.iter_mut().zip(history.counts[t as usize].iter()) {
                *a += *c as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    };
    for (k, row) in fc.values.iter_mut().enumerate() {
        let target = now + k as u64;
        let mut samples = 0u64;
        let mut acc = vec![0.0; zones];
        if params.period > 0 {
            for d in 1..=params.window_days {
                let Some(past) = target.checked_sub(d * params.period) else {
                    break;
                };
                if past >= available {
                    continue;
                }
                samples += 1;
                for (a, c) in acc.iter_mut().zip(history.counts[past as usize].iter()) {
                    *a += *c as f64;
                }
            }
        }
        if samples > 0 {
            for (r, a) in row.iter_mut().zip(acc) {
                *r = a / samples as f64;
            }
        } else {
            row.copy_from_slice(&fallback);
        }
    }
    fc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridWorld {
        GridWorld::new(10, 10, 150.0, 1).unwrap()
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert!((poisson_pmf(1, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!((poisson_pmf(2, 3.0).unwrap() - (-3.0f64).exp() * 4.5).abs() < 1e-12);
        assert!((poisson_pmf(1, 1.0).unwrap() - 0.36788).abs() < 1e-5);
        assert!((poisson_pmf(2, 3.0).unwrap() - 0.22404).abs() < 1e-5);
    }

    #[test]
    fn pmf_rejects_bad_rate() {
        assert!(matches!(poisson_pmf(1, -0.5), Err(DemandError::Domain(_))));
        assert!(poisson_pmf(1, f64::NAN).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        for lambda in [0.0, 0.1, 1.0, 5.0, 12.5, 30.0] {
            let total: f64 = (0..200).map(|x| poisson_pmf(x, lambda).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9, "lambda={lambda} total={total}");
        }
    }

    #[test]
    fn request_lifecycle() {
        let mut r = Request::new(
            1,
            RequestKind::Passenger,
            ZoneId::new(0, 0),
            ZoneId::new(1, 1),
            5,
            1.0,
        )
        .unwrap();
        assert!(r.pick_up(6).is_err());
        r.assign().unwrap();
        r.pick_up(7).unwrap();
        r.deliver(9).unwrap();
        assert_eq!(r.status, RequestStatus::Delivered);
        assert!(r.reject().is_err());
        assert!(Request::new(
            2,
            RequestKind::Goods,
            ZoneId::new(0, 0),
            ZoneId::new(0, 0),
            0,
            0.5
        )
        .is_err());
    }

    #[test]
    fn next_leg_links_parent() {
        let mut r = Request::new(
            4,
            RequestKind::Goods,
            ZoneId::new(0, 0),
            ZoneId::new(0, 9),
            0,
            0.5,
        )
        .unwrap();
        r.dropoff = ZoneId::new(0, 3);
        let child = r
            .next_leg(10, ZoneId::new(0, 3), ZoneId::new(0, 9), 4)
            .unwrap();
        assert_eq!(child.parent_id, Some(4));
        assert_eq!(child.hops, 1);
        assert_eq!(child.urgency, 0.5);
        let grandchild = child
            .next_leg(11, ZoneId::new(0, 5), ZoneId::new(0, 9), 6)
            .unwrap();
        assert_eq!(grandchild.root_id(), 4);
        assert_eq!(grandchild.hops, 2);
    }

    fn single_location(rate: f64) -> Workload {
        Workload {
            locations: vec![ServiceLocation {
                zone: ZoneId::new(5, 5),
                kind: ServiceKind::Meal,
                rate,
            }],
            passengers: PassengerDemand {
                origin_rates: BTreeMap::new(),
                hot_destinations: vec![],
                hot_fraction: 0.0,
            },
            goods_radius: 2,
            passenger_urgency: 1.0,
            goods_urgency: 0.5,
        }
    }

    #[test]
    fn zero_rates_generate_nothing() {
        let g = grid();
        let mut w = single_location(0.0);
        w.passengers.origin_rates = g.zones().map(|z| (z, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ids = RequestIds::default();
        for t in 0..100 {
            assert!(w
                .generate_tick_requests(&g, t, &mut rng, &mut ids)
                .is_empty());
        }
    }

    #[test]
    fn poisson_sample_mean() {
        let g = grid();
        let w = single_location(5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ids = RequestIds::default();
        let total: usize = (0..10_000)
            .map(|t| w.generate_tick_requests(&g, t, &mut rng, &mut ids).len())
            .sum();
        let mean = total as f64 / 10_000.0;
        assert!((4.8..=5.2).contains(&mean), "mean {mean}");
    }

    #[test]
    fn large_rate_sampler_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400;
        let mean: f64 = (0..n)
            .map(|_| sample_poisson(1000.0, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1000.0).abs() < 10.0, "mean {mean}");
    }

    #[test]
    fn goods_within_radius_and_ids_increase() {
        let g = grid();
        let mut w = single_location(3.0);
        w.passengers.origin_rates = g.zones().map(|z| (z, 0.02)).collect();
        w.passengers.hot_destinations = vec![ZoneId::new(1, 1)];
        w.passengers.hot_fraction = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ids = RequestIds::default();
        let mut last = None;
        for t in 0..500 {
            for r in w.generate_tick_requests(&g, t, &mut rng, &mut ids) {
                assert_ne!(r.origin, r.destination);
                if r.kind == RequestKind::Goods {
                    assert!(r.origin.manhattan(r.destination) <= 2);
                    assert_eq!(r.urgency, 0.5);
                } else {
                    assert_eq!(r.urgency, 1.0);
                }
                assert_eq!(r.status, RequestStatus::Queued);
                if let Some(prev) = last {
                    assert!(r.id > prev);
                }
                last = Some(r.id);
            }
        }
        assert!(last.is_some());
    }

    #[test]
    fn same_seed_same_stream() {
        let g = grid();
        let mut wrng = ChaCha8Rng::seed_from_u64(2);
        let w = Workload::synthetic(&g, &WorkloadParams::default(), &mut wrng);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids = RequestIds::default();
            (0..50)
                .flat_map(|t| w.generate_tick_requests(&g, t, &mut rng, &mut ids))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn synthetic_radius_from_meters() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Workload::synthetic(&g, &WorkloadParams::default(), &mut rng);
        assert_eq!(w.goods_radius, (8046.72f64 / 150.0).floor() as u32);
        assert_eq!(w.locations.len(), 15);
    }

    const HEADER: &str = "pickup_tick,kind,origin_row,origin_col,dest_row,dest_col\n";

    fn read(text: &str) -> Result<Vec<Request>, DemandError> {
        let mut ids = RequestIds::default();
        read_trip_records(text.as_bytes(), &grid(), &mut ids, 1.0, 0.5)
    }

    #[test]
    fn ingest_header_only() {
        assert!(read(HEADER).unwrap().is_empty());
    }

    #[test]
    fn ingest_rows() {
        let text = format!("{HEADER}0,passenger,0,0,1,1\n3,goods,2,2,2,5\n3,passenger,9,9,0,0\n");
        let reqs = read(&text).unwrap();
        assert_eq!(reqs.len(), 3);
        assert_eq!(reqs[1].kind, RequestKind::Goods);
        assert_eq!(reqs[1].origin, ZoneId::new(2, 2));
        assert_eq!(reqs[1].destination, ZoneId::new(2, 5));
        assert_eq!(reqs[1].created_tick, 3);
        assert_eq!(reqs[2].id, 2);
    }

    #[test]
    fn ingest_errors_carry_line_numbers() {
        let same = format!("{HEADER}0,passenger,0,0,1,1\n1,goods,3,3,3,3\n");
        assert!(matches!(
            read(&same),
            Err(DemandError::DegenerateRecord { line: 3 })
        ));
        let off = format!("{HEADER}0,passenger,0,0,10,1\n");
        assert!(matches!(
            read(&off),
            Err(DemandError::Validation { line: 2, .. })
        ));
        let junk = format!("{HEADER}x,passenger,0,0,1,1\n");
        assert!(matches!(
            read(&junk),
            Err(DemandError::Parse { line: 2, .. })
        ));
        let kind = format!("{HEADER}0,cargo,0,0,1,1\n");
        assert!(matches!(
            read(&kind),
            Err(DemandError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn trip_records_round_trip() {
        let text = format!("{HEADER}0,passenger,0,0,1,1\n3,goods,2,2,2,5\n");
        let reqs = read(&text).unwrap();
        let mut buf = Vec::new();
        write_trip_records(&mut buf, &reqs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn forecast_cold_start_is_zero() {
        let h = DemandHistory::new(4);
        let fc = forecast_demand(&h, 0, 5, &ForecastParams::default());
        assert_eq!(fc.values.len(), 6);
        assert!(fc.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn forecast_constant_history() {
        let mut h = DemandHistory::new(3);
        for t in 0..3000 {
            h.touch(t);
            h.record(t, 1);
            h.record(t, 1);
        }
        let fc = forecast_demand(&h, 3000, 30, &ForecastParams::default());
        for row in &fc.values {
            assert_eq!(row[1], 2.0);
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn forecast_same_tick_of_day_mean() {
        let params = ForecastParams {
            period: 10,
            window_days: 5,
            fallback_ticks: 5,
        };
        let mut h = DemandHistory::new(2);
        for t in 0..20 {
            h.touch(t);
        }
        h.record(3, 0);
        for _ in 0..3 {
            h.record(13, 0);
        }
        let fc = forecast_demand(&h, 20, 5, &params);
        // tick 23 looks back at 13 and 3
        assert_eq!(fc.values[3][0], 2.0);
        assert_eq!(fc.values[0][0], 0.0);
    }

    #[test]
    fn forecast_json_export() {
        let fc = DemandForecast::zeros(7, 2, 1);
        let back: DemandForecast = serde_json::from_str(&fc.to_json()).unwrap();
        assert_eq!(back, fc);
    }
}
