//! Evaluation metrics computed after the fact from an [`EpisodeLog`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::demand::{RequestId, RequestKind, Tick};
use crate::engine::{EpisodeLog, EventKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsOptions {
    pub cost_per_gallon: f64,
    pub gallons_per_hour: f64,
    /// Count empty cruising in the effective-distance denominator.
    pub include_empty_distance: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            cost_per_gallon: 2.0,
            gallons_per_hour: 0.5,
            include_empty_distance: false,
        }
    }
}

/// Fuel cost per delivery. `None` when nothing was delivered.
pub fn fuel_cost(vehicle_hours: f64, deliveries: u64, opts: &MetricsOptions) -> Option<f64> {
    (deliveries > 0)
        .then(|| vehicle_hours * opts.gallons_per_hour * opts.cost_per_gallon / deliveries as f64)
}

/// Distance the served legs would have needed on their own, divided by the
/// distance actually driven. `None` when nothing was driven.
pub fn effective_distance(served_leg_distances: &[f64], driven: f64) -> Option<f64> {
    (driven > 0.0).then(|| served_leg_distances.iter().sum::<f64>() / driven)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptRates {
    pub overall: f64,
    pub passenger: f64,
    pub goods: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: u64,
    pub requests: u64,
    pub accept_rate: f64,
    pub active_vehicle_ratio: f64,
    pub fuel_cost_per_delivery: f64,
    pub mean_wait_ticks: f64,
    pub effective_distance_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub requests: u64,
    pub passenger_requests: u64,
    pub goods_requests: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub accept_rate: AcceptRates,
    pub deliveries: u64,
    pub hop_transfers: u64,
    pub vehicle_hours: f64,
    /// NaN when `fuel_defined` is false.
    pub fuel_cost_per_delivery: f64,
    pub fuel_defined: bool,
    pub active_vehicle_ratio: f64,
    pub mean_wait_ticks: f64,
    /// NaN when `effective_distance_defined` is false.
    pub effective_distance_ratio: f64,
    pub effective_distance_defined: bool,
    pub loaded_distance: u64,
    pub empty_distance: u64,
    pub per_day: Vec<DayMetrics>,
}

#[derive(Default)]
struct Tally {
    created: HashMap<RequestId, (RequestKind, Tick)>,
    accepted: HashMap<RequestId, u64>,
    rejected: u64,
    deliveries: u64,
    hops: u64,
    served_distance: f64,
    active_sum: u64,
    fleet_ticks: u64,
    loaded: u64,
    empty: u64,
}

impl Tally {
    fn count(&self, kind: Option<RequestKind>) -> (u64, u64) {
        let pick = |k: &RequestKind| kind.is_none_or(|want| want == *k);
        let total = self.created.values().filter(|(k, _)| pick(k)).count() as u64;
        let accepted = self
            .accepted
            .keys()
            .filter(|id| self.created.get(id).is_some_and(|(k, _)| pick(k)))
            .count() as u64;
        (accepted, total)
    }

    fn rate(&self, kind: Option<RequestKind>) -> f64 {
        let (a, n) = self.count(kind);
        if n == 0 {
            0.0
        } else {
            a as f64 / n as f64
        }
    }
}

struct Header {
    fleet_size: usize,
    minutes_per_tick: f64,
    ticks_per_day: u64,
}

fn header(log: &EpisodeLog) -> Header {
    log.events
        .iter()
        .find_map(|e| match e.kind {
            EventKind::EpisodeStart {
                fleet_size,
                minutes_per_tick,
                ticks_per_day,
                ..
            } => Some(Header {
                fleet_size,
                minutes_per_tick,
                ticks_per_day,
            }),
            _ => None,
        })
        .unwrap_or(Header {
            fleet_size: 0,
            minutes_per_tick: 1.0,
            ticks_per_day: 1440,
        })
}

/// Accumulate events into per-window tallies. Requests are attributed to the
/// window in which they were created; everything else to the window in which
/// it happened.
fn tally(log: &EpisodeLog, window_of: impl Fn(Tick) -> u64) -> BTreeMap<u64, Tally> {
    let mut out: BTreeMap<u64, Tally> = BTreeMap::new();
    let mut created_in: HashMap<RequestId, u64> = HashMap::new();
    for e in &log.events {
        let w = window_of(e.tick);
        match &e.kind {
            EventKind::RequestCreated {
                request_id, kind, ..
            } => {
                created_in.insert(*request_id, w);
                out.entry(w)
                    .or_default()
                    .created
                    .insert(*request_id, (*kind, e.tick));
            }
            EventKind::PickedUp {
                request_id,
                root_id,
                wait_ticks,
                ..
            } if request_id == root_id => {
                if let Some(cw) = created_in.get(request_id) {
                    out.entry(*cw)
                        .or_default()
                        .accepted
                        .insert(*request_id, *wait_ticks);
                }
            }
            EventKind::Rejected { .. } => out.entry(w).or_default().rejected += 1,
            EventKind::Delivered { leg_distance, .. } => {
                let t = out.entry(w).or_default();
                t.deliveries += 1;
                t.served_distance += *leg_distance as f64;
            }
            EventKind::HopDropped { leg_distance, .. } => {
                let t = out.entry(w).or_default();
                t.hops += 1;
                t.served_distance += *leg_distance as f64;
            }
            EventKind::FleetTick {
                active,
                loaded_distance,
                empty_distance,
            } => {
                let t = out.entry(w).or_default();
                t.active_sum += *active as u64;
                t.fleet_ticks += 1;
                t.loaded += *loaded_distance as u64;
                t.empty += *empty_distance as u64;
            }
            _ => {}
        }
    }
    out
}

struct Derived {
    vehicle_hours: f64,
    fuel: Option<f64>,
    active_ratio: f64,
    mean_wait: f64,
    effective: Option<f64>,
}

fn derive(t: &Tally, h: &Header, opts: &MetricsOptions) -> Derived {
    let vehicle_hours = t.active_sum as f64 * h.minutes_per_tick / 60.0;
    let active_ratio = if t.fleet_ticks == 0 || h.fleet_size == 0 {
        0.0
    } else {
        t.active_sum as f64 / (t.fleet_ticks as f64 * h.fleet_size as f64)
    };
    let waits: Vec<u64> = t.accepted.values().copied().collect();
    let mean_wait = if waits.is_empty() {
        0.0
    } else {
        waits.iter().sum::<u64>() as f64 / waits.len() as f64
    };
    let driven = t.loaded
        + if opts.include_empty_distance {
            t.empty
        } else {
            0
        };
    Derived {
        vehicle_hours,
        fuel: fuel_cost(vehicle_hours, t.deliveries, opts),
        active_ratio,
        mean_wait,
        effective: effective_distance(&[t.served_distance], driven as f64),
    }
}

/// Fraction of original requests created in the log that were picked up.
pub fn accept_rate(log: &EpisodeLog, kind: Option<RequestKind>) -> f64 {
    tally(log, |_| 0).remove(&0).map_or(0.0, |t| t.rate(kind))
}

pub fn fuel_cost_per_delivery(log: &EpisodeLog, opts: &MetricsOptions) -> Option<f64> {
    let h = header(log);
    tally(log, |_| 0)
        .remove(&0)
        .and_then(|t| derive(&t, &h, opts).fuel)
}

pub fn active_vehicle_ratio(log: &EpisodeLog) -> f64 {
    let h = header(log);
    tally(log, |_| 0).remove(&0).map_or(0.0, |t| {
        derive(&t, &h, &MetricsOptions::default()).active_ratio
    })
}

/// Mean pickup wait of original requests; hop legs are excluded.
pub fn mean_wait(log: &EpisodeLog) -> f64 {
    let h = header(log);
    tally(log, |_| 0).remove(&0).map_or(0.0, |t| {
        derive(&t, &h, &MetricsOptions::default()).mean_wait
    })
}

pub fn effective_distance_ratio(log: &EpisodeLog, opts: &MetricsOptions) -> Option<f64> {
    let h = header(log);
    tally(log, |_| 0)
        .remove(&0)
        .and_then(|t| derive(&t, &h, opts).effective)
}

pub fn compute_metrics(log: &EpisodeLog, opts: &MetricsOptions) -> MetricsReport {
    let h = header(log);
    let all = tally(log, |_| 0).remove(&0).unwrap_or_default();
    let d = derive(&all, &h, opts);
    let (accepted, requests) = all.count(None);
    let per_day = tally(log, |t| t / h.ticks_per_day.max(1))
        .into_iter()
        .map(|(day, t)| {
            let dd = derive(&t, &h, opts);
            DayMetrics {
                day,
                requests: t.created.len() as u64,
                accept_rate: t.rate(None),
                active_vehicle_ratio: dd.active_ratio,
                fuel_cost_per_delivery: dd.fuel.unwrap_or(f64::NAN),
                mean_wait_ticks: dd.mean_wait,
                effective_distance_ratio: dd.effective.unwrap_or(f64::NAN),
            }
        })
        .collect();
    MetricsReport {
        requests,
        passenger_requests: all.count(Some(RequestKind::Passenger)).1,
        goods_requests: all.count(Some(RequestKind::Goods)).1,
        accepted,
        rejected: all.rejected,
        accept_rate: AcceptRates {
            overall: all.rate(None),
            passenger: all.rate(Some(RequestKind::Passenger)),
            goods: all.rate(Some(RequestKind::Goods)),
        },
        deliveries: all.deliveries,
        hop_transfers: all.hops,
        vehicle_hours: d.vehicle_hours,
        fuel_cost_per_delivery: d.fuel.unwrap_or(f64::NAN),
        fuel_defined: d.fuel.is_some(),
        active_vehicle_ratio: d.active_ratio,
        mean_wait_ticks: d.mean_wait,
        effective_distance_ratio: d.effective.unwrap_or(f64::NAN),
        effective_distance_defined: d.effective.is_some(),
        loaded_distance: all.loaded,
        empty_distance: all.empty,
        per_day,
    }
}

impl MetricsReport {
    /// The headline metrics as `(name, value)` pairs, in display order.
    pub fn headline(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("accept_rate", self.accept_rate.overall),
            ("accept_rate_passenger", self.accept_rate.passenger),
            ("accept_rate_goods", self.accept_rate.goods),
            ("fuel_cost_per_delivery", self.fuel_cost_per_delivery),
            ("active_vehicle_ratio", self.active_vehicle_ratio),
            ("mean_wait_ticks", self.mean_wait_ticks),
            ("effective_distance_ratio", self.effective_distance_ratio),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.headline() {
            let shown = if value.is_nan() {
                "n/a".to_string()
            } else {
                format!("{value:.4}")
            };
            let _ = writeln!(out, "{name:<28}{shown:>12}");
        }
        out
    }

    /// Per-day series as CSV with a header row.
    pub fn per_day_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.per_day {
            w.serialize(d)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
