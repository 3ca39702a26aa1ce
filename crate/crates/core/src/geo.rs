//! Zone lattice, lattice routing and hop-zone designation.
//!
//! The city is a `height x width` lattice of square zones. Distances are
//! Manhattan distances in zone units; meters are zone units times
//! [`GridWorld::zone_edge_m`]. Travel times come from any [`EtaModel`]; the
//! grid itself provides a constant-speed implementation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoError {
    #[error("zone ({row}, {col}) is outside the {height}x{width} grid")]
    InvalidZone {
        row: u32,
        col: u32,
        height: u32,
        width: u32,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A lattice cell, addressed by row and column.
///
/// Ordering is lexicographic on `(row, col)`, which is the tie-break rule used
/// everywhere a nearest zone is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZoneId {
    pub row: u32,
    pub col: u32,
}

impl ZoneId {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    /// Manhattan distance, without bounds checking.
    pub fn manhattan(self, other: ZoneId) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Travel time and distance between two zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TravelEstimate {
    pub ticks: u32,
    pub distance: u32,
}

/// Anything that can estimate zone-to-zone travel.
pub trait EtaModel {
    fn eta(&self, from: ZoneId, to: ZoneId) -> Result<TravelEstimate, GeoError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    width: u32,
    height: u32,
    zone_edge_m: f64,
    vehicle_speed: u32,
    hop_zones: BTreeSet<ZoneId>,
}

impl GridWorld {
    pub fn new(
        width: u32,
        height: u32,
        zone_edge_m: f64,
        vehicle_speed: u32,
    ) -> Result<Self, GeoError> {
        if width == 0 || height == 0 {
            return Err(GeoError::InvalidGrid(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        if vehicle_speed == 0 {
            return Err(GeoError::InvalidGrid(
                "vehicle speed must be positive".into(),
            ));
        }
        if !(zone_edge_m.is_finite() && zone_edge_m > 0.0) {
            return Err(GeoError::InvalidGrid(format!(
                "zone edge must be a positive length, got {zone_edge_m}"
            )));
        }
        Ok(Self {
            width,
            height,
            zone_edge_m,
            vehicle_speed,
            hop_zones: BTreeSet::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn zone_edge_m(&self) -> f64 {
        self.zone_edge_m
    }

    pub fn vehicle_speed(&self) -> u32 {
        self.vehicle_speed
    }

    /// Number of zones, `M = W * H`.
    pub fn zone_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn hop_zones(&self) -> &BTreeSet<ZoneId> {
        &self.hop_zones
    }

    pub fn set_hop_zones(&mut self, zones: BTreeSet<ZoneId>) -> Result<(), GeoError> {
        for z in &zones {
            self.check(*z)?;
        }
        self.hop_zones = zones;
        Ok(())
    }

    pub fn is_hop_zone(&self, zone: ZoneId) -> bool {
        self.hop_zones.contains(&zone)
    }

    pub fn contains(&self, zone: ZoneId) -> bool {
        zone.row < self.height && zone.col < self.width
    }

    pub fn check(&self, zone: ZoneId) -> Result<ZoneId, GeoError> {
        if self.contains(zone) {
            Ok(zone)
        } else {
            Err(GeoError::InvalidZone {
                row: zone.row,
                col: zone.col,
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Row-major index of a zone. Panics in debug builds if out of range.
    pub fn index(&self, zone: ZoneId) -> usize {
        debug_assert!(self.contains(zone), "zone {zone} out of grid");
        zone.row as usize * self.width as usize + zone.col as usize
    }

    pub fn zone_at(&self, index: usize) -> ZoneId {
        let w = self.width as usize;
        ZoneId::new((index / w) as u32, (index % w) as u32)
    }

    /// All zones in row-major order.
    pub fn zones(&self) -> impl Iterator<Item = ZoneId> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| ZoneId::new(r, c)))
    }

    /// Clamp a signed position onto the grid.
    pub fn clamp(&self, row: i64, col: i64) -> ZoneId {
        ZoneId::new(
            row.clamp(0, self.height as i64 - 1) as u32,
            col.clamp(0, self.width as i64 - 1) as u32,
        )
    }

    pub fn distance(&self, a: ZoneId, b: ZoneId) -> Result<u32, GeoError> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.manhattan(b))
    }

    pub fn distance_m(&self, a: ZoneId, b: ZoneId) -> Result<f64, GeoError> {
        Ok(self.distance(a, b)? as f64 * self.zone_edge_m)
    }

    /// Ticks needed to cover `distance` zone units at the configured speed.
    pub fn ticks_for(&self, distance: u32) -> u32 {
        distance.div_ceil(self.vehicle_speed)
    }

    /// Convert a length in meters to whole zone units (floor).
    pub fn meters_to_zones(&self, meters: f64) -> u32 {
        (meters / self.zone_edge_m).floor().max(0.0) as u32
    }

    /// Waypoints of the lattice shortest path from `from` to `to`, excluding
    /// `from` itself. Rows are traversed first, then columns.
    pub fn route(&self, from: ZoneId, to: ZoneId) -> Result<Vec<ZoneId>, GeoError> {
        self.check(from)?;
        self.check(to)?;
        let mut path = Vec::with_capacity(from.manhattan(to) as usize);
        let mut cur = from;
        while cur.row != to.row {
            cur.row = if cur.row < to.row {
                cur.row + 1
            } else {
                cur.row - 1
            };
            path.push(cur);
        }
        while cur.col != to.col {
            cur.col = if cur.col < to.col {
                cur.col + 1
            } else {
                cur.col - 1
            };
            path.push(cur);
        }
        Ok(path)
    }

    /// Designate hop-zones on the stride lattice.
    ///
    /// A zone qualifies when `row ≡ offset (mod stride)`, `col ≡ offset (mod
    /// stride)` and its pickup count is at least `min_pickups`. The result
    /// replaces the grid's hop-zone set and is also returned.
    pub fn designate_hop_zones(
        &mut self,
        stride: u32,
        offset: u32,
        pickup_counts: &HashMap<ZoneId, u64>,
        min_pickups: u64,
    ) -> Result<BTreeSet<ZoneId>, GeoError> {
        if stride == 0 {
            return Err(GeoError::InvalidGrid("hop-zone stride must be >= 1".into()));
        }
        let offset = offset % stride;
        let selected: BTreeSet<ZoneId> = self
            .zones()
            .filter(|z| z.row % stride == offset && z.col % stride == offset)
            .filter(|z| pickup_counts.get(z).copied().unwrap_or(0) >= min_pickups)
            .collect();
        self.hop_zones = selected.clone();
        Ok(selected)
    }

    /// Candidate count of the stride lattice before the pickup filter.
    pub fn stride_candidates(&self, stride: u32, offset: u32) -> usize {
        let offset = offset % stride.max(1);
        let along = |n: u32| {
            if offset >= n {
                0
            } else {
                (n - offset).div_ceil(stride) as usize
            }
        };
        along(self.height) * along(self.width)
    }

    /// Hop-zone nearest to `from`, skipping `exclude`. Ties go to the
    /// lexicographically smallest `(row, col)`.
    pub fn nearest_hop_zone(&self, from: ZoneId, exclude: &BTreeSet<ZoneId>) -> Option<ZoneId> {
        // BTreeSet iterates in (row, col) order, so min_by_key keeps the first tie.
        self.hop_zones
            .iter()
            .filter(|h| !exclude.contains(h))
            .min_by_key(|h| from.manhattan(**h))
            .copied()
    }
}

impl EtaModel for GridWorld {
    fn eta(&self, from: ZoneId, to: ZoneId) -> Result<TravelEstimate, GeoError> {
        let distance = self.distance(from, to)?;
        Ok(TravelEstimate {
            ticks: self.ticks_for(distance),
            distance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(r: u32, c: u32) -> ZoneId {
        ZoneId::new(r, c)
    }

    fn grid(w: u32, h: u32, speed: u32) -> GridWorld {
        GridWorld::new(w, h, 150.0, speed).unwrap()
    }

    #[test]
    fn distance_examples() {
        let g = grid(10, 10, 1);
        assert_eq!(g.distance(z(0, 0), z(0, 0)).unwrap(), 0);
        assert_eq!(g.distance(z(0, 0), z(3, 4)).unwrap(), 7);
        assert_eq!(g.distance(z(2, 5), z(5, 2)).unwrap(), 6);
    }

    #[test]
    fn out_of_range_zone_is_rejected() {
        let g = grid(4, 3, 1);
        assert!(matches!(
            g.distance(z(3, 0), z(0, 0)),
            Err(GeoError::InvalidZone { row: 3, .. })
        ));
        assert!(g.eta(z(0, 0), z(0, 4)).is_err());
    }

    #[test]
    fn eta_examples() {
        let g2 = grid(10, 10, 2);
        assert_eq!(
            g2.eta(z(0, 0), z(0, 4)).unwrap(),
            TravelEstimate {
                ticks: 2,
                distance: 4
            }
        );
        assert_eq!(g2.eta(z(4, 4), z(4, 4)).unwrap().ticks, 0);
        let g3 = grid(10, 10, 3);
        assert_eq!(g3.eta(z(0, 0), z(0, 7)).unwrap().ticks, 3);
    }

    #[test]
    fn bad_grids() {
        assert!(GridWorld::new(0, 3, 150.0, 1).is_err());
        assert!(GridWorld::new(3, 3, 150.0, 0).is_err());
        assert!(GridWorld::new(3, 3, -1.0, 1).is_err());
    }

    #[test]
    fn route_is_row_first_and_shortest() {
        let g = grid(10, 10, 1);
        let r = g.route(z(1, 1), z(3, 0)).unwrap();
        assert_eq!(r, vec![z(2, 1), z(3, 1), z(3, 0)]);
        assert!(g.route(z(4, 4), z(4, 4)).unwrap().is_empty());
    }

    fn all_counts(g: &GridWorld, n: u64) -> HashMap<ZoneId, u64> {
        g.zones().map(|z| (z, n)).collect()
    }

    #[test]
    fn hop_zone_lattice_9x9() {
        let mut g = grid(9, 9, 1);
        let counts = all_counts(&g, 20);
        let hz = g.designate_hop_zones(3, 0, &counts, 10).unwrap();
        let expected: BTreeSet<_> = [0, 3, 6]
            .iter()
            .flat_map(|&r| [0, 3, 6].iter().map(move |&c| z(r, c)))
            .collect();
        assert_eq!(hz, expected);
        assert_eq!(g.hop_zones(), &expected);
    }

    #[test]
    fn hop_zone_threshold_removes_all() {
        let mut g = grid(9, 9, 1);
        let counts = all_counts(&g, 5);
        assert!(g.designate_hop_zones(3, 0, &counts, 6).unwrap().is_empty());
    }

    #[test]
    fn hop_zone_full_scale_candidate_count() {
        let mut g = GridWorld::new(219, 212, 150.0, 1).unwrap();
        let counts = all_counts(&g, 10);
        let hz = g.designate_hop_zones(3, 0, &counts, 10).unwrap();
        let expected = 212usize.div_ceil(3) * 219usize.div_ceil(3);
        assert_eq!(hz.len(), expected);
        assert_eq!(g.stride_candidates(3, 0), expected);
    }

    #[test]
    fn stride_offset_shifts_lattice() {
        let mut g = grid(9, 9, 1);
        let counts = all_counts(&g, 1);
        let hz = g.designate_hop_zones(3, 1, &counts, 0).unwrap();
        assert!(hz.iter().all(|h| h.row % 3 == 1 && h.col % 3 == 1));
        assert_eq!(hz.len(), 9);
        assert_eq!(g.stride_candidates(3, 1), 9);
    }

    #[test]
    fn nearest_hop_zone_examples() {
        let mut g = grid(10, 10, 1);
        g.set_hop_zones([z(0, 3), z(3, 0)].into_iter().collect())
            .unwrap();
        assert_eq!(g.nearest_hop_zone(z(0, 0), &BTreeSet::new()), Some(z(0, 3)));

        g.set_hop_zones(BTreeSet::new()).unwrap();
        assert_eq!(g.nearest_hop_zone(z(0, 0), &BTreeSet::new()), None);

        g.set_hop_zones([z(5, 5)].into_iter().collect()).unwrap();
        let ex: BTreeSet<_> = [z(5, 5)].into_iter().collect();
        assert_eq!(g.nearest_hop_zone(z(0, 0), &ex), None);
    }

    fn zone_in(n: u32) -> impl Strategy<Value = ZoneId> {
        (0..n, 0..n).prop_map(|(r, c)| ZoneId::new(r, c))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in zone_in(12), b in zone_in(12), c in zone_in(12)) {
            let g = grid(12, 12, 1);
            let ab = g.distance(a, b).unwrap();
            prop_assert_eq!(ab, g.distance(b, a).unwrap());
            prop_assert!(g.distance(a, c).unwrap() <= ab + g.distance(b, c).unwrap());
            prop_assert_eq!(ab == 0, a == b);
        }

        #[test]
        fn eta_monotone_in_distance(a in zone_in(12), b in zone_in(12), c in zone_in(12), speed in 1u32..5) {
            let g = grid(12, 12, speed);
            let eb = g.eta(a, b).unwrap();
            let ec = g.eta(a, c).unwrap();
            if eb.distance <= ec.distance {
                prop_assert!(eb.ticks <= ec.ticks);
            }
            prop_assert_eq!(eb.ticks, eb.distance.div_ceil(speed));
        }

        #[test]
        fn route_length_matches_distance(a in zone_in(12), b in zone_in(12)) {
            let g = grid(12, 12, 1);
            let r = g.route(a, b).unwrap();
            prop_assert_eq!(r.len() as u32, g.distance(a, b).unwrap());
            let mut prev = a;
            for w in &r {
                prop_assert_eq!(prev.manhattan(*w), 1);
                prev = *w;
            }
            prop_assert_eq!(prev, b);
        }

        #[test]
        fn designation_respects_lattice_and_counts(
            stride in 1u32..5,
            counts in proptest::collection::vec(0u64..20, 100),
            min in 0u64..20,
        ) {
            let mut g = grid(10, 10, 1);
            let map: HashMap<ZoneId, u64> =
                g.zones().zip(counts.iter().copied()).collect();
            let hz = g.designate_hop_zones(stride, 0, &map, min).unwrap();
            for zone in g.zones() {
                let on_lattice = zone.row % stride == 0 && zone.col % stride == 0;
                prop_assert_eq!(hz.contains(&zone), on_lattice && map[&zone] >= min);
            }
        }

        #[test]
        fn nearest_hop_zone_is_nearest(
            hops in proptest::collection::btree_set(zone_in(10), 0..8),
            ex in proptest::collection::btree_set(zone_in(10), 0..3),
            from in zone_in(10),
        ) {
            let mut g = grid(10, 10, 1);
            g.set_hop_zones(hops.clone()).unwrap();
            let got = g.nearest_hop_zone(from, &ex);
            let allowed: Vec<_> = hops.difference(&ex).copied().collect();
            match got {
                None => prop_assert!(allowed.is_empty()),
                Some(h) => {
                    prop_assert!(allowed.contains(&h));
                    for other in &allowed {
                        let (dh, doth) = (from.manhattan(h), from.manhattan(*other));
                        prop_assert!(dh < doth || (dh == doth && h <= *other));
                    }
                }
            }
        }
    }
}
