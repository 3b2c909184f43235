//! Single-vehicle tour construction: nearest neighbour, best-improvement 2-opt and a
//! time-window repair pass.

use serde::{Deserialize, Serialize};

use super::allocate::AllocationLine;
use crate::domain::{OutletId, Point, TempClass, TimeWindow, VehicleId};
use crate::sim::Vehicle;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub outlet: OutletId,
    pub location: Point,
    pub window: TimeWindow,
    pub service_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub vehicle_id: VehicleId,
    pub temp_class: TempClass,
    pub stops: Vec<OutletId>,
    pub load: Vec<AllocationLine>,
    pub total_volume: f64,
    pub depart_minute: f64,
    pub eta: Vec<f64>,
    pub total_km: f64,
    pub duration_minutes: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl Route {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn point(dc: Point, stops: &[Stop], idx: Option<usize>) -> Point {
    idx.map(|i| stops[i].location).unwrap_or(dc)
}

/// Closed tour length DC -> stops in `order` -> DC.
pub fn tour_km(dc: Point, stops: &[Stop], order: &[usize]) -> f64 {
    let mut prev = dc;
    let mut km = 0.0;
    for &i in order {
        km += prev.distance(&stops[i].location);
        prev = stops[i].location;
    }
    km + prev.distance(&dc)
}

pub fn nearest_neighbor(dc: Point, stops: &[Stop]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..stops.len()).collect();
    let mut order = Vec::with_capacity(stops.len());
    let mut here = dc;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, here.distance(&stops[i].location)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 - EPS { cur } else { best });
        let i = left.remove(k);
        here = stops[i].location;
        order.push(i);
    }
    order
}

/// Best-improvement 2-opt on distance alone, scanning segments in a fixed order.
pub fn two_opt(dc: Point, stops: &[Stop], mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    if n < 2 {
        return order;
    }
    let d = |a: Option<usize>, b: Option<usize>| point(dc, stops, a).distance(&point(dc, stops, b));
    loop {
        let mut best = (0.0, 0, 0);
        for i in 0..n - 1 {
            let prev = if i == 0 { None } else { Some(order[i - 1]) };
            for j in i + 1..n {
                let next = if j + 1 == n { None } else { Some(order[j + 1]) };
                let delta = d(prev, Some(order[j])) + d(Some(order[i]), next) - d(prev, Some(order[i])) - d(Some(order[j]), next);
                if delta < best.0 {
                    best = (delta, i, j);
                }
            }
        }
        if best.0 < -EPS {
            order[best.1..=best.2].reverse();
        } else {
            return order;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Schedule {
    depart: f64,
    eta: Vec<f64>,
    duration: f64,
    /// Minutes past window closes plus minutes over the duration limit.
    lateness: f64,
    violations: Vec<String>,
}

fn schedule(dc: Point, stops: &[Stop], order: &[usize], speed: f64, max_duration: Option<f64>) -> Schedule {
    let travel = |a: Point, b: Point| a.distance(&b) / speed * 60.0;
    let depart = order
        .first()
        .map(|&i| (stops[i].window.open as f64 - travel(dc, stops[i].location)).max(0.0))
        .unwrap_or(0.0);
    let mut t = depart;
    let mut here = dc;
    let mut eta = Vec::with_capacity(order.len());
    let mut lateness = 0.0;
    let mut violations = Vec::new();
    for &i in order {
        let s = &stops[i];
        t += travel(here, s.location);
        t = t.max(s.window.open as f64);
        if t > s.window.close as f64 + EPS {
            lateness += t - s.window.close as f64;
            violations.push(format!("{} eta {:.1} after window close {}", s.outlet, t, s.window.close));
        }
        eta.push(t);
        t += s.service_time as f64;
        here = s.location;
    }
    t += travel(here, dc);
    let duration = t - depart;
    if let Some(max) = max_duration {
        if duration > max + EPS {
            lateness += duration - max;
            violations.push(format!("route duration {duration:.1} min exceeds {max} min limit"));
        }
    }
    Schedule {
        depart,
        eta,
        duration,
        lateness,
        violations,
    }
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 - EPS || ((a.0 - b.0).abs() <= EPS && a.1 < b.1 - EPS)
}

/// 2-opt over (lateness, km) lexicographically. From a window-feasible start this only
/// ever accepts window-feasible reversals.
fn two_opt_windows(dc: Point, stops: &[Stop], mut order: Vec<usize>, speed: f64, max_duration: Option<f64>) -> Vec<usize> {
    let n = order.len();
    let cost = |o: &[usize]| (schedule(dc, stops, o, speed, max_duration).lateness, tour_km(dc, stops, o));
    let mut current = cost(&order);
    loop {
        let mut best: Option<((f64, f64), usize, usize)> = None;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let mut cand = order.clone();
                cand[i..=j].reverse();
                let c = cost(&cand);
                if better(c, best.map(|b| b.0).unwrap_or(current)) {
                    best = Some((c, i, j));
                }
            }
        }
        match best {
            Some((c, i, j)) => {
                order[i..=j].reverse();
                current = c;
            }
            None => return order,
        }
    }
}

fn max_duration_for(vehicle: &Vehicle, max_chilled_minutes: u32) -> Option<f64> {
    (vehicle.temp_class == TempClass::Chilled).then_some(max_chilled_minutes as f64)
}

/// Builds a route that visits `stops` in exactly the given order.
pub fn route_for_order(dc: Point, stops: &[Stop], order: &[usize], vehicle: &Vehicle, max_chilled_minutes: u32) -> Route {
    let sch = schedule(dc, stops, order, vehicle.speed, max_duration_for(vehicle, max_chilled_minutes));
    Route {
        vehicle_id: vehicle.id.clone(),
        temp_class: vehicle.temp_class,
        stops: order.iter().map(|&i| stops[i].outlet.clone()).collect(),
        load: Vec::new(),
        total_volume: 0.0,
        depart_minute: sch.depart,
        eta: sch.eta,
        total_km: tour_km(dc, stops, order),
        duration_minutes: sch.duration,
        violations: sch.violations,
    }
}

/// Sequences one vehicle's stops.
///
/// 2-opt runs from the nearest-neighbour tour and from the input order; the shorter
/// result wins, so the route is never longer than visiting stops in input order. When
/// windows are violated, a repair pass starts from earliest-open order and keeps the
/// tour with the least lateness, then the least distance.
pub fn sequence_route(dc: Point, stops: &[Stop], vehicle: &Vehicle, max_chilled_minutes: u32) -> Route {
    let limit = max_duration_for(vehicle, max_chilled_minutes);
    let nn = two_opt(dc, stops, nearest_neighbor(dc, stops));
    let given = two_opt(dc, stops, (0..stops.len()).collect());
    let mut order = if tour_km(dc, stops, &given) < tour_km(dc, stops, &nn) - EPS { given } else { nn };

    let first = schedule(dc, stops, &order, vehicle.speed, limit);
    if first.lateness > EPS {
        let mut by_open: Vec<usize> = (0..stops.len()).collect();
        by_open.sort_by(|&a, &b| stops[a].window.open.cmp(&stops[b].window.open).then_with(|| stops[a].outlet.cmp(&stops[b].outlet)));
        let repaired = two_opt_windows(dc, stops, by_open, vehicle.speed, limit);
        let rs = schedule(dc, stops, &repaired, vehicle.speed, limit);
        if better((rs.lateness, tour_km(dc, stops, &repaired)), (first.lateness, tour_km(dc, stops, &order))) {
            order = repaired;
        }
    }
    route_for_order(dc, stops, &order, vehicle, max_chilled_minutes)
}

/// Advisory merges: same-class route pairs whose combined load fits the larger vehicle
/// and whose merged tour is shorter and still window-feasible.
pub fn consolidation_scan(routes: &[Route], fleet: &[Vehicle], dc: Point, stop_of: &dyn Fn(&OutletId) -> Option<Stop>, max_chilled_minutes: u32) -> Vec<String> {
    let mut recs = Vec::new();
    let vehicle = |id: &VehicleId| fleet.iter().find(|v| &v.id == id);
    for (i, a) in routes.iter().enumerate() {
        for b in &routes[i + 1..] {
            if a.temp_class != b.temp_class {
                continue;
            }
            let (Some(va), Some(vb)) = (vehicle(&a.vehicle_id), vehicle(&b.vehicle_id)) else {
                continue;
            };
            let host = if vb.capacity > va.capacity { vb } else { va };
            let volume = a.total_volume + b.total_volume;
            if volume > host.capacity + EPS {
                continue;
            }
            let Some(stops): Option<Vec<Stop>> = a.stops.iter().chain(&b.stops).map(stop_of).collect() else {
                continue;
            };
            let merged = sequence_route(dc, &stops, host, max_chilled_minutes);
            let separate = a.total_km + b.total_km;
            if merged.is_feasible() && merged.total_km < separate - EPS {
                recs.push(format!(
                    "merge routes {} and {} onto {}: {:.1} km instead of {:.1} km (saves {:.1} km), load {:.0} of {:.0} L",
                    a.vehicle_id,
                    b.vehicle_id,
                    host.id,
                    merged.total_km,
                    separate,
                    separate - merged.total_km,
                    volume,
                    host.capacity
                ));
            }
        }
    }
    recs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stop(name: &str, x: f64, y: f64) -> Stop {
        Stop {
            outlet: OutletId::new(name),
            location: Point::new(x, y),
            window: TimeWindow::ALL_DAY,
            service_time: 0,
        }
    }

    fn truck(class: TempClass) -> Vehicle {
        Vehicle {
            id: VehicleId::new("V1"),
            capacity: 100.0,
            temp_class: class,
            speed: 60.0,
            available: true,
        }
    }

    fn brute_force(dc: Point, stops: &[Stop]) -> f64 {
        fn go(dc: Point, stops: &[Stop], order: &mut Vec<usize>, used: &mut Vec<bool>, best: &mut f64) {
            if order.len() == stops.len() {
                *best = best.min(tour_km(dc, stops, order));
                return;
            }
            for i in 0..stops.len() {
                if !used[i] {
                    used[i] = true;
                    order.push(i);
                    go(dc, stops, order, used, best);
                    order.pop();
                    used[i] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(dc, stops, &mut Vec::new(), &mut vec![false; stops.len()], &mut best);
        best
    }

    #[test]
    fn single_stop_round_trip() {
        let r = sequence_route(Point::new(0.0, 0.0), &[stop("O1", 3.0, 4.0)], &truck(TempClass::Ambient), 240);
        assert!((r.total_km - 10.0).abs() < 1e-12);
        assert_eq!(r.eta.len(), 1);
    }

    #[test]
    fn collinear_stops_match_nearest_neighbour() {
        let dc = Point::new(0.0, 0.0);
        let stops = [stop("O1", 1.0, 0.0), stop("O2", 2.0, 0.0), stop("O3", 3.0, 0.0)];
        let nn = tour_km(dc, &stops, &nearest_neighbor(dc, &stops));
        let r = sequence_route(dc, &stops, &truck(TempClass::Ambient), 240);
        assert!((r.total_km - nn).abs() < 1e-9);
    }

    #[test]
    fn windows_force_reordering() {
        let dc = Point::new(0.0, 0.0);
        let mut far = stop("O1", 10.0, 0.0);
        far.window = TimeWindow { open: 360, close: 400 };
        let mut near = stop("O2", 1.0, 0.0);
        near.window = TimeWindow { open: 600, close: 700 };
        let r = sequence_route(dc, &[far, near], &truck(TempClass::Ambient), 240);
        assert!(r.is_feasible(), "{:?}", r.violations);
        assert_eq!(r.stops[0].as_str(), "O1");
        assert!(r.eta[0] >= 360.0 && r.eta[0] <= 400.0);
        assert!(r.eta[1] >= 600.0);
    }

    #[test]
    fn chilled_duration_limit_is_reported() {
        let dc = Point::new(0.0, 0.0);
        // 150 km out and back at 60 km/h is 300 minutes
        let r = sequence_route(dc, &[stop("O1", 150.0, 0.0)], &truck(TempClass::Chilled), 240);
        assert!(!r.is_feasible());
        let r = sequence_route(dc, &[stop("O1", 150.0, 0.0)], &truck(TempClass::Ambient), 240);
        assert!(r.is_feasible());
    }

    fn route_with(stops: &[Stop], vol: f64, vehicle: &str) -> Route {
        let mut r = sequence_route(Point::new(0.0, 0.0), stops, &truck(TempClass::Ambient), 240);
        r.vehicle_id = VehicleId::new(vehicle);
        r.total_volume = vol;
        r
    }

    #[test]
    fn consolidation_recommends_adjacent_half_loads() {
        let a = [stop("O1", 5.0, 5.0)];
        let b = [stop("O2", 5.5, 5.0)];
        let fleet = [
            Vehicle { id: VehicleId::new("V1"), ..truck(TempClass::Ambient) },
            Vehicle { id: VehicleId::new("V2"), ..truck(TempClass::Ambient) },
        ];
        let all: Vec<Stop> = a.iter().chain(&b).cloned().collect();
        let lookup = |o: &OutletId| all.iter().find(|s| &s.outlet == o).cloned();
        let routes = [route_with(&a, 40.0, "V1"), route_with(&b, 40.0, "V2")];
        let recs = consolidation_scan(&routes, &fleet, Point::new(0.0, 0.0), &lookup, 240);
        assert_eq!(recs.len(), 1);
        // verified by sequencing the union directly
        let merged = sequence_route(Point::new(0.0, 0.0), &all, &fleet[0], 240);
        assert!(merged.total_km < routes[0].total_km + routes[1].total_km);
        assert!(recs[0].contains(&format!("{:.1} km", merged.total_km)));

        let heavy = [route_with(&a, 70.0, "V1"), route_with(&b, 70.0, "V2")];
        assert!(consolidation_scan(&heavy, &fleet, Point::new(0.0, 0.0), &lookup, 240).is_empty());
        assert!(consolidation_scan(&routes[..1], &fleet, Point::new(0.0, 0.0), &lookup, 240).is_empty());
    }

    #[test]
    fn seeded_small_tours_within_five_percent_of_optimum() {
        use rand::{Rng, SeedableRng};
        let dc = Point::new(0.0, 0.0);
        let mut worst: f64 = 1.0;
        for seed in 0..50u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=7);
            let stops: Vec<Stop> = (0..n)
                .map(|i| stop(&format!("O{i}"), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
                .collect();
            let r = sequence_route(dc, &stops, &truck(TempClass::Ambient), 240);
            worst = worst.max(r.total_km / brute_force(dc, &stops));
        }
        assert!(worst <= 1.05, "worst ratio {worst}");
    }

    proptest! {
        #[test]
        fn never_longer_than_nn_or_input_order(pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..15)) {
            let dc = Point::new(0.0, 0.0);
            let stops: Vec<Stop> = pts.iter().enumerate().map(|(i, (x, y))| stop(&format!("O{i:02}"), *x, *y)).collect();
            let r = sequence_route(dc, &stops, &truck(TempClass::Ambient), 240);
            let ids: Vec<usize> = (0..stops.len()).collect();
            prop_assert!(r.total_km <= tour_km(dc, &stops, &nearest_neighbor(dc, &stops)) + 1e-9);
            prop_assert!(r.total_km <= tour_km(dc, &stops, &ids) + 1e-9);
            let far = stops.iter().map(|s| dc.distance(&s.location)).fold(0.0, f64::max);
            prop_assert!(r.total_km >= 2.0 * far - 1e-9);
            for w in r.eta.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }
}
