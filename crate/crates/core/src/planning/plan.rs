//! Plan assembly: allocation, vehicle grouping, sequencing and contingency notes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::allocate::{allocate, AllocationLine};
use super::fleet::{assign_with, GroupingRule, OutletLoad};
use super::routing::{consolidation_scan, route_for_order, sequence_route, Route, Stop};
use crate::consortium::{Consortium, ReasonerTask, ReasoningTrace, TaskKind, TaskValue};
use crate::domain::{Day, Outlet, OutletId, PlanId, Point, PolicyParams, Sku, SkuId, TempClass, VehicleId};
use crate::sim::Vehicle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanState {
    Draft,
    PendingApproval,
    Approved,
    Rejected,
    Dispatched,
}

impl PlanState {
    pub fn can_transition(self, to: PlanState) -> bool {
        use PlanState::*;
        matches!(
            (self, to),
            (Draft, PendingApproval) | (PendingApproval, Approved) | (PendingApproval, Rejected) | (Approved, Dispatched)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleDelivery {
    pub outlet: OutletId,
    pub temp_class: TempClass,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRationale {
    pub summary: String,
    pub weights_trace: ReasoningTrace,
    pub grouping: GroupingRule,
    pub candidate_km: Vec<(GroupingRule, f64)>,
    /// Distance of the manual reference plan: outlets in id order, no sequencing.
    pub baseline_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplenishmentPlan {
    pub id: PlanId,
    pub day: Day,
    pub allocations: Vec<AllocationLine>,
    pub routes: Vec<Route>,
    pub unallocated: BTreeMap<SkuId, u64>,
    pub state: PlanState,
    pub rationale: PlanRationale,
    pub contingency_notes: Vec<String>,
    pub consolidation_recs: Vec<String>,
    #[serde(default)]
    pub infeasible: Vec<InfeasibleDelivery>,
}

impl ReplenishmentPlan {
    pub fn total_km(&self) -> f64 {
        self.routes.iter().map(|r| r.total_km).sum()
    }

    pub fn allocated_units(&self) -> u64 {
        self.allocations.iter().map(|a| a.qty).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutletNeed {
    pub outlet: OutletId,
    pub sku: SkuId,
    pub need: u64,
    /// On hand plus inbound before this plan.
    pub position: i64,
    /// Forecast demand until the next plan's deliveries land.
    pub demand_to_next_cycle: f64,
}

#[derive(Debug, Clone)]
pub struct PlanInput<'a> {
    pub id: PlanId,
    pub day: Day,
    pub available: BTreeMap<SkuId, u64>,
    pub needs: Vec<OutletNeed>,
    pub outlets: &'a [Outlet],
    pub skus: &'a [Sku],
    pub fleet: &'a [Vehicle],
    pub dc: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingResult {
    pub routes: Vec<Route>,
    pub infeasible: Vec<InfeasibleDelivery>,
    pub rule: GroupingRule,
    pub candidate_km: Vec<(GroupingRule, f64)>,
}

impl RoutingResult {
    pub fn total_km(&self) -> f64 {
        self.routes.iter().map(|r| r.total_km).sum()
    }
}

pub fn stops_for(outlets: &[Outlet]) -> BTreeMap<OutletId, Stop> {
    outlets
        .iter()
        .map(|o| {
            (
                o.id.clone(),
                Stop {
                    outlet: o.id.clone(),
                    location: o.location,
                    window: o.delivery_window,
                    service_time: o.service_time,
                },
            )
        })
        .collect()
}

struct RouteCtx<'a> {
    fleet: &'a [Vehicle],
    dc: Point,
    stops: &'a BTreeMap<OutletId, Stop>,
    volume: BTreeMap<(OutletId, TempClass), f64>,
    max_chilled: u32,
}

impl RouteCtx<'_> {
    fn vol(&self, outlets: &[OutletId], class: TempClass) -> f64 {
        outlets.iter().map(|o| self.volume.get(&(o.clone(), class)).copied().unwrap_or(0.0)).sum()
    }

    fn sequence(&self, vehicle: &Vehicle, outlets: &[OutletId]) -> Route {
        let stops: Vec<Stop> = outlets.iter().map(|o| self.stops[o].clone()).collect();
        let mut r = sequence_route(self.dc, &stops, vehicle, self.max_chilled);
        r.total_volume = self.vol(outlets, vehicle.temp_class);
        r
    }

    /// Sequences each group; infeasible groups are split onto spare vehicles, and stops
    /// that still cannot be served are dropped and reported.
    fn route_groups(&self, groups: Vec<(VehicleId, Vec<OutletId>)>) -> (Vec<Route>, Vec<InfeasibleDelivery>) {
        let vehicle = |id: &VehicleId| self.fleet.iter().find(|v| &v.id == id).expect("group vehicle in fleet");
        let mut used: BTreeSet<VehicleId> = groups.iter().map(|g| g.0.clone()).collect();
        let mut queue: VecDeque<(VehicleId, Vec<OutletId>)> = groups.into();
        let mut routes = Vec::new();
        let mut dropped = Vec::new();
        while let Some((vid, outlets)) = queue.pop_front() {
            if outlets.is_empty() {
                continue;
            }
            let v = vehicle(&vid);
            let route = self.sequence(v, &outlets);
            if route.is_feasible() {
                routes.push(route);
                continue;
            }
            if outlets.len() == 1 {
                dropped.push(InfeasibleDelivery {
                    outlet: outlets[0].clone(),
                    temp_class: v.temp_class,
                    reason: route.violations.join("; "),
                });
                continue;
            }
            let half = route.stops.len() / 2;
            let (keep, moved) = route.stops.split_at(half.max(1));
            let moved_vol = self.vol(moved, v.temp_class);
            let spare = self
                .fleet
                .iter()
                .find(|s| s.available && s.temp_class == v.temp_class && !used.contains(&s.id) && s.capacity + 1e-9 >= moved_vol);
            if let Some(spare) = spare {
                used.insert(spare.id.clone());
                queue.push_front((spare.id.clone(), moved.to_vec()));
                queue.push_front((vid, keep.to_vec()));
                continue;
            }
            // no spare vehicle: drop the worst stop and retry
            let worst = route
                .stops
                .iter()
                .zip(&route.eta)
                .map(|(o, eta)| (o, eta - self.stops[o].window.close as f64))
                .filter(|(_, late)| *late > 1e-9)
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(o, _)| o.clone())
                .unwrap_or_else(|| {
                    route
                        .stops
                        .iter()
                        .max_by(|a, b| {
                            let da = self.dc.distance(&self.stops[*a].location);
                            let db = self.dc.distance(&self.stops[*b].location);
                            da.total_cmp(&db).then_with(|| b.cmp(a))
                        })
                        .expect("non-empty route")
                        .clone()
                });
            dropped.push(InfeasibleDelivery {
                outlet: worst.clone(),
                temp_class: v.temp_class,
                reason: format!("dropped from {}: {}", vid, route.violations.join("; ")),
            });
            queue.push_front((vid, outlets.into_iter().filter(|o| o != &worst).collect()));
        }
        (routes, dropped)
    }
}

fn volumes(loads: &[OutletLoad]) -> BTreeMap<(OutletId, TempClass), f64> {
    loads.iter().map(|l| ((l.outlet.clone(), l.temp_class), l.volume)).collect()
}

/// Tries each grouping rule, routes every group, and keeps the plan with the fewest
/// unserved outlets, then the shortest total distance.
pub fn route_plan(loads: &[OutletLoad], fleet: &[Vehicle], dc: Point, stops: &BTreeMap<OutletId, Stop>, max_chilled_minutes: u32) -> RoutingResult {
    let ctx = RouteCtx {
        fleet,
        dc,
        stops,
        volume: volumes(loads),
        max_chilled: max_chilled_minutes,
    };
    let locate = |o: &OutletId| stops.get(o).map(|s| s.location).unwrap_or(dc);
    let mut best: Option<RoutingResult> = None;
    let mut candidate_km = Vec::new();
    for rule in [GroupingRule::Ffd, GroupingRule::Sweep, GroupingRule::IdOrder] {
        let assignment = assign_with(rule, loads, fleet, dc, &locate);
        let groups = assignment.groups.iter().map(|g| (g.vehicle_id.clone(), g.outlets.clone())).collect();
        let (mut routes, mut infeasible) = ctx.route_groups(groups);
        for l in &assignment.infeasible {
            infeasible.push(InfeasibleDelivery {
                outlet: l.outlet.clone(),
                temp_class: l.temp_class,
                reason: format!("no {} vehicle with {:.0} L free", l.temp_class, l.volume),
            });
        }
        routes.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id));
        infeasible.sort_by(|a, b| (&a.outlet, a.temp_class).cmp(&(&b.outlet, b.temp_class)));
        let result = RoutingResult {
            routes,
            infeasible,
            rule,
            candidate_km: Vec::new(),
        };
        candidate_km.push((rule, result.total_km()));
        let wins = match &best {
            None => true,
            Some(b) => {
                result.infeasible.len() < b.infeasible.len()
                    || (result.infeasible.len() == b.infeasible.len() && result.total_km() < b.total_km() - 1e-9)
            }
        };
        if wins {
            best = Some(result);
        }
    }
    let mut best = best.expect("at least one grouping rule");
    best.candidate_km = candidate_km;
    best
}

/// Manual reference: vehicles filled with outlets in ascending id order, each vehicle
/// visiting its outlets in id order.
pub fn baseline_routes(loads: &[OutletLoad], fleet: &[Vehicle], dc: Point, stops: &BTreeMap<OutletId, Stop>, max_chilled_minutes: u32) -> Vec<Route> {
    let assignment = assign_with(GroupingRule::IdOrder, loads, fleet, dc, &|_| dc);
    let vol = volumes(loads);
    assignment
        .groups
        .iter()
        .map(|g| {
            let vehicle = fleet.iter().find(|v| v.id == g.vehicle_id).expect("vehicle in fleet");
            let s: Vec<Stop> = g.outlets.iter().map(|o| stops[o].clone()).collect();
            let order: Vec<usize> = (0..s.len()).collect();
            let mut r = route_for_order(dc, &s, &order, vehicle, max_chilled_minutes);
            r.total_volume = g.outlets.iter().map(|o| vol.get(&(o.clone(), g.temp_class)).copied().unwrap_or(0.0)).sum();
            r
        })
        .collect()
}

fn outlet_loads(lines: &[AllocationLine], skus: &[Sku]) -> Vec<OutletLoad> {
    let mut acc: BTreeMap<(OutletId, TempClass), f64> = BTreeMap::new();
    for l in lines {
        if let Some(sku) = skus.iter().find(|s| s.id == l.sku) {
            *acc.entry((l.outlet.clone(), sku.temp_class)).or_default() += l.qty as f64 * sku.unit_volume;
        }
    }
    acc.into_iter()
        .map(|((outlet, temp_class), volume)| OutletLoad {
            outlet,
            temp_class,
            volume,
        })
        .collect()
}

/// Builds a replenishment plan from DC stock and outlet needs. The plan is returned in
/// PendingApproval; nothing moves until it is approved and dispatched.
pub fn plan(input: &PlanInput<'_>, policy: &PolicyParams, consortium: &Consortium) -> ReplenishmentPlan {
    let sku_class = |id: &SkuId| input.skus.iter().find(|s| &s.id == id).map(|s| s.temp_class);

    // allocation weights are a consortium decision; the baseline is outlet priority
    let weighted: Vec<&Outlet> = {
        let with_need: BTreeSet<&OutletId> = input.needs.iter().filter(|n| n.need > 0).map(|n| &n.outlet).collect();
        input.outlets.iter().filter(|o| with_need.contains(&o.id)).collect()
    };
    let base_weights: Vec<f64> = weighted.iter().map(|o| o.priority_weight).collect();
    let task = ReasonerTask {
        kind: TaskKind::AllocationWeights,
        context: serde_json::json!({
            "plan": input.id,
            "outlets": weighted.iter().map(|o| &o.id).collect::<Vec<_>>(),
        }),
        baseline_hint: TaskValue::Weights(base_weights.clone()),
    };
    let (wv, weights_trace) = consortium.decide_or_baseline(&task);
    let synthesized = wv.as_weights().filter(|w| w.len() == base_weights.len()).map(|w| w.to_vec()).unwrap_or(base_weights);
    let weights: BTreeMap<OutletId, f64> = weighted.iter().zip(&synthesized).map(|(o, w)| (o.id.clone(), w.max(0.0))).collect();

    let need_lines: Vec<AllocationLine> = input
        .needs
        .iter()
        .map(|n| AllocationLine {
            outlet: n.outlet.clone(),
            sku: n.sku.clone(),
            qty: n.need,
        })
        .collect();
    let mut allocation = allocate(&input.available, &need_lines, &weights);

    let stops = stops_for(input.outlets);
    let loads = outlet_loads(&allocation.lines, input.skus);
    let routing = route_plan(&loads, input.fleet, input.dc, &stops, policy.max_chilled_route_minutes);
    let baseline_km: f64 = baseline_routes(&loads, input.fleet, input.dc, &stops, policy.max_chilled_route_minutes)
        .iter()
        .map(|r| r.total_km)
        .sum();

    // undeliverable lines go back to the DC
    let blocked: BTreeSet<(OutletId, TempClass)> = routing.infeasible.iter().map(|i| (i.outlet.clone(), i.temp_class)).collect();
    allocation.lines.retain(|l| {
        let dead = sku_class(&l.sku).map(|c| blocked.contains(&(l.outlet.clone(), c))).unwrap_or(false);
        if dead {
            *allocation.unallocated.entry(l.sku.clone()).or_default() += l.qty;
        }
        !dead
    });

    let mut routes = routing.routes;
    for r in routes.iter_mut() {
        r.load = allocation
            .lines
            .iter()
            .filter(|l| r.stops.contains(&l.outlet) && sku_class(&l.sku) == Some(r.temp_class))
            .cloned()
            .collect();
    }

    let mut contingency_notes = Vec::new();
    for n in &input.needs {
        let got = allocation.qty(&n.outlet, &n.sku);
        let after = n.position as f64 + got as f64 - n.demand_to_next_cycle;
        if n.demand_to_next_cycle > 0.0 && after <= 1e-9 {
            contingency_notes.push(format!(
                "{} {}: projected {:.1} units before next delivery after allocating {} of {} needed; consider expediting or transfer",
                n.outlet, n.sku, after, got, n.need
            ));
        }
    }

    let lookup = |o: &OutletId| stops.get(o).cloned();
    let consolidation_recs = consolidation_scan(&routes, input.fleet, input.dc, &lookup, policy.max_chilled_route_minutes);

    let total_km: f64 = routes.iter().map(|r| r.total_km).sum();
    let units: u64 = allocation.lines.iter().map(|l| l.qty).sum();
    let mut summary = format!(
        "allocated {units} units across {} outlet-sku lines; {} routes, {total_km:.1} km using {:?} grouping",
        allocation.lines.len(),
        routes.len(),
        routing.rule
    );
    if baseline_km > 0.0 {
        summary.push_str(&format!(
            " (id-order reference {baseline_km:.1} km, {:.1}% shorter)",
            100.0 * (baseline_km - total_km) / baseline_km
        ));
    }
    let short: u64 = input.needs.iter().map(|n| n.need).sum::<u64>().saturating_sub(units);
    if short > 0 {
        summary.push_str(&format!("; {short} units of need unmet by DC stock"));
    }
    if !routing.infeasible.is_empty() {
        summary.push_str(&format!("; {} deliveries infeasible", routing.infeasible.len()));
    }

    ReplenishmentPlan {
        id: input.id,
        day: input.day,
        allocations: allocation.lines,
        routes,
        unallocated: allocation.unallocated,
        state: PlanState::PendingApproval,
        rationale: PlanRationale {
            summary,
            weights_trace,
            grouping: routing.rule,
            candidate_km: routing.candidate_km,
            baseline_km,
        },
        contingency_notes,
        consolidation_recs,
        infeasible: routing.infeasible,
    }
}

/// Replaces quantities of the given (outlet, sku) lines and rebuilds the routes.
///
/// Each sku's pool is what the plan already holds for it (allocated plus unallocated);
/// edits that exceed the pool, name unknown outlets or skus, or leave a delivery
/// unroutable are refused and the plan is left untouched.
pub fn apply_allocation_edits(
    plan: &mut ReplenishmentPlan,
    edits: &[AllocationLine],
    outlets: &[Outlet],
    skus: &[Sku],
    fleet: &[Vehicle],
    dc: Point,
    policy: &PolicyParams,
) -> Result<(), String> {
    let mut pool: BTreeMap<SkuId, u64> = plan.unallocated.clone();
    for l in &plan.allocations {
        *pool.entry(l.sku.clone()).or_default() += l.qty;
    }
    let mut lines: BTreeMap<(OutletId, SkuId), u64> = plan.allocations.iter().map(|l| ((l.outlet.clone(), l.sku.clone()), l.qty)).collect();
    for e in edits {
        if !outlets.iter().any(|o| o.id == e.outlet) {
            return Err(format!("unknown outlet {}", e.outlet));
        }
        if !pool.contains_key(&e.sku) {
            return Err(format!("sku {} is not part of {}", e.sku, plan.id));
        }
        lines.insert((e.outlet.clone(), e.sku.clone()), e.qty);
    }
    let mut used: BTreeMap<SkuId, u64> = BTreeMap::new();
    for ((_, sku), q) in &lines {
        *used.entry(sku.clone()).or_default() += q;
    }
    for (sku, u) in &used {
        let avail = pool.get(sku).copied().unwrap_or(0);
        if *u > avail {
            return Err(format!("allocation of {u} units of {sku} exceeds available {avail}"));
        }
    }
    let lines: Vec<AllocationLine> = lines
        .into_iter()
        .filter(|(_, q)| *q > 0)
        .map(|((outlet, sku), qty)| AllocationLine { outlet, sku, qty })
        .collect();

    let stops = stops_for(outlets);
    let loads = outlet_loads(&lines, skus);
    let routing = route_plan(&loads, fleet, dc, &stops, policy.max_chilled_route_minutes);
    if let Some(bad) = routing.infeasible.first() {
        return Err(format!("edited plan cannot deliver to {} ({}): {}", bad.outlet, bad.temp_class, bad.reason));
    }
    let class = |id: &SkuId| skus.iter().find(|s| &s.id == id).map(|s| s.temp_class);
    let mut routes = routing.routes;
    for r in routes.iter_mut() {
        r.load = lines.iter().filter(|l| r.stops.contains(&l.outlet) && class(&l.sku) == Some(r.temp_class)).cloned().collect();
    }
    let lookup = |o: &OutletId| stops.get(o).cloned();
    plan.consolidation_recs = consolidation_scan(&routes, fleet, dc, &lookup, policy.max_chilled_route_minutes);
    plan.unallocated = pool.into_iter().map(|(sku, p)| {
        let u = used.get(&sku).copied().unwrap_or(0);
        (sku, p - u)
    }).collect();
    plan.allocations = lines;
    plan.routes = routes;
    plan.rationale.grouping = routing.rule;
    plan.rationale.candidate_km = routing.candidate_km;
    plan.rationale.summary.push_str(&format!("; modified to {} units, {:.1} km", plan.allocated_units(), plan.total_km()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeWindow;

    fn outlet(id: &str, x: f64, y: f64) -> Outlet {
        Outlet {
            id: OutletId::new(id),
            name: id.into(),
            location: Point::new(x, y),
            delivery_window: TimeWindow::ALL_DAY,
            service_time: 5,
            priority_weight: 1.0,
        }
    }

    fn sku(id: &str, class: TempClass) -> Sku {
        Sku {
            id: SkuId::new(id),
            name: id.into(),
            category: "test".into(),
            case_pack: 1,
            unit_volume: 1.0,
            temp_class: class,
            shelf_life_days: None,
            target_cover_days: 3,
        }
    }

    fn vehicle(id: &str, cap: f64) -> Vehicle {
        Vehicle {
            id: VehicleId::new(id),
            capacity: cap,
            temp_class: TempClass::Ambient,
            speed: 40.0,
            available: true,
        }
    }

    fn need(o: &str, s: &str, n: u64, position: i64, demand: f64) -> OutletNeed {
        OutletNeed {
            outlet: OutletId::new(o),
            sku: SkuId::new(s),
            need: n,
            position,
            demand_to_next_cycle: demand,
        }
    }

    #[test]
    fn zero_incoming_gives_notes_only() {
        let outlets = [outlet("O1", 1.0, 0.0), outlet("O2", 0.0, 1.0)];
        let skus = [sku("A", TempClass::Ambient)];
        let fleet = [vehicle("V1", 100.0)];
        let input = PlanInput {
            id: PlanId(1),
            day: 3,
            available: BTreeMap::from([(SkuId::new("A"), 0)]),
            needs: vec![need("O1", "A", 10, 0, 5.0), need("O2", "A", 4, 0, 2.0)],
            outlets: &outlets,
            skus: &skus,
            fleet: &fleet,
            dc: Point::new(0.0, 0.0),
        };
        let p = plan(&input, &PolicyParams::default(), &Consortium::baseline(0.25));
        assert!(p.allocations.is_empty());
        assert!(p.routes.is_empty());
        assert_eq!(p.contingency_notes.len(), 2);
        assert_eq!(p.state, PlanState::PendingApproval);
    }

    #[test]
    fn abundance_one_vehicle_one_route() {
        let outlets = [outlet("O1", 1.0, 0.0), outlet("O2", 0.0, 1.0), outlet("O3", -1.0, 0.0)];
        let skus = [sku("A", TempClass::Ambient)];
        let fleet = [vehicle("V1", 100.0), vehicle("V2", 100.0)];
        let input = PlanInput {
            id: PlanId(1),
            day: 3,
            available: BTreeMap::from([(SkuId::new("A"), 50)]),
            needs: vec![need("O1", "A", 10, 5, 5.0), need("O2", "A", 4, 5, 2.0), need("O3", "A", 6, 5, 2.0)],
            outlets: &outlets,
            skus: &skus,
            fleet: &fleet,
            dc: Point::new(0.0, 0.0),
        };
        let p = plan(&input, &PolicyParams::default(), &Consortium::baseline(0.25));
        assert_eq!(p.allocated_units(), 20);
        assert_eq!(p.unallocated[&SkuId::new("A")], 30);
        assert_eq!(p.routes.len(), 1);
        assert_eq!(p.routes[0].stops.len(), 3);
        assert!(p.contingency_notes.is_empty());
        assert!(p.total_km() <= p.rationale.baseline_km + 1e-9);
        let loaded: u64 = p.routes[0].load.iter().map(|l| l.qty).sum();
        assert_eq!(loaded, 20);
    }

    #[test]
    fn unreachable_window_returns_stock_to_dc() {
        let mut far = outlet("O2", 200.0, 0.0);
        far.delivery_window = TimeWindow { open: 0, close: 60 };
        let outlets = [outlet("O1", 1.0, 0.0), far];
        let skus = [sku("A", TempClass::Ambient)];
        let fleet = [vehicle("V1", 100.0)];
        let input = PlanInput {
            id: PlanId(2),
            day: 0,
            available: BTreeMap::from([(SkuId::new("A"), 10)]),
            needs: vec![need("O1", "A", 5, 5, 1.0), need("O2", "A", 5, 5, 1.0)],
            outlets: &outlets,
            skus: &skus,
            fleet: &fleet,
            dc: Point::new(0.0, 0.0),
        };
        let p = plan(&input, &PolicyParams::default(), &Consortium::baseline(0.25));
        assert_eq!(p.infeasible.len(), 1);
        assert_eq!(p.infeasible[0].outlet.as_str(), "O2");
        assert_eq!(p.allocated_units() + p.unallocated[&SkuId::new("A")], 10);
        assert!(p.routes.iter().all(|r| r.is_feasible()));
    }
}
