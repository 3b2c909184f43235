//! Grouping outlet loads onto vehicles of the matching temperature class.

use serde::{Deserialize, Serialize};

use crate::domain::{OutletId, Point, TempClass, VehicleId};
use crate::sim::Vehicle;

/// Total volume one outlet needs delivered in one temperature class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutletLoad {
    pub outlet: OutletId,
    pub temp_class: TempClass,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadGroup {
    pub vehicle_id: VehicleId,
    pub temp_class: TempClass,
    pub capacity: f64,
    pub outlets: Vec<OutletId>,
    pub volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleAssignment {
    pub groups: Vec<LoadGroup>,
    /// Loads that fit no vehicle of their class.
    pub infeasible: Vec<OutletLoad>,
}

/// Order in which outlet loads are offered to the vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingRule {
    /// Largest volume first (first-fit decreasing).
    Ffd,
    /// Ascending outlet id, the manual reference order.
    IdOrder,
    /// Ascending polar angle around the DC, so each vehicle covers a sector.
    Sweep,
}

fn pack(order: Vec<&OutletLoad>, vehicles: &[&Vehicle], class: TempClass, out: &mut VehicleAssignment) {
    let mut groups: Vec<LoadGroup> = vehicles
        .iter()
        .map(|v| LoadGroup {
            vehicle_id: v.id.clone(),
            temp_class: class,
            capacity: v.capacity,
            outlets: Vec::new(),
            volume: 0.0,
        })
        .collect();
    for load in order {
        match groups.iter_mut().find(|g| g.volume + load.volume <= g.capacity + 1e-9) {
            Some(g) => {
                g.outlets.push(load.outlet.clone());
                g.volume += load.volume;
            }
            None => out.infeasible.push(load.clone()),
        }
    }
    out.groups.extend(groups.into_iter().filter(|g| !g.outlets.is_empty()));
}

/// First-fit assignment per class. An outlet's load in one class is never split.
pub fn assign_with(rule: GroupingRule, loads: &[OutletLoad], fleet: &[Vehicle], dc: Point, locations: &dyn Fn(&OutletId) -> Point) -> VehicleAssignment {
    let mut out = VehicleAssignment::default();
    for class in [TempClass::Ambient, TempClass::Chilled] {
        let mut these: Vec<&OutletLoad> = loads.iter().filter(|l| l.temp_class == class && l.volume > 0.0).collect();
        if these.is_empty() {
            continue;
        }
        match rule {
            GroupingRule::Ffd => these.sort_by(|a, b| b.volume.total_cmp(&a.volume).then_with(|| a.outlet.cmp(&b.outlet))),
            GroupingRule::IdOrder => these.sort_by(|a, b| a.outlet.cmp(&b.outlet)),
            GroupingRule::Sweep => these.sort_by(|a, b| {
                let angle = |o: &OutletId| {
                    let p = locations(o);
                    (p.y - dc.y).atan2(p.x - dc.x)
                };
                angle(&a.outlet).total_cmp(&angle(&b.outlet)).then_with(|| a.outlet.cmp(&b.outlet))
            }),
        }
        let vehicles: Vec<&Vehicle> = fleet.iter().filter(|v| v.available && v.temp_class == class).collect();
        pack(these, &vehicles, class, &mut out);
    }
    out
}

/// First-fit decreasing by outlet volume.
pub fn assign_vehicles(loads: &[OutletLoad], fleet: &[Vehicle]) -> VehicleAssignment {
    assign_with(GroupingRule::Ffd, loads, fleet, Point::new(0.0, 0.0), &|_| Point::new(0.0, 0.0))
}
