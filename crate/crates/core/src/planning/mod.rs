//! DC replenishment planning: allocation, vehicle assignment and routing.

mod allocate;
mod fleet;
mod plan;
mod routing;

pub use allocate::{allocate, apportion, Allocation, AllocationLine};
pub use fleet::{assign_vehicles, assign_with, GroupingRule, LoadGroup, OutletLoad, VehicleAssignment};
pub use plan::{
    apply_allocation_edits,
    baseline_routes, plan, route_plan, stops_for, InfeasibleDelivery, OutletNeed, PlanInput, PlanRationale, PlanState,
    ReplenishmentPlan, RoutingResult,
};
pub use routing::{consolidation_scan, nearest_neighbor, route_for_order, sequence_route, tour_km, two_opt, Route, Stop};
