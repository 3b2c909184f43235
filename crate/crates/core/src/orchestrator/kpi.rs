//! Service KPIs, computed live from engine events or replayed from an audit log.

use serde::{Deserialize, Serialize};

use super::audit::AuditRecord;
use crate::domain::Day;
use crate::sim::DayEvents;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    /// Days simulated so far.
    pub days: Day,
    pub sold: u64,
    pub lost_sales: u64,
    /// `sold / (sold + lost_sales)`, 1.0 before any demand.
    pub fill_rate: f64,
    /// Outlet-sku-days with lost sales.
    pub stockout_days: u64,
    pub waste_units: u64,
    pub total_route_km: f64,
    pub pos_transmitted: u64,
    pub plans_dispatched: u64,
    pub pending_approvals: u64,
    pub open_alerts: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiAccumulator {
    pub days: Day,
    pub sold: u64,
    pub lost_sales: u64,
    pub stockout_days: u64,
    pub waste_units: u64,
    pub total_route_km: f64,
    pub pos_transmitted: u64,
    pub plans_dispatched: u64,
}

impl KpiAccumulator {
    pub fn apply_day(&mut self, ev: &DayEvents) {
        self.days = ev.day + 1;
        for l in &ev.lines {
            self.sold += l.sold;
            self.lost_sales += l.lost_sales;
            self.waste_units += l.waste;
            if l.lost_sales > 0 {
                self.stockout_days += 1;
            }
        }
    }

    pub fn add_dispatch(&mut self, km: f64) {
        self.plans_dispatched += 1;
        self.total_route_km += km;
    }

    pub fn report(&self, pending_approvals: u64, open_alerts: u64) -> KpiReport {
        let demand = self.sold + self.lost_sales;
        KpiReport {
            days: self.days,
            sold: self.sold,
            lost_sales: self.lost_sales,
            fill_rate: if demand == 0 { 1.0 } else { self.sold as f64 / demand as f64 },
            stockout_days: self.stockout_days,
            waste_units: self.waste_units,
            total_route_km: self.total_route_km,
            pos_transmitted: self.pos_transmitted,
            plans_dispatched: self.plans_dispatched,
            pending_approvals,
            open_alerts,
        }
    }
}

fn u(v: &serde_json::Value, key: &str) -> u64 {
    v.get(key).and_then(|x| x.as_u64()).unwrap_or(0)
}

/// Rebuilds the KPI report from audit records alone.
pub fn replay(records: &[AuditRecord]) -> KpiReport {
    let mut acc = KpiAccumulator::default();
    let mut pending: i64 = 0;
    let mut open: i64 = 0;
    for r in records {
        let p = &r.payload;
        match r.event_kind.as_str() {
            "day_closed" => {
                acc.days = u(p, "day") as Day + 1;
                for l in p.get("lines").and_then(|l| l.as_array()).into_iter().flatten() {
                    let lost = u(l, "lost_sales");
                    acc.sold += u(l, "sold");
                    acc.lost_sales += lost;
                    acc.waste_units += u(l, "waste");
                    if lost > 0 {
                        acc.stockout_days += 1;
                    }
                }
            }
            "plan_dispatched" => acc.add_dispatch(p.get("total_km").and_then(|k| k.as_f64()).unwrap_or(0.0)),
            "po_transmitted" => acc.pos_transmitted += 1,
            "approval_requested" => pending += 1,
            "approval_decided" => pending -= 1,
            "alert_raised" => open += 1,
            "alert_acknowledged" => open -= 1,
            _ => {}
        }
    }
    acc.report(pending.max(0) as u64, open.max(0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_world_reports_full_fill_rate() {
        let r = KpiAccumulator::default().report(0, 0);
        assert_eq!(r.fill_rate, 1.0);
        assert_eq!(replay(&[]), r);
    }
}
