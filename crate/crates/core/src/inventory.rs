//! Inventory monitoring agent. Stateless: signals are recomputed from each snapshot.

use serde::{Deserialize, Serialize};

use crate::domain::{days_of_cover, Batch, Day, Holder, InventoryRecord, PolicyParams, SkuId};
use crate::forecast::ForecastSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    LowStock,
    ExpiryRisk,
    Overstock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplenishmentSignal {
    pub holder: Holder,
    pub sku: SkuId,
    pub kind: SignalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projected_stockout_day: Option<Day>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_risk_qty: Option<u64>,
    pub trigger_trace: String,
}

/// A confirmed delivery expected at the holder; lands before that day's sales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledArrival {
    pub day: Day,
    pub qty: u64,
}

/// Projected end-of-day stock for each forecast day, arrivals added before sales.
pub fn project_levels(on_hand: u64, forecast: &ForecastSeries, arrivals: &[ScheduledArrival], days: u32) -> Vec<f64> {
    let mut level = on_hand as f64;
    // arrivals already overdue count as landing on the first projected day
    (0..days)
        .map(|i| {
            let day = forecast.start_day + i;
            level += arrivals
                .iter()
                .filter(|a| if i == 0 { a.day <= day } else { a.day == day })
                .map(|a| a.qty as f64)
                .sum::<f64>();
            level -= forecast.mean.get(i as usize).copied().unwrap_or(0.0);
            level
        })
        .collect()
}

/// First day whose projected end-of-day level is at or below zero while demand is expected.
pub fn projected_stockout_day(on_hand: u64, forecast: &ForecastSeries, arrivals: &[ScheduledArrival], days: u32) -> Option<Day> {
    project_levels(on_hand, forecast, arrivals, days)
        .iter()
        .enumerate()
        .find(|(i, lvl)| **lvl <= 1e-9 && forecast.mean[*i] > 0.0)
        .map(|(i, _)| forecast.start_day + i as Day)
}

/// Units projected to expire unsold when batches are consumed first-expiry-first-out
/// against the forecast means, day by day from the forecast start.
pub fn expiry_risk(batches: &[Batch], forecast: &ForecastSeries) -> u64 {
    let mut stock: Vec<(Day, f64)> = batches.iter().map(|b| (b.expiry_day, b.qty as f64)).collect();
    stock.sort_by_key(|(e, _)| *e);
    let mut at_risk = 0.0;
    for (i, demand) in forecast.mean.iter().enumerate() {
        let day = forecast.start_day + i as Day;
        let mut need = *demand;
        for (expiry, qty) in stock.iter_mut() {
            if need <= 0.0 {
                break;
            }
            if *expiry >= day && *qty > 0.0 {
                let n = qty.min(need);
                *qty -= n;
                need -= n;
            }
        }
        for (expiry, qty) in stock.iter_mut() {
            if *expiry == day {
                at_risk += *qty;
                *qty = 0.0;
            }
        }
    }
    // batches that outlive the horizon are not judged
    at_risk.round() as u64
}

/// Compares one inventory record against its forecast and thresholds.
///
/// `protection_days` is the horizon over which the position must hold above safety stock:
/// the replenishment lead time seen by this holder.
pub fn evaluate(
    record: &InventoryRecord,
    forecast: &ForecastSeries,
    protection_days: u32,
    arrivals: &[ScheduledArrival],
    target_cover_days: u32,
    policy: &PolicyParams,
) -> Vec<ReplenishmentSignal> {
    let mut out = Vec::new();
    let lead = protection_days.min(forecast.horizon);
    let levels = project_levels(record.on_hand, forecast, arrivals, lead);
    let projected = levels.last().copied().unwrap_or(record.on_hand as f64);
    let safety = policy.service_z * forecast.sigma_daily * (lead as f64).sqrt();
    if projected < safety {
        let stockout = projected_stockout_day(record.on_hand, forecast, arrivals, forecast.horizon);
        out.push(ReplenishmentSignal {
            holder: record.holder.clone(),
            sku: record.sku_id.clone(),
            kind: SignalKind::LowStock,
            projected_stockout_day: stockout,
            at_risk_qty: None,
            trigger_trace: format!(
                "low_stock: projected on_hand {projected:.1} after {lead}d lead < safety stock {safety:.1} \
                 (z {z} x sigma {sig:.2} x sqrt({lead})); on_hand {oh}, demand over lead {dem:.1}, arrivals {arr}",
                z = policy.service_z,
                sig = forecast.sigma_daily,
                oh = record.on_hand,
                dem = forecast.sum_first(lead),
                arr = arrivals.iter().filter(|a| a.day < forecast.start_day + lead).map(|a| a.qty).sum::<u64>(),
            ),
        });
    }

    let week_mean = forecast.average_first(7);
    let cover = days_of_cover(record.on_hand, week_mean);
    let limit = policy.overstock_multiple * target_cover_days as f64;
    if cover > limit {
        out.push(ReplenishmentSignal {
            holder: record.holder.clone(),
            sku: record.sku_id.clone(),
            kind: SignalKind::Overstock,
            projected_stockout_day: None,
            at_risk_qty: None,
            trigger_trace: format!(
                "overstock: days of cover {cover:.1} > {mult} x target cover {target}d = {limit:.1} (on_hand {oh}, mean {week_mean:.2}/day)",
                mult = policy.overstock_multiple,
                target = target_cover_days,
                oh = record.on_hand,
            ),
        });
    }

    if !record.batches.is_empty() {
        let risk = expiry_risk(&record.batches, forecast);
        if risk > 0 {
            out.push(ReplenishmentSignal {
                holder: record.holder.clone(),
                sku: record.sku_id.clone(),
                kind: SignalKind::ExpiryRisk,
                projected_stockout_day: None,
                at_risk_qty: Some(risk),
                trigger_trace: format!(
                    "expiry_risk: FEFO sell-through leaves {risk} units past expiry across {} batches",
                    record.batches.len()
                ),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(start: Day, per_day: f64, horizon: u32, sigma: f64) -> ForecastSeries {
        ForecastSeries {
            holder: Holder::Dc,
            sku: SkuId::new("A"),
            start_day: start,
            horizon,
            mean: vec![per_day; horizon as usize],
            sigma_daily: sigma,
            cv: 0.0,
            basis_note: "test".into(),
        }
    }

    fn rec(on_hand: u64) -> InventoryRecord {
        InventoryRecord {
            on_hand,
            ..InventoryRecord::new(Holder::Dc, SkuId::new("A"))
        }
    }

    // `now` = day 0; forecast covers days 1.. (the days still ahead of the snapshot).
    #[test]
    fn low_stock_with_stockout_day() {
        let sig = evaluate(&rec(10), &flat(1, 5.0, 7, 0.0), 3, &[], 3, &PolicyParams::default());
        let low = sig.iter().find(|s| s.kind == SignalKind::LowStock).unwrap();
        assert_eq!(low.projected_stockout_day, Some(2));
        assert!(low.trigger_trace.contains("-5.0"));
    }

    #[test]
    fn overstock_when_cover_exceeds_multiple() {
        let sig = evaluate(&rec(100), &flat(1, 1.0, 7, 0.0), 3, &[], 3, &PolicyParams::default());
        assert!(sig.iter().any(|s| s.kind == SignalKind::Overstock));
        assert!(!sig.iter().any(|s| s.kind == SignalKind::LowStock));
    }

    #[test]
    fn arrival_cancels_low_stock() {
        let arrivals = [ScheduledArrival { day: 1, qty: 20 }];
        let sig = evaluate(&rec(10), &flat(1, 5.0, 7, 0.0), 3, &arrivals, 3, &PolicyParams::default());
        assert!(!sig.iter().any(|s| s.kind == SignalKind::LowStock));
    }

    #[test]
    fn expiry_examples() {
        let f = flat(1, 5.0, 7, 0.0);
        assert_eq!(expiry_risk(&[Batch { qty: 10, expiry_day: 2 }], &f), 0);
        assert_eq!(expiry_risk(&[Batch { qty: 10, expiry_day: 1 }], &f), 5);
    }

    #[test]
    fn evaluate_is_idempotent() {
        let mut r = rec(12);
        r.batches = vec![Batch { qty: 12, expiry_day: 2 }];
        let f = flat(1, 4.0, 7, 1.0);
        let p = PolicyParams::default();
        assert_eq!(evaluate(&r, &f, 3, &[], 3, &p), evaluate(&r, &f, 3, &[], 3, &p));
    }

    /// Brute-force FEFO: sell unit by unit, always from the earliest-expiring sellable unit.
    fn brute_force_risk(batches: &[Batch], start: Day, demand: &[u64]) -> u64 {
        let mut units: Vec<Day> = batches
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.expiry_day, b.qty as usize))
            .collect();
        let mut wasted = 0;
        for (i, d) in demand.iter().enumerate() {
            let day = start + i as Day;
            for _ in 0..*d {
                units.sort();
                if let Some(pos) = units.iter().position(|e| *e >= day) {
                    units.remove(pos);
                }
            }
            wasted += units.iter().filter(|e| **e == day).count() as u64;
            units.retain(|e| *e != day);
        }
        wasted
    }

    proptest! {
        #[test]
        fn fefo_matches_brute_force(
            batches in proptest::collection::vec((0u64..15, 1u32..10), 1..5),
            demand in proptest::collection::vec(0u64..8, 10),
        ) {
            let batches: Vec<Batch> = batches.into_iter().map(|(qty, expiry_day)| Batch { qty, expiry_day }).collect();
            let f = ForecastSeries {
                mean: demand.iter().map(|d| *d as f64).collect(),
                ..flat(1, 0.0, 10, 0.0)
            };
            prop_assert_eq!(expiry_risk(&batches, &f), brute_force_risk(&batches, 1, &demand));
        }

        #[test]
        fn expiry_risk_nonincreasing_in_demand(
            batches in proptest::collection::vec((0u64..15, 1u32..10), 1..5),
            m in 0.0f64..10.0, bump in 0.0f64..5.0,
        ) {
            let batches: Vec<Batch> = batches.into_iter().map(|(qty, expiry_day)| Batch { qty, expiry_day }).collect();
            let lo = expiry_risk(&batches, &flat(1, m, 10, 0.0));
            let hi = expiry_risk(&batches, &flat(1, m + bump, 10, 0.0));
            prop_assert!(hi <= lo);
        }
    }
}
