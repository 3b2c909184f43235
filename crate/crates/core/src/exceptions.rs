//! Exception agent: detection rules, priority scoring and the deduplicating alert book.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{AlertId, Day, Holder, SkuId};
use crate::forecast::ForecastSeries;
use crate::inventory::{project_levels, ScheduledArrival};
use crate::procurement::{PoState, PurchaseOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExceptionKind {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
}

impl ExceptionKind {
    pub fn name(self) -> &'static str {
        match self {
            ExceptionKind::E1 => "stockout_imminent",
            ExceptionKind::E2 => "supplier_delay",
            ExceptionKind::E3 => "expiry_risk",
            ExceptionKind::E4 => "demand_spike",
            ExceptionKind::E5 => "supplier_nonresponse",
            ExceptionKind::E6 => "dispatch_infeasible",
            ExceptionKind::E7 => "unsourceable_sku",
        }
    }

    pub fn severity_weight(self) -> f64 {
        match self {
            ExceptionKind::E1 => 5.0,
            ExceptionKind::E2 => 3.0,
            ExceptionKind::E3 => 2.0,
            ExceptionKind::E4 => 1.0,
            ExceptionKind::E5 => 3.0,
            ExceptionKind::E6 => 4.0,
            ExceptionKind::E7 => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlertState {
    Open,
    Acknowledged,
    Resolved,
}

/// A detected condition before dedup and id assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertCandidate {
    pub kind: ExceptionKind,
    pub subject: String,
    pub impact: f64,
    pub days_to_impact: u32,
    pub trigger_trace: String,
    pub recommended_action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionAlert {
    pub id: AlertId,
    pub kind: ExceptionKind,
    pub kind_name: String,
    pub severity_weight: f64,
    pub impact: f64,
    pub days_to_impact: u32,
    pub priority_score: f64,
    pub subject: String,
    pub trigger_trace: String,
    pub recommended_action: String,
    pub state: AlertState,
    pub raised_tick: Day,
    pub updated_tick: Day,
}

pub fn priority(kind: ExceptionKind, impact: f64, days_to_impact: u32) -> f64 {
    kind.severity_weight() * impact / (days_to_impact as f64 + 1.0)
}

/// Descending priority, then kind, then id.
pub fn rank(alerts: &[ExceptionAlert]) -> Vec<ExceptionAlert> {
    let mut out = alerts.to_vec();
    out.sort_by(|a, b| {
        b.priority_score
            .partial_cmp(&a.priority_score)
            .unwrap_or(Ordering::Equal)
            .then(a.kind.cmp(&b.kind))
            .then(a.id.cmp(&b.id))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlertError {
    #[error("unknown alert {0}")]
    Unknown(AlertId),
    #[error("alert {0} is not open")]
    NotOpen(AlertId),
}

/// Live alerts with dedup on `(kind, subject)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlertBook {
    alerts: Vec<ExceptionAlert>,
    next_id: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutcome {
    pub raised: Vec<AlertId>,
    pub refreshed: Vec<AlertId>,
}

impl AlertBook {
    pub fn all(&self) -> &[ExceptionAlert] {
        &self.alerts
    }

    pub fn get(&self, id: AlertId) -> Option<&ExceptionAlert> {
        self.alerts.iter().find(|a| a.id == id)
    }

    pub fn open(&self) -> impl Iterator<Item = &ExceptionAlert> {
        self.alerts.iter().filter(|a| a.state == AlertState::Open)
    }

    /// Raises new alerts; a live alert on the same `(kind, subject)` is refreshed instead.
    pub fn merge(&mut self, candidates: Vec<AlertCandidate>, tick: Day) -> MergeOutcome {
        let mut out = MergeOutcome::default();
        for c in candidates {
            let live = self
                .alerts
                .iter_mut()
                .find(|a| a.kind == c.kind && a.subject == c.subject && a.state != AlertState::Resolved);
            match live {
                Some(a) => {
                    let changed = a.impact != c.impact || a.days_to_impact != c.days_to_impact;
                    a.impact = c.impact;
                    a.days_to_impact = c.days_to_impact;
                    a.priority_score = priority(c.kind, c.impact, c.days_to_impact);
                    a.trigger_trace = c.trigger_trace;
                    if changed {
                        a.updated_tick = tick;
                        out.refreshed.push(a.id);
                    }
                }
                None => {
                    self.next_id += 1;
                    let id = AlertId(self.next_id);
                    self.alerts.push(ExceptionAlert {
                        id,
                        kind: c.kind,
                        kind_name: c.kind.name().to_string(),
                        severity_weight: c.kind.severity_weight(),
                        impact: c.impact,
                        days_to_impact: c.days_to_impact,
                        priority_score: priority(c.kind, c.impact, c.days_to_impact),
                        subject: c.subject,
                        trigger_trace: c.trigger_trace,
                        recommended_action: c.recommended_action,
                        state: AlertState::Open,
                        raised_tick: tick,
                        updated_tick: tick,
                    });
                    out.raised.push(id);
                }
            }
        }
        out
    }

    pub fn set_action(&mut self, id: AlertId, text: String) {
        if let Some(a) = self.alerts.iter_mut().find(|a| a.id == id) {
            a.recommended_action = text;
        }
    }

    pub fn acknowledge(&mut self, id: AlertId, tick: Day) -> Result<&ExceptionAlert, AlertError> {
        let a = self.alerts.iter_mut().find(|a| a.id == id).ok_or(AlertError::Unknown(id))?;
        if a.state != AlertState::Open {
            return Err(AlertError::NotOpen(id));
        }
        a.state = AlertState::Acknowledged;
        a.updated_tick = tick;
        Ok(a)
    }
}

pub fn holder_subject(holder: &Holder, sku: &SkuId) -> String {
    format!("{holder}/{sku}")
}

/// E1: stock projected to run out within `window` days despite confirmed arrivals.
pub fn detect_stockout(
    holder: &Holder,
    sku: &SkuId,
    on_hand: u64,
    forecast: &ForecastSeries,
    arrivals: &[ScheduledArrival],
    today: Day,
    window: u32,
    remedy: &str,
) -> Option<AlertCandidate> {
    let days = window.min(forecast.horizon);
    let levels = project_levels(on_hand, forecast, arrivals, days);
    let first = levels.iter().enumerate().find(|(i, l)| **l <= 1e-9 && forecast.mean[*i] > 0.0)?.0;
    let worst = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let stockout_day = forecast.start_day + first as Day;
    let next_arrival = arrivals.iter().map(|a| a.day).filter(|d| *d > stockout_day).min();
    Some(AlertCandidate {
        kind: ExceptionKind::E1,
        subject: holder_subject(holder, sku),
        impact: (-worst).max(1.0).round(),
        days_to_impact: stockout_day.saturating_sub(today),
        trigger_trace: format!(
            "projected on_hand reaches {:.1} on day {stockout_day} (on_hand {on_hand}, demand {:.1} over {days}d, confirmed arrivals before then {})",
            levels[first],
            forecast.sum_first(days),
            arrivals.iter().filter(|a| a.day <= stockout_day).map(|a| a.qty).sum::<u64>(),
        ),
        recommended_action: match next_arrival {
            Some(d) => format!("{remedy}; next confirmed arrival day {d} is too late"),
            None => remedy.to_string(),
        },
    })
}

/// E2: confirmed delivery promised after the PO's need-by day.
pub fn detect_supplier_delay(po: &PurchaseOrder, dc_forecast: Option<&ForecastSeries>, today: Day, alternative: Option<&str>) -> Option<AlertCandidate> {
    if !matches!(po.state, PoState::Confirmed | PoState::PartiallyConfirmed) {
        return None;
    }
    let promised = po.promised_day?;
    if promised <= po.need_by_day || promised < today {
        return None;
    }
    let gap_demand: f64 = dc_forecast
        .map(|f| (po.need_by_day..promised).map(|d| f.mean_on(d)).sum())
        .unwrap_or(0.0);
    let mut action = format!("expedite {} with {} or cover {} days of demand", po.id, po.supplier_id, promised - po.need_by_day);
    if let Some(alt) = alternative {
        action.push_str(&format!("; alternative: {alt}"));
    }
    Some(AlertCandidate {
        kind: ExceptionKind::E2,
        subject: po.id.to_string(),
        impact: gap_demand.round().max(1.0),
        days_to_impact: po.need_by_day.saturating_sub(today),
        trigger_trace: format!(
            "{} promised day {promised} > need_by {} ({} days late), {} units of {}",
            po.id,
            po.need_by_day,
            promised - po.need_by_day,
            po.confirmed_qty.unwrap_or(po.qty),
            po.sku
        ),
        recommended_action: action,
    })
}

/// E3: units projected to expire unsold.
pub fn detect_expiry(holder: &Holder, sku: &SkuId, at_risk: u64, earliest_expiry: Day, today: Day) -> Option<AlertCandidate> {
    (at_risk > 0).then(|| AlertCandidate {
        kind: ExceptionKind::E3,
        subject: holder_subject(holder, sku),
        impact: at_risk as f64,
        days_to_impact: earliest_expiry.saturating_sub(today),
        trigger_trace: format!("{at_risk} units projected to expire unsold by FEFO sell-through; earliest expiry day {earliest_expiry}"),
        recommended_action: format!("mark down or transfer {at_risk} units of {sku} at {holder}; hold further allocations"),
    })
}

/// E4: realized demand above forecast mean + k sigma.
pub fn detect_spike(holder: &Holder, sku: &SkuId, realized: u64, mean: f64, sigma: f64, k: f64, day: Day) -> Option<AlertCandidate> {
    let limit = mean + k * sigma;
    (realized as f64 > limit && mean > 0.0).then(|| AlertCandidate {
        kind: ExceptionKind::E4,
        subject: holder_subject(holder, sku),
        impact: (realized as f64 - mean).round(),
        days_to_impact: 0,
        trigger_trace: format!("demand {realized} on day {day} > mean {mean:.1} + {k} x sigma {sigma:.2} = {limit:.1}"),
        recommended_action: format!("check {sku} at {holder} for an unplanned promotion or event; review next order quantity"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PoId;

    fn cand(kind: ExceptionKind, subject: &str, impact: f64, days: u32) -> AlertCandidate {
        AlertCandidate {
            kind,
            subject: subject.into(),
            impact,
            days_to_impact: days,
            trigger_trace: "t".into(),
            recommended_action: "a".into(),
        }
    }

    #[test]
    fn spike_example() {
        let a = detect_spike(&Holder::Dc, &"A".into(), 40, 10.0, 5.0, 3.0, 4).unwrap();
        assert!(a.trigger_trace.contains("25.0"));
        assert!(detect_spike(&Holder::Dc, &"A".into(), 25, 10.0, 5.0, 3.0, 4).is_none());
    }

    #[test]
    fn ranking_rules() {
        let mut book = AlertBook::default();
        book.merge(
            vec![
                cand(ExceptionKind::E2, "x", 10.0, 0),
                cand(ExceptionKind::E2, "y", 100.0, 0),
                cand(ExceptionKind::E5, "z", 100.0, 0),
            ],
            0,
        );
        let ranked = rank(book.all());
        assert_eq!(ranked[0].subject, "y");
        assert_eq!(ranked[1].subject, "z");
        let mut shuffled = book.all().to_vec();
        shuffled.reverse();
        assert_eq!(rank(&shuffled), ranked);
        assert_eq!(priority(ExceptionKind::E1, 10.0, 0) / priority(ExceptionKind::E1, 10.0, 9), 10.0);
    }

    #[test]
    fn dedup_refreshes_live_alert() {
        let mut book = AlertBook::default();
        let first = book.merge(vec![cand(ExceptionKind::E1, "DC/A", 5.0, 3)], 1);
        assert_eq!(first.raised.len(), 1);
        let again = book.merge(vec![cand(ExceptionKind::E1, "DC/A", 9.0, 2)], 2);
        assert!(again.raised.is_empty());
        assert_eq!(book.all().len(), 1);
        assert_eq!(book.all()[0].impact, 9.0);
        book.acknowledge(first.raised[0], 2).unwrap();
        assert!(book.merge(vec![cand(ExceptionKind::E1, "DC/A", 9.0, 2)], 3).raised.is_empty());
        assert_eq!(book.acknowledge(first.raised[0], 3), Err(AlertError::NotOpen(first.raised[0])));
        assert_eq!(book.acknowledge(AlertId(99), 3), Err(AlertError::Unknown(AlertId(99))));
    }

    #[test]
    fn supplier_delay_days_to_impact() {
        use crate::consortium::{ReasoningTrace, TaskKind, TaskValue};
        use crate::procurement::OrderRationale;
        let trace = ReasoningTrace {
            task_kind: TaskKind::OrderQuantity,
            proposals: vec![],
            failures: vec![],
            synthesized: TaskValue::Number(0.0),
            dispersion: 0.0,
            synthesis_note: String::new(),
            flagged: false,
        };
        let po = PurchaseOrder {
            id: PoId(3),
            holder: Holder::Dc,
            sku: "A".into(),
            supplier_id: "S1".into(),
            qty: 10,
            unit_price: crate::domain::Money(1),
            order_day: 1,
            need_by_day: 5,
            promised_day: Some(7),
            lead_time_days: 4,
            state: PoState::Confirmed,
            confirmed_qty: Some(10),
            rationale: OrderRationale {
                summary: "s".into(),
                order_up_to: 0,
                inventory_position: 0,
                raw_need: 0,
                supplier_scores: vec![],
                quantity_trace: trace.clone(),
                supplier_trace: trace,
            },
            flags: Default::default(),
        };
        assert_eq!(detect_supplier_delay(&po, None, 2, None).unwrap().days_to_impact, 3);
        assert_eq!(detect_supplier_delay(&po, None, 6, None).unwrap().days_to_impact, 0);
        let on_time = PurchaseOrder { promised_day: Some(5), ..po };
        assert!(detect_supplier_delay(&on_time, None, 2, None).is_none());
    }
}
