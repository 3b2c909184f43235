//! Procurement agent: order-up-to sizing, supplier scoring and PO drafting.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::consortium::{Consortium, ReasonerTask, ReasoningTrace, TaskKind, TaskValue};
use crate::domain::{CatalogEntry, Day, Holder, InventoryRecord, Money, PoId, PolicyParams, SkuId, SupplierId};
use crate::forecast::ForecastSeries;
use crate::inventory::{project_levels, ReplenishmentSignal, ScheduledArrival, SignalKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoState {
    Draft,
    PendingApproval,
    Approved,
    Transmitted,
    Confirmed,
    PartiallyConfirmed,
    Rejected,
    Expired,
    Cancelled,
}

impl PoState {
    pub fn can_transition(self, to: PoState) -> bool {
        use PoState::*;
        matches!(
            (self, to),
            (Draft, PendingApproval)
                | (PendingApproval, Approved)
                | (PendingApproval, Rejected)
                | (Approved, Transmitted)
                | (Transmitted, Confirmed)
                | (Transmitted, PartiallyConfirmed)
                | (Transmitted, Expired)
                | (Transmitted, Rejected)
                | (Draft, Cancelled)
                | (PendingApproval, Cancelled)
                | (Approved, Cancelled)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            PoState::Confirmed | PoState::PartiallyConfirmed | PoState::Rejected | PoState::Expired | PoState::Cancelled
        )
    }

    /// Quantity in this state is committed to the pipeline but not yet booked as on_order.
    pub fn is_open_pipeline(self) -> bool {
        matches!(self, PoState::PendingApproval | PoState::Approved | PoState::Transmitted)
    }
}

impl fmt::Display for PoState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoFlag {
    ForecastUncertain,
    Urgent,
    MoqPadded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierScore {
    pub supplier_id: SupplierId,
    pub unit_price: Money,
    pub lead_time_days: u32,
    pub reliability: f64,
    pub price_norm: f64,
    pub lead_norm: f64,
    pub score: f64,
    /// False when the urgency filter excluded this candidate.
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRationale {
    pub summary: String,
    pub order_up_to: u64,
    pub inventory_position: i64,
    pub raw_need: u64,
    pub supplier_scores: Vec<SupplierScore>,
    pub quantity_trace: ReasoningTrace,
    pub supplier_trace: ReasoningTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseOrder {
    pub id: PoId,
    pub holder: Holder,
    pub sku: SkuId,
    pub supplier_id: SupplierId,
    pub qty: u64,
    pub unit_price: Money,
    pub order_day: Day,
    pub need_by_day: Day,
    #[serde(default)]
    pub promised_day: Option<Day>,
    pub lead_time_days: u32,
    pub state: PoState,
    #[serde(default)]
    pub confirmed_qty: Option<u64>,
    pub rationale: OrderRationale,
    #[serde(default)]
    pub flags: BTreeSet<PoFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition for {po}: {from} -> {to}")]
pub struct TransitionError {
    pub po: PoId,
    pub from: PoState,
    pub to: PoState,
}

impl PurchaseOrder {
    pub fn transition(&mut self, to: PoState) -> Result<(), TransitionError> {
        if !self.state.can_transition(to) {
            return Err(TransitionError {
                po: self.id,
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }

    pub fn value(&self) -> Money {
        Money(self.unit_price.0 * self.qty as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProcurementError {
    #[error("forecast horizon {horizon} shorter than protection period {needed}")]
    HorizonTooShort { horizon: u32, needed: u32 },
    #[error("no supplier candidates for {0}")]
    NoCandidates(SkuId),
}

/// `S = ceil(sum of means over P + z * sigma * sqrt(P))` with `P = lead + review`.
pub fn order_up_to_level(forecast: &ForecastSeries, lead_time_days: u32, policy: &PolicyParams) -> Result<u64, ProcurementError> {
    let p = lead_time_days + policy.review_period_days;
    if forecast.horizon < p {
        return Err(ProcurementError::HorizonTooShort {
            horizon: forecast.horizon,
            needed: p,
        });
    }
    let s = forecast.sum_first(p) + policy.service_z * forecast.sigma_daily * (p as f64).sqrt();
    // guard against 50.000000000001 rounding up to 51
    Ok((s - 1e-9).ceil().max(0.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderQty {
    pub qty: u64,
    pub raw: u64,
    pub moq_padded: bool,
}

/// Rounds the raw need `S - ip` up to whole cases, then up to the MOQ.
pub fn compute_order_qty(s: u64, ip: i64, case_pack: u32, entry: &CatalogEntry) -> OrderQty {
    let raw = (s as i64 - ip).max(0) as u64;
    if raw == 0 {
        return OrderQty {
            qty: 0,
            raw,
            moq_padded: false,
        };
    }
    let cp = case_pack.max(1) as u64;
    let qty = raw.div_ceil(cp).saturating_mul(cp).max(entry.moq);
    OrderQty {
        qty,
        raw,
        moq_padded: qty as f64 > raw as f64 * 1.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entry: CatalogEntry,
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: CatalogEntry,
    pub scores: Vec<SupplierScore>,
    pub urgent: bool,
}

fn min_max(x: f64, lo: f64, hi: f64) -> f64 {
    if hi - lo <= 0.0 {
        0.0
    } else {
        (x - lo) / (hi - lo)
    }
}

/// Scores candidates on normalised price, reliability and lead time.
///
/// With a stockout horizon, only candidates that can deliver in time are scored; when none
/// can, all are kept and the selection is marked urgent.
pub fn select_supplier(candidates: &[Candidate], days_to_stockout: Option<u32>, policy: &PolicyParams) -> Result<Selection, ProcurementError> {
    let first = candidates.first().ok_or_else(|| ProcurementError::NoCandidates(SkuId::new("")))?;
    let mut eligible: Vec<bool> = match days_to_stockout {
        Some(d) => candidates.iter().map(|c| c.entry.lead_time_days <= d).collect(),
        None => vec![true; candidates.len()],
    };
    let urgent = !eligible.iter().any(|e| *e);
    if urgent {
        eligible.iter_mut().for_each(|e| *e = true);
    }
    let pool = || candidates.iter().zip(&eligible).filter(|(_, e)| **e).map(|(c, _)| c);
    let p_lo = pool().map(|c| c.entry.unit_price.0 as f64).fold(f64::INFINITY, f64::min);
    let p_hi = pool().map(|c| c.entry.unit_price.0 as f64).fold(f64::NEG_INFINITY, f64::max);
    let l_lo = pool().map(|c| c.entry.lead_time_days as f64).fold(f64::INFINITY, f64::min);
    let l_hi = pool().map(|c| c.entry.lead_time_days as f64).fold(f64::NEG_INFINITY, f64::max);
    let w = policy.supplier_weights;

    let scores: Vec<SupplierScore> = candidates
        .iter()
        .zip(&eligible)
        .map(|(c, e)| {
            let price_norm = min_max(c.entry.unit_price.0 as f64, p_lo, p_hi);
            let lead_norm = min_max(c.entry.lead_time_days as f64, l_lo, l_hi);
            SupplierScore {
                supplier_id: c.entry.supplier_id.clone(),
                unit_price: c.entry.unit_price,
                lead_time_days: c.entry.lead_time_days,
                reliability: c.reliability,
                price_norm,
                lead_norm,
                score: w.price * (1.0 - price_norm) + w.reliability * c.reliability + w.lead * (1.0 - lead_norm),
                eligible: *e,
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate().filter(|(_, s)| s.eligible) {
        best = match best {
            None => Some(i),
            Some(b) => {
                let bs = &scores[b];
                if s.score > bs.score || (s.score == bs.score && s.supplier_id < bs.supplier_id) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let chosen = best.map(|i| candidates[i].entry.clone()).unwrap_or_else(|| first.entry.clone());
    Ok(Selection { chosen, scores, urgent })
}

/// Everything procurement needs to size one order for one (holder, sku).
#[derive(Debug, Clone)]
pub struct DraftRequest<'a> {
    pub today: Day,
    pub signal: &'a ReplenishmentSignal,
    pub forecast: &'a ForecastSeries,
    pub record: &'a InventoryRecord,
    /// Units on open POs that are not yet booked as on_order.
    pub open_pipeline: u64,
    /// The record's on_order broken down by the day each delivery becomes usable.
    pub inbound: &'a [ScheduledArrival],
    /// Days between a delivery landing and its stock being usable by the holder.
    pub receiving_days: u32,
    pub case_pack: u32,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Default)]
pub struct DraftOutcome {
    pub orders: Vec<PurchaseOrder>,
    pub unsourceable: Vec<(Holder, SkuId, String)>,
}

/// Drafts one PO per low-stock signal. Quantity and supplier choice are both decided
/// by the consortium, seeded with the deterministic answer as the baseline hint.
pub fn draft_purchase_orders(
    requests: &[DraftRequest<'_>],
    policy: &PolicyParams,
    consortium: &Consortium,
    next_id: &mut u64,
) -> DraftOutcome {
    let mut out = DraftOutcome::default();
    for req in requests.iter().filter(|r| r.signal.kind == SignalKind::LowStock) {
        match draft_one(req, policy, consortium, *next_id) {
            Ok(Some(po)) => {
                *next_id += 1;
                out.orders.push(po);
            }
            Ok(None) => {}
            Err(e) => out.unsourceable.push((req.record.holder.clone(), req.record.sku_id.clone(), e.to_string())),
        }
    }
    out
}

/// Inventory position counting only deliveries usable before `until`. Stock landing later
/// than a new order would does not protect the window that order is sized for.
fn position_within(req: &DraftRequest<'_>, until: Day) -> i64 {
    let inbound: u64 = req.inbound.iter().filter(|a| a.day < until).map(|a| a.qty).sum();
    req.record.on_hand as i64 - req.record.committed as i64 + inbound as i64 + req.open_pipeline as i64
}

/// Lead time, in supplier days, before the first day whose demand the projection cannot
/// meet. A projected level of exactly zero still serves that day's demand, so it does not
/// count; receiving days are deducted because stock lands that much before it is usable.
fn days_to_unmet_demand(req: &DraftRequest<'_>) -> Option<u32> {
    let start = req.record.on_hand.saturating_sub(req.record.committed);
    project_levels(start, req.forecast, req.inbound, req.forecast.horizon)
        .iter()
        .position(|lvl| *lvl < -1e-9)
        .map(|i| (req.forecast.start_day + i as Day).saturating_sub(req.today).saturating_sub(req.receiving_days))
}

fn draft_one(req: &DraftRequest<'_>, policy: &PolicyParams, consortium: &Consortium, id: u64) -> Result<Option<PurchaseOrder>, ProcurementError> {
    let sku = &req.record.sku_id;
    if req.candidates.is_empty() {
        return Err(ProcurementError::NoCandidates(sku.clone()));
    }
    let days_to_stockout = days_to_unmet_demand(req);
    let selection = select_supplier(&req.candidates, days_to_stockout, policy)?;

    let best_score = selection
        .scores
        .iter()
        .find(|s| s.supplier_id == selection.chosen.supplier_id)
        .map(|s| s.score)
        .unwrap_or(0.0);
    let supplier_task = ReasonerTask {
        kind: TaskKind::SupplierChoice,
        context: serde_json::json!({
            "holder": req.record.holder,
            "sku": sku,
            "days_to_stockout": days_to_stockout,
            "scores": selection.scores,
        }),
        baseline_hint: TaskValue::Choice {
            id: selection.chosen.supplier_id.to_string(),
            score: best_score,
        },
    };
    let (choice, supplier_trace) = consortium.decide_or_baseline(&supplier_task);
    let entry = choice
        .as_choice()
        .and_then(|id| req.candidates.iter().find(|c| c.entry.supplier_id.as_str() == id))
        .map(|c| c.entry.clone())
        .unwrap_or_else(|| selection.chosen.clone());

    let s = order_up_to_level(req.forecast, entry.lead_time_days + req.receiving_days, policy)?;
    let p = entry.lead_time_days + req.receiving_days + policy.review_period_days;
    let ip = position_within(req, req.today + p);
    let baseline = compute_order_qty(s, ip, req.case_pack, &entry);
    if baseline.qty == 0 {
        return Ok(None);
    }

    let qty_task = ReasonerTask {
        kind: TaskKind::OrderQuantity,
        context: serde_json::json!({
            "holder": req.record.holder,
            "sku": sku,
            "order_up_to": s,
            "inventory_position": ip,
            "raw_need": baseline.raw,
            "case_pack": req.case_pack,
            "moq": entry.moq,
            "forecast_cv": req.forecast.cv,
        }),
        baseline_hint: TaskValue::Number(baseline.qty as f64),
    };
    let (qty_value, quantity_trace) = consortium.decide_or_baseline(&qty_task);
    let proposed = qty_value.as_number().unwrap_or(baseline.qty as f64).max(0.0).ceil() as u64;
    // re-apply case pack and MOQ to whatever the consortium settled on
    let mut final_qty = compute_order_qty(proposed, 0, req.case_pack, &entry);
    if final_qty.qty == 0 {
        final_qty = baseline;
    }

    let mut flags = BTreeSet::new();
    let cv_high = !(req.forecast.cv <= policy.cv_flag_threshold);
    if cv_high || quantity_trace.flagged || supplier_trace.flagged || final_qty.qty < baseline.raw {
        flags.insert(PoFlag::ForecastUncertain);
    }
    if selection.urgent {
        flags.insert(PoFlag::Urgent);
    }
    if final_qty.qty as f64 > baseline.raw as f64 * 1.5 {
        flags.insert(PoFlag::MoqPadded);
    }

    let mut summary = format!(
        "{sku} at {holder}: S {s} (P = {lead}+{recv}+{rev}d) - IP {ip} = need {raw}; ordering {qty} from {sup} \
         at {price}/unit, lead {lead}d",
        holder = req.record.holder,
        lead = entry.lead_time_days,
        rev = policy.review_period_days,
        recv = req.receiving_days,
        raw = baseline.raw,
        qty = final_qty.qty,
        sup = entry.supplier_id,
        price = entry.unit_price,
    );
    if selection.scores.len() > 1 {
        summary.push_str(&format!("; scored {} suppliers, best {best_score:.3}", selection.scores.len()));
    }
    if cv_high {
        summary.push_str(&format!(
            "; forecast cv {:.2} above {} - review suggested",
            req.forecast.cv, policy.cv_flag_threshold
        ));
    }
    if selection.urgent {
        summary.push_str("; no supplier can deliver before projected stockout");
    }

    Ok(Some(PurchaseOrder {
        id: PoId(id),
        holder: req.record.holder.clone(),
        sku: sku.clone(),
        supplier_id: entry.supplier_id.clone(),
        qty: final_qty.qty,
        unit_price: entry.unit_price,
        order_day: req.today,
        need_by_day: req.today + entry.lead_time_days,
        promised_day: None,
        lead_time_days: entry.lead_time_days,
        state: PoState::PendingApproval,
        confirmed_qty: None,
        rationale: OrderRationale {
            summary,
            order_up_to: s,
            inventory_position: ip,
            raw_need: baseline.raw,
            supplier_scores: selection.scores,
            quantity_trace,
            supplier_trace,
        },
        flags,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consortium::{PerturbedReasoner, Reasoner};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn series(mean: f64, sigma: f64, horizon: u32) -> ForecastSeries {
        ForecastSeries {
            holder: Holder::Dc,
            sku: SkuId::new("A"),
            start_day: 1,
            horizon,
            mean: vec![mean; horizon as usize],
            sigma_daily: sigma,
            cv: if mean > 0.0 { sigma / mean } else { 0.0 },
            basis_note: "test".into(),
        }
    }

    fn entry(sup: &str, price: i64, moq: u64, lead: u32) -> CatalogEntry {
        CatalogEntry {
            supplier_id: SupplierId::new(sup),
            sku_id: SkuId::new("A"),
            unit_price: Money(price),
            moq,
            lead_time_days: lead,
        }
    }

    fn cand(sup: &str, price: i64, lead: u32, rel: f64) -> Candidate {
        Candidate {
            entry: entry(sup, price, 1, lead),
            reliability: rel,
        }
    }

    #[test]
    fn order_up_to_examples() {
        let p = PolicyParams::default();
        assert_eq!(order_up_to_level(&series(10.0, 0.0, 7), 4, &p).unwrap(), 50);
        // independent recomputation: 50 + 1.645 * 4 * 2.2360679... = 64.7133
        let expected = (50.0f64 + 1.645 * 4.0 * 5.0f64.sqrt()).ceil() as u64;
        assert_eq!(expected, 65);
        assert_eq!(order_up_to_level(&series(10.0, 4.0, 7), 4, &p).unwrap(), expected);
        assert_eq!(order_up_to_level(&series(0.0, 0.0, 7), 4, &p).unwrap(), 0);
        assert_eq!(
            order_up_to_level(&series(10.0, 0.0, 3), 4, &p),
            Err(ProcurementError::HorizonTooShort { horizon: 3, needed: 5 })
        );
    }

    #[test]
    fn order_qty_examples() {
        let e = entry("S1", 100, 10, 2);
        assert_eq!(compute_order_qty(50, 20, 10, &e).qty, 30);
        let q = compute_order_qty(23, 20, 10, &entry("S1", 100, 20, 2));
        assert_eq!((q.qty, q.moq_padded), (20, true));
        assert_eq!(compute_order_qty(50, 50, 10, &e).qty, 0);
        assert_eq!(compute_order_qty(50, 80, 10, &e).qty, 0);
    }

    #[test]
    fn state_machine() {
        use PoState::*;
        assert!(Draft.can_transition(PendingApproval));
        assert!(!Draft.can_transition(Approved));
        assert!(!PendingApproval.can_transition(Transmitted));
        assert!(Approved.can_transition(Cancelled));
        assert!(!Transmitted.can_transition(Cancelled));
        assert!(!Confirmed.can_transition(Expired));
    }

    #[test]
    fn supplier_examples() {
        let p = PolicyParams::default();
        let one = select_supplier(&[cand("S1", 100, 2, 0.5)], None, &p).unwrap();
        assert_eq!(one.chosen.supplier_id.as_str(), "S1");
        assert_eq!(one.scores.len(), 1);
        let two = select_supplier(&[cand("S1", 100, 2, 0.5), cand("S2", 100, 2, 0.9)], None, &p).unwrap();
        assert_eq!(two.chosen.supplier_id.as_str(), "S2");
        // urgency filter drops the slow supplier even though it scores higher
        let f = select_supplier(&[cand("S1", 200, 2, 0.5), cand("S2", 100, 5, 0.9)], Some(3), &p).unwrap();
        assert_eq!(f.chosen.supplier_id.as_str(), "S1");
        assert!(!f.urgent);
        let u = select_supplier(&[cand("S1", 200, 4, 0.5), cand("S2", 100, 5, 0.9)], Some(1), &p).unwrap();
        assert!(u.urgent);
        assert!(select_supplier(&[], None, &p).is_err());
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let p = PolicyParams::default();
        let s = select_supplier(&[cand("S9", 100, 2, 0.5), cand("S3", 100, 2, 0.5)], None, &p).unwrap();
        assert_eq!(s.chosen.supplier_id.as_str(), "S3");
    }

    fn signal(stockout: Option<Day>) -> ReplenishmentSignal {
        ReplenishmentSignal {
            holder: Holder::Dc,
            sku: SkuId::new("A"),
            kind: SignalKind::LowStock,
            projected_stockout_day: stockout,
            at_risk_qty: None,
            trigger_trace: "low".into(),
        }
    }

    fn record(on_hand: u64) -> InventoryRecord {
        InventoryRecord {
            on_hand,
            ..InventoryRecord::new(Holder::Dc, SkuId::new("A"))
        }
    }

    #[test]
    fn single_reasoner_matches_direct_computation() {
        let p = PolicyParams::default();
        let f = series(10.0, 0.0, 7);
        let sig = signal(Some(3));
        let rec = record(12);
        let req = DraftRequest {
            today: 0,
            signal: &sig,
            forecast: &f,
            record: &rec,
            open_pipeline: 0,
            inbound: &[],
            receiving_days: 0,
            case_pack: 6,
            candidates: vec![Candidate {
                entry: entry("S1", 100, 12, 2),
                reliability: 0.9,
            }],
        };
        let mut next = 1;
        let out = draft_purchase_orders(std::slice::from_ref(&req), &p, &Consortium::baseline(0.25), &mut next);
        let direct = compute_order_qty(order_up_to_level(&f, 2, &p).unwrap(), 12, 6, &entry("S1", 100, 12, 2));
        assert_eq!(out.orders.len(), 1);
        let po = &out.orders[0];
        assert_eq!(po.qty, direct.qty);
        assert_eq!(po.state, PoState::PendingApproval);
        assert_eq!(po.id, PoId(1));
        assert_eq!(next, 2);
        assert!(!po.rationale.summary.is_empty());
        assert!(po.flags.is_empty());
        // trio keeps the baseline quantity as median
        let trio = draft_purchase_orders(std::slice::from_ref(&req), &p, &Consortium::trio(0.1, 0.25), &mut next);
        assert_eq!(trio.orders[0].qty, direct.qty);
        assert_eq!(trio.orders[0].rationale.quantity_trace.proposals.len(), 3);
    }

    #[test]
    fn high_cv_and_high_dispersion_flag_uncertain() {
        let p = PolicyParams::default();
        let f = ForecastSeries {
            cv: 0.6,
            ..series(10.0, 6.0, 7)
        };
        let sig = signal(None);
        let rec = record(0);
        let req = DraftRequest {
            today: 0,
            signal: &sig,
            forecast: &f,
            record: &rec,
            open_pipeline: 0,
            inbound: &[],
            receiving_days: 0,
            case_pack: 1,
            candidates: vec![Candidate {
                entry: entry("S1", 100, 1, 2),
                reliability: 0.9,
            }],
        };
        let mut next = 1;
        let out = draft_purchase_orders(std::slice::from_ref(&req), &p, &Consortium::baseline(0.25), &mut next);
        assert!(out.orders[0].flags.contains(&PoFlag::ForecastUncertain));
        assert!(out.orders[0].rationale.summary.contains("cv 0.60"));

        let calm = series(10.0, 0.0, 7);
        let req = DraftRequest { forecast: &calm, ..req };
        let wild = Consortium::new(
            vec![
                Arc::new(PerturbedReasoner::fixed("a", 0.0)) as Arc<dyn Reasoner>,
                Arc::new(PerturbedReasoner::fixed("b", 0.5)),
                Arc::new(PerturbedReasoner::fixed("c", -0.5)),
            ],
            0.25,
        );
        let out = draft_purchase_orders(std::slice::from_ref(&req), &p, &wild, &mut next);
        assert!(out.orders[0].rationale.quantity_trace.flagged);
        assert!(out.orders[0].flags.contains(&PoFlag::ForecastUncertain));
    }

    #[test]
    fn no_signals_and_no_candidates() {
        let p = PolicyParams::default();
        let mut next = 1;
        assert!(draft_purchase_orders(&[], &p, &Consortium::baseline(0.25), &mut next).orders.is_empty());
        let f = series(10.0, 0.0, 7);
        let sig = signal(None);
        let rec = record(0);
        let req = DraftRequest {
            today: 0,
            signal: &sig,
            forecast: &f,
            record: &rec,
            open_pipeline: 0,
            inbound: &[],
            receiving_days: 0,
            case_pack: 1,
            candidates: vec![],
        };
        let out = draft_purchase_orders(&[req], &p, &Consortium::baseline(0.25), &mut next);
        assert!(out.orders.is_empty());
        assert_eq!(out.unsourceable.len(), 1);
    }

    /// Exhaustive re-scoring with the formula written out independently.
    fn oracle_pick(c: &[(i64, u32, f64)]) -> usize {
        let prices: Vec<f64> = c.iter().map(|x| x.0 as f64).collect();
        let leads: Vec<f64> = c.iter().map(|x| x.1 as f64).collect();
        let norm = |v: f64, all: &[f64]| {
            let lo = all.iter().cloned().fold(f64::MAX, f64::min);
            let hi = all.iter().cloned().fold(f64::MIN, f64::max);
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.0
            }
        };
        let mut best = 0;
        let mut best_score = f64::MIN;
        // ids are S0..Sn in index order, so the first maximum is the lowest id
        for (i, x) in c.iter().enumerate() {
            let s = 0.4 * (1.0 - norm(x.0 as f64, &prices)) + 0.4 * x.2 + 0.2 * (1.0 - norm(x.1 as f64, &leads));
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn argmax_matches_enumeration(c in proptest::collection::vec((50i64..500, 1u32..6, 0.0f64..1.0), 5)) {
            let cands: Vec<Candidate> = c.iter().enumerate().map(|(i, x)| cand(&format!("S{i}"), x.0, x.1, x.2)).collect();
            let sel = select_supplier(&cands, None, &PolicyParams::default()).unwrap();
            prop_assert_eq!(sel.chosen.supplier_id.as_str(), format!("S{}", oracle_pick(&c)));
        }

        #[test]
        fn price_scaling_keeps_choice(c in proptest::collection::vec((1i64..500, 1u32..6, 0.0f64..1.0), 1..6), k in 2i64..20) {
            let a: Vec<Candidate> = c.iter().enumerate().map(|(i, x)| cand(&format!("S{i}"), x.0, x.1, x.2)).collect();
            let b: Vec<Candidate> = c.iter().enumerate().map(|(i, x)| cand(&format!("S{i}"), x.0 * k, x.1, x.2)).collect();
            let p = PolicyParams::default();
            prop_assert_eq!(select_supplier(&a, None, &p).unwrap().chosen.supplier_id, select_supplier(&b, None, &p).unwrap().chosen.supplier_id);
        }

        #[test]
        fn never_orders_below_need(s in 0u64..500, ip in -100i64..500, cp in 1u32..24, moq in 1u64..50) {
            let q = compute_order_qty(s, ip, cp, &entry("S1", 100, moq, 2));
            if q.qty > 0 {
                prop_assert!(q.qty as i64 >= s as i64 - ip);
                prop_assert!(q.qty >= moq);
            }
        }
    }
}
