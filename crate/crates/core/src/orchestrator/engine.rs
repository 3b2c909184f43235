//! The daily pipeline over one world: agents in fixed stage order, approval gates,
//! human commands and the audit trail.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::approvals::{ApprovalItem, ApprovalKind, ApprovalState, Decision, DecisionError, Delta};
use super::audit::{Actor, AuditLog};
use super::kpi::{KpiAccumulator, KpiReport};
use super::view::StateView;
use crate::consortium::{Consortium, ReasonerTask, TaskKind, TaskValue};
use crate::domain::{AlertId, Day, Holder, PlanId, PoId, SkuId};
use crate::exceptions::{
    detect_expiry, detect_spike, detect_stockout, detect_supplier_delay, holder_subject, AlertBook, AlertCandidate, AlertError,
    ExceptionAlert, ExceptionKind,
};
use crate::forecast::{aggregate, forecast, ForecastSeries};
use crate::inventory::{evaluate, ReplenishmentSignal, ScheduledArrival, SignalKind};
use crate::planning::{self, apply_allocation_edits, AllocationLine, OutletNeed, PlanInput, PlanState, ReplenishmentPlan};
use crate::procurement::{draft_purchase_orders, Candidate, DraftRequest, PoState, PurchaseOrder};
use crate::sim::{DayEvents, SupplierResponse, World};
use crate::supplier::{self, FollowupAction, InteractionStatus, SupplierInteraction};

/// Answers transmitted POs in place of the simulated supplier.
pub trait SupplierChannel: Send + Sync {
    fn respond(&self, po: &PurchaseOrder, day: Day) -> Result<SupplierResponse, String>;
}

#[derive(Clone)]
pub struct EngineConfig {
    pub auto_approve: bool,
    pub consortium: Consortium,
    pub supplier_channel: Option<Arc<dyn SupplierChannel>>,
}

impl EngineConfig {
    pub fn new(auto_approve: bool, consortium: Consortium) -> Self {
        Self {
            auto_approve,
            consortium,
            supplier_channel: None,
        }
    }
}

impl fmt::Debug for EngineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EngineConfig")
            .field("auto_approve", &self.auto_approve)
            .field("consortium", &self.consortium)
            .field("remote_supplier", &self.supplier_channel.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub day: Day,
    pub pos_drafted: Vec<PoId>,
    pub pos_transmitted: Vec<PoId>,
    pub responses: u32,
    pub plan: Option<PlanId>,
    pub dispatched: Vec<PlanId>,
    pub alerts_raised: Vec<AlertId>,
    pub stage_errors: Vec<String>,
    pub sold: u64,
    pub lost_sales: u64,
}

/// Pipeline stage names, in execution order.
pub const STAGES: [&str; 8] = ["forecast", "inventory", "procurement", "supplier", "planning", "dispatch", "exceptions", "step_day"];

pub struct Engine {
    world: World,
    config: EngineConfig,
    pos: BTreeMap<PoId, PurchaseOrder>,
    interactions: BTreeMap<PoId, SupplierInteraction>,
    plans: BTreeMap<PlanId, ReplenishmentPlan>,
    approvals: Vec<ApprovalItem>,
    approval_index: HashMap<String, usize>,
    alerts: AlertBook,
    audit: AuditLog,
    kpi: KpiAccumulator,
    forecasts: BTreeMap<(Holder, SkuId), ForecastSeries>,
    prev_forecasts: BTreeMap<(Holder, SkuId), ForecastSeries>,
    signals: Vec<ReplenishmentSignal>,
    /// Signals raised by supplier outcomes, consumed by the next procurement pass.
    carried_signals: Vec<ReplenishmentSignal>,
    /// E5-E7 candidates produced by other stages, merged at the next exception scan.
    relayed: Vec<AlertCandidate>,
    last_day: Option<DayEvents>,
    next_po: u64,
    next_plan: u64,
}

fn agent(name: &str) -> Actor {
    Actor::agent(name)
}

impl Engine {
    pub fn new(world: World, config: EngineConfig) -> Self {
        let mut engine = Self {
            world,
            config,
            pos: BTreeMap::new(),
            interactions: BTreeMap::new(),
            plans: BTreeMap::new(),
            approvals: Vec::new(),
            approval_index: HashMap::new(),
            alerts: AlertBook::default(),
            audit: AuditLog::new(),
            kpi: KpiAccumulator::default(),
            forecasts: BTreeMap::new(),
            prev_forecasts: BTreeMap::new(),
            signals: Vec::new(),
            carried_signals: Vec::new(),
            relayed: Vec::new(),
            last_day: None,
            next_po: 1,
            next_plan: 1,
        };
        let cfg = engine.world.config();
        let payload = json!({
            "seed": cfg.seed,
            "day": engine.world.day(),
            "outlets": cfg.outlets.len(),
            "skus": cfg.skus.len(),
            "suppliers": cfg.suppliers.len(),
            "vehicles": cfg.fleet.len(),
            "horizon": cfg.horizon(),
            "auto_approve": engine.config.auto_approve,
            "consortium": engine.config.consortium.reasoner_ids(),
            "remote_supplier": engine.config.supplier_channel.is_some(),
        });
        engine.log(Actor::System, "world_generated", payload);
        engine
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn day(&self) -> Day {
        self.world.day()
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn approvals(&self) -> &[ApprovalItem] {
        &self.approvals
    }

    pub fn approval(&self, id: &str) -> Option<&ApprovalItem> {
        self.approval_index.get(id).map(|i| &self.approvals[*i])
    }

    pub fn purchase_orders(&self) -> &BTreeMap<PoId, PurchaseOrder> {
        &self.pos
    }

    pub fn plans(&self) -> &BTreeMap<PlanId, ReplenishmentPlan> {
        &self.plans
    }

    pub fn alerts(&self) -> &AlertBook {
        &self.alerts
    }

    pub fn interactions(&self) -> &BTreeMap<PoId, SupplierInteraction> {
        &self.interactions
    }

    pub fn signals(&self) -> &[ReplenishmentSignal] {
        &self.signals
    }

    pub fn forecast_for(&self, holder: &Holder, sku: &SkuId) -> Option<&ForecastSeries> {
        self.forecasts.get(&(holder.clone(), sku.clone()))
    }

    pub fn pending_count(&self) -> u64 {
        self.approvals.iter().filter(|a| a.state == ApprovalState::Pending).count() as u64
    }

    pub fn kpis(&self) -> KpiReport {
        self.kpi.report(self.pending_count(), self.alerts.open().count() as u64)
    }

    pub fn snapshot(&self) -> StateView {
        StateView {
            day: self.world.day(),
            auto_approve: self.config.auto_approve,
            consortium: self.config.consortium.reasoner_ids(),
            kpis: self.kpis(),
            approvals: self.approvals.clone(),
            purchase_orders: self.pos.values().cloned().collect(),
            plans: self.plans.values().cloned().collect(),
            alerts: crate::exceptions::rank(self.alerts.all()),
            interactions: self.interactions.values().cloned().collect(),
            signals: self.signals.clone(),
            forecasts: self.forecasts.values().cloned().collect(),
            inventories: self.world.state().inventories.clone(),
            audit_len: self.audit.len() as u64,
        }
    }

    fn log(&mut self, actor: Actor, kind: &str, payload: Value) {
        let tick = self.world.day();
        self.audit.append(tick, actor, kind, payload);
    }

    fn stage_error(&mut self, report: &mut CycleReport, stage: &str, error: String) {
        report.stage_errors.push(format!("{stage}: {error}"));
        self.log(Actor::System, "stage_error", json!({ "stage": stage, "error": error }));
    }

    /// Runs one day: every stage in order, then the simulator step.
    pub fn run_cycle(&mut self) -> CycleReport {
        self.run_cycle_with(&mut |_| {})
    }

    /// Like [`run_cycle`](Self::run_cycle), calling `between` after every stage so queued
    /// commands can be applied at stage boundaries.
    pub fn run_cycle_with(&mut self, between: &mut dyn FnMut(&mut Engine)) -> CycleReport {
        let mut report = CycleReport {
            day: self.world.day(),
            ..CycleReport::default()
        };
        self.stage_forecast();
        between(self);
        self.stage_inventory();
        between(self);
        self.stage_procurement(&mut report);
        between(self);
        self.stage_supplier(&mut report);
        between(self);
        self.stage_planning(&mut report);
        between(self);
        self.stage_dispatch(&mut report);
        between(self);
        self.stage_exceptions(&mut report);
        between(self);
        self.stage_step(&mut report);
        report
    }

    fn stage_forecast(&mut self) {
        let t = self.world.day();
        let cfg = self.world.config();
        let horizon = cfg.horizon();
        let mut fresh = BTreeMap::new();
        for o in &cfg.outlets {
            for s in &cfg.skus {
                let holder = Holder::Outlet(o.id.clone());
                let history = self.world.sales(&o.id, &s.id).map(|x| x.units.as_slice()).unwrap_or(&[]);
                let f = match self.world.demand_params(&o.id, &s.id) {
                    Some(p) => forecast(history, &cfg.calendar_for(p), holder.clone(), s.id.clone(), t, horizon),
                    None => ForecastSeries::zero(holder.clone(), s.id.clone(), t, horizon, "no demand model"),
                };
                fresh.insert((holder, s.id.clone()), f);
            }
        }
        for s in &cfg.skus {
            let parts: Vec<&ForecastSeries> = cfg
                .outlets
                .iter()
                .filter_map(|o| fresh.get(&(Holder::Outlet(o.id.clone()), s.id.clone())))
                .collect();
            let dc = aggregate(Holder::Dc, s.id.clone(), &parts);
            fresh.insert((Holder::Dc, s.id.clone()), dc);
        }
        let threshold = cfg.policy.cv_flag_threshold;
        let high_cv = fresh.values().filter(|f| f.cv.is_finite() && f.cv > threshold).count();
        let no_data = fresh.values().filter(|f| !f.cv.is_finite()).count();
        let payload = json!({
            "day": t,
            "series": fresh.len(),
            "horizon": horizon,
            "high_cv": high_cv,
            "no_data": no_data,
        });
        self.prev_forecasts = std::mem::replace(&mut self.forecasts, fresh);
        self.log(agent("forecasting"), "forecasts_updated", payload);
    }

    /// Inbound stock by the day it can first be used. Supplier deliveries land at the DC
    /// after that day's dispatch, so they count from the following day.
    fn arrivals(&self, holder: &Holder, sku: &SkuId) -> Vec<ScheduledArrival> {
        let shift = u32::from(holder.is_dc());
        let mut a: Vec<ScheduledArrival> = self
            .world
            .scheduled_arrivals(holder, sku)
            .into_iter()
            .map(|(day, qty)| ScheduledArrival { day: day + shift, qty })
            .collect();
        a.sort_by_key(|x| x.day);
        a
    }

    /// Days the DC position must hold: slowest supplier lead, the receiving day and one
    /// review period.
    fn dc_protection(&self, sku: &SkuId) -> u32 {
        let lead = self.world.catalog_for(sku).map(|e| e.lead_time_days).max().unwrap_or(0);
        lead + 1 + self.world.config().policy.review_period_days
    }

    fn stage_inventory(&mut self) {
        let t = self.world.day();
        let cfg = self.world.config();
        let mut signals = Vec::new();
        for rec in &self.world.state().inventories {
            let Some(f) = self.forecasts.get(&(rec.holder.clone(), rec.sku_id.clone())) else {
                continue;
            };
            let Some(sku) = self.world.sku_index(&rec.sku_id).map(|i| &cfg.skus[i]) else {
                continue;
            };
            let protection = if rec.holder.is_dc() { self.dc_protection(&sku.id) } else { 1 };
            let arrivals = self.arrivals(&rec.holder, &rec.sku_id);
            signals.extend(evaluate(rec, f, protection, &arrivals, sku.target_cover_days, &cfg.policy));
        }
        signals.append(&mut self.carried_signals);
        let count = |k: SignalKind| signals.iter().filter(|s| s.kind == k).count();
        let dc_low: Vec<&SkuId> = signals
            .iter()
            .filter(|s| s.holder.is_dc() && s.kind == SignalKind::LowStock)
            .map(|s| &s.sku)
            .collect();
        let payload = json!({
            "day": t,
            "low_stock": count(SignalKind::LowStock),
            "overstock": count(SignalKind::Overstock),
            "expiry_risk": count(SignalKind::ExpiryRisk),
            "dc_low_stock": dc_low,
        });
        self.signals = signals;
        self.log(agent("inventory"), "signals_emitted", payload);
    }

    fn open_approval(&mut self, actor: Actor, kind: ApprovalKind, id: String, summary: String, flags: Vec<String>) {
        let item = ApprovalItem {
            id: id.clone(),
            kind,
            payload_ref: id.clone(),
            created_tick: self.world.day(),
            state: ApprovalState::Pending,
            modification: None,
            decider: None,
            decided_tick: None,
            note: None,
            summary,
            flags,
        };
        self.log(actor, "approval_requested", json!(item));
        self.approval_index.insert(id, self.approvals.len());
        self.approvals.push(item);
        if self.config.auto_approve {
            let id = self.approvals.last().expect("just pushed").id.clone();
            if let Err(e) = self.submit_decision(&id, Decision::Approve, Actor::System) {
                // only reachable if the payload vanished; surfaced like any stage failure
                self.log(Actor::System, "stage_error", json!({ "stage": "approval", "error": e.to_string() }));
            }
        }
    }

    /// Rejects a Pending item on the engine's own authority.
    fn system_reject(&mut self, item_id: &str, note: String) {
        let _ = self.submit_decision(item_id, Decision::Reject { reason: Some(note) }, Actor::System);
    }

    fn stage_procurement(&mut self, report: &mut CycleReport) {
        let t = self.world.day();
        let dc_low: BTreeSet<SkuId> = self
            .signals
            .iter()
            .filter(|s| s.holder.is_dc() && s.kind == SignalKind::LowStock)
            .map(|s| s.sku.clone())
            .collect();
        let stale: Vec<(PoId, SkuId)> = self
            .pos
            .values()
            .filter(|p| p.state == PoState::PendingApproval && p.order_day < t && !dc_low.contains(&p.sku))
            .map(|p| (p.id, p.sku.clone()))
            .collect();
        for (id, sku) in stale {
            self.system_reject(&id.to_string(), format!("stale: low-stock signal for {sku} at DC no longer present"));
        }

        let cfg = self.world.config();
        let mut pipeline: BTreeMap<&SkuId, u64> = BTreeMap::new();
        for p in self.pos.values().filter(|p| p.holder.is_dc() && p.state.is_open_pipeline()) {
            *pipeline.entry(&p.sku).or_default() += p.qty;
        }
        let mut seen = BTreeSet::new();
        let inbound: BTreeMap<SkuId, Vec<ScheduledArrival>> = self
            .signals
            .iter()
            .filter(|s| s.holder.is_dc() && s.kind == SignalKind::LowStock)
            .map(|s| (s.sku.clone(), self.arrivals(&Holder::Dc, &s.sku)))
            .collect();
        let mut requests = Vec::new();
        for sig in self.signals.iter().filter(|s| s.holder.is_dc() && s.kind == SignalKind::LowStock) {
            if !seen.insert(&sig.sku) {
                continue;
            }
            let (Some(record), Some(f), Some(sku)) = (
                self.world.record(&Holder::Dc, &sig.sku),
                self.forecasts.get(&(Holder::Dc, sig.sku.clone())),
                self.world.sku_index(&sig.sku).map(|i| &cfg.skus[i]),
            ) else {
                continue;
            };
            let candidates = self
                .world
                .catalog_for(&sig.sku)
                .map(|e| Candidate {
                    entry: e.clone(),
                    reliability: self.world.supplier_reliability(&e.supplier_id),
                })
                .collect();
            requests.push(DraftRequest {
                today: t,
                signal: sig,
                forecast: f,
                record,
                open_pipeline: pipeline.get(&sig.sku).copied().unwrap_or(0),
                inbound: inbound.get(&sig.sku).map(Vec::as_slice).unwrap_or(&[]),
                receiving_days: 1,
                case_pack: sku.case_pack,
                candidates,
            });
        }
        let mut next = self.next_po;
        let outcome = draft_purchase_orders(&requests, &cfg.policy, &self.config.consortium, &mut next);
        let unsourceable: Vec<AlertCandidate> = outcome
            .unsourceable
            .iter()
            .map(|(holder, sku, why)| {
                let f = self.forecasts.get(&(holder.clone(), sku.clone()));
                let weekly = f.map(|f| f.sum_first(7)).unwrap_or(0.0);
                let stockout = self
                    .signals
                    .iter()
                    .find(|s| &s.holder == holder && &s.sku == sku && s.kind == SignalKind::LowStock)
                    .and_then(|s| s.projected_stockout_day);
                AlertCandidate {
                    kind: ExceptionKind::E7,
                    subject: holder_subject(holder, sku),
                    impact: weekly.round().max(1.0),
                    days_to_impact: stockout.map(|d| d.saturating_sub(t)).unwrap_or(0),
                    trigger_trace: format!("procurement could not source {sku} for {holder}: {why}"),
                    recommended_action: format!("add a catalog entry for {sku} or source it manually"),
                }
            })
            .collect();
        drop(requests);
        self.next_po = next;
        self.relayed.extend(unsourceable);

        for po in outcome.orders {
            let id = po.id;
            let summary = po.rationale.summary.clone();
            let flags = po.flags.iter().map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()).collect();
            self.log(agent("procurement"), "po_drafted", json!(po));
            self.pos.insert(id, po);
            report.pos_drafted.push(id);
            self.open_approval(agent("procurement"), ApprovalKind::PurchaseOrder, id.to_string(), summary, flags);
        }
    }

    fn stage_supplier(&mut self, report: &mut CycleReport) {
        let t = self.world.day();
        let policy = self.world.config().policy.clone();

        let approved: Vec<PoId> = self.pos.values().filter(|p| p.state == PoState::Approved).map(|p| p.id).collect();
        for id in approved {
            let po = self.pos.get_mut(&id).expect("listed above");
            match supplier::transmit(po, &mut self.world) {
                Ok(interaction) => {
                    let payload = json!({
                        "po_id": id,
                        "supplier": po.supplier_id,
                        "sku": po.sku,
                        "qty": po.qty,
                        "interaction": interaction,
                    });
                    self.interactions.insert(id, interaction);
                    self.kpi.pos_transmitted += 1;
                    report.pos_transmitted.push(id);
                    self.log(agent("supplier"), "po_transmitted", payload);
                }
                Err(e) => self.stage_error(report, "supplier", e.to_string()),
            }
        }

        for id in self.world.due_responses() {
            let live = self.pos.get(&id).map(|p| p.state == PoState::Transmitted).unwrap_or(false) && self.interactions.contains_key(&id);
            if !live {
                self.world.cancel_response(id);
                continue;
            }
            let po = self.pos.get_mut(&id).expect("checked");
            let response = match &self.config.supplier_channel {
                Some(ch) => {
                    self.world.cancel_response(id);
                    ch.respond(po, t)
                }
                None => self.world.supplier_respond(po).map_err(|e| e.to_string()),
            };
            let response = match response {
                Ok(r) => r,
                Err(e) => {
                    self.world.cancel_response(id);
                    self.stage_error(report, "supplier", format!("{id}: {e}"));
                    continue;
                }
            };
            let interaction = self.interactions.get_mut(&id).expect("checked");
            let effects = match supplier::apply_response(po, interaction, &response, &mut self.world) {
                Ok(fx) => fx,
                Err(e) => {
                    self.stage_error(report, "supplier", format!("{id}: {e}"));
                    continue;
                }
            };
            report.responses += 1;
            let po = po.clone();
            let lost = effects.shortfall.or(effects.rejection.as_ref().map(|_| po.qty));
            if let Some(missing) = lost {
                let why = match &effects.rejection {
                    Some(r) => format!("{} rejected by {}: {r}", po.id, po.supplier_id),
                    None => format!("{} partially confirmed by {}: {missing} of {} units short", po.id, po.supplier_id, po.qty),
                };
                self.carried_signals.push(ReplenishmentSignal {
                    holder: po.holder.clone(),
                    sku: po.sku.clone(),
                    kind: SignalKind::LowStock,
                    projected_stockout_day: None,
                    at_risk_qty: None,
                    trigger_trace: format!("low_stock: {why}; re-running procurement"),
                });
                self.relayed.push(AlertCandidate {
                    kind: ExceptionKind::E5,
                    subject: po.id.to_string(),
                    impact: missing as f64,
                    days_to_impact: po.need_by_day.saturating_sub(t),
                    trigger_trace: why,
                    recommended_action: format!("re-order {missing} units of {} from an alternative supplier", po.sku),
                });
            }
            self.log(agent("supplier"), "supplier_response", json!({ "response": response, "effects": effects }));
        }

        let awaiting: Vec<SupplierInteraction> = self
            .interactions
            .values()
            .filter(|i| i.status == InteractionStatus::AwaitingResponse)
            .cloned()
            .collect();
        for action in supplier::tick(&awaiting, t, &policy) {
            let id = match &action {
                FollowupAction::Followup { po_id, .. } | FollowupAction::Escalate { po_id, .. } => *po_id,
            };
            let (Some(po), Some(interaction)) = (self.pos.get_mut(&id), self.interactions.get_mut(&id)) else {
                continue;
            };
            if let Err(e) = supplier::apply_action(&action, interaction, po, t) {
                self.stage_error(report, "supplier", format!("{id}: {e}"));
                continue;
            }
            match &action {
                FollowupAction::Followup { .. } => {
                    if !self.world.has_scheduled_response(id) {
                        if let Err(e) = self.world.schedule_response(po) {
                            self.stage_error(report, "supplier", format!("{id}: {e}"));
                            continue;
                        }
                    }
                    self.log(agent("supplier"), "supplier_followup", json!(action));
                }
                FollowupAction::Escalate { followups_sent, .. } => {
                    let po = po.clone();
                    self.world.cancel_response(id);
                    self.world.record_supplier_outcome(&po.supplier_id, false);
                    self.relayed.push(AlertCandidate {
                        kind: ExceptionKind::E5,
                        subject: po.id.to_string(),
                        impact: po.qty as f64,
                        days_to_impact: po.need_by_day.saturating_sub(t),
                        trigger_trace: format!("{} to {}: no answer after {followups_sent} follow-ups", po.id, po.supplier_id),
                        recommended_action: format!("re-source {} units of {} from another supplier", po.qty, po.sku),
                    });
                    self.log(agent("supplier"), "po_expired", json!(action));
                }
            }
        }
    }

    fn stage_planning(&mut self, report: &mut CycleReport) {
        let t = self.world.day();
        let stale: Vec<PlanId> = self
            .plans
            .values()
            .filter(|p| p.state == PlanState::PendingApproval && p.day < t)
            .map(|p| p.id)
            .collect();
        for id in stale {
            self.system_reject(&id.to_string(), format!("stale: outlet needs were computed for day {}", t - 1));
        }
        if self.plans.values().any(|p| matches!(p.state, PlanState::PendingApproval | PlanState::Approved)) {
            return;
        }
        report.plan = self.draft_plan(agent("dc-planning"));
    }

    /// Outlet needs for a delivery landing tomorrow: forecast demand over the sku's target
    /// cover plus safety stock, less stock on hand and inbound.
    fn outlet_needs(&self) -> Vec<OutletNeed> {
        let cfg = self.world.config();
        let z = cfg.policy.service_z;
        let mut needs = Vec::new();
        for o in &cfg.outlets {
            for s in &cfg.skus {
                let holder = Holder::Outlet(o.id.clone());
                let (Some(f), Some(rec)) = (self.forecasts.get(&(holder.clone(), s.id.clone())), self.world.record(&holder, &s.id)) else {
                    continue;
                };
                let days = s.target_cover_days + 1;
                let safety = z * f.sigma_daily * (days as f64).sqrt();
                let target = (f.sum_first(days) + safety - 1e-9).ceil().max(0.0) as i64;
                let position = rec.on_hand as i64 + rec.on_order as i64;
                needs.push(OutletNeed {
                    outlet: o.id.clone(),
                    sku: s.id.clone(),
                    need: (target - position).max(0) as u64,
                    position,
                    demand_to_next_cycle: f.sum_first(2),
                });
            }
        }
        needs
    }

    fn draft_plan(&mut self, actor: Actor) -> Option<PlanId> {
        let t = self.world.day();
        let needs = self.outlet_needs();
        if needs.iter().all(|n| n.need == 0) {
            return None;
        }
        let cfg = self.world.config();
        let available: BTreeMap<SkuId, u64> = cfg.skus.iter().map(|s| (s.id.clone(), self.world.dc_available(&s.id))).collect();
        let id = PlanId(self.next_plan);
        let input = PlanInput {
            id,
            day: t,
            available,
            needs,
            outlets: &cfg.outlets,
            skus: &cfg.skus,
            fleet: &cfg.fleet,
            dc: cfg.dc_location,
        };
        let plan = planning::plan(&input, &cfg.policy, &self.config.consortium);
        let mut e6 = Vec::new();
        for inf in &plan.infeasible {
            let units: u64 = input
                .needs
                .iter()
                .filter(|n| n.outlet == inf.outlet && cfg.skus.iter().any(|s| s.id == n.sku && s.temp_class == inf.temp_class))
                .map(|n| n.need)
                .sum();
            e6.push(AlertCandidate {
                kind: ExceptionKind::E6,
                subject: format!("{}/{}", inf.outlet, inf.temp_class),
                impact: units.max(1) as f64,
                days_to_impact: 1,
                trigger_trace: format!("{} {} delivery left out of {id}: {}", inf.outlet, inf.temp_class, inf.reason),
                recommended_action: format!("add a {} vehicle or widen the delivery window of {}", inf.temp_class, inf.outlet),
            });
        }
        self.relayed.extend(e6);
        if plan.allocations.is_empty() {
            return None;
        }
        self.next_plan += 1;
        for l in &plan.allocations {
            self.world.commit_dc(&l.sku, l.qty);
        }
        let summary = plan.rationale.summary.clone();
        let mut flags = Vec::new();
        if plan.rationale.weights_trace.flagged {
            flags.push("weights_dispersion".to_string());
        }
        if !plan.infeasible.is_empty() {
            flags.push("infeasible_deliveries".to_string());
        }
        if !plan.contingency_notes.is_empty() {
            flags.push("contingency".to_string());
        }
        self.log(actor.clone(), "plan_drafted", json!(plan));
        self.plans.insert(id, plan);
        self.open_approval(actor, ApprovalKind::ReplenishmentPlan, id.to_string(), summary, flags);
        Some(id)
    }

    fn stage_dispatch(&mut self, report: &mut CycleReport) {
        let t = self.world.day();
        let ready: Vec<PlanId> = self.plans.values().filter(|p| p.state == PlanState::Approved).map(|p| p.id).collect();
        for id in ready {
            let plan = self.plans.get_mut(&id).expect("listed above");
            let loads: Vec<_> = plan.allocations.iter().map(|l| (l.outlet.clone(), l.sku.clone(), l.qty)).collect();
            let shipped = self.world.dispatch(id, &loads, t + 1);
            plan.state = PlanState::Dispatched;
            let km = plan.total_km();
            let payload = json!({
                "plan_id": id,
                "total_km": km,
                "routes": plan.routes.len(),
                "units": shipped.iter().map(|s| s.2).sum::<u64>(),
                "arrive_day": t + 1,
            });
            self.kpi.add_dispatch(km);
            report.dispatched.push(id);
            self.log(agent("dc-planning"), "plan_dispatched", payload);
        }
    }

    fn fastest_supplier(&self, sku: &SkuId, except: Option<&str>) -> Option<String> {
        self.world
            .catalog_for(sku)
            .filter(|e| Some(e.supplier_id.as_str()) != except)
            .min_by(|a, b| a.lead_time_days.cmp(&b.lead_time_days).then(a.supplier_id.cmp(&b.supplier_id)))
            .map(|e| format!("{} (lead {}d)", e.supplier_id, e.lead_time_days))
    }

    fn stage_exceptions(&mut self, report: &mut CycleReport) {
        let t = self.world.day();
        let cfg = self.world.config();
        let review = cfg.policy.review_period_days;
        let mut cands = std::mem::take(&mut self.relayed);

        for rec in &self.world.state().inventories {
            let Some(f) = self.forecasts.get(&(rec.holder.clone(), rec.sku_id.clone())) else {
                continue;
            };
            let arrivals = self.arrivals(&rec.holder, &rec.sku_id);
            let (window, remedy) = match &rec.holder {
                Holder::Dc => {
                    let remedy = match self.fastest_supplier(&rec.sku_id, None) {
                        Some(s) => format!("expedite open orders for {} or order from {s}", rec.sku_id),
                        None => format!("expedite open orders for {}", rec.sku_id),
                    };
                    (self.dc_protection(&rec.sku_id), remedy)
                }
                Holder::Outlet(o) => (1 + review, format!("expedite a DC transfer of {} to {o}", rec.sku_id)),
            };
            if let Some(c) = detect_stockout(&rec.holder, &rec.sku_id, rec.on_hand, f, &arrivals, t, window, &remedy) {
                cands.push(c);
            }
        }

        for po in self.pos.values() {
            let alt = self.fastest_supplier(&po.sku, Some(po.supplier_id.as_str()));
            if let Some(c) = detect_supplier_delay(po, self.forecasts.get(&(Holder::Dc, po.sku.clone())), t, alt.as_deref()) {
                cands.push(c);
            }
        }

        for sig in self.signals.iter().filter(|s| s.kind == SignalKind::ExpiryRisk) {
            let Some(rec) = self.world.record(&sig.holder, &sig.sku) else {
                continue;
            };
            let earliest = rec.batches.iter().map(|b| b.expiry_day).min().unwrap_or(t);
            if let Some(c) = detect_expiry(&sig.holder, &sig.sku, sig.at_risk_qty.unwrap_or(0), earliest, t) {
                cands.push(c);
            }
        }

        if let Some(ev) = &self.last_day {
            for l in ev.lines.iter().filter(|l| !l.holder.is_dc()) {
                let Some(f) = self.prev_forecasts.get(&(l.holder.clone(), l.sku.clone())) else {
                    continue;
                };
                if f.start_day != ev.day {
                    continue;
                }
                let mean = f.mean_on(ev.day);
                if let Some(c) = detect_spike(&l.holder, &l.sku, l.sold + l.lost_sales, mean, f.sigma_daily, cfg.policy.spike_k, ev.day) {
                    cands.push(c);
                }
            }
        }

        let outcome = self.alerts.merge(cands, t);
        for id in &outcome.raised {
            let alert = self.alerts.get(*id).expect("just raised").clone();
            let task = ReasonerTask {
                kind: TaskKind::AlertActionText,
                context: json!({
                    "kind": alert.kind,
                    "subject": alert.subject,
                    "trigger": alert.trigger_trace,
                }),
                baseline_hint: TaskValue::Text(alert.recommended_action.clone()),
            };
            let (value, _) = self.config.consortium.decide_or_baseline(&task);
            if let Some(text) = value.as_text().filter(|s| !s.is_empty()) {
                self.alerts.set_action(*id, text.to_string());
            }
            let alert = self.alerts.get(*id).expect("just raised").clone();
            self.log(agent("exceptions"), "alert_raised", json!(alert));
        }
        report.alerts_raised = outcome.raised.clone();
        let payload = json!({
            "day": t,
            "raised": outcome.raised.len(),
            "refreshed": outcome.refreshed.len(),
            "open": self.alerts.open().count(),
        });
        self.log(agent("exceptions"), "exceptions_scanned", payload);
    }

    fn stage_step(&mut self, report: &mut CycleReport) {
        let ev = self.world.step_day();
        self.kpi.apply_day(&ev);
        report.sold = ev.total_sold();
        report.lost_sales = ev.total_lost();
        let payload = json!({
            "day": ev.day,
            "sold": report.sold,
            "lost_sales": report.lost_sales,
            "waste": ev.total_waste(),
            "lines": ev.lines,
        });
        // tick of the record is the day that just closed
        self.audit.append(ev.day, Actor::System, "day_closed", payload);
        self.last_day = Some(ev);
    }

    /// Applies a decision on a Pending approval item and audits it under `actor`.
    pub fn submit_decision(&mut self, item_id: &str, decision: Decision, actor: Actor) -> Result<ApprovalItem, DecisionError> {
        let idx = *self.approval_index.get(item_id).ok_or_else(|| DecisionError::UnknownItem(item_id.to_string()))?;
        if self.approvals[idx].state != ApprovalState::Pending {
            return Err(DecisionError::NotPending(item_id.to_string()));
        }
        let kind = self.approvals[idx].kind;
        let payload_ref = self.approvals[idx].payload_ref.clone();
        let (state, payload_state) = match kind {
            ApprovalKind::PurchaseOrder => self.decide_po(&payload_ref, &decision, &actor)?,
            ApprovalKind::ReplenishmentPlan => self.decide_plan(&payload_ref, &decision)?,
        };
        let t = self.world.day();
        let item = &mut self.approvals[idx];
        item.state = state;
        item.decider = Some(actor.to_string());
        item.decided_tick = Some(t);
        match &decision {
            Decision::Modify { delta } => item.modification = Some(delta.clone()),
            Decision::Reject { reason } => item.note = reason.clone(),
            Decision::Approve => {}
        }
        let item = item.clone();
        self.log(
            actor,
            "approval_decided",
            json!({
                "item_id": item.id,
                "kind": item.kind,
                "decision": decision.label(),
                "state": item.state,
                "payload_state": payload_state,
                "modification": item.modification,
                "note": item.note,
                "decider": item.decider,
            }),
        );
        Ok(item)
    }

    fn decide_po(&mut self, payload_ref: &str, decision: &Decision, actor: &Actor) -> Result<(ApprovalState, String), DecisionError> {
        let id: PoId = payload_ref.parse().map_err(|_| DecisionError::UnknownItem(payload_ref.to_string()))?;
        let moq = {
            let po = self.pos.get(&id).ok_or_else(|| DecisionError::UnknownItem(payload_ref.to_string()))?;
            self.world.catalog_entry(&po.supplier_id, &po.sku).map(|e| e.moq).unwrap_or(0)
        };
        let po = self.pos.get_mut(&id).expect("checked");
        let bad = |e: crate::procurement::TransitionError| DecisionError::InvalidDelta(e.to_string());
        let state = match decision {
            Decision::Approve => {
                po.transition(PoState::Approved).map_err(bad)?;
                ApprovalState::Approved
            }
            Decision::Modify { delta } => {
                let Delta::PoQty { qty } = delta else {
                    return Err(DecisionError::InvalidDelta("allocation edits apply to plans only".into()));
                };
                if *qty < 1 {
                    return Err(DecisionError::InvalidDelta(format!("quantity must be at least 1, got {qty}")));
                }
                let qty = *qty as u64;
                if qty < moq {
                    return Err(DecisionError::InvalidDelta(format!("quantity {qty} below supplier MOQ {moq}")));
                }
                po.transition(PoState::Approved).map_err(bad)?;
                po.rationale.summary.push_str(&format!("; quantity changed from {} to {qty} by {actor}", po.qty));
                po.qty = qty;
                ApprovalState::Modified
            }
            Decision::Reject { .. } => {
                // humans cancel; the engine rejects stale drafts
                let to = if actor.is_human() { PoState::Cancelled } else { PoState::Rejected };
                po.transition(to).map_err(bad)?;
                ApprovalState::Rejected
            }
        };
        Ok((state, po.state.to_string()))
    }

    fn decide_plan(&mut self, payload_ref: &str, decision: &Decision) -> Result<(ApprovalState, String), DecisionError> {
        let id: PlanId = payload_ref.parse().map_err(|_| DecisionError::UnknownItem(payload_ref.to_string()))?;
        if !self.plans.contains_key(&id) {
            return Err(DecisionError::UnknownItem(payload_ref.to_string()));
        }
        let state = match decision {
            Decision::Approve => {
                self.plans.get_mut(&id).expect("checked").state = PlanState::Approved;
                ApprovalState::Approved
            }
            Decision::Modify { delta } => {
                let Delta::PlanAllocations { allocations } = delta else {
                    return Err(DecisionError::InvalidDelta("quantity deltas apply to purchase orders only".into()));
                };
                let mut edits = Vec::with_capacity(allocations.len());
                for e in allocations {
                    if e.qty < 0 {
                        return Err(DecisionError::InvalidDelta(format!("negative quantity {} for {} {}", e.qty, e.outlet, e.sku)));
                    }
                    edits.push(AllocationLine {
                        outlet: e.outlet.clone(),
                        sku: e.sku.clone(),
                        qty: e.qty as u64,
                    });
                }
                let cfg = self.world.config();
                let mut edited = self.plans[&id].clone();
                apply_allocation_edits(&mut edited, &edits, &cfg.outlets, &cfg.skus, &cfg.fleet, cfg.dc_location, &cfg.policy)
                    .map_err(DecisionError::InvalidDelta)?;
                let old = std::mem::replace(self.plans.get_mut(&id).expect("checked"), edited);
                for l in &old.allocations {
                    self.world.release_dc(&l.sku, l.qty);
                }
                let plan = self.plans.get_mut(&id).expect("checked");
                for l in &plan.allocations {
                    self.world.commit_dc(&l.sku, l.qty);
                }
                plan.state = PlanState::Approved;
                ApprovalState::Modified
            }
            Decision::Reject { .. } => {
                let plan = self.plans.get_mut(&id).expect("checked");
                plan.state = PlanState::Rejected;
                for l in &plan.allocations {
                    self.world.release_dc(&l.sku, l.qty);
                }
                ApprovalState::Rejected
            }
        };
        let plan_state = self.plans[&id].state;
        Ok((state, format!("{plan_state:?}")))
    }

    /// Marks an open alert as seen.
    pub fn acknowledge_alert(&mut self, id: AlertId, actor: Actor) -> Result<ExceptionAlert, AlertError> {
        let t = self.world.day();
        let alert = self.alerts.acknowledge(id, t)?.clone();
        self.log(actor, "alert_acknowledged", json!({ "alert_id": id, "kind": alert.kind, "subject": alert.subject }));
        Ok(alert)
    }

    /// Drafts a plan outside the daily cadence, superseding any Pending plan.
    pub fn generate_plan(&mut self, actor: Actor) -> Option<PlanId> {
        if self.forecasts.is_empty() {
            self.stage_forecast();
        }
        let pending: Vec<PlanId> = self.plans.values().filter(|p| p.state == PlanState::PendingApproval).map(|p| p.id).collect();
        for id in pending {
            self.system_reject(&id.to_string(), "superseded by an on-demand plan".into());
        }
        self.draft_plan(actor)
    }
}
