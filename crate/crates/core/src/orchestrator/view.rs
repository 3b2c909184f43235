//! Immutable engine snapshot served to readers.

use serde::{Deserialize, Serialize};

use super::approvals::{ApprovalItem, ApprovalState};
use super::kpi::KpiReport;
use crate::domain::{Day, Holder, InventoryRecord, SkuId};
use crate::exceptions::{AlertState, ExceptionAlert};
use crate::forecast::ForecastSeries;
use crate::inventory::ReplenishmentSignal;
use crate::planning::ReplenishmentPlan;
use crate::procurement::PurchaseOrder;
use crate::supplier::SupplierInteraction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub day: Day,
    pub auto_approve: bool,
    pub consortium: Vec<String>,
    pub kpis: KpiReport,
    pub approvals: Vec<ApprovalItem>,
    pub purchase_orders: Vec<PurchaseOrder>,
    pub plans: Vec<ReplenishmentPlan>,
    /// Ranked by priority.
    pub alerts: Vec<ExceptionAlert>,
    pub interactions: Vec<SupplierInteraction>,
    pub signals: Vec<ReplenishmentSignal>,
    pub forecasts: Vec<ForecastSeries>,
    pub inventories: Vec<InventoryRecord>,
    pub audit_len: u64,
}

impl StateView {
    pub fn pending_approvals(&self) -> impl Iterator<Item = &ApprovalItem> {
        self.approvals.iter().filter(|a| a.state == ApprovalState::Pending)
    }

    pub fn open_alerts(&self) -> impl Iterator<Item = &ExceptionAlert> {
        self.alerts.iter().filter(|a| a.state == AlertState::Open)
    }

    pub fn approval(&self, id: &str) -> Option<&ApprovalItem> {
        self.approvals.iter().find(|a| a.id == id)
    }

    pub fn purchase_order(&self, id: &str) -> Option<&PurchaseOrder> {
        self.purchase_orders.iter().find(|p| p.id.to_string() == id)
    }

    pub fn plan(&self, id: &str) -> Option<&ReplenishmentPlan> {
        self.plans.iter().find(|p| p.id.to_string() == id)
    }

    pub fn alert(&self, id: &str) -> Option<&ExceptionAlert> {
        self.alerts.iter().find(|a| a.id.to_string() == id)
    }

    pub fn forecast(&self, holder: &Holder, sku: &SkuId) -> Option<&ForecastSeries> {
        self.forecasts.iter().find(|f| &f.holder == holder && &f.sku == sku)
    }

    /// The PO or plan an approval item refers to, as JSON.
    pub fn approval_payload(&self, item: &ApprovalItem) -> Option<serde_json::Value> {
        self.purchase_order(&item.payload_ref)
            .map(|p| serde_json::to_value(p).ok())
            .or_else(|| self.plan(&item.payload_ref).map(|p| serde_json::to_value(p).ok()))
            .flatten()
    }
}
