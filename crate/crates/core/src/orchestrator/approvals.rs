//! Approval gate queue entries and human decisions.

use serde::{Deserialize, Serialize};

use crate::domain::{Day, OutletId, SkuId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalKind {
    PurchaseOrder,
    ReplenishmentPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApprovalState {
    Pending,
    Approved,
    Modified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationEdit {
    pub outlet: OutletId,
    pub sku: SkuId,
    /// New quantity; negative values are rejected.
    pub qty: i64,
}

/// Structured change applied before approval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Delta {
    PoQty { qty: i64 },
    PlanAllocations { allocations: Vec<AllocationEdit> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Modify { delta: Delta },
    Reject {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl Decision {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Approve => "approve",
            Decision::Modify { .. } => "modify",
            Decision::Reject { .. } => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalItem {
    /// Same as the payload id, e.g. `PO-3` or `PLAN-2`.
    pub id: String,
    pub kind: ApprovalKind,
    pub payload_ref: String,
    pub created_tick: Day,
    pub state: ApprovalState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modification: Option<Delta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_tick: Option<Day>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub summary: String,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecisionError {
    #[error("unknown approval item {0}")]
    UnknownItem(String),
    #[error("approval item {0} is not pending")]
    NotPending(String),
    #[error("invalid delta: {0}")]
    InvalidDelta(String),
}
