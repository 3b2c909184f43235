//! Daily pipeline, approval gates, audit log and KPIs.

pub mod approvals;
pub mod audit;
pub mod engine;
pub mod handle;
pub mod kpi;
pub mod view;

pub use approvals::{AllocationEdit, ApprovalItem, ApprovalKind, ApprovalState, Decision, DecisionError, Delta};
pub use audit::{Actor, AuditError, AuditLog, AuditRecord};
pub use engine::{CycleReport, Engine, EngineConfig, SupplierChannel, STAGES};
pub use handle::{Command, CommandError, EngineHandle, HandleOptions, Reply};
pub use kpi::{replay, KpiAccumulator, KpiReport};
pub use view::StateView;
