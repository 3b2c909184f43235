use replen_core::domain::{AlertId, Holder, SkuId};
use replen_core::exceptions::AlertState;
use replen_core::orchestrator::{Actor, ApprovalKind, Decision, Delta, EngineHandle};
use serde::Serialize;
use serde_json::{json, Value};

use super::Workflow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub workflow: Workflow,
    pub name: &'static str,
    pub description: &'static str,
    pub input_schema: Value,
    /// Write tools change engine state and are audited.
    pub writes: bool,
}

impl ToolDescriptor {
    /// The `tools/list` entry.
    pub fn listing(&self) -> Value {
        json!({ "name": self.name, "description": self.description, "inputSchema": self.input_schema })
    }
}

const DEFAULT_DECIDER: &str = "mcp-client";

fn object(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false,
    })
}

fn id_prop(prefix: &str) -> Value {
    json!({ "type": "string", "pattern": format!("^{prefix}-[0-9]+$") })
}

fn decider_prop() -> Value {
    json!({ "type": "string", "minLength": 1, "description": "Name recorded as the human decider" })
}

fn tool(workflow: Workflow, name: &'static str, description: &'static str, writes: bool, input_schema: Value) -> ToolDescriptor {
    ToolDescriptor {
        workflow,
        name,
        description,
        input_schema,
        writes,
    }
}

/// The fixed tool set of a workflow server.
pub fn registry(workflow: Workflow) -> Vec<ToolDescriptor> {
    use Workflow::*;
    match workflow {
        Procurement => vec![
            tool(
                workflow,
                "list_pending_orders",
                "Purchase orders waiting for approval, with their rationale",
                false,
                object(json!({}), &[]),
            ),
            tool(
                workflow,
                "approve_order",
                "Approve a pending purchase order, optionally changing its quantity",
                true,
                object(
                    json!({
                        "id": id_prop("PO"),
                        "qty": { "type": "integer", "minimum": 1 },
                        "decider": decider_prop(),
                    }),
                    &["id"],
                ),
            ),
            tool(
                workflow,
                "reject_order",
                "Reject a pending purchase order",
                true,
                object(
                    json!({
                        "id": id_prop("PO"),
                        "reason": { "type": "string" },
                        "decider": decider_prop(),
                    }),
                    &["id"],
                ),
            ),
            tool(workflow, "get_order", "One purchase order by id", false, object(json!({ "id": id_prop("PO") }), &["id"])),
        ],
        Planning => vec![
            tool(
                workflow,
                "generate_plan",
                "Draft a DC replenishment plan now instead of waiting for the next cycle",
                true,
                object(json!({ "decider": decider_prop() }), &[]),
            ),
            tool(
                workflow,
                "get_plan",
                "One replenishment plan with allocations and routes",
                false,
                object(json!({ "id": id_prop("PLAN") }), &["id"]),
            ),
            tool(
                workflow,
                "approve_plan",
                "Approve a pending replenishment plan for dispatch",
                true,
                object(json!({ "id": id_prop("PLAN"), "decider": decider_prop() }), &["id"]),
            ),
        ],
        Exceptions => vec![
            tool(
                workflow,
                "list_alerts",
                "Alerts ranked by priority; open ones only unless all is set",
                false,
                object(json!({ "all": { "type": "boolean" } }), &[]),
            ),
            tool(workflow, "get_alert", "One alert by id", false, object(json!({ "id": id_prop("AL") }), &["id"])),
            tool(
                workflow,
                "acknowledge_alert",
                "Acknowledge an open alert",
                true,
                object(json!({ "id": id_prop("AL"), "decider": decider_prop() }), &["id"]),
            ),
        ],
        Forecasting => vec![tool(
            workflow,
            "get_forecast",
            "Latest demand forecast for a SKU at an outlet or the DC",
            false,
            object(
                json!({
                    "sku": { "type": "string", "minLength": 1 },
                    "holder": { "type": "string", "minLength": 1, "description": "Outlet id or DC (default)" },
                }),
                &["sku"],
            ),
        )],
        Inventory => vec![tool(
            workflow,
            "get_signals",
            "Current replenishment signals, optionally for one SKU or holder",
            false,
            object(
                json!({
                    "sku": { "type": "string", "minLength": 1 },
                    "holder": { "type": "string", "minLength": 1 },
                }),
                &[],
            ),
        )],
        Supplier => vec![tool(
            workflow,
            "get_interactions",
            "Supplier follow-up logs, optionally for one purchase order",
            false,
            object(json!({ "po_id": id_prop("PO") }), &[]),
        )],
    }
}

fn str_arg<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn decider(args: &Value) -> Actor {
    Actor::human(str_arg(args, "decider").unwrap_or(DEFAULT_DECIDER))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("engine types serialize")
}

/// Runs a tool whose arguments already passed schema validation. `Err` carries
/// an application error reported to the client as a tool error result.
pub(super) fn invoke(engine: &EngineHandle, name: &str, args: &Value) -> Result<Value, String> {
    let id = str_arg(args, "id").unwrap_or_default();
    match name {
        "list_pending_orders" => {
            let view = engine.snapshot();
            let pending: Vec<Value> = view
                .pending_approvals()
                .filter(|a| a.kind == ApprovalKind::PurchaseOrder)
                .filter_map(|a| view.approval_payload(a))
                .collect();
            Ok(Value::Array(pending))
        }
        "approve_order" | "approve_plan" | "reject_order" => {
            let decision = match (name, args.get("qty").and_then(Value::as_i64)) {
                ("reject_order", _) => Decision::Reject {
                    reason: str_arg(args, "reason").map(str::to_string),
                },
                ("approve_order", Some(qty)) => Decision::Modify {
                    delta: Delta::PoQty { qty },
                },
                _ => Decision::Approve,
            };
            engine.decide(id, decision, decider(args)).map(|item| to_value(&item)).map_err(|e| e.to_string())
        }
        "get_order" => engine.snapshot().purchase_order(id).map(to_value).ok_or_else(|| format!("unknown purchase order {id}")),
        "generate_plan" => match engine.generate_plan(decider(args)).map_err(|e| e.to_string())? {
            Some(plan) => Ok(json!({ "plan_id": plan })),
            None => Ok(json!({ "plan_id": null, "note": "no outlet needs replenishment" })),
        },
        "get_plan" => engine.snapshot().plan(id).map(to_value).ok_or_else(|| format!("unknown plan {id}")),
        "list_alerts" => {
            let all = args.get("all").and_then(Value::as_bool).unwrap_or(false);
            let view = engine.snapshot();
            Ok(Value::Array(
                view.alerts.iter().filter(|a| all || a.state == AlertState::Open).map(to_value).collect(),
            ))
        }
        "get_alert" => engine.snapshot().alert(id).map(to_value).ok_or_else(|| format!("unknown alert {id}")),
        "acknowledge_alert" => {
            let alert: AlertId = id.parse().map_err(|e| format!("{e}"))?;
            engine.ack_alert(alert, decider(args)).map(|a| to_value(&a)).map_err(|e| e.to_string())
        }
        "get_forecast" => {
            let sku = SkuId::from(str_arg(args, "sku").unwrap_or_default());
            let holder = Holder::from(str_arg(args, "holder").unwrap_or(Holder::DC_TAG));
            engine
                .snapshot()
                .forecast(&holder, &sku)
                .map(to_value)
                .ok_or_else(|| format!("no forecast for {sku} at {holder}"))
        }
        "get_signals" => {
            let sku = str_arg(args, "sku");
            let holder = str_arg(args, "holder").map(Holder::from);
            let view = engine.snapshot();
            Ok(Value::Array(
                view.signals
                    .iter()
                    .filter(|s| sku.is_none_or(|k| s.sku.as_str() == k))
                    .filter(|s| holder.as_ref().is_none_or(|h| &s.holder == h))
                    .map(to_value)
                    .collect(),
            ))
        }
        "get_interactions" => {
            let po = str_arg(args, "po_id");
            let view = engine.snapshot();
            let found: Vec<Value> = view
                .interactions
                .iter()
                .filter(|i| po.is_none_or(|p| i.po_id.to_string() == p))
                .map(to_value)
                .collect();
            match po {
                Some(p) if found.is_empty() => Err(format!("no supplier interaction for {p}")),
                _ => Ok(Value::Array(found)),
            }
        }
        other => Err(format!("unknown tool: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    #[test]
    fn names_are_unique_per_workflow() {
        for w in Workflow::ALL {
            let tools = registry(w);
            let names: BTreeSet<_> = tools.iter().map(|t| t.name).collect();
            assert_eq!(names.len(), tools.len());
            assert!(tools.iter().all(|t| t.workflow == w));
        }
    }

    #[test]
    fn schemas_compile() {
        for w in Workflow::ALL {
            for t in registry(w) {
                jsonschema::validator_for(&t.input_schema).unwrap();
            }
        }
    }

    #[test]
    fn registry_sizes() {
        let sizes: Vec<usize> = Workflow::ALL.iter().map(|w| registry(*w).len()).collect();
        assert_eq!(sizes, [4, 3, 3, 1, 1, 1]);
    }
}
