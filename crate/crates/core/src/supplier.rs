//! Supplier coordination: transmission, follow-ups, response reconciliation.

use serde::{Deserialize, Serialize};

use crate::domain::{Day, PoId, PolicyParams};
use crate::procurement::{PoState, PurchaseOrder, TransitionError};
use crate::sim::{ResponseKind, SimError, SupplierResponse, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionStatus {
    AwaitingResponse,
    Responded,
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub day: Day,
    pub event: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplierInteraction {
    pub po_id: PoId,
    pub sent_day: Day,
    pub followups_sent: u32,
    pub last_action_day: Day,
    pub status: InteractionStatus,
    pub log: Vec<LogEntry>,
}

impl SupplierInteraction {
    fn push(&mut self, day: Day, event: &str, detail: String) {
        self.log.push(LogEntry {
            day,
            event: event.to_string(),
            detail,
        });
        self.last_action_day = day;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SupplierError {
    #[error("{po} is {state}, expected {expected}")]
    WrongState { po: PoId, state: PoState, expected: PoState },
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Sends an approved PO to its supplier and opens the interaction record.
pub fn transmit(po: &mut PurchaseOrder, world: &mut World) -> Result<SupplierInteraction, SupplierError> {
    if po.state != PoState::Approved {
        return Err(SupplierError::WrongState {
            po: po.id,
            state: po.state,
            expected: PoState::Approved,
        });
    }
    po.transition(PoState::Transmitted)?;
    let respond_day = world.schedule_response(po)?;
    let day = world.day();
    Ok(SupplierInteraction {
        po_id: po.id,
        sent_day: day,
        followups_sent: 0,
        last_action_day: day,
        status: InteractionStatus::AwaitingResponse,
        log: vec![LogEntry {
            day,
            event: "transmitted".into(),
            detail: format!("{} x {} to {}, response expected day {respond_day}", po.qty, po.sku, po.supplier_id),
        }],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FollowupAction {
    Followup { po_id: PoId, number: u32 },
    Escalate { po_id: PoId, followups_sent: u32 },
}

/// Follow-ups and escalations due today. Pure over the interaction snapshot.
pub fn tick(interactions: &[SupplierInteraction], day: Day, policy: &PolicyParams) -> Vec<FollowupAction> {
    interactions
        .iter()
        .filter(|i| i.status == InteractionStatus::AwaitingResponse)
        .filter(|i| day.saturating_sub(i.last_action_day) >= policy.followup_window_days)
        .map(|i| {
            if i.followups_sent < policy.max_followups {
                FollowupAction::Followup {
                    po_id: i.po_id,
                    number: i.followups_sent + 1,
                }
            } else {
                FollowupAction::Escalate {
                    po_id: i.po_id,
                    followups_sent: i.followups_sent,
                }
            }
        })
        .collect()
}

/// Records a follow-up or escalation. Escalation expires the PO.
pub fn apply_action(action: &FollowupAction, interaction: &mut SupplierInteraction, po: &mut PurchaseOrder, day: Day) -> Result<(), SupplierError> {
    match action {
        FollowupAction::Followup { number, .. } => {
            interaction.followups_sent = *number;
            interaction.push(day, "followup", format!("follow-up #{number} sent, no answer since day {}", interaction.sent_day));
        }
        FollowupAction::Escalate { followups_sent, .. } => {
            po.transition(PoState::Expired)?;
            interaction.status = InteractionStatus::Escalated;
            interaction.push(day, "escalated", format!("no answer after {followups_sent} follow-ups; PO expired"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEffects {
    pub po_id: PoId,
    pub state: PoState,
    /// Delivery booked into the DC pipeline as `(arrive_day, qty)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery: Option<(Day, u64)>,
    /// Units the supplier will not deliver; feeds a fresh procurement pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortfall: Option<u64>,
    /// Days the promised date falls after need_by.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub late_by: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<String>,
    /// True when the supplier stayed silent and the PO keeps waiting.
    pub silent: bool,
}

/// Reconciles a supplier answer with the PO and books the confirmed quantity.
pub fn apply_response(
    po: &mut PurchaseOrder,
    interaction: &mut SupplierInteraction,
    response: &SupplierResponse,
    world: &mut World,
) -> Result<ResponseEffects, SupplierError> {
    if po.state != PoState::Transmitted {
        return Err(SupplierError::WrongState {
            po: po.id,
            state: po.state,
            expected: PoState::Transmitted,
        });
    }
    let day = response.day;
    let mut fx = ResponseEffects {
        po_id: po.id,
        state: po.state,
        delivery: None,
        shortfall: None,
        late_by: None,
        rejection: None,
        silent: false,
    };
    let confirmed = match &response.kind {
        ResponseKind::NoResponse => {
            fx.silent = true;
            interaction.log.push(LogEntry {
                day,
                event: "no_response".into(),
                detail: "supplier did not answer".into(),
            });
            return Ok(fx);
        }
        ResponseKind::Rejected { reason } => {
            po.transition(PoState::Rejected)?;
            interaction.status = InteractionStatus::Responded;
            interaction.push(day, "rejected", reason.clone());
            world.record_supplier_outcome(&po.supplier_id, false);
            fx.state = po.state;
            fx.rejection = Some(reason.clone());
            return Ok(fx);
        }
        ResponseKind::Confirmed => po.qty,
        ResponseKind::Partial { confirmed_qty } => (*confirmed_qty).min(po.qty),
    };
    let arrive = response.delivery_day.unwrap_or(po.need_by_day).max(day + 1);
    if confirmed < po.qty {
        po.transition(PoState::PartiallyConfirmed)?;
        fx.shortfall = Some(po.qty - confirmed);
    } else {
        po.transition(PoState::Confirmed)?;
    }
    po.confirmed_qty = Some(confirmed);
    po.promised_day = Some(arrive);
    world.schedule_delivery(po.id, &po.sku, confirmed, arrive);
    let on_time = arrive <= po.need_by_day;
    world.record_supplier_outcome(&po.supplier_id, on_time);
    if !on_time {
        fx.late_by = Some(arrive - po.need_by_day);
    }
    interaction.status = InteractionStatus::Responded;
    interaction.push(
        day,
        if confirmed < po.qty { "partially_confirmed" } else { "confirmed" },
        format!("{confirmed}/{} units, delivery day {arrive} (need by {})", po.qty, po.need_by_day),
    );
    fx.state = po.state;
    fx.delivery = Some((arrive, confirmed));
    Ok(fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interaction(sent: Day) -> SupplierInteraction {
        SupplierInteraction {
            po_id: PoId(1),
            sent_day: sent,
            followups_sent: 0,
            last_action_day: sent,
            status: InteractionStatus::AwaitingResponse,
            log: vec![],
        }
    }

    #[test]
    fn first_followup_on_window_boundary() {
        let p = PolicyParams::default();
        let i = interaction(0);
        assert!(tick(std::slice::from_ref(&i), 1, &p).is_empty());
        assert_eq!(
            tick(std::slice::from_ref(&i), 2, &p),
            vec![FollowupAction::Followup { po_id: PoId(1), number: 1 }]
        );
    }

    #[test]
    fn escalates_after_third_window() {
        let p = PolicyParams::default();
        let mut i = interaction(0);
        let mut escalated_on = None;
        for day in 1..=10 {
            for a in tick(std::slice::from_ref(&i), day, &p) {
                match a {
                    FollowupAction::Followup { number, .. } => {
                        i.followups_sent = number;
                        i.last_action_day = day;
                    }
                    FollowupAction::Escalate { .. } => {
                        i.status = InteractionStatus::Escalated;
                        escalated_on.get_or_insert(day);
                    }
                }
            }
        }
        assert_eq!(i.followups_sent, 2);
        // sent_day + (max_followups + 1) * window
        assert_eq!(escalated_on, Some(6));
    }

    #[test]
    fn responded_interactions_are_left_alone() {
        let mut i = interaction(0);
        i.status = InteractionStatus::Responded;
        assert!(tick(&[i], 9, &PolicyParams::default()).is_empty());
    }
}
