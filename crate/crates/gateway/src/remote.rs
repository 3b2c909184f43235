//! HTTP adapters for reasoners and suppliers hosted outside the process.
//!
//! A remote reasoner answers `POST {base}/propose` with a `Proposal` for the
//! posted `ReasonerTask`. A remote supplier answers `POST {url}?day=N`, whose
//! body is the purchase order, with a `SupplierResponse`.

use std::time::Duration;

use replen_core::consortium::{Proposal, Reasoner, ReasonerError, ReasonerTask};
use replen_core::domain::Day;
use replen_core::orchestrator::SupplierChannel;
use replen_core::procurement::PurchaseOrder;
use replen_core::sim::SupplierResponse;
use ureq::Agent;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

#[derive(Debug, Clone)]
pub struct RemoteReasoner {
    id: String,
    url: String,
    agent: Agent,
}

impl RemoteReasoner {
    pub fn new(id: impl Into<String>, base_url: &str, timeout: Duration) -> Self {
        Self {
            id: id.into(),
            url: format!("{}/propose", base_url.trim_end_matches('/')),
            agent: agent(timeout),
        }
    }
}

impl Reasoner for RemoteReasoner {
    fn id(&self) -> &str {
        &self.id
    }

    fn propose(&self, task: &ReasonerTask) -> Result<Proposal, ReasonerError> {
        let mut resp = self.agent.post(&self.url).send_json(task).map_err(|e| match e {
            ureq::Error::Timeout(_) => ReasonerError::Timeout,
            other => ReasonerError::Unavailable(other.to_string()),
        })?;
        let mut p: Proposal = resp.body_mut().read_json().map_err(|e| ReasonerError::Malformed(e.to_string()))?;
        // the proposal is attributed to the configured id, whatever the server calls itself
        p.reasoner_id = self.id.clone();
        Ok(p)
    }

    fn is_remote(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct RemoteSupplier {
    url: String,
    agent: Agent,
}

impl RemoteSupplier {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            url: url.to_string(),
            agent: agent(timeout),
        }
    }
}

impl SupplierChannel for RemoteSupplier {
    fn respond(&self, po: &PurchaseOrder, day: Day) -> Result<SupplierResponse, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .query("day", day.to_string())
            .send_json(po)
            .map_err(|e| format!("supplier endpoint: {e}"))?;
        let r: SupplierResponse = resp.body_mut().read_json().map_err(|e| format!("supplier response: {e}"))?;
        if r.po_id != po.id {
            return Err(format!("supplier answered for {} instead of {}", r.po_id, po.id));
        }
        Ok(r)
    }
}
