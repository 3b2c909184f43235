//! Agentic replenishment engine: simulator, agents, consortium and orchestrator.

pub mod consortium;
pub mod domain;
pub mod exceptions;
pub mod forecast;
pub mod inventory;
pub mod orchestrator;
pub mod planning;
pub mod procurement;
pub mod serde_util;
pub mod sim;
pub mod supplier;
