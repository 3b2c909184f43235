//! Network front ends for the replenishment engine: per-workflow MCP servers,
//! the operator HTTP API and HTTP adapters for remote reasoners and suppliers.

pub mod api;
pub mod mcp;
pub mod remote;
