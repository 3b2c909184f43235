use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "replen", version, about = "Agentic supermarket replenishment: simulate, serve and supervise")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic world generation.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Headless simulation runs.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Run the engine behind the HTTP API and, optionally, the MCP servers.
    Serve(ServeArgs),
    /// Inspect and decide approval items on a running server.
    #[command(subcommand)]
    Approvals(ApprovalsCmd),
    /// Inspect and acknowledge alerts on a running server.
    #[command(subcommand)]
    Alerts(AlertsCmd),
    /// Replenishment plans on a running server.
    #[command(subcommand)]
    Plan(PlanCmd),
    /// KPIs from a running server or recomputed from an audit file.
    Kpis(KpisArgs),
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Write a world configuration as JSON.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    pub outlets: usize,
    #[arg(long, default_value_t = 50)]
    pub skus: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Deterministic demand with reliable suppliers.
    #[arg(long)]
    pub zero_variance: bool,
    /// Lognormal demand noise applied to every outlet-sku pair.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimCmd {
    /// Run the daily cycle for a number of days.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Run configuration or world file (JSON).
    #[arg(long, env = "REPLEN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the world seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Approve every gated item automatically.
    #[arg(long)]
    pub auto_approve: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub days: u32,
    #[command(flatten)]
    pub world: WorldArgs,
    /// Write the audit log as JSON lines.
    #[arg(long)]
    pub audit_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McpTransport {
    Stdio,
    Http,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value_t = 8080)]
    pub http_port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Also expose the workflow MCP servers.
    #[arg(long)]
    pub mcp: bool,
    #[arg(long, value_enum, default_value_t = McpTransport::Http)]
    pub mcp_transport: McpTransport,
    /// Workflow served on stdio.
    #[arg(long, required_if_eq("mcp_transport", "stdio"))]
    pub workflow: Option<String>,
    /// First of six consecutive ports, one per workflow, in the order procurement,
    /// planning, exceptions, forecasting, inventory, supplier.
    #[arg(long, default_value_t = 8701)]
    pub mcp_port: u16,
    /// Advance one day every this many milliseconds; 0 steps only on request.
    #[arg(long, default_value_t = 0)]
    pub tick_ms: u64,
    /// Stop advancing after this many days.
    #[arg(long)]
    pub max_days: Option<u32>,
    #[arg(long)]
    pub paused: bool,
    /// Write the audit log here on shutdown.
    #[arg(long)]
    pub audit_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServerArgs {
    /// Base URL of a running `replen serve`.
    #[arg(long, env = "REPLEN_SERVER", default_value = DEFAULT_SERVER)]
    pub server: String,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    pub id: String,
    #[arg(long, default_value = "cli")]
    pub decider: String,
    #[command(flatten)]
    pub server: ServerArgs,
}

#[derive(Debug, Subcommand)]
pub enum ApprovalsCmd {
    List {
        /// pending, approved, modified, rejected or all.
        #[arg(long, default_value = "pending")]
        state: String,
        #[command(flatten)]
        server: ServerArgs,
    },
    Approve {
        #[command(flatten)]
        decide: DecideArgs,
        /// Approve a purchase order with this quantity instead.
        #[arg(long)]
        qty: Option<i64>,
    },
    Reject {
        #[command(flatten)]
        decide: DecideArgs,
        #[arg(long)]
        reason: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AlertsCmd {
    List {
        /// Include acknowledged and resolved alerts.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        server: ServerArgs,
    },
    Ack {
        #[command(flatten)]
        decide: DecideArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum PlanCmd {
    Show {
        id: String,
        #[command(flatten)]
        server: ServerArgs,
    },
    /// Draft a plan now instead of waiting for the next cycle.
    Generate {
        #[arg(long, default_value = "cli")]
        decider: String,
        #[command(flatten)]
        server: ServerArgs,
    },
}

#[derive(Debug, Args)]
pub struct KpisArgs {
    /// Recompute from an audit log instead of asking the server.
    #[arg(long)]
    pub from_audit: Option<PathBuf>,
    #[command(flatten)]
    pub server: ServerArgs,
}
