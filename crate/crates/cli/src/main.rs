mod args;
mod client;
mod config;
mod output;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::Parser;
use replen_core::orchestrator::{replay, AuditLog, EngineHandle, HandleOptions};
use replen_core::sim::{generate_scenario, ScenarioSpec};
use replen_gateway::mcp::{transport, McpServer, Workflow};
use serde_json::{json, Value};
use tokio::sync::watch;

use args::{AlertsCmd, ApprovalsCmd, Cli, Command, KpisArgs, McpTransport, PlanCmd, RunArgs, ScenarioCmd, ServeArgs, SimCmd};
use client::Client;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: flags, files or a request the server refused.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn io_err<'a>(ctx: &str, path: &'a Path) -> impl FnOnce(io::Error) -> CliError + 'a {
    let ctx = ctx.to_string();
    move |e| CliError::Runtime(format!("{ctx} {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let json = cli.json;
    match cli.command {
        Command::Scenario(ScenarioCmd::Generate(a)) => {
            let mut spec = ScenarioSpec::new(a.outlets, a.skus, a.seed);
            if a.zero_variance {
                spec = spec.zero_variance();
            }
            if let Some(sigma) = a.noise {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(CliError::Validation(format!("--noise must be a non-negative number, got {sigma}")));
                }
                spec = spec.with_noise(sigma);
            }
            let text = serde_json::to_string_pretty(&generate_scenario(&spec)).expect("world config serializes");
            match a.out {
                Some(p) => fs::write(&p, text + "\n").map_err(io_err("cannot write", &p)),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Sim(SimCmd::Run(a)) => sim_run(a, json),
        Command::Serve(a) => serve(a),
        Command::Approvals(cmd) => approvals(cmd, json),
        Command::Alerts(cmd) => alerts(cmd, json),
        Command::Plan(cmd) => plan(cmd, json),
        Command::Kpis(a) => kpis(a, json),
    }
}

fn emit(value: &Value, json: bool, render: fn(&Value) -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
    } else {
        print!("{}", render(value));
    }
}

fn write_audit(log: &AuditLog, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err("cannot create", path))?;
    let mut out = BufWriter::new(file);
    log.write_jsonl(&mut out).and_then(|_| out.flush()).map_err(io_err("cannot write", path))
}

fn sim_run(a: RunArgs, json: bool) -> Result<(), CliError> {
    let mut engine = config::build_engine(&a.world)?;
    let mut stage_errors = 0usize;
    for _ in 0..a.days {
        let report = engine.run_cycle();
        for e in &report.stage_errors {
            eprintln!("day {}: {e}", report.day);
        }
        stage_errors += report.stage_errors.len();
    }
    if let Some(p) = &a.audit_out {
        write_audit(engine.audit(), p)?;
    }
    let summary = json!({
        "days": engine.day(),
        "kpis": engine.kpis(),
        "audit_records": engine.audit().len(),
        "audit_digest": engine.audit().chain_digest(),
        "stage_errors": stage_errors,
    });
    if json {
        emit(&summary, true, output::kpis);
    } else {
        print!("{}", output::kpis(&summary["kpis"]));
        println!("audit  {} records, digest {}", summary["audit_records"], engine.audit().chain_digest());
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let stdio_workflow = match (a.mcp, a.mcp_transport, &a.workflow) {
        (true, McpTransport::Stdio, Some(w)) => Some(w.parse::<Workflow>().map_err(|e| CliError::Validation(e.to_string()))?),
        _ => None,
    };
    let engine = config::build_engine(&a.world)?;
    let handle = Arc::new(EngineHandle::spawn(
        engine,
        HandleOptions {
            tick_ms: (a.tick_ms > 0).then_some(a.tick_ms),
            start_paused: a.paused,
            max_days: a.max_days,
        },
    ));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start runtime: {e}")))?;
    rt.block_on(serve_all(&a, stdio_workflow, handle.clone()))?;
    // Stdin may still be held by the blocking MCP reader; do not wait for it.
    rt.shutdown_timeout(Duration::from_secs(1));

    let engine = handle.shutdown().ok_or_else(|| CliError::Runtime("engine thread was lost".into()))?;
    eprintln!("stopped at day {} with {} audit records", engine.day(), engine.audit().len());
    if let Some(p) = &a.audit_out {
        write_audit(engine.audit(), p)?;
        eprintln!("audit log written to {}", p.display());
    }
    Ok(())
}

async fn bind(host: &str, port: u16) -> Result<tokio::net::TcpListener, CliError> {
    let addr = format!("{host}:{port}");
    tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| CliError::Runtime(format!("cannot listen on {addr}: {e}")))
}

async fn serve_all(a: &ServeArgs, stdio_workflow: Option<Workflow>, handle: Arc<EngineHandle>) -> Result<(), CliError> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let mut servers = tokio::task::JoinSet::new();

    let mut listeners = vec![(bind(&a.bind, a.http_port).await?, replen_gateway::api::router(handle.clone()), "api".to_string())];
    if a.mcp && a.mcp_transport == McpTransport::Http {
        for (i, w) in Workflow::ALL.into_iter().enumerate() {
            let port = a.mcp_port.checked_add(i as u16).ok_or_else(|| CliError::Validation("--mcp-port too high".into()))?;
            let server = Arc::new(McpServer::new(w, handle.clone()));
            listeners.push((bind(&a.bind, port).await?, transport::router(server), format!("mcp {}", w.name())));
        }
    }
    for (listener, app, name) in listeners {
        let addr: SocketAddr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        eprintln!("{name} listening on http://{addr}");
        let mut rx = stop_rx.clone();
        servers.spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.wait_for(|stop| *stop).await;
                })
                .await
        });
    }

    if let Some(w) = stdio_workflow {
        eprintln!("mcp {} on stdio", w.name());
        let server = McpServer::new(w, handle.clone());
        let tx = stop_tx.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = transport::serve_stdio(&server) {
                eprintln!("stdio transport: {e}");
            }
            let _ = tx.send(true);
        });
    }

    let mut stopped = stop_rx.clone();
    tokio::select! {
        r = tokio::signal::ctrl_c() => {
            if let Err(e) = r {
                eprintln!("cannot listen for ctrl-c: {e}");
            }
        }
        _ = stopped.wait_for(|stop| *stop) => {}
    }
    eprintln!("shutting down");
    let _ = stop_tx.send(true);
    // Open SSE streams keep connections alive, so graceful shutdown is bounded.
    let drained = tokio::time::timeout(Duration::from_secs(5), async {
        while let Some(r) = servers.join_next().await {
            if let Ok(Err(e)) = r {
                eprintln!("server error: {e}");
            }
        }
    })
    .await;
    if drained.is_err() {
        servers.abort_all();
    }
    Ok(())
}

fn approvals(cmd: ApprovalsCmd, json: bool) -> Result<(), CliError> {
    match cmd {
        ApprovalsCmd::List { state, server } => {
            let v = Client::new(&server.server).get(&format!("/api/approvals?state={state}"))?;
            emit(&v, json, output::approvals);
        }
        ApprovalsCmd::Approve { decide, qty } => {
            let body = match qty {
                Some(q) => json!({ "decision": "modify", "delta": { "qty": q }, "decider": decide.decider }),
                None => json!({ "decision": "approve", "decider": decide.decider }),
            };
            let v = Client::new(&decide.server.server).post(&format!("/api/approvals/{}/decision", decide.id), &body)?;
            emit(&v, json, output::approval);
        }
        ApprovalsCmd::Reject { decide, reason } => {
            let body = json!({
                "decision": "reject",
                "reason": reason.unwrap_or_else(|| "rejected from the command line".into()),
                "decider": decide.decider,
            });
            let v = Client::new(&decide.server.server).post(&format!("/api/approvals/{}/decision", decide.id), &body)?;
            emit(&v, json, output::approval);
        }
    }
    Ok(())
}

fn alerts(cmd: AlertsCmd, json: bool) -> Result<(), CliError> {
    match cmd {
        AlertsCmd::List { all, server } => {
            let path = if all { "/api/alerts" } else { "/api/alerts?state=open" };
            let v = Client::new(&server.server).get(path)?;
            emit(&v, json, output::alerts);
        }
        AlertsCmd::Ack { decide } => {
            let body = json!({ "decider": decide.decider });
            let v = Client::new(&decide.server.server).post(&format!("/api/alerts/{}/ack", decide.id), &body)?;
            emit(&v, json, output::alert);
        }
    }
    Ok(())
}

fn plan(cmd: PlanCmd, json: bool) -> Result<(), CliError> {
    match cmd {
        PlanCmd::Show { id, server } => {
            let v = Client::new(&server.server).get(&format!("/api/plans/{id}"))?;
            emit(&v, json, output::plan);
        }
        PlanCmd::Generate { decider, server } => {
            let client = Client::new(&server.server);
            let v = client.post("/api/plans/generate", &json!({ "decider": decider }))?;
            match v["plan_id"].as_str() {
                Some(id) => emit(&client.get(&format!("/api/plans/{id}"))?, json, output::plan),
                None if json => emit(&v, true, output::plan),
                None => println!("nothing to plan: no outlet needs stock"),
            }
        }
    }
    Ok(())
}

fn kpis(a: KpisArgs, json: bool) -> Result<(), CliError> {
    let v = match &a.from_audit {
        Some(p) => {
            let file = File::open(p).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", p.display())))?;
            let log = AuditLog::read_jsonl(BufReader::new(file)).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            log.verify().map_err(|e| CliError::Validation(format!("{}: audit chain broken: {e}", p.display())))?;
            serde_json::to_value(replay(log.records())).expect("kpis serialize")
        }
        None => Client::new(&a.server.server).get("/api/kpis")?,
    };
    emit(&v, json, output::kpis);
    Ok(())
}
