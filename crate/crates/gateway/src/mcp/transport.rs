//! Line-delimited stdio framing and `POST /rpc` HTTP framing.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;

use super::McpServer;

/// Serves one JSON-RPC message per input line until end of input.
pub fn serve_lines<R: BufRead, W: Write>(server: &McpServer, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(resp) = server.handle_request(&line) {
            writeln!(output, "{resp}")?;
            output.flush()?;
        }
    }
    Ok(())
}

pub fn serve_stdio(server: &McpServer) -> io::Result<()> {
    serve_lines(server, io::stdin().lock(), io::stdout().lock())
}

async fn rpc(State(server): State<Arc<McpServer>>, body: String) -> Response {
    // engine writes block on the command queue
    let answer = tokio::task::spawn_blocking(move || server.handle_request(&body)).await;
    match answer {
        Ok(Some(json)) => ([(header::CONTENT_TYPE, "application/json")], json).into_response(),
        Ok(None) => StatusCode::ACCEPTED.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// `POST /rpc` for a single workflow server.
pub fn router(server: Arc<McpServer>) -> Router {
    Router::new().route("/rpc", post(rpc)).with_state(server)
}
