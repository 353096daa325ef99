//! Line-delimited tool-server protocol over arbitrary byte streams.
//!
//! One JSON request per line; responses preserve the request id and unknown
//! fields are ignored. Malformed lines get a protocol-error response with a
//! null id; no input can crash the server. Each named session owns an
//! isolated engine session; requests within one session apply in order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::actions::{Action, ActionResult, EngineSession, StateDelta};
use crate::catalog::Catalog;
use crate::config::EngineConfig;

#[derive(Debug, Clone, Deserialize)]
pub struct ToolRequest {
    #[serde(default)]
    pub id: Option<Value>,
    #[serde(default)]
    pub session: Option<String>,
    pub action: Action,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolResponse {
    pub id: Value,
    pub ok: bool,
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub state_delta: StateDelta,
}

impl ToolResponse {
    fn from_result(id: Value, result: ActionResult) -> Self {
        ToolResponse {
            id,
            ok: result.ok,
            description: result.description,
            error: result.error.map(|e| format!("{e:?}")),
            state_delta: result.state_delta,
        }
    }

    fn protocol_error(detail: String) -> Self {
        ToolResponse {
            id: Value::Null,
            ok: false,
            description: format!("Protocol error: {detail}"),
            error: Some("ProtocolError".to_string()),
            state_delta: StateDelta::default(),
        }
    }
}

/// Named engine sessions sharing one catalog and config.
pub struct SessionRegistry {
    catalog: Arc<Catalog>,
    config: EngineConfig,
    sessions: BTreeMap<String, EngineSession>,
}

impl SessionRegistry {
    pub fn new(catalog: Arc<Catalog>, config: EngineConfig) -> Self {
        SessionRegistry {
            catalog,
            config,
            sessions: BTreeMap::new(),
        }
    }

    pub fn session(&mut self, name: &str) -> &mut EngineSession {
        let catalog = self.catalog.clone();
        let config = self.config.clone();
        self.sessions
            .entry(name.to_string())
            .or_insert_with(|| EngineSession::new(catalog, config))
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&String, &EngineSession)> {
        self.sessions.iter()
    }

    /// Apply one request, creating its session on demand.
    pub fn handle(&mut self, request: ToolRequest) -> ToolResponse {
        let session_name = request.session.as_deref().unwrap_or("default");
        let result = self.session(session_name).apply(&request.action);
        ToolResponse::from_result(request.id.unwrap_or(Value::Null), result)
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ServeStats {
    pub requests: u64,
    pub protocol_errors: u64,
}

/// Serve requests from `input` until end of stream, writing one response per
/// line to `output`. Per-request failures are answered, never raised.
pub fn serve_tools<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    registry: &mut SessionRegistry,
) -> std::io::Result<ServeStats> {
    let mut stats = ServeStats::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.requests += 1;
        let response = match serde_json::from_str::<ToolRequest>(&line) {
            Ok(request) => registry.handle(request),
            Err(e) => {
                stats.protocol_errors += 1;
                ToolResponse::protocol_error(e.to_string())
            }
        };
        let encoded = serde_json::to_string(&response)
            .unwrap_or_else(|e| format!("{{\"id\":null,\"ok\":false,\"description\":\"encode error: {e}\",\"error\":\"ProtocolError\"}}"));
        writeln!(output, "{encoded}")?;
        output.flush()?;
    }
    Ok(stats)
}
