//! Append-only audit log with per-record payload digests.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::domain::Day;

/// Who caused an audited event. Serialized as `agent:<name>`, `human:<name>` or `system`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Actor {
    Agent(String),
    Human(String),
    System,
}

impl Actor {
    pub fn agent(name: &str) -> Self {
        Actor::Agent(name.to_string())
    }

    pub fn human(name: &str) -> Self {
        Actor::Human(name.to_string())
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Actor::Human(_))
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Agent(n) => write!(f, "agent:{n}"),
            Actor::Human(n) => write!(f, "human:{n}"),
            Actor::System => f.write_str("system"),
        }
    }
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "system" {
            return Ok(Actor::System);
        }
        match s.split_once(':') {
            Some(("agent", n)) if !n.is_empty() => Ok(Actor::Agent(n.to_string())),
            Some(("human", n)) if !n.is_empty() => Ok(Actor::Human(n.to_string())),
            _ => Err(format!("bad actor tag {s:?}")),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub tick: Day,
    pub actor: Actor,
    pub event_kind: String,
    pub payload_digest: String,
    pub payload: Value,
}

/// SHA-256 of the compact JSON rendering. Object keys are sorted, so the digest does
/// not depend on construction order.
pub fn payload_digest(payload: &Value) -> String {
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("seq {found} where {expected} was expected")]
    Gap { expected: u64, found: u64 },
    #[error("digest mismatch at seq {0}")]
    Digest(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, tick: Day, actor: Actor, event_kind: &str, payload: Value) -> &AuditRecord {
        let record = AuditRecord {
            seq: self.records.len() as u64 + 1,
            tick,
            actor,
            event_kind: event_kind.to_string(),
            payload_digest: payload_digest(&payload),
            payload,
        };
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn since(&self, seq: u64) -> &[AuditRecord] {
        &self.records[(seq as usize).min(self.records.len())..]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Reads a log and checks sequence continuity and every digest.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, AuditError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AuditRecord = serde_json::from_str(&line).map_err(|source| AuditError::Parse { line: i + 1, source })?;
            records.push(rec);
        }
        let log = Self { records };
        log.verify()?;
        Ok(log)
    }

    pub fn verify(&self) -> Result<(), AuditError> {
        for (i, r) in self.records.iter().enumerate() {
            let expected = i as u64 + 1;
            if r.seq != expected {
                return Err(AuditError::Gap { expected, found: r.seq });
            }
            if payload_digest(&r.payload) != r.payload_digest {
                return Err(AuditError::Digest(r.seq));
            }
        }
        Ok(())
    }

    /// Digest over the whole serialized log; equal logs have equal chain digests.
    pub fn chain_digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(serde_json::to_vec(r).expect("record serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
