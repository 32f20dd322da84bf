//! Run traces: one JSON object per line, keys in declaration order.
//!
//! Every trace opens with `begin` and closes with `end`; `seq` counts records
//! from 0 without gaps and ticks never go backwards. [`read_trace`] rejects
//! anything else as corrupt, which catches truncation and reordering.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::action::ActionId;
use crate::agent::{RewardInputs, RewardParams, RewardTerms, StateKey};
use crate::cascade::{Decision, StageId};
use crate::comms::MessageRecord;
use crate::guardrails::{EmconLevel, VetoReason};
use crate::sensing::FeatureVector;
use crate::world::{ActionError, ActionOutcome, ExecutedAction, WorldEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Running,
    Terminated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusReason {
    Started,
    RulesetTampered,
    SelfTerminated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    Begin {
        seed: u64,
        policy: String,
        ruleset_digest: String,
        window: u64,
        reward_params: RewardParams,
    },
    Event {
        event: WorldEvent,
    },
    Percept {
        features: FeatureVector,
        /// Absent while the baseline is still warming up.
        anomaly: Option<f64>,
        state: StateKey,
        emcon: EmconLevel,
    },
    Decision {
        decision: Decision,
    },
    Veto {
        stage: StageId,
        action: ActionId,
        reason: VetoReason,
    },
    ExecutedAction {
        executed: ExecutedAction,
        result: Result<ActionOutcome, ActionError>,
    },
    Message {
        record: MessageRecord,
    },
    RewardSample {
        /// Tick of the decision being credited.
        decision_tick: u64,
        inputs: RewardInputs,
        terms: RewardTerms,
        reward: f64,
    },
    AgentStatus {
        status: AgentStatus,
        reason: StatusReason,
    },
    End {
        ticks: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub body: RecordBody,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace record serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace corrupt at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn corrupt(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::Corrupt { line, reason: reason.into() }
}

/// Destination for records as a run produces them.
pub trait TraceSink {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()>;
}

/// Drops everything; metrics are still computed.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _r: &TraceRecord) -> std::io::Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// Writes JSON lines.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> TraceSink for JsonLines<W> {
    fn record(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        self.0.write_all(r.to_line().as_bytes())?;
        self.0.write_all(b"\n")
    }
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Parse and structurally check a trace.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records: Vec<TraceRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if records.last().is_some_and(|r| matches!(r.body, RecordBody::End { .. })) {
            return Err(corrupt(n, "record after end"));
        }
        let r: TraceRecord = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
        if r.seq != i as u64 {
            return Err(corrupt(n, format!("sequence {} where {i} expected", r.seq)));
        }
        match (records.last(), &r.body) {
            (None, RecordBody::Begin { .. }) => {}
            (None, _) => return Err(corrupt(n, "trace must open with begin")),
            (Some(_), RecordBody::Begin { .. }) => return Err(corrupt(n, "duplicate begin")),
            (Some(prev), _) if r.tick < prev.tick => {
                return Err(corrupt(n, format!("tick {} after tick {}", r.tick, prev.tick)));
            }
            _ => {}
        }
        records.push(r);
    }
    match records.last() {
        Some(TraceRecord { body: RecordBody::End { .. }, .. }) => Ok(records),
        _ => Err(corrupt(records.len() + 1, "missing end record (truncated)")),
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    read_trace(text.as_bytes())
}
