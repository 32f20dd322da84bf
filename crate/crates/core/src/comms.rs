//! Outbound messaging under EMCON, cry-for-help classification against
//! ground truth, and a small peer trust ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{ActionId, AutonomyLevel};
use crate::guardrails::{EmconLevel, GuardrailSet, VetoReason};
use crate::world::{Address, EventLog};

/// Inclusive tick range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRange {
    pub first: u64,
    pub last: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageKind {
    CryForHelp { evidence: TickRange },
    Alert { action_taken: ActionId },
    ShareBlocklist { entries: Vec<Address> },
    Heartbeat,
}

impl MessageKind {
    pub fn autonomy_level(&self) -> AutonomyLevel {
        match self {
            MessageKind::CryForHelp { .. } | MessageKind::ShareBlocklist { .. } => AutonomyLevel::Collaborative,
            MessageKind::Alert { .. } => AutonomyLevel::Previsioned,
            MessageKind::Heartbeat => AutonomyLevel::Reflex,
        }
    }

    /// Every message is a transmission.
    pub fn emission_cost(&self) -> u32 {
        1
    }

    pub fn is_cry_for_help(&self) -> bool {
        matches!(self, MessageKind::CryForHelp { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub tick: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CommsError {
    #[error("cry for help needs a non-empty evidence window")]
    EmptyEvidence,
    #[error("evidence window {0:?} outside logged ticks [0, {1})")]
    WindowOutOfRange(TickRange, u64),
    #[error("message is not a cry for help")]
    NotCryForHelp,
    #[error("unknown peer `{0}`")]
    UnknownPeer(String),
}

impl Message {
    pub fn new(kind: MessageKind, tick: u64) -> Result<Self, CommsError> {
        if let MessageKind::CryForHelp { evidence } = &kind {
            if evidence.first > evidence.last {
                return Err(CommsError::EmptyEvidence);
            }
        }
        Ok(Message { kind, tick })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum SendStatus {
    Sent,
    Suppressed(VetoReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfhClass {
    Justified,
    CryWolf,
}

/// One entry of the message log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub message: Message,
    pub status: SendStatus,
    pub classification: Option<CfhClass>,
}

/// EMCON gate for a single message: silence first, then the autonomy gate.
pub fn send_status(msg: &Message, emcon: EmconLevel, g: &GuardrailSet) -> SendStatus {
    if msg.kind.emission_cost() > 0 && emcon == EmconLevel::Silent {
        SendStatus::Suppressed(VetoReason::EmissionBlocked)
    } else if msg.kind.autonomy_level() > g.gate(emcon) {
        SendStatus::Suppressed(VetoReason::AutonomyGate)
    } else {
        SendStatus::Sent
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageLog {
    records: Vec<MessageRecord>,
}

impl MessageLog {
    pub fn send(&mut self, msg: Message, emcon: EmconLevel, g: &GuardrailSet) -> SendStatus {
        let status = send_status(&msg, emcon, g);
        self.records.push(MessageRecord { message: msg, status, classification: None });
        status
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn last_mut(&mut self) -> Option<&mut MessageRecord> {
        self.records.last_mut()
    }

    pub fn sent_count(&self) -> usize {
        self.records.iter().filter(|r| r.status == SendStatus::Sent).count()
    }
}

/// Justified iff some attacker-caused event falls inside the evidence window.
pub fn classify_cfh(msg: &Message, log: &EventLog) -> Result<CfhClass, CommsError> {
    let MessageKind::CryForHelp { evidence } = msg.kind else {
        return Err(CommsError::NotCryForHelp);
    };
    if evidence.first > evidence.last {
        return Err(CommsError::EmptyEvidence);
    }
    if evidence.last >= log.clock() {
        return Err(CommsError::WindowOutOfRange(evidence, log.clock()));
    }
    let justified = log.window(evidence.first, evidence.last).iter().any(|e| e.truth_malicious);
    Ok(if justified { CfhClass::Justified } else { CfhClass::CryWolf })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustState {
    Trusted,
    Broken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    BadSignature,
    FalseBlocklist,
    MissedHeartbeat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub peer: String,
    pub state: TrustState,
    pub violations: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustLedger {
    threshold: u32,
    records: BTreeMap<String, TrustRecord>,
}

impl TrustLedger {
    pub fn new(threshold: u32) -> Self {
        TrustLedger { threshold: threshold.max(1), records: BTreeMap::new() }
    }

    /// Create a peer, or re-create a broken one with a clean slate.
    pub fn create(&mut self, peer: &str) {
        self.records.insert(
            peer.to_string(),
            TrustRecord { peer: peer.to_string(), state: TrustState::Trusted, violations: 0 },
        );
    }

    pub fn get(&self, peer: &str) -> Option<&TrustRecord> {
        self.records.get(peer)
    }

    pub fn record_violation(&mut self, peer: &str, _observed: Violation) -> Result<&TrustRecord, CommsError> {
        let threshold = self.threshold;
        let rec = self.records.get_mut(peer).ok_or_else(|| CommsError::UnknownPeer(peer.to_string()))?;
        rec.violations = rec.violations.saturating_add(1);
        if rec.violations >= threshold {
            rec.state = TrustState::Broken;
        }
        Ok(rec)
    }

    pub fn trusted_peers(&self) -> impl Iterator<Item = &str> {
        self.records.values().filter(|r| r.state == TrustState::Trusted).map(|r| r.peer.as_str())
    }
}
