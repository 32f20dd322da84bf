//! Run metrics, computed from trace records alone so a replay reproduces the
//! live report exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::reward_terms;
use crate::cascade::StageId;
use crate::comms::{CfhClass, SendStatus};
use crate::guardrails::VetoReason;
use crate::world::EventKind;

use super::trace::{AgentStatus, RecordBody, TraceError, TraceRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermTotals {
    pub honey: f64,
    pub resource: f64,
    pub cfh: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ticks: u64,
    pub cumulative_reward: f64,
    pub reward_terms: TermTotals,
    pub reward_samples: u64,
    pub real_server_compromises: u64,
    pub honeypot_engagements: u64,
    pub cfh_sent: u64,
    pub justified_cfh: u64,
    pub cry_wolf: u64,
    /// Justified over sent; absent when no cry for help went out.
    pub cfh_precision: Option<f64>,
    pub messages_sent: u64,
    pub messages_suppressed: u64,
    pub decisions: u64,
    pub stage_provenance: BTreeMap<StageId, u64>,
    pub vetoes: BTreeMap<VetoReason, u64>,
    pub actions_executed: u64,
    pub action_failures: u64,
    pub terminated_at: Option<u64>,
}

/// Folds records into a [`MetricsReport`].
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    report: MetricsReport,
}

impl MetricsAccumulator {
    pub fn observe(&mut self, r: &TraceRecord) {
        let m = &mut self.report;
        match &r.body {
            RecordBody::Event { event } if event.truth_malicious => match event.kind {
                EventKind::FileIntegrityViolation => m.real_server_compromises += 1,
                EventKind::HoneyTouch => m.honeypot_engagements += 1,
                _ => {}
            },
            RecordBody::Decision { decision } => {
                m.decisions += 1;
                *m.stage_provenance.entry(decision.provenance).or_default() += 1;
            }
            RecordBody::Veto { reason, .. } => *m.vetoes.entry(*reason).or_default() += 1,
            RecordBody::ExecutedAction { result, .. } => {
                m.actions_executed += 1;
                if result.is_err() {
                    m.action_failures += 1;
                }
            }
            RecordBody::Message { record } => match record.status {
                SendStatus::Sent => {
                    m.messages_sent += 1;
                    if record.message.kind.is_cry_for_help() {
                        m.cfh_sent += 1;
                        match record.classification {
                            Some(CfhClass::Justified) => m.justified_cfh += 1,
                            Some(CfhClass::CryWolf) => m.cry_wolf += 1,
                            None => {}
                        }
                    }
                }
                SendStatus::Suppressed(_) => m.messages_suppressed += 1,
            },
            RecordBody::RewardSample { terms, reward, .. } => {
                m.reward_samples += 1;
                m.cumulative_reward += reward;
                m.reward_terms.honey += terms.honey;
                m.reward_terms.resource += terms.resource;
                m.reward_terms.cfh += terms.cfh;
            }
            RecordBody::AgentStatus { status: AgentStatus::Terminated, .. } => {
                m.terminated_at.get_or_insert(r.tick);
            }
            RecordBody::End { ticks } => m.ticks = *ticks,
            _ => {}
        }
    }

    pub fn finish(mut self) -> MetricsReport {
        let m = &mut self.report;
        m.cfh_precision = (m.cfh_sent > 0).then(|| m.justified_cfh as f64 / m.cfh_sent as f64);
        self.report
    }
}

/// Recompute the report from a parsed trace. Reward samples are re-derived
/// from their own inputs and the run's parameters; a mismatch means the
/// trace was altered.
pub fn replay(records: &[TraceRecord]) -> Result<MetricsReport, TraceError> {
    let params = match records.first().map(|r| &r.body) {
        Some(RecordBody::Begin { reward_params, .. }) => *reward_params,
        _ => return Err(TraceError::Corrupt { line: 1, reason: "trace must open with begin".into() }),
    };
    let mut acc = MetricsAccumulator::default();
    for (i, r) in records.iter().enumerate() {
        if let RecordBody::RewardSample { inputs, terms, reward, .. } = &r.body {
            let ok = reward_terms(&params, inputs).is_ok_and(|t| t == *terms && t.total() == *reward);
            if !ok {
                return Err(TraceError::Corrupt { line: i + 1, reason: "reward sample disagrees with its inputs".into() });
            }
        }
        acc.observe(r);
    }
    Ok(acc.finish())
}
