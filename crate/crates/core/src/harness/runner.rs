//! One episode: world, sensing, cascade, guardrails, comms and reward
//! accounting, wired together tick by tick.

use crate::action::{ActionEffect, AutonomyLevel};
use crate::agent::{accumulate_reward_inputs, reward_terms, OnlinePolicy, WindowItem};
use crate::cascade::{decide, PatternTable, RejectReason, StageHandles};
use crate::comms::{classify_cfh, Message, MessageKind, MessageLog, MessageRecord, SendStatus, TickRange};
use crate::config::{ConfigError, ScenarioConfig};
use crate::guardrails::{GuardrailSet, Integrity};
use crate::sensing::{anomaly_score, collect, Baseline};
use crate::world::{EventKind, ExecutedAction, NodeId, NodeKind, WorldEvent, WorldState};

use super::metrics::{MetricsAccumulator, MetricsReport};
use super::trace::{AgentStatus, RecordBody, StatusReason, TraceRecord, TraceSink};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace write failed: {0}")]
    Io(#[from] std::io::Error),
}

struct Recorder<'a> {
    seq: u64,
    sink: &'a mut dyn TraceSink,
    metrics: MetricsAccumulator,
}

impl Recorder<'_> {
    fn emit(&mut self, tick: u64, body: RecordBody) -> std::io::Result<()> {
        let r = TraceRecord { seq: self.seq, tick, body };
        self.seq += 1;
        self.metrics.observe(&r);
        self.sink.record(&r)
    }
}

/// What the last decision needs in order to be credited.
struct Pending {
    tick: u64,
    available: u64,
    delta: i64,
    messages: Vec<MessageRecord>,
}

fn alarming(kind: &EventKind) -> bool {
    matches!(
        kind,
        EventKind::IdsAlert { .. }
            | EventKind::AntiMalwareAlert
            | EventKind::UnauthorizedAccess
            | EventKind::FileIntegrityViolation
    )
}

/// Run one episode of `cfg` under `seed`. `label` names the policy in the
/// trace header. The policy is credited once per window if it learns.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    seed: u64,
    label: &str,
    policy: &mut dyn OnlinePolicy,
    patterns: &PatternTable,
    sink: &mut dyn TraceSink,
) -> Result<MetricsReport, RunError> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let ruleset = cfg.ruleset()?;
    let guard: GuardrailSet = GuardrailSet::from_ruleset(&ruleset);
    let mut live_rules = ruleset.canonical_bytes();
    let mut world = WorldState::new(&cfg.world, seed).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let w = cfg.agent.window;
    let params = cfg.agent.reward;

    let mut rec = Recorder { seq: 0, sink, metrics: MetricsAccumulator::default() };
    rec.emit(
        0,
        RecordBody::Begin {
            seed,
            policy: label.to_string(),
            ruleset_digest: guard.expected_digest.as_hex().to_string(),
            window: w,
            reward_params: params,
        },
    )?;
    rec.emit(0, RecordBody::AgentStatus { status: AgentStatus::Running, reason: StatusReason::Started })?;

    let mut baseline = Baseline::new();
    let mut messages = MessageLog::default();
    let mut pending: Option<Pending> = None;
    let mut ticks_run = 0;

    for t in 0..cfg.episode_ticks {
        if cfg.tamper_at_tick == Some(t) {
            let last = live_rules.len() - 1;
            live_rules[last] ^= 0x01;
        }
        if guard.verify_ruleset(&live_rules) == Integrity::Tampered {
            rec.emit(t, RecordBody::AgentStatus { status: AgentStatus::Terminated, reason: StatusReason::RulesetTampered })?;
            ticks_run = t;
            break;
        }
        let events = world.step();
        ticks_run = t + 1;
        for e in &events {
            rec.emit(t, RecordBody::Event { event: *e })?;
        }
        let emcon = cfg.emcon_at(t);

        if cfg.agent.heartbeat_interval > 0 && (t + 1) % cfg.agent.heartbeat_interval == 0 {
            let msg = Message::new(MessageKind::Heartbeat, t).expect("heartbeat is valid");
            messages.send(msg, emcon, &guard);
            let record = messages.records().last().expect("just sent").clone();
            rec.emit(t, RecordBody::Message { record })?;
        }

        if (t + 1) % w != 0 {
            continue;
        }
        let first = t + 1 - w;
        let window: Vec<WorldEvent> = world.log().window(first, t).to_vec();
        let observed: Vec<_> = window.iter().map(WorldEvent::observed).collect();
        let fv = collect(observed.iter(), w);
        let anomaly = (baseline.sample_count >= cfg.agent.warmup_windows.max(1))
            .then(|| anomaly_score(&baseline, &fv).expect("baseline has samples"));
        baseline.update(&fv);
        let state = cfg.agent.bins.discretize(&fv, anomaly.unwrap_or(0.0), world.summary());

        if let Some(p) = pending.take() {
            let is_honeypot = |n: NodeId| world.node(n).is_some_and(|n| n.kind == NodeKind::Honeypot);
            let items = window
                .iter()
                .map(WindowItem::Event)
                .chain(p.messages.iter().map(WindowItem::Message));
            let inputs = accumulate_reward_inputs(w, items, is_honeypot, p.available, p.delta)
                .expect("window is non-empty");
            let terms = reward_terms(&params, &inputs).expect("validated reward params");
            let reward = terms.total();
            rec.emit(t, RecordBody::RewardSample { decision_tick: p.tick, inputs, terms, reward })?;
            policy.credit(reward, state).expect("reward is finite");
        }

        rec.emit(t, RecordBody::Percept { features: fv, anomaly, state, emcon })?;
        let constraints = crate::cascade::EnvConstraints { emcon_level: emcon, ..cfg.constraints };
        let decision = decide(
            &fv,
            state,
            &constraints,
            StageHandles { patterns, learner: &mut *policy, guard: &guard, catalog: &catalog },
            &cfg.cascade,
        );
        rec.emit(t, RecordBody::Decision { decision: decision.clone() })?;
        for r in &decision.rejected {
            if let (RejectReason::GuardrailVeto(reason), Some(action)) = (r.reason, r.action) {
                rec.emit(t, RecordBody::Veto { stage: r.stage, action, reason })?;
            }
        }

        let spec = catalog.get(decision.action).expect("cascade returns catalog actions");
        let available = world.pool.available();
        let hint = observed.iter().rev().find(|e| alarming(&e.kind)).map(|e| e.node);
        let target = world.resolve_target(spec.effect, hint);
        let executed = ExecutedAction { action: spec.id, effect: spec.effect, target };
        let result = world.apply_action(&executed);
        let delta = result.as_ref().map_or(0, |o| o.delta_resources);
        rec.emit(t, RecordBody::ExecutedAction { executed, result })?;

        let mut sent = Vec::new();
        let outgoing = match spec.effect {
            ActionEffect::CryForHelp => Some(MessageKind::CryForHelp { evidence: TickRange { first, last: t } }),
            ActionEffect::ShareBlocklist => {
                let mut entries: Vec<_> = window
                    .iter()
                    .filter(|e| e.kind == EventKind::HoneyTouch)
                    .filter_map(|e| world.node(e.node).map(|n| n.address))
                    .collect();
                entries.sort();
                entries.dedup();
                Some(MessageKind::ShareBlocklist { entries })
            }
            ActionEffect::TerminateSelf | ActionEffect::NoOp => None,
            _ if spec.autonomy_level >= AutonomyLevel::Previsioned => Some(MessageKind::Alert { action_taken: spec.id }),
            _ => None,
        };
        if let Some(kind) = outgoing {
            let msg = Message::new(kind, t).expect("evidence window is non-empty");
            let status = messages.send(msg, emcon, &guard);
            let record = messages.last_mut().expect("just sent");
            if status == SendStatus::Sent && record.message.kind.is_cry_for_help() {
                record.classification = Some(classify_cfh(&record.message, world.log()).expect("evidence is logged"));
            }
            let record = record.clone();
            rec.emit(t, RecordBody::Message { record: record.clone() })?;
            sent.push(record);
        }
        pending = Some(Pending { tick: t, available, delta, messages: sent });

        if spec.effect == ActionEffect::TerminateSelf {
            rec.emit(t, RecordBody::AgentStatus { status: AgentStatus::Terminated, reason: StatusReason::SelfTerminated })?;
            break;
        }
    }
    rec.emit(ticks_run, RecordBody::End { ticks: ticks_run })?;
    Ok(rec.metrics.finish())
}
