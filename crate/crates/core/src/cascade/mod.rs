//! Staged decision cascade.
//!
//! Stages run cheapest first: pattern recognition, online learning, human
//! escalation, game search, fail-safe. A stage runs only if its time and power
//! cost fit what is left of the per-decision budget; each proposal goes to the
//! arbiter, and the first accepted one wins. The fail-safe is never skipped,
//! and if even its proposal is refused the decision is a no-op, so
//! [`run_cascade`] always returns.

mod game;
mod patterns;

use serde::{Deserialize, Serialize};

pub use game::{game_search, GameError, Outcome, OutcomeModel, SearchResult, ThreatModel, TIE_EPSILON};
pub use patterns::{offline_train, LabeledSample, PatternEntry, PatternError, PatternTable};

use crate::action::{ActionEffect, ActionId, Catalog};
use crate::agent::{Experience, OnlinePolicy, StateKey};
use crate::guardrails::{EmconLevel, GuardrailSet, Verdict, VetoReason};
use crate::sensing::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConstraints {
    pub connectivity: bool,
    pub time_budget: u64,
    pub power_budget: u64,
    pub safety_margin: f64,
    pub emcon_level: EmconLevel,
}

impl Default for EnvConstraints {
    fn default() -> Self {
        EnvConstraints {
            connectivity: true,
            time_budget: 20,
            power_budget: 20,
            safety_margin: 1.0,
            emcon_level: EmconLevel::Open,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    PatternRecognition,
    OnlineLearning,
    HumanEscalation,
    GameSearch,
    FailSafe,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::PatternRecognition,
        StageId::OnlineLearning,
        StageId::HumanEscalation,
        StageId::GameSearch,
        StageId::FailSafe,
    ];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCost {
    pub time: u64,
    pub power: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageCosts {
    pub pattern_recognition: StageCost,
    pub online_learning: StageCost,
    pub human_escalation: StageCost,
    pub game_search: StageCost,
}

impl Default for StageCosts {
    fn default() -> Self {
        StageCosts {
            pattern_recognition: StageCost { time: 0, power: 0 },
            online_learning: StageCost { time: 1, power: 5 },
            human_escalation: StageCost { time: 5, power: 1 },
            game_search: StageCost { time: 10, power: 10 },
        }
    }
}

impl StageCosts {
    pub fn of(&self, stage: StageId) -> StageCost {
        match stage {
            StageId::PatternRecognition => self.pattern_recognition,
            StageId::OnlineLearning => self.online_learning,
            StageId::HumanEscalation => self.human_escalation,
            StageId::GameSearch => self.game_search,
            StageId::FailSafe => StageCost::default(),
        }
    }
}

/// Minimum confidence per stage; the fail-safe is unconditioned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageThresholds {
    pub pattern_recognition: f64,
    pub online_learning: f64,
    pub human_escalation: f64,
    pub game_search: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        StageThresholds { pattern_recognition: 0.8, online_learning: 0.6, human_escalation: 0.5, game_search: 0.3 }
    }
}

impl StageThresholds {
    pub fn of(&self, stage: StageId) -> f64 {
        match stage {
            StageId::PatternRecognition => self.pattern_recognition,
            StageId::OnlineLearning => self.online_learning,
            StageId::HumanEscalation => self.human_escalation,
            StageId::GameSearch => self.game_search,
            StageId::FailSafe => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailSafeProfile {
    NoAction,
    LowThresholdAct,
    Terminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Approve the first offered option.
    ApproveFirst,
    Decline,
    /// Approve the first option when the window shows at least `min_alerts`
    /// IDS, unauthorized-access or integrity alerts; otherwise decline.
    ApproveOnAlerts { min_alerts: u64 },
}

/// Scripted stand-in for a human operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorPolicy {
    pub kind: OperatorKind,
    /// Reply latency in time-budget units.
    pub latency: u64,
}

impl Default for OperatorPolicy {
    fn default() -> Self {
        OperatorPolicy { kind: OperatorKind::Decline, latency: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeParams {
    pub thresholds: StageThresholds,
    pub costs: StageCosts,
    /// Online learning and game search need at least this much safety margin.
    pub min_safety_margin: f64,
    pub game_horizon: u32,
    pub failsafe: FailSafeProfile,
    pub operator: OperatorPolicy,
}

impl Default for CascadeParams {
    fn default() -> Self {
        CascadeParams {
            thresholds: StageThresholds::default(),
            costs: StageCosts::default(),
            min_safety_margin: 0.2,
            game_horizon: 2,
            failsafe: FailSafeProfile::NoAction,
            operator: OperatorPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposedAction {
    pub action: ActionId,
    pub confidence: f64,
    pub stage: StageId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "reason", content = "veto", rename_all = "snake_case")]
pub enum RejectReason {
    Unavailable,
    NoMatch,
    BelowThreshold,
    GuardrailVeto(VetoReason),
    OperatorDeclined,
    OperatorTimeout,
    ModelIncomplete,
    UnknownAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArbiterVerdict {
    Accept,
    Reject(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub stage: StageId,
    pub reason: RejectReason,
    /// The refused proposal, when the stage produced one.
    pub action: Option<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: ActionId,
    pub provenance: StageId,
    pub confidence: f64,
    pub rejected: Vec<Rejection>,
}

pub fn stage_available(stage: StageId, c: &EnvConstraints, params: &CascadeParams) -> bool {
    let cost = params.costs.of(stage);
    let fits = c.time_budget >= cost.time && c.power_budget >= cost.power;
    match stage {
        StageId::PatternRecognition | StageId::FailSafe => true,
        StageId::OnlineLearning | StageId::GameSearch => fits && c.safety_margin >= params.min_safety_margin,
        StageId::HumanEscalation => fits && c.connectivity && c.emcon_level != EmconLevel::Silent,
    }
}

pub fn arbiter_review(
    p: &ProposedAction,
    c: &EnvConstraints,
    guard: &GuardrailSet,
    thresholds: &StageThresholds,
    catalog: &Catalog,
) -> ArbiterVerdict {
    let Some(spec) = catalog.get(p.action) else {
        return ArbiterVerdict::Reject(RejectReason::UnknownAction);
    };
    if p.confidence < thresholds.of(p.stage) {
        return ArbiterVerdict::Reject(RejectReason::BelowThreshold);
    }
    match guard.check(spec, c) {
        Verdict::Allow => ArbiterVerdict::Accept,
        Verdict::Veto(v) => ArbiterVerdict::Reject(RejectReason::GuardrailVeto(v)),
    }
}

pub fn pattern_match(table: &PatternTable, key: StateKey) -> Option<ProposedAction> {
    table.get(key).map(|e| ProposedAction {
        action: e.action,
        confidence: e.confidence,
        stage: StageId::PatternRecognition,
    })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EscalationError {
    #[error("operator latency {latency} exceeds remaining time budget {remaining}")]
    OperatorTimeout { latency: u64, remaining: u64 },
}

pub fn escalate(
    operator: &OperatorPolicy,
    fv: &FeatureVector,
    options: &[ActionId],
    time_remaining: u64,
) -> Result<Option<ProposedAction>, EscalationError> {
    if operator.latency > time_remaining {
        return Err(EscalationError::OperatorTimeout { latency: operator.latency, remaining: time_remaining });
    }
    let approve = match operator.kind {
        OperatorKind::ApproveFirst => true,
        OperatorKind::Decline => false,
        OperatorKind::ApproveOnAlerts { min_alerts } => {
            fv.ids_alert_count + fv.unauthorized_accesses + fv.integrity_violations >= min_alerts
        }
    };
    Ok(options
        .first()
        .filter(|_| approve)
        .map(|&action| ProposedAction { action, confidence: 1.0, stage: StageId::HumanEscalation }))
}

pub fn failsafe(profile: FailSafeProfile, table: &PatternTable, catalog: &Catalog) -> ProposedAction {
    let action = match profile {
        FailSafeProfile::NoAction => catalog.no_op(),
        FailSafeProfile::LowThresholdAct => table.best().map(|e| e.action).unwrap_or_else(|| catalog.no_op()),
        FailSafeProfile::Terminate => catalog
            .by_effect(ActionEffect::TerminateSelf)
            .map(|s| s.id)
            .unwrap_or_else(|| catalog.no_op()),
    };
    ProposedAction { action, confidence: 1.0, stage: StageId::FailSafe }
}

/// Working state handed to each stage: budgets left for this decision and
/// the proposals refused so far.
#[derive(Clone, Debug)]
pub struct CascadeCtx {
    pub remaining: EnvConstraints,
    pub refused: Vec<ActionId>,
}

pub trait Stage {
    fn id(&self) -> StageId;
    fn available(&self, c: &EnvConstraints) -> bool;
    fn cost(&self) -> StageCost;
    fn propose(&mut self, ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason>;
}

/// Run `stages` in order. The last stage is the terminal one: it is always
/// attempted, and `fallback` is chosen if its proposal fails review.
pub fn run_cascade(
    stages: &mut [&mut dyn Stage],
    constraints: &EnvConstraints,
    fallback: ActionId,
    arbiter: &mut dyn FnMut(&ProposedAction, &EnvConstraints) -> ArbiterVerdict,
) -> Decision {
    let mut ctx = CascadeCtx { remaining: *constraints, refused: Vec::new() };
    let mut rejected = Vec::new();
    let Some((terminal, ordinary)) = stages.split_last_mut() else {
        return Decision { action: fallback, provenance: StageId::FailSafe, confidence: 0.0, rejected };
    };
    for stage in ordinary.iter_mut() {
        let id = stage.id();
        if !stage.available(&ctx.remaining) {
            rejected.push(Rejection { stage: id, reason: RejectReason::Unavailable, action: None });
            continue;
        }
        let cost = stage.cost();
        ctx.remaining.time_budget = ctx.remaining.time_budget.saturating_sub(cost.time);
        ctx.remaining.power_budget = ctx.remaining.power_budget.saturating_sub(cost.power);
        match stage.propose(&mut ctx) {
            Err(reason) => rejected.push(Rejection { stage: id, reason, action: None }),
            Ok(p) => match arbiter(&p, constraints) {
                ArbiterVerdict::Accept => {
                    return Decision { action: p.action, provenance: id, confidence: p.confidence, rejected };
                }
                ArbiterVerdict::Reject(reason) => {
                    ctx.refused.push(p.action);
                    rejected.push(Rejection { stage: id, reason, action: Some(p.action) });
                }
            },
        }
    }
    let id = terminal.id();
    match terminal.propose(&mut ctx) {
        Ok(p) => match arbiter(&p, constraints) {
            ArbiterVerdict::Accept => Decision { action: p.action, provenance: id, confidence: p.confidence, rejected },
            ArbiterVerdict::Reject(reason) => {
                rejected.push(Rejection { stage: id, reason, action: Some(p.action) });
                Decision { action: fallback, provenance: id, confidence: 0.0, rejected }
            }
        },
        Err(reason) => {
            rejected.push(Rejection { stage: id, reason, action: None });
            Decision { action: fallback, provenance: id, confidence: 0.0, rejected }
        }
    }
}

/// Everything the real stages need.
pub struct StageHandles<'a> {
    pub patterns: &'a PatternTable,
    pub learner: &'a mut dyn OnlinePolicy,
    pub guard: &'a GuardrailSet,
    pub catalog: &'a Catalog,
}

struct PatternStage<'a> {
    table: &'a PatternTable,
    key: StateKey,
    params: &'a CascadeParams,
}

impl Stage for PatternStage<'_> {
    fn id(&self) -> StageId {
        StageId::PatternRecognition
    }
    fn available(&self, c: &EnvConstraints) -> bool {
        stage_available(self.id(), c, self.params)
    }
    fn cost(&self) -> StageCost {
        self.params.costs.of(self.id())
    }
    fn propose(&mut self, _ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason> {
        pattern_match(self.table, self.key).ok_or(RejectReason::NoMatch)
    }
}

struct OnlineStage<'a, 'b> {
    learner: &'b mut dyn OnlinePolicy,
    key: StateKey,
    params: &'a CascadeParams,
}

impl Stage for OnlineStage<'_, '_> {
    fn id(&self) -> StageId {
        StageId::OnlineLearning
    }
    fn available(&self, c: &EnvConstraints) -> bool {
        stage_available(self.id(), c, self.params)
    }
    fn cost(&self) -> StageCost {
        self.params.costs.of(self.id())
    }
    fn propose(&mut self, _ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason> {
        let (action, confidence) = self.learner.propose(self.key);
        Ok(ProposedAction { action, confidence, stage: StageId::OnlineLearning })
    }
}

struct EscalationStage<'a> {
    fv: &'a FeatureVector,
    no_op: ActionId,
    params: &'a CascadeParams,
}

impl Stage for EscalationStage<'_> {
    fn id(&self) -> StageId {
        StageId::HumanEscalation
    }
    fn available(&self, c: &EnvConstraints) -> bool {
        stage_available(self.id(), c, self.params)
    }
    fn cost(&self) -> StageCost {
        self.params.costs.of(self.id())
    }
    fn propose(&mut self, ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason> {
        let mut options = ctx.refused.clone();
        if !options.contains(&self.no_op) {
            options.push(self.no_op);
        }
        let operator = &self.params.operator;
        let reply = escalate(operator, self.fv, &options, ctx.remaining.time_budget)
            .map_err(|_| RejectReason::OperatorTimeout)?;
        ctx.remaining.time_budget -= operator.latency;
        reply.ok_or(RejectReason::OperatorDeclined)
    }
}

struct GameStage<'a> {
    catalog: &'a Catalog,
    guard: &'a GuardrailSet,
    constraints: EnvConstraints,
    key: StateKey,
    params: &'a CascadeParams,
}

impl Stage for GameStage<'_> {
    fn id(&self) -> StageId {
        StageId::GameSearch
    }
    fn available(&self, c: &EnvConstraints) -> bool {
        stage_available(self.id(), c, self.params)
    }
    fn cost(&self) -> StageCost {
        self.params.costs.of(self.id())
    }
    fn propose(&mut self, _ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason> {
        let model = ThreatModel { catalog: self.catalog, guard: self.guard, constraints: self.constraints };
        match game_search(&model, &self.key, self.params.game_horizon.max(1)) {
            Ok(r) => Ok(ProposedAction { action: r.action, confidence: r.confidence, stage: StageId::GameSearch }),
            Err(GameError::ModelIncomplete(_)) => Err(RejectReason::ModelIncomplete),
            Err(_) => Err(RejectReason::NoMatch),
        }
    }
}

struct FailSafeStage<'a> {
    profile: FailSafeProfile,
    table: &'a PatternTable,
    catalog: &'a Catalog,
}

impl Stage for FailSafeStage<'_> {
    fn id(&self) -> StageId {
        StageId::FailSafe
    }
    fn available(&self, _c: &EnvConstraints) -> bool {
        true
    }
    fn cost(&self) -> StageCost {
        StageCost::default()
    }
    fn propose(&mut self, _ctx: &mut CascadeCtx) -> Result<ProposedAction, RejectReason> {
        Ok(failsafe(self.profile, self.table, self.catalog))
    }
}

/// Full decision for one percept. The chosen action is recorded with the
/// online learner whatever stage produced it.
pub fn decide(
    fv: &FeatureVector,
    key: StateKey,
    c: &EnvConstraints,
    h: StageHandles<'_>,
    params: &CascadeParams,
) -> Decision {
    let no_op = h.catalog.no_op();
    let mut pattern = PatternStage { table: h.patterns, key, params };
    let mut online = OnlineStage { learner: &mut *h.learner, key, params };
    let mut escalation = EscalationStage { fv, no_op, params };
    let mut game = GameStage { catalog: h.catalog, guard: h.guard, constraints: *c, key, params };
    let mut terminal = FailSafeStage { profile: params.failsafe, table: h.patterns, catalog: h.catalog };
    let mut stages: [&mut dyn Stage; 5] = [&mut pattern, &mut online, &mut escalation, &mut game, &mut terminal];
    let (guard, catalog, thresholds) = (h.guard, h.catalog, params.thresholds);
    let mut arbiter = |p: &ProposedAction, c: &EnvConstraints| arbiter_review(p, c, guard, &thresholds, catalog);
    let decision = run_cascade(&mut stages, c, no_op, &mut arbiter);
    h.learner.record(Experience { state: key, action: decision.action });
    decision
}
