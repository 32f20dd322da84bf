//! The learning agent: reward function, state discretisation, tabular
//! Q-learning and the online policies the decision cascade consults.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionId;
use crate::comms::{CfhClass, MessageKind, MessageRecord, SendStatus};
use crate::rng::SimRng;
use crate::sensing::FeatureVector;
use crate::world::{EventKind, NodeId, WorldEvent, WorldSummary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Lower bound substituted for the two count denominators.
    pub denominator_floor: u64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { a: 1.0, b: 1.0, c: 1.0, denominator_floor: 1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub honey_events: u64,
    pub security_events: u64,
    pub delta_resources: i64,
    /// Resources available when the credited action was taken.
    pub total_resources: u64,
    pub justified_cfh: u64,
    pub cw: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub honey: f64,
    pub resource: f64,
    pub cfh: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.honey + self.resource + self.cfh
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error("reward parameters must be finite")]
    NonFinite,
    #[error("total_resources must be positive")]
    ZeroResources,
    #[error("denominator_floor must be positive")]
    ZeroFloor,
}

pub fn reward_terms(p: &RewardParams, x: &RewardInputs) -> Result<RewardTerms, RewardError> {
    if !(p.a.is_finite() && p.b.is_finite() && p.c.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    if p.denominator_floor == 0 {
        return Err(RewardError::ZeroFloor);
    }
    if x.total_resources == 0 {
        return Err(RewardError::ZeroResources);
    }
    let floor = p.denominator_floor;
    Ok(RewardTerms {
        honey: p.a * x.honey_events as f64 / x.security_events.max(floor) as f64,
        resource: p.b * x.delta_resources as f64 / x.total_resources as f64,
        cfh: p.c * x.justified_cfh as f64 / x.cw.max(floor) as f64,
    })
}

pub fn reward(p: &RewardParams, x: &RewardInputs) -> Result<f64, RewardError> {
    reward_terms(p, x).map(|t| t.total())
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AccumulateError {
    #[error("reward accounting window is empty")]
    EmptyWindow,
}

#[derive(Clone, Copy, Debug)]
pub enum WindowItem<'a> {
    Event(&'a WorldEvent),
    Message(&'a MessageRecord),
}

/// Tally one accounting period. `is_honeypot` tells real servers from decoys.
pub fn accumulate_reward_inputs<'a, I>(
    period_ticks: u64,
    window: I,
    is_honeypot: impl Fn(NodeId) -> bool,
    available_at_action: u64,
    last_action_delta: i64,
) -> Result<RewardInputs, AccumulateError>
where
    I: IntoIterator<Item = WindowItem<'a>>,
{
    if period_ticks == 0 {
        return Err(AccumulateError::EmptyWindow);
    }
    let mut x = RewardInputs {
        delta_resources: last_action_delta,
        total_resources: available_at_action.max(1),
        ..Default::default()
    };
    for item in window {
        match item {
            WindowItem::Event(e) => match e.kind {
                EventKind::HoneyTouch | EventKind::DummyFileAccess | EventKind::DummyProcessAlert => {
                    x.honey_events += 1
                }
                EventKind::IdsAlert { .. } if e.truth_malicious && !is_honeypot(e.node) => x.security_events += 1,
                _ => {}
            },
            WindowItem::Message(m) => {
                if let (MessageKind::CryForHelp { .. }, SendStatus::Sent, Some(class)) =
                    (&m.message.kind, m.status, m.classification)
                {
                    match class {
                        CfhClass::Justified => x.justified_cfh += 1,
                        CfhClass::CryWolf => x.cw += 1,
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Discretised agent state: 4 * 4 * 4 * 2 = 128 keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    pub threat_bin: u8,
    pub load_bin: u8,
    pub honeypots_active_bin: u8,
    pub recent_honey_touch: bool,
}

impl StateKey {
    pub const COUNT: usize = 128;

    pub fn index(&self) -> usize {
        ((self.threat_bin as usize * 4 + self.load_bin as usize) * 4 + self.honeypots_active_bin as usize) * 2
            + self.recent_honey_touch as usize
    }

    pub fn all() -> impl Iterator<Item = StateKey> {
        (0..Self::COUNT).map(|i| StateKey {
            threat_bin: (i / 32) as u8,
            load_bin: (i / 8 % 4) as u8,
            honeypots_active_bin: (i / 2 % 4) as u8,
            recent_honey_touch: i % 2 == 1,
        })
    }

    /// Compact text form used as a map key in serialized tables.
    pub fn code(&self) -> String {
        format!(
            "t{}l{}h{}r{}",
            self.threat_bin, self.load_bin, self.honeypots_active_bin, self.recent_honey_touch as u8
        )
    }

    pub fn parse_code(s: &str) -> Option<StateKey> {
        let b = s.as_bytes();
        if b.len() != 8 || b[0] != b't' || b[2] != b'l' || b[4] != b'h' || b[6] != b'r' {
            return None;
        }
        let digit = |c: u8, max: u8| (c.is_ascii_digit() && c - b'0' <= max).then(|| c - b'0');
        Some(StateKey {
            threat_bin: digit(b[1], 3)?,
            load_bin: digit(b[3], 3)?,
            honeypots_active_bin: digit(b[5], 3)?,
            recent_honey_touch: digit(b[7], 1)? == 1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretizer {
    /// Ascending lower bounds of bins 1..=3.
    pub threat: [f64; 3],
    pub load: [f64; 3],
    pub honeypots: [f64; 3],
}

impl Default for Discretizer {
    fn default() -> Self {
        Discretizer { threat: [1.0, 3.0, 6.0], load: [0.25, 0.5, 0.75], honeypots: [1.0, 2.0, 4.0] }
    }
}

fn bin(value: f64, bounds: &[f64; 3]) -> u8 {
    bounds.iter().filter(|&&b| value >= b).count() as u8
}

impl Discretizer {
    pub fn discretize(&self, fv: &FeatureVector, anomaly: f64, summary: WorldSummary) -> StateKey {
        StateKey {
            threat_bin: bin(anomaly, &self.threat),
            load_bin: bin(fv.system_load, &self.load),
            honeypots_active_bin: bin(summary.honeypots_active as f64, &self.honeypots),
            recent_honey_touch: fv.honey_touches >= 1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QError {
    #[error("reward is not finite")]
    NonFinite,
    #[error("invalid learning parameters: {0}")]
    Params(&'static str),
    #[error("malformed q-table: {0}")]
    Malformed(String),
}

/// Tabular action values. Missing entries read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    actions: Vec<ActionId>,
    pub alpha: f64,
    pub gamma: f64,
    values: BTreeMap<(StateKey, ActionId), f64>,
}

impl QTable {
    pub fn new(mut actions: Vec<ActionId>, alpha: f64, gamma: f64) -> Result<Self, QError> {
        if actions.is_empty() {
            return Err(QError::Params("action set is empty"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(QError::Params("alpha must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(QError::Params("gamma must lie in [0, 1)"));
        }
        actions.sort();
        actions.dedup();
        Ok(QTable { actions, alpha, gamma, values: BTreeMap::new() })
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn get(&self, s: StateKey, a: ActionId) -> f64 {
        self.values.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, s: StateKey, a: ActionId, v: f64) {
        self.values.insert((s, a), v);
    }

    pub fn max_value(&self, s: StateKey) -> f64 {
        self.actions.iter().map(|&a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action, lowest id on ties.
    pub fn greedy(&self, s: StateKey) -> ActionId {
        let mut best = self.actions[0];
        let mut best_v = self.get(s, best);
        for &a in &self.actions[1..] {
            let v = self.get(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.values().all(|&v| v == 0.0)
    }

    pub fn to_text(&self) -> String {
        let file = QTableFile {
            alpha: self.alpha,
            gamma: self.gamma,
            actions: self.actions.iter().map(|a| a.0).collect(),
            values: self
                .values
                .iter()
                .map(|(&(s, a), &v)| (format!("{}:{}", s.code(), a.0), v))
                .collect(),
        };
        toml::to_string(&file).expect("q-table serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, QError> {
        let file: QTableFile = toml::from_str(text).map_err(|e| QError::Malformed(e.to_string()))?;
        let mut q = QTable::new(file.actions.into_iter().map(ActionId).collect(), file.alpha, file.gamma)?;
        for (key, v) in file.values {
            let (s, a) = key
                .split_once(':')
                .and_then(|(s, a)| Some((StateKey::parse_code(s)?, ActionId(a.parse().ok()?))))
                .ok_or_else(|| QError::Malformed(format!("bad key `{key}`")))?;
            if !v.is_finite() {
                return Err(QError::Malformed(format!("non-finite value at `{key}`")));
            }
            q.set(s, a, v);
        }
        Ok(q)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QTableFile {
    alpha: f64,
    gamma: f64,
    actions: Vec<u16>,
    values: BTreeMap<String, f64>,
}

pub fn select_action(q: &QTable, s: StateKey, epsilon: f64, rng: &mut SimRng) -> ActionId {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        q.actions[rng.gen_range(0..q.actions.len())]
    } else {
        q.greedy(s)
    }
}

pub fn q_update(q: &mut QTable, s: StateKey, a: ActionId, r: f64, next: StateKey) -> Result<(), QError> {
    if !r.is_finite() {
        return Err(QError::NonFinite);
    }
    let current = q.get(s, a);
    let target = r + q.gamma * q.max_value(next);
    q.set(s, a, current + q.alpha * (target - current));
    Ok(())
}

/// One experience handed to the learner: the state a decision was taken in
/// and the action that was executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experience {
    pub state: StateKey,
    pub action: ActionId,
}

/// The online-learning stage of the decision cascade.
pub trait OnlinePolicy {
    /// Proposed action and confidence for `state`.
    fn propose(&mut self, state: StateKey) -> (ActionId, f64);

    /// Every accepted decision, whatever stage produced it.
    fn record(&mut self, experience: Experience);

    /// Reward for the most recently recorded experience, observed in `next`.
    fn credit(&mut self, reward: f64, next: StateKey) -> Result<(), QError>;

    fn experiences_recorded(&self) -> u64;
}

/// Epsilon-greedy Q-learning policy. Its proposal confidence is `1 - epsilon`,
/// the probability that the proposal is the greedy action by construction.
pub struct QPolicy {
    pub table: QTable,
    pub epsilon: f64,
    pub learning: bool,
    rng: SimRng,
    pending: Option<Experience>,
    recorded: u64,
}

impl QPolicy {
    pub fn new(table: QTable, epsilon: f64, learning: bool, rng: SimRng) -> Self {
        QPolicy { table, epsilon, learning, rng, pending: None, recorded: 0 }
    }

    pub fn into_table(self) -> QTable {
        self.table
    }
}

impl OnlinePolicy for QPolicy {
    fn propose(&mut self, state: StateKey) -> (ActionId, f64) {
        let a = select_action(&self.table, state, self.epsilon, &mut self.rng);
        (a, 1.0 - self.epsilon)
    }

    fn record(&mut self, experience: Experience) {
        self.pending = Some(experience);
        self.recorded += 1;
    }

    fn credit(&mut self, reward: f64, next: StateKey) -> Result<(), QError> {
        if let Some(exp) = self.pending.take() {
            if self.learning {
                q_update(&mut self.table, exp.state, exp.action, reward, next)?;
            }
        }
        Ok(())
    }

    fn experiences_recorded(&self) -> u64 {
        self.recorded
    }
}

/// Uniform baseline. Always commits (confidence 1) so the cascade treats it
/// exactly like a trained policy.
pub struct RandomPolicy {
    actions: Vec<ActionId>,
    rng: SimRng,
    recorded: u64,
}

impl RandomPolicy {
    pub fn new(actions: Vec<ActionId>, rng: SimRng) -> Self {
        assert!(!actions.is_empty(), "random policy needs actions");
        RandomPolicy { actions, rng, recorded: 0 }
    }
}

impl OnlinePolicy for RandomPolicy {
    fn propose(&mut self, _state: StateKey) -> (ActionId, f64) {
        (self.actions[self.rng.gen_range(0..self.actions.len())], 1.0)
    }

    fn record(&mut self, _experience: Experience) {
        self.recorded += 1;
    }

    fn credit(&mut self, _reward: f64, _next: StateKey) -> Result<(), QError> {
        Ok(())
    }

    fn experiences_recorded(&self) -> u64 {
        self.recorded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn inputs(h: u64, s: u64, d: i64, t: u64, j: u64, w: u64) -> RewardInputs {
        RewardInputs {
            honey_events: h,
            security_events: s,
            delta_resources: d,
            total_resources: t,
            justified_cfh: j,
            cw: w,
        }
    }

    #[test]
    fn reward_hand_arithmetic() {
        let p = RewardParams::default();
        let r = reward(&p, &inputs(4, 2, -10, 100, 2, 1)).unwrap();
        assert!((r - 3.9).abs() < 1e-12);
        assert_eq!(reward(&p, &inputs(0, 0, 0, 100, 0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn light_load_penalty() {
        let p = RewardParams::default();
        let heavy = reward_terms(&p, &inputs(0, 0, -10, 20, 0, 0)).unwrap().resource;
        let light = reward_terms(&p, &inputs(0, 0, -10, 200, 0, 0)).unwrap().resource;
        assert!((heavy + 0.5).abs() < 1e-12);
        assert!((light + 0.05).abs() < 1e-12);
    }

    #[test]
    fn reward_errors() {
        let p = RewardParams { a: f64::NAN, ..Default::default() };
        assert_eq!(reward(&p, &inputs(1, 1, 0, 1, 0, 0)), Err(RewardError::NonFinite));
        let p = RewardParams { c: f64::INFINITY, ..Default::default() };
        assert_eq!(reward(&p, &inputs(1, 1, 0, 1, 0, 0)), Err(RewardError::NonFinite));
        assert_eq!(reward(&RewardParams::default(), &inputs(1, 1, 0, 0, 0, 0)), Err(RewardError::ZeroResources));
    }

    #[test]
    fn discretize_cases() {
        let d = Discretizer::default();
        let zero = WorldSummary { honeypots_active: 0, available: 100 };
        let k = d.discretize(&FeatureVector::default(), 0.0, zero);
        assert_eq!(k, StateKey { threat_bin: 0, load_bin: 0, honeypots_active_bin: 0, recent_honey_touch: false });
        let k = d.discretize(&FeatureVector::default(), 1e9, zero);
        assert_eq!(k.threat_bin, 3);
        let fv = FeatureVector { honey_touches: 1, system_load: 0.5, ..Default::default() };
        let k = d.discretize(&fv, 1.0, WorldSummary { honeypots_active: 3, available: 0 });
        assert!(k.recent_honey_touch);
        assert_eq!((k.threat_bin, k.load_bin, k.honeypots_active_bin), (1, 2, 2));
    }

    #[test]
    fn state_key_indexing() {
        let keys: Vec<_> = StateKey::all().collect();
        assert_eq!(keys.len(), 128);
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(StateKey::parse_code(&k.code()), Some(*k));
        }
        assert_eq!(StateKey::parse_code("t4l0h0r0"), None);
    }

    fn table(n: u16) -> QTable {
        QTable::new((0..n).map(ActionId).collect(), 0.5, 0.9).unwrap()
    }

    #[test]
    fn greedy_selection() {
        let s = StateKey::all().next().unwrap();
        let mut q = table(2);
        let mut r = rng::stream(1);
        assert_eq!(select_action(&q, s, 0.0, &mut r), ActionId(0));
        q.set(s, ActionId(0), 1.0);
        q.set(s, ActionId(1), 2.0);
        assert_eq!(select_action(&q, s, 0.0, &mut r), ActionId(1));
    }

    #[test]
    fn updates() {
        let s = StateKey::all().next().unwrap();
        let s2 = StateKey::all().nth(5).unwrap();
        let mut q = QTable::new(vec![ActionId(0), ActionId(1)], 1.0, 0.0).unwrap();
        q_update(&mut q, s, ActionId(0), 5.0, s2).unwrap();
        assert_eq!(q.get(s, ActionId(0)), 5.0);

        let mut q = QTable::new(vec![ActionId(0), ActionId(1)], 0.0, 0.5).unwrap();
        q_update(&mut q, s, ActionId(0), 5.0, s2).unwrap();
        assert!(q.is_all_zero());

        let mut q = table(2);
        q.set(s, ActionId(0), 1.0);
        q.set(s2, ActionId(1), 2.0);
        q_update(&mut q, s, ActionId(0), 1.0, s2).unwrap();
        assert!((q.get(s, ActionId(0)) - 1.9).abs() < 1e-12);
        assert_eq!(q.get(s2, ActionId(1)), 2.0);

        assert_eq!(q_update(&mut q, s, ActionId(0), f64::NAN, s2), Err(QError::NonFinite));
    }

    #[test]
    fn qtable_text_round_trip() {
        let mut q = table(3);
        for (i, s) in StateKey::all().enumerate().step_by(7) {
            q.set(s, ActionId((i % 3) as u16), i as f64 * 0.37 - 4.0);
        }
        let text = q.to_text();
        let back = QTable::from_text(&text).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.to_text(), text);
        assert!(QTable::from_text("alpha = 0.1").is_err());
    }

    #[test]
    fn accumulate_counts() {
        let e = |node, kind, mal| WorldEvent { tick: 0, kind, node: NodeId(node), truth_malicious: mal };
        let events = [
            e(9, EventKind::HoneyTouch, true),
            e(9, EventKind::HoneyTouch, true),
            e(9, EventKind::HoneyTouch, true),
            e(1, EventKind::IdsAlert { severity: 4 }, true),
            e(2, EventKind::IdsAlert { severity: 4 }, false),
        ];
        let x = accumulate_reward_inputs(20, events.iter().map(WindowItem::Event), |n| n == NodeId(9), 50, -10)
            .unwrap();
        assert_eq!((x.honey_events, x.security_events, x.justified_cfh, x.cw), (3, 1, 0, 0));
        assert_eq!((x.total_resources, x.delta_resources), (50, -10));
        assert_eq!(
            accumulate_reward_inputs(0, std::iter::empty(), |_| false, 1, 0),
            Err(AccumulateError::EmptyWindow)
        );
    }
}
