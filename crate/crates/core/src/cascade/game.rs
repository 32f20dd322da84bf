//! Short-horizon expectimax: defender max nodes over actions, chance nodes
//! over attacker responses.

use serde::{Deserialize, Serialize};

use crate::action::{ActionEffect, ActionId, Catalog, Direction};
use crate::agent::StateKey;
use crate::guardrails::{GuardrailSet, Verdict};

use super::EnvConstraints;

/// Values closer than this are ties; ties go to the lowest action id.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome<S> {
    pub probability: f64,
    pub next: S,
    pub payoff: f64,
}

impl<S> Outcome<S> {
    /// Equal weight over attacker responses.
    pub fn uniform(responses: Vec<(S, f64)>) -> Vec<Outcome<S>> {
        let p = 1.0 / responses.len().max(1) as f64;
        responses.into_iter().map(|(next, payoff)| Outcome { probability: p, next, payoff }).collect()
    }
}

pub trait OutcomeModel {
    type State: Clone;

    /// Defender actions available in `state`.
    fn actions(&self, state: &Self::State) -> Vec<ActionId>;

    /// Attacker response distribution, or `None` if the model has no entry.
    fn outcomes(&self, state: &Self::State, action: ActionId) -> Option<Vec<Outcome<Self::State>>>;
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GameError {
    #[error("model has no outcomes for action {0} in a reachable state")]
    ModelIncomplete(ActionId),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("no defender actions at the root")]
    NoActions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchResult {
    pub action: ActionId,
    /// Expected cumulative payoff of `action` followed by optimal play.
    pub value: f64,
    /// Probability that `action` returns at least `value`: the mass of root
    /// outcomes whose payoff plus optimal continuation reaches the mean.
    pub confidence: f64,
}

pub fn game_search<M: OutcomeModel + ?Sized>(
    model: &M,
    state: &M::State,
    horizon: u32,
) -> Result<SearchResult, GameError> {
    if horizon == 0 {
        return Err(GameError::ZeroHorizon);
    }
    let mut actions = model.actions(state);
    actions.sort();
    actions.dedup();
    if actions.is_empty() {
        return Err(GameError::NoActions);
    }
    let mut best: Option<(ActionId, f64, Vec<Outcome<M::State>>)> = None;
    for a in actions {
        let outcomes = model.outcomes(state, a).ok_or(GameError::ModelIncomplete(a))?;
        let value = chance_value(model, &outcomes, horizon)?;
        if best.as_ref().is_none_or(|b| value > b.1 + TIE_EPSILON) {
            best = Some((a, value, outcomes));
        }
    }
    let (action, value, outcomes) = best.expect("at least one action");
    let mut confidence = 0.0;
    for o in &outcomes {
        if o.payoff + max_value(model, &o.next, horizon - 1)? >= value - TIE_EPSILON {
            confidence += o.probability;
        }
    }
    Ok(SearchResult { action, value, confidence })
}

fn chance_value<M: OutcomeModel + ?Sized>(
    model: &M,
    outcomes: &[Outcome<M::State>],
    horizon: u32,
) -> Result<f64, GameError> {
    let mut total = 0.0;
    for o in outcomes {
        total += o.probability * (o.payoff + max_value(model, &o.next, horizon - 1)?);
    }
    Ok(total)
}

fn max_value<M: OutcomeModel + ?Sized>(model: &M, state: &M::State, depth: u32) -> Result<f64, GameError> {
    if depth == 0 {
        return Ok(0.0);
    }
    let mut actions = model.actions(state);
    actions.sort();
    actions.dedup();
    let mut best: Option<f64> = None;
    for a in actions {
        let outcomes = model.outcomes(state, a).ok_or(GameError::ModelIncomplete(a))?;
        let v = chance_value(model, &outcomes, depth)?;
        if best.is_none_or(|b| v > b + TIE_EPSILON) {
            best = Some(v);
        }
    }
    // a state with no moves ends the game early
    Ok(best.unwrap_or(0.0))
}

/// Built-in model over discretised agent states, used by the cascade at
/// run time. Attacker responses are idle / probe / attack with attack odds
/// rising with the threat bin. Only guardrail-compliant actions are offered.
pub struct ThreatModel<'a> {
    pub catalog: &'a Catalog,
    pub guard: &'a GuardrailSet,
    pub constraints: EnvConstraints,
}

const ATTACK_ODDS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
const PROBE_ODDS: f64 = 0.2;

impl OutcomeModel for ThreatModel<'_> {
    type State = StateKey;

    fn actions(&self, _state: &StateKey) -> Vec<ActionId> {
        self.catalog
            .iter()
            .filter(|s| s.enabled && s.effect != ActionEffect::TerminateSelf)
            .filter(|s| self.guard.check(s, &self.constraints) == Verdict::Allow)
            .map(|s| s.id)
            .collect()
    }

    fn outcomes(&self, state: &StateKey, action: ActionId) -> Option<Vec<Outcome<StateKey>>> {
        let effect = self.catalog.get(action)?.effect;
        let threat = state.threat_bin.min(3);
        let hp = match effect {
            ActionEffect::StartHoneypot => (state.honeypots_active_bin + 1).min(3),
            ActionEffect::StopHoneypot => state.honeypots_active_bin.saturating_sub(1),
            _ => state.honeypots_active_bin,
        };
        let resource = match effect {
            ActionEffect::StartHoneypot => -0.2,
            ActionEffect::StopHoneypot if state.honeypots_active_bin > 0 => 0.1,
            _ => 0.0,
        };
        let mitigation = match effect {
            ActionEffect::QuarantineNode
            | ActionEffect::QuarantineFile
            | ActionEffect::RestoreKnownGood
            | ActionEffect::RotateAddress
            | ActionEffect::DeployDummyFiles
            | ActionEffect::RestrictComms(Direction::Inbound) => 0.5,
            _ => 1.0,
        };
        let honey_share = hp as f64 / (hp as f64 + 1.0);
        let cfh = |hostile: bool| match effect {
            ActionEffect::CryForHelp if hostile => 1.0,
            ActionEffect::CryForHelp => -1.0,
            _ => 0.0,
        };
        let p_attack = ATTACK_ODDS[threat as usize];
        let next = |threat_bin: u8, touched: bool| StateKey {
            threat_bin,
            load_bin: state.load_bin,
            honeypots_active_bin: hp,
            recent_honey_touch: touched,
        };
        Some(vec![
            Outcome {
                probability: 1.0 - p_attack - PROBE_ODDS,
                next: next(threat.saturating_sub(1), false),
                payoff: resource + cfh(false),
            },
            Outcome { probability: PROBE_ODDS, next: next(threat, false), payoff: resource + cfh(true) },
            Outcome {
                probability: p_attack,
                next: next((threat + 1).min(3), hp > 0),
                payoff: resource + honey_share - (1.0 - honey_share) * mitigation + cfh(true),
            },
        ])
    }
}
