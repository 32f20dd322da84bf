//! Bounded-autonomy guardrails: per-action impact budget, EMCON-dependent
//! autonomy gates, and tamper detection over the serialized ruleset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{ActionEffect, ActionSpec, AutonomyLevel, Catalog};
use crate::cascade::{EnvConstraints, StageThresholds};

/// Emissions-control level, least restrictive first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmconLevel {
    Open,
    Restricted,
    Silent,
}

impl EmconLevel {
    pub const ALL: [EmconLevel; 3] = [EmconLevel::Open, EmconLevel::Restricted, EmconLevel::Silent];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactBudget {
    pub max_impact_per_action: f64,
    pub mission_need: f64,
}

impl Default for ImpactBudget {
    fn default() -> Self {
        ImpactBudget { max_impact_per_action: 5.0, mission_need: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VetoReason {
    ImpactExceeded,
    AutonomyGate,
    EmissionBlocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Veto(VetoReason),
}

/// Everything the digest covers. Serialized canonically (sorted keys).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ruleset {
    pub budget: ImpactBudget,
    pub autonomy_gates: BTreeMap<EmconLevel, AutonomyLevel>,
    pub thresholds: StageThresholds,
    /// Impact score per action name.
    pub impacts: BTreeMap<String, f64>,
}

pub fn default_gates() -> BTreeMap<EmconLevel, AutonomyLevel> {
    BTreeMap::from([
        (EmconLevel::Open, AutonomyLevel::Delegated),
        (EmconLevel::Restricted, AutonomyLevel::Previsioned),
        (EmconLevel::Silent, AutonomyLevel::Reflex),
    ])
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RulesetError {
    #[error("max_impact_per_action exceeds mission_need")]
    BudgetAboveNeed,
    #[error("impact budget must be finite and non-negative")]
    BadBudget,
    #[error("autonomy gate missing for {0:?}")]
    MissingGate(EmconLevel),
    #[error("autonomy gates must not loosen as EMCON tightens")]
    NonMonotoneGates,
    #[error("ruleset is not canonical text: {0}")]
    Parse(String),
}

impl Ruleset {
    pub fn new(
        budget: ImpactBudget,
        autonomy_gates: BTreeMap<EmconLevel, AutonomyLevel>,
        thresholds: StageThresholds,
        catalog: &Catalog,
    ) -> Result<Self, RulesetError> {
        let rules = Ruleset {
            budget,
            autonomy_gates,
            thresholds,
            impacts: catalog.iter().map(|s| (s.effect.name().to_string(), s.impact)).collect(),
        };
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<(), RulesetError> {
        let b = self.budget;
        if !(b.max_impact_per_action.is_finite() && b.mission_need.is_finite() && b.max_impact_per_action >= 0.0) {
            return Err(RulesetError::BadBudget);
        }
        if b.max_impact_per_action > b.mission_need {
            return Err(RulesetError::BudgetAboveNeed);
        }
        let mut prev: Option<AutonomyLevel> = None;
        for level in EmconLevel::ALL {
            let gate = *self.autonomy_gates.get(&level).ok_or(RulesetError::MissingGate(level))?;
            if prev.is_some_and(|p| gate > p) {
                return Err(RulesetError::NonMonotoneGates);
            }
            prev = Some(gate);
        }
        Ok(())
    }

    /// Canonical text: TOML with every table's keys sorted.
    pub fn canonical_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("ruleset converts to toml");
        toml::to_string(&value).expect("ruleset serializes")
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.canonical_text().into_bytes()
    }

    pub fn from_text(text: &str) -> Result<Self, RulesetError> {
        let rules: Ruleset = toml::from_str(text).map_err(|e| RulesetError::Parse(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }
}

/// 256-bit digest, stored as lowercase hex next to the ruleset file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RulesetDigest(String);

impl RulesetDigest {
    pub fn of(bytes: &[u8]) -> Self {
        RulesetDigest(hex::encode(Sha256::digest(bytes)))
    }

    pub fn from_hex(hex_str: &str) -> Option<Self> {
        let s = hex_str.trim();
        (s.len() == 64 && s.bytes().all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(&c)))
            .then(|| RulesetDigest(s.to_string()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuardrailSet {
    pub budget: ImpactBudget,
    pub autonomy_gates: BTreeMap<EmconLevel, AutonomyLevel>,
    pub expected_digest: RulesetDigest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrity {
    Ok,
    Tampered,
}

impl GuardrailSet {
    /// Build from a validated ruleset, pinning the digest of its canonical form.
    pub fn from_ruleset(rules: &Ruleset) -> Self {
        GuardrailSet {
            budget: rules.budget,
            autonomy_gates: rules.autonomy_gates.clone(),
            expected_digest: RulesetDigest::of(&rules.canonical_bytes()),
        }
    }

    pub fn gate(&self, emcon: EmconLevel) -> AutonomyLevel {
        // validated rulesets have every level; a missing one is treated as silent-most
        self.autonomy_gates.get(&emcon).copied().unwrap_or(AutonomyLevel::Reflex)
    }

    pub fn check(&self, action: &ActionSpec, c: &EnvConstraints) -> Verdict {
        if action.effect == ActionEffect::TerminateSelf {
            return Verdict::Allow;
        }
        if action.impact > self.budget.max_impact_per_action {
            return Verdict::Veto(VetoReason::ImpactExceeded);
        }
        if action.autonomy_level > self.gate(c.emcon_level) {
            return Verdict::Veto(VetoReason::AutonomyGate);
        }
        if action.emission_cost > 0 && c.emcon_level == EmconLevel::Silent {
            return Verdict::Veto(VetoReason::EmissionBlocked);
        }
        Verdict::Allow
    }

    pub fn verify_ruleset(&self, current_rules: &[u8]) -> Integrity {
        if RulesetDigest::of(current_rules) == self.expected_digest {
            Integrity::Ok
        } else {
            Integrity::Tampered
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{ActionId, Catalog};

    fn rules() -> Ruleset {
        Ruleset::new(ImpactBudget::default(), default_gates(), StageThresholds::default(), &Catalog::standard(10, 10, true))
            .unwrap()
    }

    fn constraints(emcon: EmconLevel) -> EnvConstraints {
        EnvConstraints { emcon_level: emcon, ..EnvConstraints::default() }
    }

    fn spec(effect: ActionEffect, impact: f64, emission: u32, level: AutonomyLevel) -> ActionSpec {
        ActionSpec {
            id: ActionId(0),
            effect,
            resource_delta: 0,
            impact,
            emission_cost: emission,
            autonomy_level: level,
            enabled: true,
        }
    }

    #[test]
    fn check_cases() {
        let g = GuardrailSet::from_ruleset(&rules());
        let open = constraints(EmconLevel::Open);
        let heavy = spec(ActionEffect::QuarantineNode, 9.0, 0, AutonomyLevel::Reflex);
        assert_eq!(g.check(&heavy, &open), Verdict::Veto(VetoReason::ImpactExceeded));
        let cfh = spec(ActionEffect::CryForHelp, 0.0, 1, AutonomyLevel::Reflex);
        assert_eq!(g.check(&cfh, &constraints(EmconLevel::Silent)), Verdict::Veto(VetoReason::EmissionBlocked));
        let noop = spec(ActionEffect::NoOp, 0.0, 0, AutonomyLevel::Reflex);
        for level in EmconLevel::ALL {
            assert_eq!(g.check(&noop, &constraints(level)), Verdict::Allow);
        }
        let collab = spec(ActionEffect::ShareBlocklist, 0.0, 1, AutonomyLevel::Collaborative);
        assert_eq!(g.check(&collab, &constraints(EmconLevel::Restricted)), Verdict::Veto(VetoReason::AutonomyGate));
        // impact is checked first
        let both = spec(ActionEffect::StopRealVm, 9.0, 1, AutonomyLevel::Delegated);
        assert_eq!(g.check(&both, &constraints(EmconLevel::Silent)), Verdict::Veto(VetoReason::ImpactExceeded));
    }

    #[test]
    fn terminate_never_vetoed() {
        let g = GuardrailSet::from_ruleset(&rules());
        let kill = spec(ActionEffect::TerminateSelf, 100.0, 9, AutonomyLevel::Delegated);
        for level in EmconLevel::ALL {
            assert_eq!(g.check(&kill, &constraints(level)), Verdict::Allow);
        }
    }

    #[test]
    fn digest_contract() {
        let r = rules();
        let g = GuardrailSet::from_ruleset(&r);
        let bytes = r.canonical_bytes();
        assert_eq!(g.verify_ruleset(&bytes), Integrity::Ok);
        assert_eq!(g.expected_digest.as_hex().len(), 64);
        assert_eq!(RulesetDigest::from_hex(g.expected_digest.as_hex()), Some(g.expected_digest.clone()));

        let text = r.canonical_text();
        let i = text.find("0.8").expect("pattern threshold present");
        let mut flipped = bytes.clone();
        flipped[i + 2] = b'9';
        assert_eq!(g.verify_ruleset(&flipped), Integrity::Tampered);

        // parse and re-serialize: identical bytes
        let reparsed = Ruleset::from_text(&text).unwrap();
        assert_eq!(reparsed.canonical_bytes(), bytes);
        assert_eq!(g.verify_ruleset(&reparsed.canonical_bytes()), Integrity::Ok);
    }

    #[test]
    fn canonical_text_has_sorted_keys() {
        let text = rules().canonical_text();
        let top: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with('['))
            .collect();
        let mut sorted = top.clone();
        sorted.sort();
        assert_eq!(top, sorted);
    }

    #[test]
    fn validation() {
        let mut r = rules();
        r.budget.max_impact_per_action = 10.0;
        assert_eq!(r.validate(), Err(RulesetError::BudgetAboveNeed));
        let mut r = rules();
        r.autonomy_gates.insert(EmconLevel::Silent, AutonomyLevel::Delegated);
        assert_eq!(r.validate(), Err(RulesetError::NonMonotoneGates));
        let mut r = rules();
        r.autonomy_gates.remove(&EmconLevel::Restricted);
        assert_eq!(r.validate(), Err(RulesetError::MissingGate(EmconLevel::Restricted)));
    }
}
