//! Action vocabulary shared by the world, the agent, the guardrails and comms.
//!
//! Every action the agent can take is a catalog entry ([`ActionSpec`]) keyed by
//! an [`ActionId`]. The entry carries the physical effect, the nominal resource
//! delta (negative when resources are consumed), a guardrail impact score, the
//! emission cost and the autonomy level the action requires.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u16);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "effect", content = "direction", rename_all = "snake_case")]
pub enum ActionEffect {
    NoOp,
    StartHoneypot,
    StopHoneypot,
    StartRealVm,
    StopRealVm,
    DeployDummyFiles,
    QuarantineFile,
    QuarantineNode,
    RestoreKnownGood,
    RotateAddress,
    RestrictComms(Direction),
    CryForHelp,
    ShareBlocklist,
    TerminateSelf,
}

impl ActionEffect {
    /// Stable snake_case name, used as the key in impact tables.
    pub fn name(&self) -> &'static str {
        match self {
            ActionEffect::NoOp => "no_op",
            ActionEffect::StartHoneypot => "start_honeypot",
            ActionEffect::StopHoneypot => "stop_honeypot",
            ActionEffect::StartRealVm => "start_real_vm",
            ActionEffect::StopRealVm => "stop_real_vm",
            ActionEffect::DeployDummyFiles => "deploy_dummy_files",
            ActionEffect::QuarantineFile => "quarantine_file",
            ActionEffect::QuarantineNode => "quarantine_node",
            ActionEffect::RestoreKnownGood => "restore_known_good",
            ActionEffect::RotateAddress => "rotate_address",
            ActionEffect::RestrictComms(Direction::Inbound) => "restrict_inbound",
            ActionEffect::RestrictComms(Direction::Outbound) => "restrict_outbound",
            ActionEffect::CryForHelp => "cry_for_help",
            ActionEffect::ShareBlocklist => "share_blocklist",
            ActionEffect::TerminateSelf => "terminate_self",
        }
    }
}

impl fmt::Display for ActionEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Autonomy hierarchy, lowest first. The derived ordering is the gate order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutonomyLevel {
    Reflex,
    Previsioned,
    Collaborative,
    Delegated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: ActionId,
    pub effect: ActionEffect,
    pub resource_delta: i64,
    pub impact: f64,
    pub emission_cost: u32,
    pub autonomy_level: AutonomyLevel,
    /// Disabled entries stay in the catalog but are never proposed.
    pub enabled: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CatalogError {
    #[error("catalog is empty")]
    Empty,
    #[error("duplicate action id {0}")]
    DuplicateId(ActionId),
    #[error("action {0} violates catalog invariant: {1}")]
    Invariant(ActionId, &'static str),
    #[error("unknown action name `{0}` in impact table")]
    UnknownName(String),
}

/// Ordered action catalog. Lookups are by id; iteration is in id order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    specs: Vec<ActionSpec>,
}

impl Catalog {
    pub fn new(mut specs: Vec<ActionSpec>) -> Result<Self, CatalogError> {
        if specs.is_empty() {
            return Err(CatalogError::Empty);
        }
        specs.sort_by_key(|s| s.id);
        for pair in specs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CatalogError::DuplicateId(pair[1].id));
            }
        }
        for s in &specs {
            if !(s.impact.is_finite() && s.impact >= 0.0) {
                return Err(CatalogError::Invariant(s.id, "impact must be finite and non-negative"));
            }
            match s.effect {
                ActionEffect::TerminateSelf
                    if s.impact != 0.0 || s.autonomy_level != AutonomyLevel::Reflex =>
                {
                    return Err(CatalogError::Invariant(s.id, "terminate_self must be a zero-impact reflex"));
                }
                ActionEffect::CryForHelp | ActionEffect::ShareBlocklist if s.emission_cost == 0 => {
                    return Err(CatalogError::Invariant(s.id, "social actions must emit"));
                }
                ActionEffect::StartHoneypot if s.resource_delta >= 0 => {
                    return Err(CatalogError::Invariant(s.id, "start_honeypot must consume resources"));
                }
                _ => {}
            }
        }
        Ok(Catalog { specs })
    }

    /// The default catalog. `honeypot_cost` and `real_vm_cost` fill the
    /// nominal resource deltas; `real_vm_actions` enables the optional
    /// start/stop of real servers.
    pub fn standard(honeypot_cost: u64, real_vm_cost: u64, real_vm_actions: bool) -> Self {
        use ActionEffect::*;
        use AutonomyLevel::*;
        let hp = honeypot_cost as i64;
        let vm = real_vm_cost as i64;
        let rows: [(ActionEffect, i64, f64, u32, AutonomyLevel, bool); 15] = [
            (NoOp, 0, 0.0, 0, Reflex, true),
            (StartHoneypot, -hp, 1.0, 0, Reflex, true),
            (StopHoneypot, hp, 1.0, 0, Reflex, true),
            (DeployDummyFiles, 0, 1.0, 0, Reflex, true),
            (QuarantineFile, 0, 2.0, 0, Previsioned, true),
            (QuarantineNode, 0, 4.0, 0, Previsioned, true),
            (RestoreKnownGood, 0, 3.0, 0, Previsioned, true),
            (RotateAddress, 0, 2.0, 0, Previsioned, true),
            (RestrictComms(Direction::Inbound), 0, 3.0, 0, Previsioned, true),
            (RestrictComms(Direction::Outbound), 0, 3.0, 0, Previsioned, true),
            (CryForHelp, 0, 0.0, 1, Collaborative, true),
            (ShareBlocklist, 0, 0.0, 1, Collaborative, true),
            (TerminateSelf, 0, 0.0, 0, Reflex, true),
            (StartRealVm, -vm, 2.0, 0, Delegated, real_vm_actions),
            (StopRealVm, vm, 6.0, 0, Delegated, real_vm_actions),
        ];
        let specs = rows
            .iter()
            .enumerate()
            .map(|(i, &(effect, resource_delta, impact, emission_cost, autonomy_level, enabled))| ActionSpec {
                id: ActionId(i as u16),
                effect,
                resource_delta,
                impact,
                emission_cost,
                autonomy_level,
                enabled,
            })
            .collect();
        Catalog::new(specs).expect("standard catalog is valid")
    }

    /// Replace impact scores by effect name.
    pub fn with_impacts(mut self, impacts: &BTreeMap<String, f64>) -> Result<Self, CatalogError> {
        for (name, &impact) in impacts {
            let spec = self
                .specs
                .iter_mut()
                .find(|s| s.effect.name() == name)
                .ok_or_else(|| CatalogError::UnknownName(name.clone()))?;
            spec.impact = impact;
        }
        Catalog::new(self.specs)
    }

    pub fn get(&self, id: ActionId) -> Option<&ActionSpec> {
        self.specs
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.specs[i])
    }

    pub fn by_effect(&self, effect: ActionEffect) -> Option<&ActionSpec> {
        self.specs.iter().find(|s| s.effect == effect)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSpec> {
        self.specs.iter()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Actions a learner may choose: enabled, and never `TerminateSelf`
    /// (that one is reserved for the fail-safe and the tamper kill).
    pub fn learnable(&self) -> Vec<ActionId> {
        self.specs
            .iter()
            .filter(|s| s.enabled && s.effect != ActionEffect::TerminateSelf)
            .map(|s| s.id)
            .collect()
    }

    pub fn no_op(&self) -> ActionId {
        self.by_effect(ActionEffect::NoOp).map(|s| s.id).unwrap_or(ActionId(0))
    }
}
