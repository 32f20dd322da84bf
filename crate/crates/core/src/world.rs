//! Discrete-event model of the virtualized cloud.
//!
//! The world owns the nodes, the resource pool, the attacker campaigns and
//! the event log. One call to [`WorldState::step`] advances the clock by one
//! tick: benign traffic first, then each campaign in id order. Agent actions
//! are applied between steps through [`WorldState::apply_action`].
//!
//! Every event carries a ground-truth `truth_malicious` flag. Percepts built
//! for the agent go through [`WorldEvent::observed`], which drops it.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionEffect, ActionId, Direction};
use crate::rng::{self, SimRng, StreamSeeds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

/// Opaque, rotatable network address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Database,
    Application,
    Web,
    Honeypot,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Database, NodeKind::Application, NodeKind::Web, NodeKind::Honeypot];

    pub fn is_real(self) -> bool {
        self != NodeKind::Honeypot
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Running,
    Stopped,
    Compromised,
    Quarantined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub status: NodeStatus,
    pub address: Address,
    pub cost: u64,
    pub integrity_ok: bool,
    pub decoy_files: u32,
    /// Undetected exploit hits since the last clean state.
    pub progress: u32,
}

impl Node {
    /// Anything but `Stopped` holds its resource cost.
    pub fn is_powered(&self) -> bool {
        self.status != NodeStatus::Stopped
    }

    /// Nodes an attacker can reach on the network.
    pub fn is_reachable(&self) -> bool {
        matches!(self.status, NodeStatus::Running | NodeStatus::Compromised)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    pub capacity: u64,
    pub used: u64,
}

impl ResourcePool {
    pub fn available(&self) -> u64 {
        self.capacity - self.used
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Recon,
    Exploit,
    Lateral,
    Dormant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    /// Per-tick probability of acting in each phase.
    pub recon: f64,
    pub exploit: f64,
    pub lateral: f64,
    /// In the lateral phase, chance that a successful roll is spent on discovery.
    pub lateral_discovery: f64,
    pub start_tick: u64,
    pub end_tick: Option<u64>,
    /// Node indices whose addresses the campaign knows at start.
    pub known_nodes: Vec<u32>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            recon: 0.2,
            exploit: 0.4,
            lateral: 0.4,
            lateral_discovery: 0.3,
            start_tick: 0,
            end_tick: None,
            known_nodes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackerCampaign {
    pub id: u32,
    pub phase: Phase,
    pub known_addresses: BTreeSet<Address>,
    pub params: CampaignConfig,
    #[serde(skip, default = "dummy_rng")]
    rng: SimRng,
}

fn dummy_rng() -> SimRng {
    rng::stream(0)
}

impl AttackerCampaign {
    /// Per-tick action probability in the current phase.
    pub fn intensity(&self) -> f64 {
        match self.phase {
            Phase::Recon => self.params.recon,
            Phase::Exploit => self.params.exploit,
            Phase::Lateral => self.params.lateral,
            Phase::Dormant => 0.0,
        }
    }

    fn active_at(&self, tick: u64) -> bool {
        tick >= self.params.start_tick && self.params.end_tick.is_none_or(|end| tick < end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    IdsAlert { severity: u8 },
    AntiMalwareAlert,
    UnauthorizedAccess,
    HoneyTouch,
    DummyFileAccess,
    DummyProcessAlert,
    FileIntegrityViolation,
    LoadSample { load: f64 },
    LogLine,
    OperatorReply,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub node: NodeId,
    pub truth_malicious: bool,
}

/// An event as the agent's sensors see it: no ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub node: NodeId,
}

impl WorldEvent {
    pub fn observed(&self) -> ObservedEvent {
        ObservedEvent { tick: self.tick, kind: self.kind, node: self.node }
    }
}

/// Append-only event log. Covers ticks `[0, clock)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<WorldEvent>,
    clock: u64,
}

impl EventLog {
    pub fn new(events: Vec<WorldEvent>, clock: u64) -> Self {
        EventLog { events, clock }
    }

    pub fn events(&self) -> &[WorldEvent] {
        &self.events
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Events with `first <= tick <= last`, relying on tick order.
    pub fn window(&self, first: u64, last: u64) -> &[WorldEvent] {
        let lo = self.events.partition_point(|e| e.tick < first);
        let hi = self.events.partition_point(|e| e.tick <= last);
        &self.events[lo..hi.max(lo)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeCounts {
    pub database: u32,
    pub application: u32,
    pub web: u32,
}

impl Default for NodeCounts {
    fn default() -> Self {
        NodeCounts { database: 3, application: 3, web: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeCosts {
    pub database: u64,
    pub application: u64,
    pub web: u64,
    pub honeypot: u64,
}

impl Default for NodeCosts {
    fn default() -> Self {
        NodeCosts { database: 10, application: 10, web: 10, honeypot: 10 }
    }
}

impl NodeCosts {
    pub fn of(&self, kind: NodeKind) -> u64 {
        match kind {
            NodeKind::Database => self.database,
            NodeKind::Application => self.application,
            NodeKind::Web => self.web,
            NodeKind::Honeypot => self.honeypot,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenignConfig {
    pub base_load: f64,
    /// Weight of pool utilisation in the sampled load.
    pub util_weight: f64,
    pub load_jitter: f64,
    pub log_line_rate: f64,
    pub false_ids_rate: f64,
    pub false_antimalware_rate: f64,
}

impl Default for BenignConfig {
    fn default() -> Self {
        BenignConfig {
            base_load: 0.2,
            util_weight: 0.5,
            load_jitter: 0.1,
            log_line_rate: 0.5,
            false_ids_rate: 0.02,
            false_antimalware_rate: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub capacity: u64,
    pub nodes: NodeCounts,
    pub costs: NodeCosts,
    pub initial_honeypots: u32,
    pub p_detect: f64,
    /// Inclusive severity range for IDS alerts.
    pub severity: [u8; 2],
    /// Undetected hits needed to compromise a real node.
    pub compromise_threshold: u32,
    pub antimalware_prob: f64,
    pub dummy_process_prob: f64,
    /// Real files per node; decoys compete with these for attacker attention.
    pub files_per_node: u32,
    pub decoy_batch: u32,
    pub restrict_duration: u64,
    pub benign: BenignConfig,
    pub campaigns: Vec<CampaignConfig>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            capacity: 160,
            nodes: NodeCounts::default(),
            costs: NodeCosts::default(),
            initial_honeypots: 0,
            p_detect: 0.7,
            severity: [1, 5],
            compromise_threshold: 3,
            antimalware_prob: 0.3,
            dummy_process_prob: 0.5,
            files_per_node: 20,
            decoy_batch: 5,
            restrict_duration: 20,
            benign: BenignConfig::default(),
            campaigns: vec![CampaignConfig::default()],
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WorldError {
    #[error("config invalid: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ActionError {
    #[error("insufficient resources: need {needed}, available {available}")]
    InsufficientResources { needed: u64, available: u64 },
    #[error("no such node")]
    NoSuchNode { node: Option<NodeId> },
    #[error("illegal transition for {effect} on node {node:?} in state {from:?}")]
    IllegalTransition { node: NodeId, from: NodeStatus, effect: ActionEffect },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedAction {
    pub action: ActionId,
    pub effect: ActionEffect,
    pub target: Option<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    /// Positive when resources are freed, negative when consumed.
    pub delta_resources: i64,
    pub target: Option<NodeId>,
    pub new_address: Option<Address>,
}

impl ActionOutcome {
    fn none() -> Self {
        ActionOutcome { delta_resources: 0, target: None, new_address: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: WorldConfig,
    pub nodes: Vec<Node>,
    pub pool: ResourcePool,
    pub campaigns: Vec<AttackerCampaign>,
    log: EventLog,
    next_address: u64,
    inbound_restricted_until: u64,
    outbound_restricted_until: u64,
    #[serde(skip, default = "dummy_rng")]
    benign_rng: SimRng,
}

/// Stopped-or-not snapshot the agent side uses for state discretisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorldSummary {
    pub honeypots_active: u32,
    pub available: u64,
}

impl WorldState {
    pub fn new(config: &WorldConfig, seed: u64) -> Result<Self, WorldError> {
        validate(config)?;
        let seeds = StreamSeeds::derive(seed);
        let mut world = WorldState {
            config: config.clone(),
            nodes: Vec::new(),
            pool: ResourcePool { capacity: config.capacity, used: 0 },
            campaigns: Vec::new(),
            log: EventLog::default(),
            next_address: 1,
            inbound_restricted_until: 0,
            outbound_restricted_until: 0,
            benign_rng: rng::stream(seeds.benign),
        };
        let layout = [
            (NodeKind::Database, config.nodes.database),
            (NodeKind::Application, config.nodes.application),
            (NodeKind::Web, config.nodes.web),
            (NodeKind::Honeypot, config.initial_honeypots),
        ];
        let demand: u64 = layout.iter().map(|&(k, n)| config.costs.of(k) * n as u64).sum();
        if demand > config.capacity {
            return Err(WorldError::ConfigInvalid(format!(
                "initial demand {demand} exceeds capacity {}",
                config.capacity
            )));
        }
        for (kind, count) in layout {
            for _ in 0..count {
                world.push_node(kind);
            }
        }
        world.pool.used = demand;

        let mut attacker_master = rng::stream(seeds.attacker);
        for (i, params) in config.campaigns.iter().enumerate() {
            let mut known = BTreeSet::new();
            for &idx in &params.known_nodes {
                let node = world.nodes.get(idx as usize).ok_or_else(|| {
                    WorldError::ConfigInvalid(format!("campaign {i} knows unknown node {idx}"))
                })?;
                known.insert(node.address);
            }
            let phase = if !known.is_empty() { Phase::Exploit } else { Phase::Recon };
            world.campaigns.push(AttackerCampaign {
                id: i as u32,
                phase,
                known_addresses: known,
                params: params.clone(),
                rng: rng::stream(attacker_master.gen()),
            });
        }
        Ok(world)
    }

    fn push_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let address = self.fresh_address();
        self.nodes.push(Node {
            id,
            kind,
            status: NodeStatus::Running,
            address,
            cost: self.config.costs.of(kind),
            integrity_ok: true,
            decoy_files: 0,
            progress: 0,
        });
        id
    }

    fn fresh_address(&mut self) -> Address {
        let a = Address(self.next_address);
        self.next_address += 1;
        a
    }

    pub fn clock(&self) -> u64 {
        self.log.clock
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn summary(&self) -> WorldSummary {
        WorldSummary {
            honeypots_active: self
                .nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Honeypot && n.status == NodeStatus::Running)
                .count() as u32,
            available: self.pool.available(),
        }
    }

    /// Sum of the costs of all powered nodes; equals `pool.used` at all times.
    pub fn powered_cost(&self) -> u64 {
        self.nodes.iter().filter(|n| n.is_powered()).map(|n| n.cost).sum()
    }

    pub fn inbound_restricted(&self) -> bool {
        self.clock() < self.inbound_restricted_until
    }

    pub fn outbound_restricted(&self) -> bool {
        self.clock() < self.outbound_restricted_until
    }

    /// Append a benign event at the current tick (operator replies and the like).
    pub fn inject_benign(&mut self, kind: EventKind, node: NodeId) -> WorldEvent {
        let event = WorldEvent { tick: self.clock(), kind, node, truth_malicious: false };
        self.log.events.push(event);
        event
    }

    /// Advance one tick and return the events it produced.
    pub fn step(&mut self) -> Vec<WorldEvent> {
        let tick = self.clock();
        let mut out = Vec::new();
        self.benign_traffic(tick, &mut out);
        for i in 0..self.campaigns.len() {
            self.campaign_act(i, tick, &mut out);
        }
        self.log.events.extend_from_slice(&out);
        self.log.clock += 1;
        out
    }

    fn benign_traffic(&mut self, tick: u64, out: &mut Vec<WorldEvent>) {
        let real: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind.is_real() && n.status == NodeStatus::Running)
            .map(|n| n.id)
            .collect();
        if real.is_empty() {
            return;
        }
        let b = &self.config.benign;
        let rng = &mut self.benign_rng;
        let util = self.pool.used as f64 / self.pool.capacity.max(1) as f64;
        let jitter = b.load_jitter * (2.0 * rng.gen::<f64>() - 1.0);
        let load = (b.base_load + b.util_weight * util + jitter).clamp(0.0, 1.0);
        let mut emit = |kind, rng: &mut SimRng| {
            let node = real[rng.gen_range(0..real.len())];
            out.push(WorldEvent { tick, kind, node, truth_malicious: false });
        };
        emit(EventKind::LoadSample { load }, rng);
        if rng.gen_bool(b.log_line_rate) {
            emit(EventKind::LogLine, rng);
        }
        if rng.gen_bool(b.false_ids_rate) {
            let [lo, hi] = self.config.severity;
            let severity = rng.gen_range(lo..=hi);
            emit(EventKind::IdsAlert { severity }, rng);
        }
        if rng.gen_bool(b.false_antimalware_rate) {
            emit(EventKind::AntiMalwareAlert, rng);
        }
    }

    fn campaign_act(&mut self, idx: usize, tick: u64, out: &mut Vec<WorldEvent>) {
        let outbound_blocked = self.outbound_restricted();
        let inbound_blocked = self.inbound_restricted();
        let campaign = &mut self.campaigns[idx];
        if !campaign.active_at(tick) {
            campaign.phase = Phase::Dormant;
            return;
        }
        if campaign.phase == Phase::Dormant {
            campaign.phase = if campaign.known_addresses.is_empty() { Phase::Recon } else { Phase::Exploit };
        }
        if !campaign.rng.gen_bool(campaign.intensity().clamp(0.0, 1.0)) {
            return;
        }
        let discover = match campaign.phase {
            Phase::Recon => true,
            Phase::Lateral => !outbound_blocked && campaign.rng.gen_bool(campaign.params.lateral_discovery),
            _ => false,
        };
        if discover {
            let candidates: Vec<Address> =
                self.nodes.iter().filter(|n| n.is_reachable()).map(|n| n.address).collect();
            if !candidates.is_empty() {
                let pick = candidates[campaign.rng.gen_range(0..candidates.len())];
                campaign.known_addresses.insert(pick);
                if campaign.phase == Phase::Recon {
                    campaign.phase = Phase::Exploit;
                }
            }
            return;
        }
        let targets: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_reachable() && campaign.known_addresses.contains(&n.address))
            .map(|(i, _)| i)
            .collect();
        if targets.is_empty() {
            campaign.phase = Phase::Recon;
            return;
        }
        let target = targets[campaign.rng.gen_range(0..targets.len())];
        let cfg = &self.config;
        let node = &mut self.nodes[target];
        let rng = &mut campaign.rng;
        let mut emit = |kind| out.push(WorldEvent { tick, kind, node: NodeId(target as u32), truth_malicious: true });

        if node.kind == NodeKind::Honeypot {
            emit(EventKind::HoneyTouch);
            if rng.gen_bool(cfg.dummy_process_prob) {
                emit(EventKind::DummyProcessAlert);
            }
            return;
        }
        if inbound_blocked {
            return;
        }
        if node.status == NodeStatus::Compromised {
            emit(EventKind::UnauthorizedAccess);
            return;
        }
        if rng.gen_bool(cfg.p_detect) {
            let [lo, hi] = cfg.severity;
            emit(EventKind::IdsAlert { severity: rng.gen_range(lo..=hi) });
            return;
        }
        let decoy_share =
            node.decoy_files as f64 / (node.decoy_files as f64 + cfg.files_per_node as f64).max(1.0);
        if node.decoy_files > 0 && rng.gen_bool(decoy_share) {
            emit(EventKind::DummyFileAccess);
            return;
        }
        node.progress += 1;
        if rng.gen_bool(cfg.antimalware_prob) {
            emit(EventKind::AntiMalwareAlert);
        }
        if node.progress >= cfg.compromise_threshold {
            node.status = NodeStatus::Compromised;
            node.integrity_ok = false;
            emit(EventKind::FileIntegrityViolation);
            campaign.phase = Phase::Lateral;
        }
    }

    /// Choose the node an effect applies to. `hint` is the node the agent's
    /// percepts flagged most recently, if any.
    pub fn resolve_target(&self, effect: ActionEffect, hint: Option<NodeId>) -> Option<NodeId> {
        let real = |n: &&Node| n.kind.is_real();
        let hinted = hint.and_then(|h| self.node(h)).filter(|n| n.kind.is_real());
        match effect {
            ActionEffect::StopHoneypot => self
                .nodes
                .iter()
                .rev()
                .find(|n| n.kind == NodeKind::Honeypot && n.status == NodeStatus::Running)
                .map(|n| n.id),
            ActionEffect::StartRealVm => {
                self.nodes.iter().filter(real).find(|n| n.status == NodeStatus::Stopped).map(|n| n.id)
            }
            ActionEffect::StopRealVm => {
                self.nodes.iter().rev().filter(real).find(|n| n.status == NodeStatus::Running).map(|n| n.id)
            }
            ActionEffect::DeployDummyFiles => hinted.filter(|n| n.is_powered()).map(|n| n.id).or_else(|| {
                self.nodes
                    .iter()
                    .filter(real)
                    .filter(|n| n.status == NodeStatus::Running)
                    .min_by_key(|n| (n.decoy_files, n.id))
                    .map(|n| n.id)
            }),
            ActionEffect::QuarantineFile | ActionEffect::RotateAddress => {
                hinted.filter(|n| n.is_reachable()).map(|n| n.id).or_else(|| {
                    self.nodes.iter().filter(real).find(|n| n.status == NodeStatus::Running).map(|n| n.id)
                })
            }
            ActionEffect::QuarantineNode => hinted.filter(|n| n.is_reachable()).map(|n| n.id),
            ActionEffect::RestoreKnownGood => self
                .nodes
                .iter()
                .find(|n| !n.integrity_ok || n.status == NodeStatus::Compromised)
                .or_else(|| self.nodes.iter().find(|n| n.status == NodeStatus::Quarantined))
                .map(|n| n.id),
            _ => None,
        }
    }

    pub fn apply_action(&mut self, action: &ExecutedAction) -> Result<ActionOutcome, ActionError> {
        use ActionEffect::*;
        let effect = action.effect;
        match effect {
            NoOp | CryForHelp | ShareBlocklist | TerminateSelf => Ok(ActionOutcome::none()),
            StartHoneypot => {
                let cost = self.config.costs.honeypot;
                self.reserve(cost)?;
                let reuse = self
                    .nodes
                    .iter()
                    .position(|n| n.kind == NodeKind::Honeypot && n.status == NodeStatus::Stopped);
                let id = match reuse {
                    Some(i) => {
                        let address = self.fresh_address();
                        let n = &mut self.nodes[i];
                        n.status = NodeStatus::Running;
                        n.address = address;
                        n.id
                    }
                    None => self.push_node(NodeKind::Honeypot),
                };
                Ok(ActionOutcome { delta_resources: -(cost as i64), target: Some(id), new_address: None })
            }
            StopHoneypot | StopRealVm => {
                let want_honeypot = effect == StopHoneypot;
                let node = self.target_mut(action.target)?;
                if (node.kind == NodeKind::Honeypot) != want_honeypot || node.status != NodeStatus::Running {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                node.status = NodeStatus::Stopped;
                let (id, cost) = (node.id, node.cost);
                self.pool.used -= cost;
                Ok(ActionOutcome { delta_resources: cost as i64, target: Some(id), new_address: None })
            }
            StartRealVm => {
                let available = self.pool.available();
                let node = self.target_mut(action.target)?;
                if !node.kind.is_real() || node.status != NodeStatus::Stopped {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                if node.cost > available {
                    return Err(ActionError::InsufficientResources { needed: node.cost, available });
                }
                node.status = NodeStatus::Running;
                let (id, cost) = (node.id, node.cost);
                self.pool.used += cost;
                Ok(ActionOutcome { delta_resources: -(cost as i64), target: Some(id), new_address: None })
            }
            DeployDummyFiles => {
                let batch = self.config.decoy_batch;
                let node = self.target_mut(action.target)?;
                if !node.is_powered() {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                node.decoy_files += batch;
                Ok(ActionOutcome { target: Some(node.id), ..ActionOutcome::none() })
            }
            QuarantineFile => {
                let node = self.target_mut(action.target)?;
                if !node.is_powered() {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                node.progress = 0;
                Ok(ActionOutcome { target: Some(node.id), ..ActionOutcome::none() })
            }
            QuarantineNode => {
                let node = self.target_mut(action.target)?;
                if !node.is_reachable() {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                node.status = NodeStatus::Quarantined;
                Ok(ActionOutcome { target: Some(node.id), ..ActionOutcome::none() })
            }
            RestoreKnownGood => {
                let node = self.target_mut(action.target)?;
                let restorable = matches!(node.status, NodeStatus::Compromised | NodeStatus::Quarantined)
                    || (node.status == NodeStatus::Running && !node.integrity_ok);
                if !restorable {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                node.status = NodeStatus::Running;
                node.integrity_ok = true;
                node.progress = 0;
                Ok(ActionOutcome { target: Some(node.id), ..ActionOutcome::none() })
            }
            RotateAddress => {
                let fresh = Address(self.next_address);
                let node = self.target_mut(action.target)?;
                if !node.is_powered() {
                    return Err(ActionError::IllegalTransition { node: node.id, from: node.status, effect });
                }
                let stale = std::mem::replace(&mut node.address, fresh);
                let id = node.id;
                self.next_address += 1;
                for c in &mut self.campaigns {
                    c.known_addresses.remove(&stale);
                }
                Ok(ActionOutcome { delta_resources: 0, target: Some(id), new_address: Some(fresh) })
            }
            RestrictComms(direction) => {
                let until = self.clock() + self.config.restrict_duration;
                match direction {
                    Direction::Inbound => self.inbound_restricted_until = until,
                    Direction::Outbound => self.outbound_restricted_until = until,
                }
                Ok(ActionOutcome::none())
            }
        }
    }

    fn reserve(&mut self, cost: u64) -> Result<(), ActionError> {
        let available = self.pool.available();
        if cost > available {
            return Err(ActionError::InsufficientResources { needed: cost, available });
        }
        self.pool.used += cost;
        Ok(())
    }

    fn target_mut(&mut self, target: Option<NodeId>) -> Result<&mut Node, ActionError> {
        let id = target.ok_or(ActionError::NoSuchNode { node: None })?;
        self.nodes.get_mut(id.0 as usize).ok_or(ActionError::NoSuchNode { node: Some(id) })
    }
}

fn validate(config: &WorldConfig) -> Result<(), WorldError> {
    let prob = |name: &str, p: f64| {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(WorldError::ConfigInvalid(format!("{name} must be a probability, got {p}")))
        }
    };
    prob("p_detect", config.p_detect)?;
    prob("antimalware_prob", config.antimalware_prob)?;
    prob("dummy_process_prob", config.dummy_process_prob)?;
    prob("benign.log_line_rate", config.benign.log_line_rate)?;
    prob("benign.false_ids_rate", config.benign.false_ids_rate)?;
    prob("benign.false_antimalware_rate", config.benign.false_antimalware_rate)?;
    for (i, c) in config.campaigns.iter().enumerate() {
        for (name, p) in [("recon", c.recon), ("exploit", c.exploit), ("lateral", c.lateral), ("lateral_discovery", c.lateral_discovery)] {
            prob(&format!("campaigns[{i}].{name}"), p)?;
        }
    }
    let [lo, hi] = config.severity;
    if lo < 1 || hi > 5 || lo > hi {
        return Err(WorldError::ConfigInvalid(format!("severity range {lo}..={hi} outside 1..=5")));
    }
    if config.compromise_threshold == 0 {
        return Err(WorldError::ConfigInvalid("compromise_threshold must be positive".into()));
    }
    if !(config.benign.base_load.is_finite() && config.benign.util_weight.is_finite() && config.benign.load_jitter.is_finite()) {
        return Err(WorldError::ConfigInvalid("benign load parameters must be finite".into()));
    }
    Ok(())
}
