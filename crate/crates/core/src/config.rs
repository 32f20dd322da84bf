//! Scenario configuration. A config plus a seed fully determines a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{AutonomyLevel, Catalog, CatalogError};
use crate::agent::{Discretizer, RewardParams};
use crate::cascade::{CascadeParams, EnvConstraints};
use crate::guardrails::{default_gates, EmconLevel, GuardrailSet, ImpactBudget, Ruleset};
use crate::world::WorldConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub reward: RewardParams,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Ticks per sensing window; the agent decides once per window.
    pub window: u64,
    /// Windows observed before the anomaly baseline is trusted.
    pub warmup_windows: u64,
    pub bins: Discretizer,
    pub real_vm_actions: bool,
    /// Ticks between heartbeats; 0 disables them.
    pub heartbeat_interval: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            reward: RewardParams::default(),
            alpha: 0.1,
            gamma: 0.9,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
            window: 20,
            warmup_windows: 3,
            bins: Discretizer::default(),
            real_vm_actions: false,
            heartbeat_interval: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuardrailConfig {
    pub budget: ImpactBudget,
    pub gates: BTreeMap<EmconLevel, AutonomyLevel>,
    /// Per-action impact overrides, keyed by action name.
    pub impacts: BTreeMap<String, f64>,
}

impl Default for GuardrailConfig {
    fn default() -> Self {
        GuardrailConfig { budget: ImpactBudget::default(), gates: default_gates(), impacts: BTreeMap::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmconStep {
    pub from_tick: u64,
    pub level: EmconLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommsConfig {
    pub violation_threshold: u32,
    pub peers: Vec<String>,
}

impl Default for CommsConfig {
    fn default() -> Self {
        CommsConfig { violation_threshold: 3, peers: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub episode_ticks: u64,
    pub world: WorldConfig,
    pub agent: AgentConfig,
    pub cascade: CascadeParams,
    /// Per-decision budgets and conditions handed to the cascade. The EMCON
    /// level here is overridden by the schedule.
    pub constraints: EnvConstraints,
    /// Level changes, applied from `from_tick` on. Open before the first step.
    pub emcon: Vec<EmconStep>,
    pub guardrails: GuardrailConfig,
    /// Corrupt the live ruleset at this tick (tamper test).
    pub tamper_at_tick: Option<u64>,
    pub comms: CommsConfig,
    pub min_support: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            episode_ticks: 2000,
            world: WorldConfig::default(),
            agent: AgentConfig::default(),
            cascade: CascadeParams::default(),
            constraints: EnvConstraints::default(),
            emcon: vec![],
            guardrails: GuardrailConfig::default(),
            tamper_at_tick: None,
            comms: CommsConfig::default(),
            min_support: 5,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.agent;
        if self.episode_ticks == 0 {
            return Err(invalid("episode_ticks must be positive"));
        }
        if a.window == 0 {
            return Err(invalid("agent.window must be positive"));
        }
        for (name, eps) in [("epsilon_start", a.epsilon_start), ("epsilon_end", a.epsilon_end)] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(invalid(format!("agent.{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&a.alpha) || !(0.0..1.0).contains(&a.gamma) {
            return Err(invalid("agent.alpha must lie in [0, 1] and agent.gamma in [0, 1)"));
        }
        let r = &a.reward;
        if ![r.a, r.b, r.c].iter().all(|x| x.is_finite()) || r.denominator_floor == 0 {
            return Err(invalid("reward weights must be finite and the floor positive"));
        }
        let steps = self.emcon.windows(2).all(|w| w[0].from_tick < w[1].from_tick);
        if !steps {
            return Err(invalid("emcon schedule must be strictly increasing in from_tick"));
        }
        if !(0.0..=1.0).contains(&self.constraints.safety_margin) {
            return Err(invalid("constraints.safety_margin must lie in [0, 1]"));
        }
        let t = &self.cascade.thresholds;
        for th in [t.pattern_recognition, t.online_learning, t.human_escalation, t.game_search] {
            if !(0.0..=1.0).contains(&th) {
                return Err(invalid("stage thresholds must lie in [0, 1]"));
            }
        }
        crate::world::WorldState::new(&self.world, self.seed).map_err(|e| invalid(e.to_string()))?;
        self.ruleset()?;
        Ok(())
    }

    pub fn catalog(&self) -> Result<Catalog, ConfigError> {
        let c = &self.world.costs;
        let real_vm_cost = c.database.max(c.application).max(c.web);
        Catalog::standard(c.honeypot, real_vm_cost, self.agent.real_vm_actions)
            .with_impacts(&self.guardrails.impacts)
            .map_err(|e: CatalogError| invalid(e.to_string()))
    }

    pub fn ruleset(&self) -> Result<Ruleset, ConfigError> {
        let g = &self.guardrails;
        Ruleset::new(g.budget, g.gates.clone(), self.cascade.thresholds, &self.catalog()?)
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn guardrails(&self) -> Result<GuardrailSet, ConfigError> {
        Ok(GuardrailSet::from_ruleset(&self.ruleset()?))
    }

    pub fn emcon_at(&self, tick: u64) -> EmconLevel {
        self.emcon.iter().take_while(|s| s.from_tick <= tick).last().map_or(EmconLevel::Open, |s| s.level)
    }

    /// Exploration rate for `episode` of `episodes`, linear from start to end.
    pub fn epsilon_for(&self, episode: u64, episodes: u64) -> f64 {
        let a = &self.agent;
        if episode + 1 >= episodes {
            return a.epsilon_end;
        }
        let f = episode.min(episodes - 1) as f64 / (episodes - 1) as f64;
        a.epsilon_start + (a.epsilon_end - a.epsilon_start) * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ScenarioConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(ScenarioConfig::from_toml("[world]\nnodez = 3"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn invalid_values() {
        assert!(matches!(ScenarioConfig::from_toml("episode_ticks = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ScenarioConfig::from_toml("[world]\ncapacity = 5"), Err(ConfigError::Invalid(_))));
        let bad_sched = "[[emcon]]\nfrom_tick = 5\nlevel = \"silent\"\n[[emcon]]\nfrom_tick = 5\nlevel = \"open\"";
        assert!(matches!(ScenarioConfig::from_toml(bad_sched), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn schedule_and_epsilon() {
        let mut cfg = ScenarioConfig::default();
        cfg.emcon = vec![
            EmconStep { from_tick: 10, level: EmconLevel::Restricted },
            EmconStep { from_tick: 20, level: EmconLevel::Silent },
        ];
        assert_eq!(cfg.emcon_at(0), EmconLevel::Open);
        assert_eq!(cfg.emcon_at(10), EmconLevel::Restricted);
        assert_eq!(cfg.emcon_at(25), EmconLevel::Silent);
        assert_eq!(cfg.epsilon_for(0, 11), 0.3);
        assert_eq!(cfg.epsilon_for(10, 11), 0.05);
        assert!((cfg.epsilon_for(5, 11) - 0.175).abs() < 1e-12);
        assert_eq!(cfg.epsilon_for(0, 1), 0.05);
    }

    #[test]
    fn shipped_example_parses() {
        let text = include_str!("../../../configs/scenario.toml");
        ScenarioConfig::from_toml(text).unwrap();
    }
}
