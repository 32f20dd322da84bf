//! Training, seed-paired evaluation against the random baseline, and the
//! offline pattern corpus.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::{QPolicy, QTable, RandomPolicy};
use crate::cascade::{offline_train, LabeledSample, PatternError, PatternTable};
use crate::config::{ConfigError, ScenarioConfig};
use crate::par::{self, Execution};
use crate::rng::{self, StreamSeeds};

use super::metrics::MetricsReport;
use super::runner::{run_scenario, RunError};
use super::trace::{NullSink, RecordBody, TraceRecord, TraceSink};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub table: QTable,
    /// Cumulative reward of each training episode.
    pub curve: Vec<f64>,
    /// Exploration rate used in each episode.
    pub epsilons: Vec<f64>,
}

pub fn fresh_table(cfg: &ScenarioConfig) -> Result<QTable, ConfigError> {
    QTable::new(cfg.catalog()?.learnable(), cfg.agent.alpha, cfg.agent.gamma)
        .map_err(|e| ConfigError::Invalid(e.to_string()))
}

/// Run `episodes` learning episodes, cycling through `seeds`.
pub fn train_agent(
    cfg: &ScenarioConfig,
    episodes: u64,
    seeds: &[u64],
    patterns: &PatternTable,
) -> Result<TrainOutput, RunError> {
    if episodes == 0 || seeds.is_empty() {
        return Err(ConfigError::Invalid("training needs at least one episode and one seed".into()).into());
    }
    let mut table = fresh_table(cfg)?;
    let mut curve = Vec::with_capacity(episodes as usize);
    let mut epsilons = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        let seed = seeds[(ep % seeds.len() as u64) as usize];
        let epsilon = cfg.epsilon_for(ep, episodes);
        let explore = rng::stream(StreamSeeds::derive(seed).exploration ^ ep);
        let mut policy = QPolicy::new(table, epsilon, true, explore);
        let report = run_scenario(cfg, seed, "q_learning", &mut policy, patterns, &mut NullSink)?;
        table = policy.into_table();
        curve.push(report.cumulative_reward);
        epsilons.push(epsilon);
    }
    Ok(TrainOutput { table, curve, epsilons })
}

/// Greedy, non-learning run of a trained table.
pub fn run_greedy(
    cfg: &ScenarioConfig,
    seed: u64,
    table: &QTable,
    patterns: &PatternTable,
    sink: &mut dyn TraceSink,
) -> Result<MetricsReport, RunError> {
    let explore = rng::stream(StreamSeeds::derive(seed).exploration);
    let mut policy = QPolicy::new(table.clone(), 0.0, false, explore);
    run_scenario(cfg, seed, "q_greedy", &mut policy, patterns, sink)
}

pub fn run_random(
    cfg: &ScenarioConfig,
    seed: u64,
    patterns: &PatternTable,
    sink: &mut dyn TraceSink,
) -> Result<MetricsReport, RunError> {
    let actions = cfg.catalog()?.learnable();
    let mut policy = RandomPolicy::new(actions, rng::stream(StreamSeeds::derive(seed).random_policy));
    run_scenario(cfg, seed, "random", &mut policy, patterns, sink)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub seed: u64,
    pub trained: MetricsReport,
    pub random: MetricsReport,
}

/// Trained-greedy and random runs on each seed. Rows come back sorted by seed.
pub fn evaluate(
    cfg: &ScenarioConfig,
    table: &QTable,
    patterns: &PatternTable,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<PairedRun>, RunError> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let rows = par::map(exec, &sorted, |&seed| -> Result<PairedRun, RunError> {
        Ok(PairedRun {
            seed,
            trained: run_greedy(cfg, seed, table, patterns, &mut NullSink)?,
            random: run_random(cfg, seed, patterns, &mut NullSink)?,
        })
    });
    rows.into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// One-sided: the first sample's mean exceeds the second's.
    pub p_value: f64,
}

/// One-sided paired t-test of `a > b`. Needs at least two pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p) = if se == 0.0 {
        // every difference equal: certain if positive, hopeless otherwise
        let t = if mean > 0.0 { f64::INFINITY } else if mean < 0.0 { f64::NEG_INFINITY } else { 0.0 };
        (t, if mean > 0.0 { 0.0 } else { 1.0 })
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof positive");
        (t, 1.0 - dist.cdf(t))
    };
    Some(PairedTest { n, mean_difference: mean, t_statistic: t, p_value: p })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seeds: usize,
    pub trained_mean_reward: f64,
    pub random_mean_reward: f64,
    pub trained_mean_engagements: f64,
    pub random_mean_engagements: f64,
    pub trained_mean_compromises: f64,
    pub random_mean_compromises: f64,
    pub reward_test: Option<PairedTest>,
}

pub fn summarize(rows: &[PairedRun]) -> EvalSummary {
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&PairedRun) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let a: Vec<f64> = rows.iter().map(|r| r.trained.cumulative_reward).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.random.cumulative_reward).collect();
    EvalSummary {
        seeds: rows.len(),
        trained_mean_reward: mean(&|r| r.trained.cumulative_reward),
        random_mean_reward: mean(&|r| r.random.cumulative_reward),
        trained_mean_engagements: mean(&|r| r.trained.honeypot_engagements as f64),
        random_mean_engagements: mean(&|r| r.random.honeypot_engagements as f64),
        trained_mean_compromises: mean(&|r| r.trained.real_server_compromises as f64),
        random_mean_compromises: mean(&|r| r.random.real_server_compromises as f64),
        reward_test: paired_t_test(&a, &b),
    }
}

/// Labelled decisions from a trace: the state a decision was taken in, the
/// action executed, and whether the reward credited to it was positive.
pub fn label_trace(records: &[TraceRecord]) -> Vec<LabeledSample> {
    let mut out = Vec::new();
    let mut last_state = None;
    let mut open: Option<(u64, LabeledSample)> = None;
    for r in records {
        match &r.body {
            RecordBody::Percept { state, .. } => last_state = Some(*state),
            RecordBody::Decision { decision } => {
                if let Some(state) = last_state {
                    open = Some((r.tick, LabeledSample { state, action: decision.action, success: false }));
                }
            }
            RecordBody::RewardSample { decision_tick, reward, .. } => {
                if let Some((tick, mut sample)) = open.take() {
                    if tick == *decision_tick {
                        sample.success = *reward > 0.0;
                        out.push(sample);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

pub fn train_patterns(traces: &[Vec<TraceRecord>], min_support: u64) -> Result<PatternTable, PatternError> {
    let corpus: Vec<LabeledSample> = traces.iter().flat_map(|t| label_trace(t)).collect();
    offline_train(&corpus, min_support)
}
