//! Scenario runner, trainer, evaluator and replayer.

pub mod metrics;
pub mod runner;
pub mod trace;
pub mod train;

pub use metrics::{replay, MetricsAccumulator, MetricsReport, TermTotals};
pub use runner::{run_scenario, RunError};
pub use trace::{
    parse_trace, read_trace, to_jsonl, AgentStatus, JsonLines, NullSink, RecordBody, StatusReason, TraceError,
    TraceRecord, TraceSink,
};
pub use train::{
    evaluate, fresh_table, label_trace, paired_t_test, run_greedy, run_random, summarize, train_agent,
    train_patterns, EvalSummary, PairedRun, PairedTest, TrainOutput,
};
