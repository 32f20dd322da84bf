//! A deterministic simulated cloud under attack and a defensive agent that
//! manages honeypots in it.
//!
//! The agent senses windowed event counts, discretises them, and decides
//! through a staged cascade (pattern table, online Q-learning, operator
//! escalation, game search, fail-safe). Every action passes guardrails that
//! bound impact and autonomy by emissions-control level, and the harness
//! scores runs with ground truth the agent never sees.

pub mod action;
pub mod agent;
pub mod cascade;
pub mod comms;
pub mod config;

pub mod guardrails;
pub mod harness;

pub mod par;
pub mod rng;
pub mod sensing;
pub mod world;
