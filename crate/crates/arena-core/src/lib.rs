//! Core engine for arena-style pairwise evaluation of video-analysis models.
//!
//! The engine simulates users to produce questions about videos, runs peer
//! battles between two anonymized models, judges the responses with a
//! model-as-judge, evolves harder questions out of observed faults, and ranks
//! the pool with online ELO plus batch Bradley-Terry fitting. A companion
//! bench mode scores single models against human-validated reference answers.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`rating`]: pure rating mathematics (ELO, Bradley-Terry, bootstrap CIs)
//! - [`gateway`]: uniform generation interface over HTTP and scripted backends
//! - [`media`]: video registry, duration buckets, uniform frame sampling
//! - [`agents`]: persona / question / evolution / judging agent roles
//! - [`orchestrator`]: battle scheduling, state machine, campaign driver
//! - [`bench`]: reference-answer scoring mode
//! - [`store`]: append-only event log, replay, advisory locking
//! - [`report`]: leaderboard assembly and rendering
//! - [`config`]: engine configuration file handling

pub mod agents;
pub mod bench;
pub mod config;
pub mod gateway;
pub mod media;
pub mod orchestrator;
pub mod rating;
pub mod report;
pub mod store;

mod util;

pub use util::short_hash;
