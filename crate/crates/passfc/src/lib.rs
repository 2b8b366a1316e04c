//! Automated fact-checking engine.
//!
//! Atomic claims get grounded in time and entity context, then verified in
//! an adaptive loop: operator-structured query generation, credible-source
//! domain filtering, optional cross-lingual expansion, snippet-level
//! verification, and a reflection step that either stops or schedules new
//! tools. An evaluation harness reproduces the benchmark protocol at desk
//! scale against recorded provider caches.
//!
//! Module map:
//! - [`model`]: shared domain types, the claim-period algebra, configuration.
//! - [`provider`]: chat-completion backends, prompt templates, parsers.
//! - [`claim`]: decomposition, contextual grounding, period resolution.
//! - [`query`] and [`planner`]: operator query AST and the adaptive search
//!   planning calls (SQG / CSS / XLE).
//! - [`search`]: engine execution, leakage guards, dedup, record/replay.
//! - [`verify`]: the per-claim loop, reflection, history, traces.
//! - [`eval`]: dataset adapters, metrics, sweeps, similarity report.
//! - [`parallel`]: rayon-backed batch helper with a sequential fallback.

pub mod claim;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod planner;
pub mod provider;
pub mod query;
pub mod search;
pub mod verify;

pub use model::{
    AtomicClaim, CheckRequest, ClaimPeriod, Clock, ComprehensiveClaim, EntityGround, EvidenceItem,
    FixedClock, Granularity, Label, PeriodOrigin, PipelineConfig, SystemClock, Verdict,
};
pub use verify::{ClaimResult, ClaimTrace, LoopContext};
