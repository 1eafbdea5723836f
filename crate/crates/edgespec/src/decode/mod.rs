//! Token-level simulation of device/server collaborative decoding.
//!
//! [`oracle`] provides deterministic synthetic language models, [`verify`]
//! the accept/reject rules, and [`engine`] the three decoding engines
//! (server-only, conventional draft-then-verify, and pipelined).

pub mod engine;
pub mod oracle;
pub mod verify;

pub use engine::{
    run_conventional, run_parallel, target_only_decode, DecodeConfig, LatencyBreakdown,
    LinkTiming, PhaseState,
};
pub use oracle::{argmax, sample, SyntheticLm, TokenOracle};
pub use verify::{acceptance_probability, verify_batch, VerificationMode, VerifyOutcome};
