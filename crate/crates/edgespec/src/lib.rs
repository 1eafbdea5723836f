//! Simulation and optimization toolkit for collaborative LLM inference in
//! mobile-edge networks.
//!
//! The crate models a set of mobile devices that offload token verification
//! to edge servers and asks two coupled questions: which server should each
//! device talk to, and how should each server split its bandwidth and
//! compute among its devices? It provides:
//!
//! * [`decode`] — token-level simulation of conventional and pipelined
//!   speculative decoding between a device-side draft model and a
//!   server-side target model;
//! * [`net`] — the wireless/compute system model: channel gains, data
//!   rates, latency and energy terms, and the scalar objective that blends
//!   them;
//! * [`matching`] — swap-based user association between devices and
//!   servers;
//! * [`sac`] — multi-agent soft actor-critic allocation of bandwidth and
//!   compute, with one policy per server;
//! * [`baselines`] — simple association and allocation rules used as
//!   comparison points;
//! * [`harness`] — experiment drivers that tie the above into reproducible
//!   studies with CSV output.
//!
//! Every stochastic component draws from explicitly seeded, named RNG
//! streams ([`rng`]), so any run can be reproduced from its scenario file
//! and seed.

pub mod baselines;
pub mod decode;
pub mod error;
pub mod harness;
pub mod matching;
pub mod net;
pub mod rng;
pub mod sac;

pub use error::{Error, Result};
