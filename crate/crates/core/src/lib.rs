//! Core engine for budgeted long-horizon audio-video question answering.
//!
//! The crate is organized around the lifecycle of one question:
//!
//! 1. [`bank`] builds time-indexed image/audio evidence banks from
//!    pre-extracted frame manifests and ASR transcripts.
//! 2. [`embed`] and [`retrieval`] score bank items against natural-language
//!    queries and expose the two retrieval tools (image and audio).
//! 3. [`protocol`] parses the tag-delimited agent output grammar and computes
//!    the format/performance/gated rewards.
//! 4. [`episode`] runs the multi-turn tool-calling state machine over a bank
//!    and a pluggable policy backend.
//! 5. [`grpo`] implements group-relative policy optimization as a pure loss
//!    library plus an end-to-end trainer on a tabular toy policy.
//! 6. [`simlab`] verifies the retrieval-gating, posterior-contraction, and
//!    policy-improvement propositions numerically.
//!
//! The crate is `no_std` + `alloc`; everything here is deterministic given a
//! seed. File formats, HTTP backends, and the CLI live in the companion
//! `omnirag` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bank;
pub mod embed;
pub mod episode;
pub mod grpo;
pub mod protocol;
pub mod retrieval;
pub mod seed;
pub mod simlab;
