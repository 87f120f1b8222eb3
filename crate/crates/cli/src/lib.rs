//! Std companion to the core engine: file formats, the on-disk bank store,
//! HTTP backends, batch evaluation, trace replay, and the layered config that
//! drives the `omnirag` binary.

pub use omnirag_core as core;

pub mod config;
pub mod eval;
pub mod formats;
pub mod http;
pub mod replay;
pub mod store;
