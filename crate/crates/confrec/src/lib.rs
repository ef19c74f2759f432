//! Content-filtering enriched graph recommendation.
//!
//! This crate implements an end-to-end news recommendation pipeline built
//! around three cooperating pieces:
//!
//! * a **news information encoder** that turns titles and entity profiles
//!   into dense vectors with parallel text convolutions
//!   ([`nie`]),
//! * a **neighbor expander** that builds content-similarity graphs (direct
//!   k-nearest-neighbor and random-walk-expanded) and uses them to enrich
//!   sparse click histories ([`expander`]),
//! * a **target-aware attention** stage that filters and aggregates the
//!   expanded lists, plus a graph-attention collaborative-filtering backbone
//!   and fusion scorer ([`tafa`], [`cfgnn`], [`model`]).
//!
//! Everything runs on a small reverse-mode autodiff kernel ([`tensor`]) with
//! no external numeric dependencies, and the whole pipeline is deterministic
//! given a seed.
//!
//! The `examples/` directory is the best starting point; each example is a
//! runnable tour of one capability. A thin `confrec` binary exposes the same
//! pipeline stages as subcommands (`prepare`, `build-graph`, `train`, `eval`,
//! `report`, `expand`).

pub mod cfgnn;
pub mod config;
pub mod corpus;
pub mod error;
pub mod expander;
pub mod metrics;
pub mod model;
pub mod nie;
pub mod pipeline;
pub mod synth;
pub mod tafa;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
