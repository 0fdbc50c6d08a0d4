//! Flow-based programming runtime with stream-first data collection.
//!
//! Streams are the first-class citizens: every record an application
//! produces lands in a named, typed, append-only log, and the wiring between
//! stateless nodes is an explicit graph that can be traversed to discover
//! where a dataset's features come from. A service-oriented baseline, four
//! reference applications, a seeded discrete-event simulator and a
//! component-diff metric sit on top.

pub mod graph;
pub mod runtime;
pub mod collection;
pub mod json;
pub mod ml;
pub mod soa;
pub mod apps;
pub mod sim;
pub mod metrics;
pub mod cli;
