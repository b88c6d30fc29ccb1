//! Deterministic simulation of whole zephyr deployments.
//!
//! The simulator drives the same node logic the live binary runs, over a
//! virtual transport with a virtual clock. Runs are a pure function of their
//! configuration (topology sizes, fault plan, seed): same inputs, same
//! events, same metrics, byte for byte.
