//! Node logic for every zephyr role.
//!
//! Each node is a state machine consuming [`runtime::Event`]s and emitting
//! effects through a [`runtime::Context`]: frames to send, timers to arm,
//! emails to dispatch. Nothing here touches a socket or a clock directly, so
//! identical node code runs under the deterministic simulator and under the
//! live TCP driver.

pub mod coordinator;
pub mod dht;
pub mod info;
pub mod mailbox;
pub mod mixer;
pub mod pkg;
pub mod runtime;
pub mod testkit;
