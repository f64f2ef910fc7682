//! Link-level simulator for backscatter key exchange over a wireless power
//! carrier.
//!
//! A battery-free sensor node harvests energy from a continuous RF carrier,
//! and while charging it modulates its rectifier between two reflection
//! states to backscatter a Manchester-coded private key. The powering side
//! watches its own forward power ("P-wave") for the tiny ripple the
//! reflection states imprint, decodes the key, and only accepts a subsequent
//! radio broadcast from that node if the key matched and arrived within a
//! configured time window.
//!
//! The crate is organised bottom-up:
//!
//! * [`rf_link`] — carrier/link budget math: harvested power, backscatter
//!   levels at the monitor port, dynamic range, leakage calibration.
//! * [`codec`] — Manchester chip coding of key bytes and frame timing.
//! * [`node`] — the harvest/backscatter/broadcast duty cycle of one node.
//! * [`monitor`] — P-wave trace decoding: frame detection, level
//!   estimation, chip slicing, key authentication.
//! * [`scenario`] — JSON scenario schema with defaults and validation.
//! * [`engine`] — multi-node trace synthesis, collision statistics, and
//!   full scenario runs producing deterministic reports.
//!
//! Everything is deterministic given the scenario seed: randomness flows
//! from one master seed through documented per-node / per-frame / per-trial
//! stream derivations, so identical configs reproduce byte-identical
//! reports.

pub mod codec;
pub mod engine;
pub mod monitor;
pub mod node;
pub mod rf_link;
pub mod scenario;

pub use codec::{ChipStream, CodecError, PvkFrame};
pub use engine::{EngineError, McEstimate, NodeReport, SimReport};
pub use monitor::{
    AuthOutcome, DecodeResult, DecodeStatus, KeyRegistry, MonitorError, PowerTrace, RejectReason,
};
pub use node::{NodeConfig, NodeError, NodeState};
pub use rf_link::{RfError, RfParams};
pub use scenario::{ScenarioConfig, ScenarioError, SimMode};
