//! Multi-server packetized generalized processor sharing (MPGPS) for
//! multi-carrier downlinks.
//!
//! The crate holds the scheduling disciplines (PGPS, MPGPS, adaptive
//! A-MPGPS and opportunistic O-MPGPS), the GPS virtual-time reference and
//! fluid oracle, the joint subcarrier/power allocator built on an exact
//! transportation solver, a statistical channel model, and a deterministic
//! discrete-event engine with a bound-verification harness.
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and the
//! sweep driver live in the `mpgps-sim` crate.
//!
//! Time inside the crate is measured in OFDM symbol durations and service in
//! bits, so the reference service rate is `N * r` bits per symbol.

#![no_std]
// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod allocation;
pub mod channel;
pub mod error;
pub mod model;
pub mod scheduler;
pub mod sim;
pub mod virtual_time;

pub use error::{Error, Result};
pub use model::{Batch, FlowQueue, Packet, PacketState, SystemConfig};
