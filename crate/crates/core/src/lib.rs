//! Uplink multiuser OTFS timing and frequency synchronization.
//!
//! The crate builds delay-Doppler frames with cyclic-prefixed Zadoff-Chu
//! pilots, passes them through doubly dispersive channels with per-user
//! timing and frequency offsets, and recovers those offsets together with the
//! channel.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod frame;
pub mod harness;
pub mod numerics;
pub mod pilots;
pub mod sync_freq;
pub mod sync_time;

pub use error::{Result, SyncError};
pub use numerics::{ComplexMatrix, C64};
