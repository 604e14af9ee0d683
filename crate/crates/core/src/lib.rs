//! Uplink multi-user MIMO link simulation.
//!
//! Compares linear (ZF/MMSE) and fixed-complexity non-linear detection
//! over fading channels with LDPC coding, and turns packet error rates
//! into antenna requirements, vehicle counts and RF power.

pub mod channel;
pub mod connectivity;
pub mod detect;
pub mod error;
pub mod fec;
pub mod linalg;
pub mod linksim;
pub mod phy;
pub mod search;
pub mod seed;

pub use error::{Error, Result};
