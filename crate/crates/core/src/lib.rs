//! STAR-RIS assisted massive-MIMO downlink under hardware impairments:
//! channel statistics, optimal linear precoding, deterministic equivalents
//! and statistical beamforming of the surface.

pub mod channel;
pub mod config;
pub mod de;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod olp;
pub mod par;
pub mod pgam;
pub mod ris;
pub mod units;

pub use error::{Error, Result};
