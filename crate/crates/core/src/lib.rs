//! Stochastic fault detection and diagnosis for Li-ion battery thermal models.
//!
//! The toolkit propagates uncertainty in the electric current and the
//! core-surface conduction resistance through a two-node thermal model using
//! an intrusive generalized polynomial chaos (gPC) expansion, builds joint
//! confidence regions of core/surface temperature per operating mode,
//! classifies measurements by a minimum-distance criterion, compensates model
//! mismatch with sliding-window correction gains, and benchmarks the whole
//! pipeline against a Monte Carlo baseline.

pub mod basis;
pub mod correction;
pub mod error;
pub mod fdd;
pub mod galerkin;
pub mod jcr;
pub mod mc;
pub mod optimize;
pub mod scenario;
pub mod suite;
pub mod thermal;

pub use error::{Error, Result};
pub use thermal::{BatteryParams, ResistanceLaw, ThermalState};
