//! Link-level simulator for a blocker-aware multicarrier ISAC-NOMA downlink.
//!
//! The pipeline for one operating point: synthesize per-subcarrier MIMO
//! channels ([`channel`]), build the hybrid beamformer ([`beamforming`]),
//! detect blockage from backscatter and switch to NLOS links
//! ([`blockage`]), optimize the NOMA power split ([`power`]) and evaluate
//! communication and sensing rates ([`rates`]). [`harness`] sweeps this over
//! scenarios, SNRs and channel realizations.

// Range checks are written `!(x >= lo)` so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod blockage;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod power;
pub mod rates;

pub use beamforming::{assemble, BeamformingConfig, ConstraintAudit, HybridBeamformer};
pub use blockage::{BlockageAction, BlockageDecision};
pub use channel::{EchoAttenuation, LinkState, Object, SubcarrierChannelSet};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use harness::{run_point, run_sweep, PointResult, ScenarioKind, ScenarioSpec, SweepOptions, SweepSummary};
pub use numerics::ComplexMatrix;
pub use power::{PowerOptimizerConfig, PowerOutcome, PowerStatus};
pub use rates::{PowerAllocation, RateReport, ReflectorSet};
