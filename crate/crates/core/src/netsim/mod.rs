//! Deterministic discrete-event network harness.
//!
//! One logical clock in nanoseconds drives pulse emission, routing through
//! the passive router, detector gating, and a reliable ordered public
//! channel. Every run is a pure function of (spec, session config, seed).
//!
//! Synchronisation is ideal: a client's gate opens exactly when its
//! wavelength's pulse slot arrives. Wavelengths are kept apart in time by
//! per-channel offsets inside the frame, so WDM crosstalk does not arise
//! unless offsets are configured closer than the guard band.

mod log;
mod sim;
mod spec;
mod sweep;

pub use log::{EventLog, LogEntry, LogKind};
pub use sim::{run_network, NetworkRun};
pub use spec::{ClientNode, LogDetail, NetworkSpec, StrayPulse, DEFAULT_GUARD_NS};
pub use sweep::{
    sweep_attenuation, sweep_points, write_sweep_csv, PointStatus, SweepRow, SWEEP_CSV_HEADER,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::photonics::PhotonicsError;
use crate::protocol::SessionError;
use crate::router::{ChannelId, RouterError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("scheduling infeasible: {0}")]
    SchedulingInfeasible(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Places `channels` at multiples of `guard_ns` from the start of the frame.
pub fn assign_time_offsets(
    channels: &[ChannelId],
    frame_period_ns: u64,
    guard_ns: u64,
) -> Result<BTreeMap<ChannelId, u64>, NetError> {
    if guard_ns == 0 {
        return Err(NetError::SchedulingInfeasible(
            "guard band must be > 0 ns".into(),
        ));
    }
    let needed = channels.len() as u64 * guard_ns;
    if needed > frame_period_ns {
        return Err(NetError::SchedulingInfeasible(format!(
            "{} channels × {guard_ns} ns guard = {needed} ns exceeds the {frame_period_ns} ns frame",
            channels.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (k, &ch) in channels.iter().enumerate() {
        if out.insert(ch, k as u64 * guard_ns).is_some() {
            return Err(NetError::SchedulingInfeasible(format!(
                "channel {ch} listed twice"
            )));
        }
    }
    Ok(out)
}
