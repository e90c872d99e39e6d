use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::derive_seed;
use crate::photonics::attenuation_to_length;
use crate::protocol::{LinkReport, SessionConfig, SessionError};
use crate::router::{ChannelId, PortId};

use super::{run_network, LogDetail, NetError, NetworkSpec};

pub const SWEEP_CSV_HEADER: &str = "atten_db,channel_nm,qber,sift_rate_hz,leaked_bits,length_km";

#[derive(Clone, Debug, PartialEq)]
pub enum PointStatus {
    Ok,
    /// Session aborted; measured quantities up to the abort are kept.
    Aborted(String),
    /// The point could not run at all.
    Failed(String),
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointStatus::Ok => f.write_str("ok"),
            PointStatus::Aborted(m) => write!(f, "aborted: {m}"),
            PointStatus::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub atten_db: f64,
    pub client: PortId,
    pub channel: ChannelId,
    pub channel_nm: Option<f64>,
    /// Error fraction of the whole sifted key.
    pub qber: Option<f64>,
    pub sifted_bits: usize,
    pub sift_rate_hz: f64,
    pub leaked_bits: Option<usize>,
    pub length_km: f64,
    pub status: PointStatus,
}

/// `start, start + step, …` up to and including `stop` (within rounding).
pub fn sweep_points(start_db: f64, stop_db: f64, step_db: f64) -> Result<Vec<f64>, NetError> {
    let bad = |m: String| Err(NetError::InvalidSweep(m));
    if !(step_db > 0.0 && step_db.is_finite()) {
        return bad(format!("step must be > 0 dB, got {step_db}"));
    }
    if !(start_db >= 0.0 && start_db.is_finite()) {
        return bad(format!("start must be >= 0 dB, got {start_db}"));
    }
    if !(stop_db >= start_db && stop_db.is_finite()) {
        return bad(format!("stop {stop_db} dB is below start {start_db} dB"));
    }
    let n = ((stop_db - start_db) / step_db + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start_db + k as f64 * step_db).collect())
}

/// Runs one session per attenuation value, with the eATT of every client set
/// to that value. Points run in parallel; rows come back ordered by dB then
/// client port. A failing point yields rows with a status marker instead of
/// stopping the sweep.
pub fn sweep_attenuation(
    spec: &NetworkSpec,
    cfg: &SessionConfig,
    db_list: &[f64],
    seed: u64,
    fiber_alpha_db_per_km: f64,
) -> Result<Vec<SweepRow>, NetError> {
    if db_list.is_empty() {
        return Err(NetError::InvalidSweep("no attenuation values".into()));
    }
    if let Some(db) = db_list.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(NetError::InvalidSweep(format!(
            "attenuation {db} dB is not >= 0"
        )));
    }
    attenuation_to_length(0.0, fiber_alpha_db_per_km)?;
    spec.validate()?;
    cfg.validate(spec.n_ports())?;
    let mut points = db_list.to_vec();
    points.sort_by(f64::total_cmp);

    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &db)| {
            let mut point_spec = spec.clone();
            point_spec.log_detail = LogDetail::Off;
            point_spec.set_extra_attenuation(db);
            let mut point_cfg = cfg.clone();
            point_cfg.seed = derive_seed(seed, 2 * i as u64);
            let net_seed = derive_seed(seed, 2 * i as u64 + 1);
            let length_km =
                attenuation_to_length(db, fiber_alpha_db_per_km).expect("checked alpha");
            let (reports, status) = match run_network(&point_spec, &point_cfg, net_seed) {
                Ok(run) => match run.outcome {
                    Ok(r) => (r.links, PointStatus::Ok),
                    Err(e) => (
                        e.link_reports().to_vec(),
                        PointStatus::Aborted(abort_reason(&e)),
                    ),
                },
                Err(e) => (Vec::new(), PointStatus::Failed(e.to_string())),
            };
            cfg.clients
                .iter()
                .map(|&client| {
                    let report = reports.iter().find(|l| l.client == client);
                    row(spec, cfg, client, db, length_km, report, status.clone())
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn abort_reason(e: &SessionError) -> String {
    match e {
        SessionError::QberAbort { .. } => "qber above threshold".into(),
        SessionError::InsufficientDetections { .. } => "insufficient detections".into(),
        SessionError::ReconciliationFailed { .. } => "reconciliation failed".into(),
        other => other.to_string(),
    }
}

fn row(
    spec: &NetworkSpec,
    cfg: &SessionConfig,
    client: PortId,
    atten_db: f64,
    length_km: f64,
    report: Option<&LinkReport>,
    status: PointStatus,
) -> SweepRow {
    let channel = spec
        .router
        .wavelength_for(cfg.server, client)
        .expect("validated session");
    let duration_s = cfg.n_frames as f64 / spec.source.rep_rate_hz();
    let sifted_bits = report.map_or(0, |r| r.sifted_bits);
    SweepRow {
        atten_db,
        client,
        channel,
        channel_nm: spec.router.assignment().channel_nm(channel),
        qber: report.and_then(|r| r.sifted_qber),
        sifted_bits,
        sift_rate_hz: sifted_bits as f64 / duration_s,
        leaked_bits: report.and_then(|r| r.leaked_bits),
        length_km,
        status,
    }
}

/// CSV with [`SWEEP_CSV_HEADER`]. Unavailable values are empty fields. Rows
/// without a wavelength tag print the channel label instead.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        let nm = r.channel_nm.map_or(r.channel.label(), |v| v.to_string());
        let qber = r.qber.map_or(String::new(), |v| v.to_string());
        let leaked = r.leaked_bits.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.atten_db, nm, qber, r.sift_rate_hz, leaked, r.length_km
        )?;
    }
    Ok(())
}
