//! Run configuration: one TOML file mirroring the network and session specs.
//!
//! Every section is optional; an empty file describes the 4-user
//! demonstration (server on D, Bob/Charlie/Delta on A/C/B). Unknown keys are
//! rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::netsim::{sweep_points, ClientNode, LogDetail, NetError, NetworkSpec};
use crate::photonics::{
    DetectorModel, PhotonicsError, SourceModel, DEFAULT_DETECTOR_EFFICIENCY,
    DEFAULT_FIBER_ALPHA_DB_PER_KM, DEFAULT_GATE_WIDTH_NS, DEFAULT_MEAN_PHOTON_NUMBER,
    DEFAULT_OPTICAL_ERROR, DEFAULT_REP_RATE_HZ,
};
use crate::protocol::{
    SessionConfig, SessionMode, DEFAULT_QBER_ABORT_THRESHOLD, DEFAULT_SAMPLE_FRACTION,
};
use crate::router::{
    build_assignment, LossMatrix, PortId, RouterError, RouterSpec, DEFAULT_CROSSTALK_DB,
    DEFAULT_INSERTION_LOSS_DB,
};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N_FRAMES: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<RouterError> for ConfigError {
    fn from(e: RouterError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<PhotonicsError> for ConfigError {
    fn from(e: PhotonicsError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<NetError> for ConfigError {
    fn from(e: NetError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub router: RouterSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default, rename = "client")]
    pub clients: Vec<ClientSection>,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub mean_photon_number: f64,
    pub rep_rate_hz: f64,
    pub optical_error: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            mean_photon_number: DEFAULT_MEAN_PHOTON_NUMBER,
            rep_rate_hz: DEFAULT_REP_RATE_HZ,
            optical_error: DEFAULT_OPTICAL_ERROR,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RouterSection {
    pub ports: usize,
    /// Per-pair insertion losses; without it a 4-port router uses the
    /// measured figures and larger routers `uniform_loss_db`.
    pub loss_file: Option<PathBuf>,
    pub uniform_loss_db: Option<f64>,
    pub crosstalk_db: f64,
    pub channel_nm: Option<Vec<f64>>,
}

impl Default for RouterSection {
    fn default() -> Self {
        RouterSection {
            ports: 4,
            loss_file: None,
            uniform_loss_db: None,
            crosstalk_db: DEFAULT_CROSSTALK_DB,
            channel_nm: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EventLogSetting {
    Full,
    Detections,
    Off,
}

impl From<EventLogSetting> for LogDetail {
    fn from(s: EventLogSetting) -> Self {
        match s {
            EventLogSetting::Full => LogDetail::Full,
            EventLogSetting::Detections => LogDetail::Detections,
            EventLogSetting::Off => LogDetail::Off,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub server: String,
    pub guard_ns: u64,
    pub classical_delay_ns: u64,
    pub crosstalk: bool,
    pub event_log: EventLogSetting,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            server: "D".into(),
            guard_ns: crate::netsim::DEFAULT_GUARD_NS,
            classical_delay_ns: 0,
            crosstalk: false,
            event_log: EventLogSetting::Detections,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    pub port: String,
    pub name: Option<String>,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    #[serde(default = "default_gate_width")]
    pub gate_width_ns: f64,
    #[serde(default)]
    pub extra_attenuation_db: f64,
    #[serde(default)]
    pub intercept_fraction: f64,
}

fn default_efficiency() -> f64 {
    DEFAULT_DETECTOR_EFFICIENCY
}

fn default_gate_width() -> f64 {
    DEFAULT_GATE_WIDTH_NS
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    pub session_id: u64,
    pub mode: String,
    /// Defaults to every configured client.
    pub clients: Option<Vec<String>>,
    pub n_frames: u64,
    pub sample_fraction: f64,
    pub qber_abort_threshold: f64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            session_id: 1,
            mode: "broadcast".into(),
            clients: None,
            n_frames: DEFAULT_N_FRAMES,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            qber_abort_threshold: DEFAULT_QBER_ABORT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
    pub fiber_alpha_db_per_km: f64,
    /// Frames per point; defaults to the session's `n_frames`.
    pub n_frames: Option<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            start_db: 0.0,
            stop_db: 25.0,
            step_db: 5.0,
            fiber_alpha_db_per_km: DEFAULT_FIBER_ALPHA_DB_PER_KM,
            n_frames: None,
        }
    }
}

fn port(label: &str) -> Result<PortId, ConfigError> {
    PortId::from_label(label)
        .ok_or_else(|| ConfigError::Invalid(format!("bad port label {label:?}")))
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, dir)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn router_spec(&self) -> Result<RouterSpec, ConfigError> {
        let r = &self.router;
        if r.ports < 2 {
            return Err(ConfigError::Invalid(format!(
                "router needs >= 2 ports, got {}",
                r.ports
            )));
        }
        let default_table = r.ports == 4 && r.loss_file.is_none() && r.uniform_loss_db.is_none();
        let mut assignment = if default_table {
            RouterSpec::reference_four_port().assignment().clone()
        } else {
            build_assignment(r.ports)?.with_default_grid()
        };
        if let Some(nm) = &r.channel_nm {
            assignment = assignment.with_channel_nm(nm.clone())?;
        }
        let loss = match (&r.loss_file, r.uniform_loss_db) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "set loss_file or uniform_loss_db, not both".into(),
                ))
            }
            (Some(file), None) => {
                let path = self.base_dir.join(file);
                let text =
                    fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
                LossMatrix::from_toml_str(&text, r.ports)?
            }
            (None, Some(db)) => LossMatrix::uniform(r.ports, db)?,
            (None, None) if r.ports == 4 => LossMatrix::reference_four_port(),
            (None, None) => LossMatrix::uniform(r.ports, DEFAULT_INSERTION_LOSS_DB)?,
        };
        Ok(RouterSpec::new(assignment, loss, r.crosstalk_db)?)
    }

    pub fn source_model(&self) -> Result<SourceModel, ConfigError> {
        let s = &self.source;
        Ok(SourceModel::new(
            s.mean_photon_number,
            s.rep_rate_hz,
            s.optical_error,
        )?)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec, ConfigError> {
        let router = self.router_spec()?;
        let source = self.source_model()?;
        let server = port(&self.network.server)?;
        let clients = if self.clients.is_empty() {
            if self.router.ports != 4 || server != PortId(3) {
                return Err(ConfigError::Invalid(
                    "no [[client]] entries; defaults exist only for the 4-port layout with server D".into(),
                ));
            }
            NetworkSpec::reference_four_user().clients
        } else {
            let mut out = BTreeMap::new();
            for c in &self.clients {
                let p = port(&c.port)?;
                let det = DetectorModel::new(
                    c.efficiency,
                    c.dark_rate_hz,
                    c.gate_width_ns,
                    source.rep_rate_hz(),
                )?;
                let mut node = ClientNode::new(c.name.clone().unwrap_or_else(|| p.label()), det);
                node.extra_attenuation_db = c.extra_attenuation_db;
                node.intercept_fraction = c.intercept_fraction;
                if out.insert(p, node).is_some() {
                    return Err(ConfigError::Invalid(format!(
                        "client port {p} listed twice"
                    )));
                }
            }
            out
        };
        let mut spec =
            NetworkSpec::with_guard(router, server, source, clients, self.network.guard_ns)?;
        spec.crosstalk = self.network.crosstalk;
        spec.classical_delay_ns = self.network.classical_delay_ns;
        spec.log_detail = self.network.event_log.into();
        Ok(spec)
    }

    pub fn session_config(
        &self,
        spec: &NetworkSpec,
        seed: u64,
    ) -> Result<SessionConfig, ConfigError> {
        let s = &self.session;
        let mode: SessionMode = s.mode.parse().map_err(ConfigError::Invalid)?;
        let clients: BTreeSet<PortId> = match &s.clients {
            Some(list) => list.iter().map(|l| port(l)).collect::<Result<_, _>>()?,
            None => spec.clients.keys().copied().collect(),
        };
        let mut cfg = SessionConfig::new(mode, spec.server, clients, s.n_frames, seed);
        cfg.session_id = s.session_id;
        cfg.sample_fraction = s.sample_fraction;
        cfg.qber_abort_threshold = s.qber_abort_threshold;
        cfg.validate(spec.n_ports())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn sweep_db_points(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        Ok(sweep_points(s.start_db, s.stop_db, s.step_db)?)
    }

    pub fn sweep_frames(&self) -> u64 {
        self.sweep.n_frames.unwrap_or(self.session.n_frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_four_user_network() {
        let cfg = RunConfig::from_toml_str("", ".").unwrap();
        let spec = cfg.network_spec().unwrap();
        assert_eq!(spec, NetworkSpec::reference_four_user());
        let s = cfg.session_config(&spec, 7).unwrap();
        assert_eq!(s.mode, SessionMode::Broadcast);
        assert_eq!(s.clients.len(), 3);
        assert_eq!(s.n_frames, DEFAULT_N_FRAMES);
        assert_eq!(
            cfg.sweep_db_points().unwrap(),
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
        );
    }

    #[test]
    fn shipped_config_matches_default() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/four_user.toml");
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(
            cfg.network_spec().unwrap(),
            NetworkSpec::reference_four_user()
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_toml_str("[source]\nmu = 0.2\n", ".").unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
        assert!(RunConfig::from_toml_str("sed = 3\n", ".").is_err());
    }

    #[test]
    fn custom_network() {
        let text = r#"
            seed = 5
            [router]
            ports = 3
            uniform_loss_db = 1.5
            [network]
            server = "A"
            event_log = "off"
            [[client]]
            port = "B"
            dark_rate_hz = 10.0
            extra_attenuation_db = 3.0
            [[client]]
            port = "C"
            name = "Carol"
            dark_rate_hz = 20.0
            [session]
            mode = "unicast"
            clients = ["B"]
            n_frames = 5000
        "#;
        let cfg = RunConfig::from_toml_str(text, ".").unwrap();
        assert_eq!(cfg.seed(), 5);
        let spec = cfg.network_spec().unwrap();
        assert_eq!(spec.n_ports(), 3);
        assert_eq!(spec.clients[&PortId(2)].name, "Carol");
        assert_eq!(spec.link_budget(PortId(1)).unwrap().total_db(), 4.5);
        assert_eq!(spec.log_detail, LogDetail::Off);
        let s = cfg.session_config(&spec, 1).unwrap();
        assert_eq!(
            s.clients.iter().copied().collect::<Vec<_>>(),
            vec![PortId(1)]
        );
    }

    #[test]
    fn invalid_values() {
        let bad = [
            "[router]\nports = 1\n",
            "[router]\nports = 5\n",
            "[network]\nserver = \"Q\"\n",
            "[session]\nmode = \"anycast\"\n",
            "[source]\nmean_photon_number = -1.0\n",
            "[router]\nuniform_loss_db = 2.0\nloss_file = \"x.toml\"\n",
        ];
        for text in bad {
            let cfg = RunConfig::from_toml_str(text, ".").unwrap();
            let spec = cfg.network_spec();
            let r = spec.and_then(|s| cfg.session_config(&s, 1).map(|_| ()));
            assert!(r.is_err(), "{text}");
        }
        let cfg =
            RunConfig::from_toml_str("[router]\nloss_file = \"missing.toml\"\n", "/nonexistent")
                .unwrap();
        assert!(matches!(cfg.network_spec(), Err(ConfigError::Io { .. })));
        let cfg = RunConfig::from_toml_str("[sweep]\nstep_db = 0.0\n", ".").unwrap();
        assert!(cfg.sweep_db_points().is_err());
    }
}
