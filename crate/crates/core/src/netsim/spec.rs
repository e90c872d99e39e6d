use std::collections::{BTreeMap, BTreeSet};

use crate::photonics::{DetectorModel, LinkBudget, SourceModel, REFERENCE_DARK_RATES_HZ};
use crate::router::{ChannelId, PortId, RouterSpec};

use super::{assign_time_offsets, NetError};

pub const DEFAULT_GUARD_NS: u64 = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ClientNode {
    pub name: String,
    pub detector: DetectorModel,
    /// Extra attenuation on the server→client path (the eATT), dB.
    pub extra_attenuation_db: f64,
    /// Fraction of pulses an intercept-resend eavesdropper measures and
    /// re-prepares in a random basis.
    pub intercept_fraction: f64,
}

impl ClientNode {
    pub fn new(name: impl Into<String>, detector: DetectorModel) -> Self {
        ClientNode {
            name: name.into(),
            detector,
            extra_attenuation_db: 0.0,
            intercept_fraction: 0.0,
        }
    }
}

/// Extra pulse emitted by the server outside any train, e.g. on a
/// wavelength the router does not connect.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrayPulse {
    pub frame: u64,
    pub channel: ChannelId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogDetail {
    /// Every pulse arrival and gate.
    Full,
    /// Clicked gates, losses and public messages.
    Detections,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub router: RouterSpec,
    pub server: PortId,
    pub source: SourceModel,
    pub clients: BTreeMap<PortId, ClientNode>,
    pub guard_ns: u64,
    pub channel_offsets_ns: BTreeMap<ChannelId, u64>,
    /// Leak pulses between channels whose slots are closer than the guard band.
    pub crosstalk: bool,
    pub classical_delay_ns: u64,
    pub log_detail: LogDetail,
    pub stray_pulses: Vec<StrayPulse>,
}

impl NetworkSpec {
    /// Spec with offsets assigned to the server's channels at the default guard.
    pub fn new(
        router: RouterSpec,
        server: PortId,
        source: SourceModel,
        clients: BTreeMap<PortId, ClientNode>,
    ) -> Result<Self, NetError> {
        Self::with_guard(router, server, source, clients, DEFAULT_GUARD_NS)
    }

    pub fn with_guard(
        router: RouterSpec,
        server: PortId,
        source: SourceModel,
        clients: BTreeMap<PortId, ClientNode>,
        guard_ns: u64,
    ) -> Result<Self, NetError> {
        if server.0 >= router.n_ports() {
            return Err(NetError::InvalidSpec(format!(
                "server {server} is not a port of a {}-port router",
                router.n_ports()
            )));
        }
        let channels = router.assignment().channels_at(server);
        let period = frame_period_ns(source.rep_rate_hz())?;
        let channel_offsets_ns = assign_time_offsets(&channels, period, guard_ns)?;
        let spec = NetworkSpec {
            router,
            server,
            source,
            clients,
            guard_ns,
            channel_offsets_ns,
            crosstalk: false,
            classical_delay_ns: 0,
            log_detail: LogDetail::Detections,
            stray_pulses: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 4-user demonstration network: server on port D, clients on A, C
    /// and B receiving 1510, 1530 and 1550 nm respectively.
    pub fn reference_four_user() -> Self {
        let router = RouterSpec::reference_four_port();
        let server = PortId(3);
        let names = [
            ("Bob", PortId(0)),
            ("Charlie", PortId(2)),
            ("Delta", PortId(1)),
        ];
        let clients = names
            .iter()
            .zip(REFERENCE_DARK_RATES_HZ)
            .map(|(&(name, port), dark)| {
                let det = DetectorModel::reference(dark).expect("reference detector");
                (port, ClientNode::new(name, det))
            })
            .collect();
        Self::new(router, server, SourceModel::default(), clients).expect("reference network")
    }

    pub fn n_ports(&self) -> usize {
        self.router.n_ports()
    }

    pub fn frame_period_ns(&self) -> u64 {
        frame_period_ns(self.source.rep_rate_hz()).expect("validated")
    }

    pub fn set_extra_attenuation(&mut self, db: f64) {
        for c in self.clients.values_mut() {
            c.extra_attenuation_db = db;
        }
    }

    /// Loss elements between the server and `client`.
    pub fn link_budget(&self, client: PortId) -> Result<LinkBudget, NetError> {
        let node = self
            .clients
            .get(&client)
            .ok_or_else(|| NetError::InvalidSpec(format!("no client on port {client}")))?;
        let path = self.router.path_loss_db(self.server, client)?;
        Ok(LinkBudget::new()
            .with(format!("router {}->{}", self.server, client), path)?
            .with("eATT", node.extra_attenuation_db)?)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidSpec(m));
        let n = self.n_ports();
        let period = frame_period_ns(self.source.rep_rate_hz())?;
        if self.server.0 >= n {
            return bad(format!("server {} out of range", self.server));
        }
        for (&port, node) in &self.clients {
            if port.0 >= n || port == self.server {
                return bad(format!("client port {port} is out of range or the server"));
            }
            if !(node.extra_attenuation_db.is_finite() && node.extra_attenuation_db >= 0.0) {
                return bad(format!("extra attenuation for {port} must be >= 0 dB"));
            }
            if !(0.0..=1.0).contains(&node.intercept_fraction) {
                return bad(format!("intercept fraction for {port} outside [0, 1]"));
            }
            if node.detector.rep_rate_hz() != self.source.rep_rate_hz() {
                return bad(format!(
                    "detector at {port} gates at {} Hz but the source runs at {} Hz",
                    node.detector.rep_rate_hz(),
                    self.source.rep_rate_hz()
                ));
            }
        }
        for ch in self.router.assignment().channels_at(self.server) {
            match self.channel_offsets_ns.get(&ch) {
                None => return bad(format!("no time offset for channel {ch}")),
                Some(&o) if o >= period => {
                    return bad(format!(
                        "offset {o} ns of {ch} outside the {period} ns frame"
                    ))
                }
                _ => {}
            }
        }
        let distinct: BTreeSet<u64> = self.channel_offsets_ns.values().copied().collect();
        if distinct.len() != self.channel_offsets_ns.len() {
            return bad("channel time offsets must be pairwise distinct".into());
        }
        Ok(())
    }
}

fn frame_period_ns(rep_rate_hz: f64) -> Result<u64, NetError> {
    let period = (1e9 / rep_rate_hz).round();
    if period.is_nan() || period < 1.0 {
        return Err(NetError::InvalidSpec(format!(
            "repetition rate {rep_rate_hz} Hz gives a frame shorter than 1 ns"
        )));
    }
    Ok(period as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_network_layout() {
        let s = NetworkSpec::reference_four_user();
        assert_eq!(s.frame_period_ns(), 1000);
        assert_eq!(s.clients.len(), 3);
        assert_eq!(s.clients[&PortId(0)].name, "Bob");
        assert_eq!(s.clients[&PortId(0)].detector.dark_rate_hz(), 41.7);
        let ch = |p| s.router.wavelength_for(s.server, p).unwrap();
        assert_eq!(
            s.router.assignment().channel_nm(ch(PortId(0))),
            Some(1510.0)
        );
        assert_eq!(
            s.router.assignment().channel_nm(ch(PortId(2))),
            Some(1530.0)
        );
        assert_eq!(
            s.router.assignment().channel_nm(ch(PortId(1))),
            Some(1550.0)
        );
        assert_eq!(s.link_budget(PortId(0)).unwrap().total_db(), 1.96);
        assert_eq!(s.channel_offsets_ns.len(), 3);
    }

    #[test]
    fn validation_catches_bad_specs() {
        let good = NetworkSpec::reference_four_user();
        let mut s = good.clone();
        s.channel_offsets_ns.insert(ChannelId(1), 0);
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.channel_offsets_ns.insert(ChannelId(1), 1000);
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.clients.get_mut(&PortId(0)).unwrap().extra_attenuation_db = -1.0;
        assert!(s.validate().is_err());
        let mut s = good.clone();
        let node = s.clients[&PortId(0)].clone();
        s.clients.insert(PortId(3), node);
        assert!(s.validate().is_err());
        let mut s = good;
        s.clients.get_mut(&PortId(2)).unwrap().detector =
            DetectorModel::new(0.1, 10.0, 2.5, 2e6).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn too_many_channels_for_frame() {
        let router = RouterSpec::uniform(12, 2.2).unwrap();
        let r = NetworkSpec::new(router, PortId(0), SourceModel::default(), BTreeMap::new());
        assert!(matches!(r, Err(NetError::SchedulingInfeasible(_))));
    }
}
