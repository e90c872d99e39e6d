use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::photonics::{p_signal_click, DetectorModel, LinkBudget, SourceModel};
use crate::router::{ChannelId, PortId, WavelengthAssignment};
use crate::stream_rng;

use super::{
    apply_flip_mask, compute_flip_mask, estimate_qber, first_pass_block_size, generate_train,
    measure_train, reconcile_with_block_size, sift, ClassicalMessage, DetectionRecord, Direction,
    KeyBlock, LinkId, MessageBody, MessageSink, ProtocolError, PulseRecord, Transcript,
};

pub const DEFAULT_QBER_ABORT_THRESHOLD: f64 = 0.11;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.1;

/// Reconciliation attempts per link before the session aborts. Each retry
/// starts from the sifted blocks with fresh permutations and half the
/// previous pass-1 block size, since a failure usually means the sampled
/// QBER understated the real one.
pub const MAX_RECONCILE_ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SessionMode {
    Unicast,
    Multicast,
    Broadcast,
}

impl fmt::Display for SessionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionMode::Unicast => "unicast",
            SessionMode::Multicast => "multicast",
            SessionMode::Broadcast => "broadcast",
        })
    }
}

impl std::str::FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unicast" => Ok(SessionMode::Unicast),
            "multicast" => Ok(SessionMode::Multicast),
            "broadcast" => Ok(SessionMode::Broadcast),
            other => Err(format!("unknown session mode {other:?}")),
        }
    }
}

/// Who takes part in a key-agreement session and how it is run.
///
/// Unicast covers both server↔client (one client) and client↔client relayed
/// through the server (two clients).
#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub session_id: u64,
    pub server: PortId,
    pub clients: BTreeSet<PortId>,
    pub mode: SessionMode,
    pub n_frames: u64,
    pub sample_fraction: f64,
    pub qber_abort_threshold: f64,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(
        mode: SessionMode,
        server: PortId,
        clients: impl IntoIterator<Item = PortId>,
        n_frames: u64,
        seed: u64,
    ) -> Self {
        SessionConfig {
            session_id: 1,
            server,
            clients: clients.into_iter().collect(),
            mode,
            n_frames,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            qber_abort_threshold: DEFAULT_QBER_ABORT_THRESHOLD,
            seed,
        }
    }

    /// Every port except the server.
    pub fn broadcast(server: PortId, n_ports: usize, n_frames: u64, seed: u64) -> Self {
        let clients = (0..n_ports).map(PortId).filter(|&p| p != server);
        Self::new(SessionMode::Broadcast, server, clients, n_frames, seed)
    }

    pub fn validate(&self, n_ports: usize) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidConfig(m));
        if self.server.0 >= n_ports {
            return bad(format!(
                "server {} is not a port of a {n_ports}-port router",
                self.server
            ));
        }
        if self.clients.is_empty() {
            return bad("no clients".into());
        }
        if let Some(c) = self.clients.iter().find(|c| c.0 >= n_ports) {
            return bad(format!(
                "client {c} is not a port of a {n_ports}-port router"
            ));
        }
        if self.clients.contains(&self.server) {
            return bad(format!("server {} listed as a client", self.server));
        }
        match self.mode {
            SessionMode::Unicast if self.clients.len() > 2 => {
                return bad(format!(
                    "unicast needs 1 or 2 clients, got {}",
                    self.clients.len()
                ))
            }
            SessionMode::Multicast if self.clients.len() < 2 => {
                return bad("multicast needs at least 2 clients".into())
            }
            SessionMode::Broadcast if self.clients.len() != n_ports - 1 => {
                return bad("broadcast must include every non-server port".into())
            }
            _ => {}
        }
        if self.n_frames == 0 {
            return bad("n_frames must be > 0".into());
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return bad(format!(
                "sample fraction {} outside (0, 1)",
                self.sample_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.qber_abort_threshold) {
            return bad(format!(
                "abort threshold {} outside [0, 1]",
                self.qber_abort_threshold
            ));
        }
        Ok(())
    }
}

/// Per-link outcome. Fields are `None` for stages the session did not reach.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkReport {
    pub client: PortId,
    pub channel: ChannelId,
    pub frames: u64,
    pub detections: usize,
    pub sifted_bits: usize,
    /// Mismatch fraction of the full sifted key (simulator-side ground truth).
    pub sifted_qber: Option<f64>,
    /// Mismatch fraction of the disclosed sample.
    pub qber_estimate: Option<f64>,
    pub leaked_bits: Option<usize>,
    pub key_bits: Option<usize>,
}

impl fmt::Display for LinkReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.5}"));
        write!(
            f,
            "client {} {}: detections={} sifted={} qber={} estimate={} leaked={} key={}",
            self.client,
            self.channel,
            self.detections,
            self.sifted_bits,
            opt(self.sifted_qber),
            opt(self.qber_estimate),
            self.leaked_bits.map_or("-".into(), |v| v.to_string()),
            self.key_bits.map_or("-".into(), |v| v.to_string()),
        )
    }
}

fn reports_summary(links: &[LinkReport]) -> String {
    links
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("network: {0}")]
    Network(String),
    #[error("no usable key bits on link to {client} [{}]", reports_summary(.links))]
    InsufficientDetections {
        client: PortId,
        links: Vec<LinkReport>,
    },
    #[error("aborted: QBER at or above {threshold} on {} [{}]",
        .offending.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        reports_summary(.links))]
    QberAbort {
        threshold: f64,
        offending: Vec<PortId>,
        links: Vec<LinkReport>,
    },
    #[error("reconciliation failed on link to {client}")]
    ReconciliationFailed {
        client: PortId,
        links: Vec<LinkReport>,
    },
    #[error("client keys disagree after key reverse")]
    Disagreement,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl SessionError {
    /// Per-link diagnostics, when the session got far enough to have any.
    pub fn link_reports(&self) -> &[LinkReport] {
        match self {
            SessionError::InsufficientDetections { links, .. }
            | SessionError::QberAbort { links, .. }
            | SessionError::ReconciliationFailed { links, .. } => links,
            _ => &[],
        }
    }

    /// Protocol-level abort, as opposed to a usage or configuration error.
    pub fn is_abort(&self) -> bool {
        !matches!(self, SessionError::InvalidConfig(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub session_id: u64,
    pub mode: SessionMode,
    pub server: PortId,
    /// Client whose link key became the shared key.
    pub reference: PortId,
    pub links: Vec<LinkReport>,
    pub shared_key: Vec<bool>,
    pub client_keys: BTreeMap<PortId, Vec<bool>>,
    pub transcript: Transcript,
}

/// What a session needs from the network: wavelength lookup, a quantum
/// channel and a public channel.
pub trait SessionNetwork {
    fn n_ports(&self) -> usize;

    fn channel_to(&self, server: PortId, client: PortId) -> Result<ChannelId, SessionError>;

    fn source(&self) -> &SourceModel;

    /// Sends every train at once (one per client, each on its own
    /// wavelength) and returns each client's detection records, in order.
    fn transmit(
        &mut self,
        server: PortId,
        trains: &[(PortId, Vec<PulseRecord>)],
    ) -> Result<Vec<Vec<DetectionRecord>>, SessionError>;

    /// Carries one public-channel message.
    fn deliver(&mut self, message: &ClassicalMessage);
}

struct SessionSink<'a, N: ?Sized> {
    net: &'a mut N,
    transcript: &'a mut Transcript,
    link: LinkId,
}

impl<N: SessionNetwork + ?Sized> MessageSink for SessionSink<'_, N> {
    fn send(&mut self, direction: Direction, body: MessageBody) {
        let msg = self.transcript.push(self.link, direction, body);
        self.net.deliver(msg);
    }
}

fn send<N: SessionNetwork + ?Sized>(
    net: &mut N,
    transcript: &mut Transcript,
    link: LinkId,
    direction: Direction,
    body: MessageBody,
) {
    let msg = transcript.push(link, direction, body);
    net.deliver(msg);
}

fn train_stream(seed: u64, client: PortId) -> ChaCha8Rng {
    stream_rng(seed, 2 * client.0 as u64 + 1)
}

fn protocol_stream(seed: u64, client: PortId) -> ChaCha8Rng {
    stream_rng(seed, 2 * client.0 as u64 + 2)
}

/// Runs one key-agreement session end to end.
///
/// Every client gets a BB84 link key with the server; all keys are cut to the
/// shortest one; every client but the reference (lowest port) then receives
/// a flip mask turning its key into the reference key. The server is trusted
/// and ends up knowing the shared key.
pub fn run_session<N: SessionNetwork + ?Sized>(
    cfg: &SessionConfig,
    net: &mut N,
) -> Result<SessionResult, SessionError> {
    cfg.validate(net.n_ports())?;
    let mut transcript = Transcript::new(cfg.session_id);
    let links: Vec<LinkId> = cfg
        .clients
        .iter()
        .map(|&client| LinkId {
            server: cfg.server,
            client,
        })
        .collect();

    for &link in &links {
        send(
            net,
            &mut transcript,
            link,
            Direction::ClientToServer,
            MessageBody::KeyRequest { mode: cfg.mode },
        );
    }

    let mut trains = Vec::with_capacity(links.len());
    let mut reports = Vec::with_capacity(links.len());
    for &link in &links {
        let channel = net.channel_to(link.server, link.client)?;
        send(
            net,
            &mut transcript,
            link,
            Direction::ServerToClient,
            MessageBody::TrainAnnounce {
                channel,
                n_frames: cfg.n_frames,
            },
        );
        let mut rng = train_stream(cfg.seed, link.client);
        trains.push((
            link.client,
            generate_train(cfg.n_frames, channel, net.source(), &mut rng)?,
        ));
        reports.push(LinkReport {
            client: link.client,
            channel,
            frames: cfg.n_frames,
            detections: 0,
            sifted_bits: 0,
            sifted_qber: None,
            qber_estimate: None,
            leaked_bits: None,
            key_bits: None,
        });
    }

    let detections = net.transmit(cfg.server, &trains)?;
    if detections.len() != links.len() {
        return Err(SessionError::Network(format!(
            "expected detections for {} links, got {}",
            links.len(),
            detections.len()
        )));
    }

    let mut sifted = Vec::with_capacity(links.len());
    for (i, &link) in links.iter().enumerate() {
        let (frames, bases) = detections[i]
            .iter()
            .filter(|d| d.clicked)
            .map(|d| (d.frame, d.basis))
            .unzip();
        send(
            net,
            &mut transcript,
            link,
            Direction::ClientToServer,
            MessageBody::BasisList { frames, bases },
        );
        let s = sift(&trains[i].1, &detections[i], link)?;
        send(
            net,
            &mut transcript,
            link,
            Direction::ServerToClient,
            MessageBody::SiftIndexSet {
                frames: s.sender.frames().to_vec(),
            },
        );
        let r = &mut reports[i];
        r.detections = detections[i].iter().filter(|d| d.clicked).count();
        r.sifted_bits = s.sender.len();
        if !s.empty {
            r.sifted_qber = Some(s.sender.mismatches(&s.receiver) as f64 / s.sender.len() as f64);
        }
        sifted.push(s);
    }
    drop(trains);
    drop(detections);
    if let Some(i) = sifted.iter().position(|s| s.empty) {
        return Err(SessionError::InsufficientDetections {
            client: links[i].client,
            links: reports,
        });
    }

    let mut rngs: Vec<ChaCha8Rng> = links
        .iter()
        .map(|l| protocol_stream(cfg.seed, l.client))
        .collect();
    let mut remaining = Vec::with_capacity(links.len());
    for (i, &link) in links.iter().enumerate() {
        let s = &sifted[i];
        let e = estimate_qber(&s.sender, &s.receiver, cfg.sample_fraction, &mut rngs[i])?;
        let pick = |k: &KeyBlock| e.disclosed.iter().map(|&j| k.bits()[j]).collect();
        send(
            net,
            &mut transcript,
            link,
            Direction::ServerToClient,
            MessageBody::SampleDisclosure {
                indices: e.disclosed.clone(),
                bits: pick(&s.sender),
            },
        );
        send(
            net,
            &mut transcript,
            link,
            Direction::ClientToServer,
            MessageBody::SampleDisclosure {
                indices: e.disclosed.clone(),
                bits: pick(&s.receiver),
            },
        );
        reports[i].qber_estimate = Some(e.estimate);
        remaining.push(e);
    }

    let offending: Vec<PortId> = remaining
        .iter()
        .zip(&links)
        .filter(|(e, _)| e.estimate >= cfg.qber_abort_threshold)
        .map(|(_, l)| l.client)
        .collect();
    if !offending.is_empty() {
        for &link in &links {
            send(
                net,
                &mut transcript,
                link,
                Direction::ServerToClient,
                MessageBody::Abort {
                    reason: format!("QBER at or above {}", cfg.qber_abort_threshold),
                },
            );
        }
        return Err(SessionError::QberAbort {
            threshold: cfg.qber_abort_threshold,
            offending,
            links: reports,
        });
    }
    if let Some(i) = remaining.iter().position(|e| e.remaining_a.is_empty()) {
        return Err(SessionError::InsufficientDetections {
            client: links[i].client,
            links: reports,
        });
    }

    let mut reconciled = Vec::with_capacity(links.len());
    for (i, &link) in links.iter().enumerate() {
        let e = &remaining[i];
        let mut leaked = 0;
        let mut outcome = Err(ProtocolError::ReconciliationFailed { leaked_bits: 0 });
        let first_block = first_pass_block_size(e.estimate);
        for attempt in 0..MAX_RECONCILE_ATTEMPTS {
            let mut sink = SessionSink {
                net: &mut *net,
                transcript: &mut transcript,
                link,
            };
            outcome = reconcile_with_block_size(
                &e.remaining_a,
                &e.remaining_b,
                (first_block >> attempt).max(1),
                &mut rngs[i],
                &mut sink,
            );
            match &outcome {
                Ok(r) => {
                    leaked += r.leaked_bits;
                    break;
                }
                Err(ProtocolError::ReconciliationFailed { leaked_bits }) => leaked += leaked_bits,
                Err(_) => break,
            }
        }
        match outcome {
            Ok(r) => {
                reports[i].leaked_bits = Some(leaked);
                reconciled.push(r);
            }
            Err(ProtocolError::ReconciliationFailed { .. }) => {
                reports[i].leaked_bits = Some(leaked);
                send(
                    net,
                    &mut transcript,
                    link,
                    Direction::ServerToClient,
                    MessageBody::Abort {
                        reason: "reconciliation failed".into(),
                    },
                );
                return Err(SessionError::ReconciliationFailed {
                    client: link.client,
                    links: reports,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let key_len = reconciled.iter().map(|r| r.a.len()).min().unwrap_or(0);
    for r in &mut reconciled {
        r.a.truncate(key_len);
        r.b.truncate(key_len);
    }
    for r in &mut reports {
        r.key_bits = Some(key_len);
    }

    let reference = &reconciled[0].a;
    let mut client_keys = BTreeMap::new();
    client_keys.insert(links[0].client, reconciled[0].b.bits().to_vec());
    for (i, &link) in links.iter().enumerate().skip(1) {
        let mask = compute_flip_mask(reference, &reconciled[i].a)?;
        send(
            net,
            &mut transcript,
            link,
            Direction::ServerToClient,
            MessageBody::FlipMask(mask.clone()),
        );
        let key = apply_flip_mask(&reconciled[i].b, &mask)?;
        client_keys.insert(link.client, key.bits().to_vec());
    }

    let shared_key = reference.bits().to_vec();
    if client_keys.values().any(|k| *k != shared_key) {
        return Err(SessionError::Disagreement);
    }

    Ok(SessionResult {
        session_id: cfg.session_id,
        mode: cfg.mode,
        server: cfg.server,
        reference: links[0].client,
        links: reports,
        shared_key,
        client_keys,
        transcript,
    })
}

struct DirectLink {
    detector: DetectorModel,
    p_sig: f64,
}

/// Timing-free network: each client sees a fixed signal-click probability
/// and messages are delivered instantly. Useful where the event-driven
/// simulator is more machinery than needed.
pub struct DirectNetwork {
    assignment: WavelengthAssignment,
    source: SourceModel,
    links: BTreeMap<PortId, DirectLink>,
    rng: ChaCha8Rng,
    delivered: Vec<ClassicalMessage>,
}

impl DirectNetwork {
    pub fn new(assignment: WavelengthAssignment, source: SourceModel, seed: u64) -> Self {
        DirectNetwork {
            assignment,
            source,
            links: BTreeMap::new(),
            rng: stream_rng(seed, 0),
            delivered: Vec::new(),
        }
    }

    pub fn with_client(
        mut self,
        client: PortId,
        detector: DetectorModel,
        budget: &LinkBudget,
    ) -> Self {
        let p_sig = p_signal_click(&self.source, budget, &detector);
        self.links.insert(client, DirectLink { detector, p_sig });
        self
    }

    pub fn delivered(&self) -> &[ClassicalMessage] {
        &self.delivered
    }
}

impl SessionNetwork for DirectNetwork {
    fn n_ports(&self) -> usize {
        self.assignment.n_ports()
    }

    fn channel_to(&self, server: PortId, client: PortId) -> Result<ChannelId, SessionError> {
        self.assignment
            .wavelength_for(server, client)
            .map_err(|e| SessionError::Network(e.to_string()))
    }

    fn source(&self) -> &SourceModel {
        &self.source
    }

    fn transmit(
        &mut self,
        _server: PortId,
        trains: &[(PortId, Vec<PulseRecord>)],
    ) -> Result<Vec<Vec<DetectionRecord>>, SessionError> {
        let e_opt = self.source.optical_error();
        trains
            .iter()
            .map(|(client, train)| {
                let link = self.links.get(client).ok_or_else(|| {
                    SessionError::Network(format!("no detector at port {client}"))
                })?;
                Ok(measure_train(
                    train,
                    &link.detector,
                    link.p_sig,
                    e_opt,
                    &mut self.rng,
                ))
            })
            .collect()
    }

    fn deliver(&mut self, message: &ClassicalMessage) {
        self.delivered.push(message.clone());
    }
}
