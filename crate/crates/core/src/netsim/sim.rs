use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::photonics::{p_click_poisson, p_dark_per_gate, transmittance, SourceModel};
use crate::protocol::{
    measure_pulse, run_session, Basis, ClassicalMessage, DetectionRecord, PulseRecord,
    SessionConfig, SessionError, SessionNetwork, SessionResult,
};
use crate::router::{ChannelId, PortId};
use crate::stream_rng;

use super::{EventLog, LogDetail, LogEntry, LogKind, NetError, NetworkSpec};

#[derive(Debug)]
enum Event {
    FrameTick {
        frame: u64,
    },
    Pulse {
        train: usize,
        idx: usize,
    },
    Stray {
        frame: u64,
        channel: ChannelId,
    },
    Gate {
        train: usize,
        idx: usize,
        port: PortId,
        pulse: PulseRecord,
    },
    Classical {
        to: PortId,
        text: String,
    },
}

impl Event {
    /// Tie-break order for events sharing a timestamp.
    fn rank(&self) -> u8 {
        match self {
            Event::FrameTick { .. } => 0,
            Event::Pulse { .. } | Event::Stray { .. } => 1,
            Event::Gate { .. } => 2,
            Event::Classical { .. } => 3,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    rank: u8,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (u64, u8, u64) {
        (self.time, self.rank, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Per-train constants resolved once before the frames run.
struct Lane {
    client: PortId,
    channel: ChannelId,
    offset_ns: u64,
}

struct Simulator<'s> {
    spec: &'s NetworkSpec,
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    log: EventLog,
    client_rngs: BTreeMap<PortId, ChaCha8Rng>,
    eve_rng: ChaCha8Rng,
    /// Per-port applied loss, detector efficiency, dark probability.
    gates: BTreeMap<PortId, (f64, f64, f64)>,
}

impl<'s> Simulator<'s> {
    fn new(spec: &'s NetworkSpec, seed: u64) -> Result<Self, NetError> {
        let mut gates = BTreeMap::new();
        for (&port, node) in &spec.clients {
            let loss = spec.link_budget(port)?.total_db();
            gates.insert(
                port,
                (
                    loss,
                    node.detector.efficiency(),
                    p_dark_per_gate(&node.detector),
                ),
            );
        }
        Ok(Simulator {
            spec,
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            log: EventLog::default(),
            client_rngs: spec
                .clients
                .keys()
                .map(|&p| (p, stream_rng(seed, 100 + p.0 as u64)))
                .collect(),
            eve_rng: stream_rng(seed, 1),
            gates,
        })
    }

    fn schedule(&mut self, time: u64, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled {
            time,
            rank: event.rank(),
            seq,
            event,
        }));
    }

    fn record(
        &mut self,
        kind: LogKind,
        port: Option<PortId>,
        channel: Option<ChannelId>,
        detail: String,
    ) {
        self.log.push(LogEntry {
            time_ns: self.now,
            kind,
            port,
            channel,
            detail,
        });
    }

    fn full(&self) -> bool {
        self.spec.log_detail == LogDetail::Full
    }

    fn logging(&self) -> bool {
        self.spec.log_detail != LogDetail::Off
    }

    fn offset_of(&self, ch: ChannelId) -> Option<u64> {
        self.spec.channel_offsets_ns.get(&ch).copied()
    }

    /// Intercept-resend: measure in a random basis and re-prepare.
    fn intercept(&mut self, mut pulse: PulseRecord, fraction: f64) -> (PulseRecord, bool) {
        if fraction <= 0.0 || !self.eve_rng.random_bool(fraction) {
            return (pulse, false);
        }
        let basis = Basis::random(&mut self.eve_rng);
        if basis != pulse.basis {
            pulse.bit = self.eve_rng.random::<bool>();
            pulse.basis = basis;
        }
        (pulse, true)
    }

    /// Probability that a pulse on a channel sharing `ch`'s slot leaks into
    /// `port`'s gate and clicks.
    fn crosstalk_click(
        &mut self,
        port: PortId,
        ch: ChannelId,
        lanes: &[Lane],
    ) -> Option<(ChannelId, f64)> {
        if !self.spec.crosstalk {
            return None;
        }
        let mine = self.offset_of(ch)?;
        let (loss, eff, _) = self.gates[&port];
        let t_xt = transmittance(self.spec.router.crosstalk_db()).ok()?;
        let mu = self.spec.source.mean_photon_number();
        lanes
            .iter()
            .filter(|l| l.channel != ch && l.offset_ns.abs_diff(mine) < self.spec.guard_ns)
            .map(|l| {
                (
                    l.channel,
                    p_click_poisson(mu, eff, t_xt * transmittance(loss).unwrap_or(0.0)),
                )
            })
            .next()
    }

    fn run_trains(
        &mut self,
        trains: &[(PortId, Vec<PulseRecord>)],
    ) -> Result<Vec<Vec<DetectionRecord>>, SessionError> {
        let period = self.spec.frame_period_ns();
        let t0 = self.now.div_ceil(period) * period;
        let mut lanes = Vec::with_capacity(trains.len());
        for (client, train) in trains {
            let channel = train
                .first()
                .map(|p| p.channel)
                .ok_or_else(|| SessionError::Network(format!("empty train for {client}")))?;
            let offset_ns = self
                .offset_of(channel)
                .ok_or_else(|| SessionError::Network(format!("no time slot for {channel}")))?;
            if !self.spec.clients.contains_key(client) {
                return Err(SessionError::Network(format!(
                    "no detector at port {client}"
                )));
            }
            lanes.push(Lane {
                client: *client,
                channel,
                offset_ns,
            });
        }
        let mut detections: Vec<Vec<DetectionRecord>> = trains
            .iter()
            .map(|(_, t)| {
                t.iter()
                    .map(|p| DetectionRecord::no_click(p.frame, Basis::Rectilinear))
                    .collect()
            })
            .collect();
        let n_frames = trains
            .iter()
            .map(|(_, t)| t.len() as u64)
            .max()
            .unwrap_or(0);
        let mut strays: Vec<_> = self.spec.stray_pulses.clone();
        strays.sort_by_key(|s| s.frame);
        let mut strays = strays.into_iter().peekable();
        if n_frames > 0 {
            self.schedule(t0, Event::FrameTick { frame: 0 });
        }
        let e_opt = self.spec.source.optical_error();

        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.time;
            match ev.event {
                Event::FrameTick { frame } => {
                    let start = t0 + frame * period;
                    for (i, lane) in lanes.iter().enumerate() {
                        if (frame as usize) < trains[i].1.len() {
                            let t = start + lane.offset_ns;
                            self.schedule(
                                t,
                                Event::Pulse {
                                    train: i,
                                    idx: frame as usize,
                                },
                            );
                        }
                    }
                    while let Some(s) = strays.next_if(|s| s.frame == frame) {
                        let t = start + self.offset_of(s.channel).unwrap_or(0);
                        self.schedule(
                            t,
                            Event::Stray {
                                frame,
                                channel: s.channel,
                            },
                        );
                    }
                    if frame + 1 < n_frames {
                        self.schedule(start + period, Event::FrameTick { frame: frame + 1 });
                    }
                }
                Event::Pulse { train, idx } => {
                    let lane = &lanes[train];
                    let (client, channel) = (lane.client, lane.channel);
                    let sent = trains[train].1[idx];
                    let fraction = self.spec.clients[&client].intercept_fraction;
                    let (pulse, tapped) = self.intercept(sent, fraction);
                    match self.spec.router.route(self.spec.server, channel) {
                        Ok(dest) if self.spec.clients.contains_key(&dest) => {
                            if self.full() {
                                let tag = if tapped { " intercepted" } else { "" };
                                let d = format!("frame={} to={dest}{tag}", pulse.frame);
                                self.record(
                                    LogKind::PulseArrival,
                                    Some(self.spec.server),
                                    Some(channel),
                                    d,
                                );
                            }
                            self.schedule(
                                self.now,
                                Event::Gate {
                                    train,
                                    idx,
                                    port: dest,
                                    pulse,
                                },
                            );
                        }
                        Ok(dest) => {
                            if self.logging() {
                                let d =
                                    format!("frame={} to={dest} reason=no-detector", pulse.frame);
                                self.record(
                                    LogKind::PhotonLoss,
                                    Some(self.spec.server),
                                    Some(channel),
                                    d,
                                );
                            }
                        }
                        Err(e) => {
                            if self.logging() {
                                let d = format!("frame={} reason=unroutable ({e})", pulse.frame);
                                self.record(
                                    LogKind::PhotonLoss,
                                    Some(self.spec.server),
                                    Some(channel),
                                    d,
                                );
                            }
                        }
                    }
                }
                Event::Stray { frame, channel } => {
                    let server = self.spec.server;
                    match self.spec.router.route(server, channel) {
                        Ok(dest) => {
                            if self.logging() {
                                let d = format!("frame={frame} to={dest} reason=ungated");
                                self.record(LogKind::PhotonLoss, Some(server), Some(channel), d);
                            }
                        }
                        Err(_) => {
                            if self.logging() {
                                let d = format!("frame={frame} reason=unroutable");
                                self.record(LogKind::PhotonLoss, Some(server), Some(channel), d);
                            }
                        }
                    }
                }
                Event::Gate {
                    train,
                    idx,
                    port,
                    pulse,
                } => {
                    let (loss, eff, p_dark) = self.gates[&port];
                    let t = transmittance(loss).expect("validated loss");
                    let p_sig = p_click_poisson(pulse.mean_photon_number, eff, t);
                    let leak = self.crosstalk_click(port, pulse.channel, &lanes);
                    let p_noise = match leak {
                        Some((_, p)) => 1.0 - (1.0 - p_dark) * (1.0 - p),
                        None => p_dark,
                    };
                    let rng = self.client_rngs.get_mut(&port).expect("client rng");
                    let rec = measure_pulse(&pulse, p_sig, p_noise, e_opt, rng);
                    if port == lanes[train].client {
                        detections[train][idx] = rec;
                    }
                    if self.full() || (rec.clicked && self.logging()) {
                        let mut d = format!(
                            "frame={} loss_db={loss} basis={} click={}",
                            pulse.frame, rec.basis, rec.clicked as u8
                        );
                        if rec.clicked {
                            d.push_str(&format!(" bit={}", rec.bit as u8));
                        }
                        if let Some((other, _)) = leak {
                            d.push_str(&format!(" crosstalk={other}"));
                        }
                        self.record(LogKind::GateOpen, Some(port), Some(pulse.channel), d);
                    }
                }
                Event::Classical { to, text } => {
                    if self.logging() {
                        self.record(LogKind::ClassicalMessage, Some(to), None, text);
                    }
                }
            }
        }
        Ok(detections)
    }
}

impl SessionNetwork for Simulator<'_> {
    fn n_ports(&self) -> usize {
        self.spec.n_ports()
    }

    fn channel_to(&self, server: PortId, client: PortId) -> Result<ChannelId, SessionError> {
        self.spec
            .router
            .wavelength_for(server, client)
            .map_err(|e| SessionError::Network(e.to_string()))
    }

    fn source(&self) -> &SourceModel {
        &self.spec.source
    }

    fn transmit(
        &mut self,
        server: PortId,
        trains: &[(PortId, Vec<PulseRecord>)],
    ) -> Result<Vec<Vec<DetectionRecord>>, SessionError> {
        if server != self.spec.server {
            return Err(SessionError::Network(format!(
                "only port {} holds lasers, not {server}",
                self.spec.server
            )));
        }
        self.run_trains(trains)
    }

    fn deliver(&mut self, message: &ClassicalMessage) {
        let at = self.now + self.spec.classical_delay_ns;
        let text = if self.logging() {
            message.to_string()
        } else {
            String::new()
        };
        self.schedule(
            at,
            Event::Classical {
                to: message.to(),
                text,
            },
        );
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.time;
            if let Event::Classical { to, text } = ev.event {
                if self.logging() {
                    self.record(LogKind::ClassicalMessage, Some(to), None, text);
                }
            }
        }
    }
}

/// Outcome of one networked session. A protocol abort is a normal outcome
/// and still comes with its event log.
#[derive(Debug)]
pub struct NetworkRun {
    pub outcome: Result<SessionResult, SessionError>,
    pub log: EventLog,
}

/// Runs `cfg` over the simulated network. `seed` drives the network side
/// (receiver bases, click draws, eavesdropper); `cfg.seed` drives the
/// server's trains and the protocol's public randomness.
pub fn run_network(
    spec: &NetworkSpec,
    cfg: &SessionConfig,
    seed: u64,
) -> Result<NetworkRun, NetError> {
    spec.validate()?;
    cfg.validate(spec.n_ports())?;
    if cfg.server != spec.server {
        return Err(NetError::InvalidSpec(format!(
            "session server {} differs from network server {}",
            cfg.server, spec.server
        )));
    }
    if let Some(c) = cfg.clients.iter().find(|c| !spec.clients.contains_key(c)) {
        return Err(NetError::InvalidSpec(format!(
            "session client {c} has no detector"
        )));
    }
    let mut sim = Simulator::new(spec, seed)?;
    let outcome = run_session(cfg, &mut sim);
    Ok(NetworkRun {
        outcome,
        log: sim.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::StrayPulse;
    use crate::photonics::DetectorModel;
    use crate::protocol::SessionMode;

    const A: PortId = PortId(0);
    const B: PortId = PortId(1);
    const C: PortId = PortId(2);
    const D: PortId = PortId(3);

    fn small(detail: LogDetail) -> (NetworkSpec, SessionConfig) {
        let mut spec = NetworkSpec::reference_four_user();
        spec.log_detail = detail;
        (spec, SessionConfig::broadcast(D, 4, 2000, 9))
    }

    fn noiseless() -> NetworkSpec {
        let mut spec = NetworkSpec::reference_four_user();
        spec.source = SourceModel::new(50.0, 1e6, 0.0).unwrap();
        for node in spec.clients.values_mut() {
            node.detector = DetectorModel::new(1.0, 0.0, 2.5, 1e6).unwrap();
        }
        spec
    }

    #[test]
    fn noiseless_broadcast_agrees() {
        let spec = noiseless();
        let cfg = SessionConfig::broadcast(D, 4, 5000, 2);
        let run = run_network(&spec, &cfg, 2).unwrap();
        let r = run.outcome.unwrap();
        assert!(r.links.iter().all(|l| l.sifted_qber == Some(0.0)));
        assert!(r.client_keys.values().all(|k| *k == r.shared_key));
        assert_eq!(r.reference, A);
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let (spec, cfg) = small(LogDetail::Full);
        let a = run_network(&spec, &cfg, 5).unwrap();
        let b = run_network(&spec, &cfg, 5).unwrap();
        assert_eq!(a.log.render(), b.log.render());
        assert_eq!(format!("{:?}", a.outcome), format!("{:?}", b.outcome));
        let c = run_network(&spec, &cfg, 6).unwrap();
        assert_ne!(a.log.render(), c.log.render());
    }

    #[test]
    fn log_is_time_ordered_and_gates_on_slots() {
        let (spec, cfg) = small(LogDetail::Full);
        let run = run_network(&spec, &cfg, 3).unwrap();
        let e = run.log.entries();
        assert!(e.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
        let period = spec.frame_period_ns();
        let slots: Vec<u64> = spec.channel_offsets_ns.values().copied().collect();
        let gates: Vec<_> = run.log.of_kind(LogKind::GateOpen).collect();
        assert_eq!(gates.len(), 3 * 2000);
        for g in gates {
            let off = spec.channel_offsets_ns[&g.channel.unwrap()];
            assert_eq!(g.time_ns % period, off);
            assert!(slots.contains(&(g.time_ns % period)));
        }
        assert!(run.log.guard_band_violations(spec.guard_ns).is_empty());
    }

    #[test]
    fn applied_loss_is_path_plus_eatt() {
        let (mut spec, cfg) = small(LogDetail::Full);
        spec.clients.get_mut(&C).unwrap().extra_attenuation_db = 3.0;
        let run = run_network(&spec, &cfg, 4).unwrap();
        for g in run.log.of_kind(LogKind::GateOpen) {
            let port = g.port.unwrap();
            let want = spec.router.path_loss_db(D, port).unwrap()
                + spec.clients[&port].extra_attenuation_db;
            let got: f64 = g
                .detail
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix("loss_db="))
                .unwrap()
                .parse()
                .unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn stray_pulse_on_unused_channel_is_lost() {
        let (mut spec, cfg) = small(LogDetail::Detections);
        // a 4-port router uses λ1..λ3; λ4 goes nowhere
        spec.stray_pulses.push(StrayPulse {
            frame: 7,
            channel: ChannelId(3),
        });
        let run = run_network(&spec, &cfg, 1).unwrap();
        let lost: Vec<_> = run.log.of_kind(LogKind::PhotonLoss).collect();
        assert_eq!(lost.len(), 1);
        assert_eq!(lost[0].channel, Some(ChannelId(3)));
        assert!(lost[0].detail.contains("reason=unroutable"));
        assert!(run
            .log
            .of_kind(LogKind::GateOpen)
            .all(|g| g.channel != Some(ChannelId(3))));
    }

    #[test]
    fn classical_messages_in_send_order() {
        let (mut spec, cfg) = small(LogDetail::Detections);
        spec.classical_delay_ns = 250;
        let run = run_network(&spec, &cfg, 8).unwrap();
        let r = run.outcome.unwrap();
        let logged: Vec<&str> = run
            .log
            .of_kind(LogKind::ClassicalMessage)
            .map(|e| e.detail.as_str())
            .collect();
        let sent: Vec<String> = r
            .transcript
            .messages()
            .iter()
            .map(|m| m.to_string())
            .collect();
        assert_eq!(logged, sent);
    }

    #[test]
    fn eavesdropper_raises_qber() {
        let (mut spec, mut cfg) = small(LogDetail::Off);
        spec.clients.get_mut(&A).unwrap().intercept_fraction = 1.0;
        cfg.n_frames = 400_000;
        let run = run_network(&spec, &cfg, 12).unwrap();
        match run.outcome {
            Err(SessionError::QberAbort {
                offending, links, ..
            }) => {
                assert_eq!(offending, vec![A]);
                let a = links.iter().find(|l| l.client == A).unwrap();
                assert!(a.sifted_qber.unwrap() > 0.2);
            }
            other => panic!("expected abort, got {other:?}"),
        }
        assert!(run.log.is_empty());
    }

    #[test]
    fn crosstalk_only_when_guard_violated() {
        let (mut spec, cfg) = small(LogDetail::Full);
        spec.crosstalk = true;
        let clean = run_network(&spec, &cfg, 2).unwrap();
        assert!(!clean.log.render().contains("crosstalk="));
        spec.channel_offsets_ns =
            [(ChannelId(0), 0), (ChannelId(1), 40), (ChannelId(2), 300)].into();
        let leaky = run_network(&spec, &cfg, 2).unwrap();
        assert!(!leaky.log.guard_band_violations(spec.guard_ns).is_empty());
        assert!(leaky.log.render().contains("crosstalk="));
    }

    #[test]
    fn rejects_mismatched_session() {
        let (spec, _) = small(LogDetail::Off);
        let cfg = SessionConfig::new(SessionMode::Unicast, A, [B], 100, 1);
        assert!(matches!(
            run_network(&spec, &cfg, 1),
            Err(NetError::InvalidSpec(_))
        ));
        let cfg = SessionConfig::new(SessionMode::Unicast, D, [B], 0, 1);
        assert!(matches!(
            run_network(&spec, &cfg, 1),
            Err(NetError::Session(_))
        ));
    }
}
