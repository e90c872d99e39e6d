use std::fmt;
use std::io::{self, Write};

use crate::router::{ChannelId, PortId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogKind {
    PulseArrival,
    GateOpen,
    ClassicalMessage,
    PhotonLoss,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::PulseArrival => "pulse-arrival",
            LogKind::GateOpen => "gate-open",
            LogKind::ClassicalMessage => "classical-message",
            LogKind::PhotonLoss => "photon-loss",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub time_ns: u64,
    pub kind: LogKind,
    pub port: Option<PortId>,
    pub channel: Option<ChannelId>,
    pub detail: String,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.time_ns,
            self.kind.as_str(),
            self.port.map_or("-".into(), |p| p.label()),
            self.channel.map_or("-".into(), |c| c.label()),
            self.detail
        )
    }
}

/// Totally ordered event record, one line per event:
/// `time_ns kind port channel detail`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub(crate) fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_kind(&self, kind: LogKind) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("log is UTF-8")
    }

    /// Pairs of pulse arrivals on different channels closer than `guard_ns`.
    pub fn guard_band_violations(&self, guard_ns: u64) -> Vec<(LogEntry, LogEntry)> {
        let arrivals: Vec<&LogEntry> = self.of_kind(LogKind::PulseArrival).collect();
        let mut out = Vec::new();
        for (i, a) in arrivals.iter().enumerate() {
            for b in &arrivals[i + 1..] {
                if b.time_ns - a.time_ns >= guard_ns {
                    break;
                }
                if a.channel != b.channel {
                    out.push(((*a).clone(), (*b).clone()));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrival(t: u64, ch: usize) -> LogEntry {
        LogEntry {
            time_ns: t,
            kind: LogKind::PulseArrival,
            port: Some(PortId(3)),
            channel: Some(ChannelId(ch)),
            detail: "frame=0 to=A".into(),
        }
    }

    #[test]
    fn line_format() {
        assert_eq!(
            arrival(1200, 0).to_string(),
            "1200 pulse-arrival D λ1 frame=0 to=A"
        );
        let e = LogEntry {
            time_ns: 5,
            kind: LogKind::ClassicalMessage,
            port: Some(PortId(0)),
            channel: None,
            detail: "x".into(),
        };
        assert_eq!(e.to_string(), "5 classical-message A - x");
    }

    #[test]
    fn guard_check() {
        let mut log = EventLog::default();
        for e in [
            arrival(0, 0),
            arrival(100, 1),
            arrival(200, 2),
            arrival(1000, 0),
            arrival(1050, 1),
        ] {
            log.push(e);
        }
        let v = log.guard_band_violations(100);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].0.time_ns, v[0].1.time_ns), (1000, 1050));
    }
}
