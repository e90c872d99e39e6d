use std::fmt;

use crate::router::{ChannelId, PortId};

use super::{Basis, FlipMask, LinkId, SessionMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ServerToClient,
    ClientToServer,
}

/// Payload of a public-channel message.
#[derive(Clone, Debug, PartialEq)]
pub enum MessageBody {
    KeyRequest {
        mode: SessionMode,
    },
    TrainAnnounce {
        channel: ChannelId,
        n_frames: u64,
    },
    /// Frames the client detected, with the basis it measured each in.
    BasisList {
        frames: Vec<u64>,
        bases: Vec<Basis>,
    },
    /// Frames kept after basis comparison.
    SiftIndexSet {
        frames: Vec<u64>,
    },
    SampleDisclosure {
        indices: Vec<usize>,
        bits: Vec<bool>,
    },
    /// Parity request over slots `start..end` of pass `pass`'s permutation.
    ParityQuery {
        pass: usize,
        start: usize,
        end: usize,
    },
    ParityReply {
        parity: bool,
    },
    PermutationSeed {
        pass: usize,
        seed: u64,
    },
    /// Parities of 64 random subsets drawn from `seed`.
    FinalCheck {
        seed: u64,
        parities: u64,
    },
    FlipMask(FlipMask),
    Abort {
        reason: String,
    },
}

impl MessageBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageBody::KeyRequest { .. } => "KeyRequest",
            MessageBody::TrainAnnounce { .. } => "TrainAnnounce",
            MessageBody::BasisList { .. } => "BasisList",
            MessageBody::SiftIndexSet { .. } => "SiftIndexSet",
            MessageBody::SampleDisclosure { .. } => "SampleDisclosure",
            MessageBody::ParityQuery { .. } => "ParityQuery",
            MessageBody::ParityReply { .. } => "ParityReply",
            MessageBody::PermutationSeed { .. } => "PermutationSeed",
            MessageBody::FinalCheck { .. } => "FinalCheck",
            MessageBody::FlipMask(_) => "FlipMask",
            MessageBody::Abort { .. } => "Abort",
        }
    }

    /// Number of key-parity bits this message discloses.
    pub fn parity_bits(&self) -> usize {
        match self {
            MessageBody::ParityReply { .. } => 1,
            MessageBody::FinalCheck { .. } => super::FINAL_CHECK_BITS,
            _ => 0,
        }
    }

    /// Any bit-string content carried by the message, for leak scans.
    pub fn bit_payload(&self) -> Option<Vec<bool>> {
        match self {
            MessageBody::BasisList { bases, .. } => {
                Some(bases.iter().map(|b| b.as_bit()).collect())
            }
            MessageBody::SampleDisclosure { bits, .. } => Some(bits.clone()),
            MessageBody::ParityReply { parity } => Some(vec![*parity]),
            MessageBody::FinalCheck { parities, .. } => {
                Some((0..64).map(|i| parities >> i & 1 == 1).collect())
            }
            MessageBody::FlipMask(m) => Some(m.to_bits()),
            _ => None,
        }
    }

    fn summary(&self) -> String {
        match self {
            MessageBody::KeyRequest { mode } => format!("mode={mode}"),
            MessageBody::TrainAnnounce { channel, n_frames } => {
                format!("channel={channel} frames={n_frames}")
            }
            MessageBody::BasisList { frames, .. } => format!("n={}", frames.len()),
            MessageBody::SiftIndexSet { frames } => format!("n={}", frames.len()),
            MessageBody::SampleDisclosure { indices, .. } => format!("n={}", indices.len()),
            MessageBody::ParityQuery { pass, start, end } => {
                format!("pass={pass} range={start}..{end}")
            }
            MessageBody::ParityReply { parity } => format!("parity={}", *parity as u8),
            MessageBody::PermutationSeed { pass, seed } => format!("pass={pass} seed={seed}"),
            MessageBody::FinalCheck { seed, parities } => {
                format!("seed={seed} parities={parities:016x}")
            }
            MessageBody::FlipMask(m) => format!("len={} flips={}", m.len(), m.positions().len()),
            MessageBody::Abort { reason } => format!("reason={reason:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalMessage {
    pub session: u64,
    pub link: LinkId,
    pub seq: u64,
    pub direction: Direction,
    pub body: MessageBody,
}

impl ClassicalMessage {
    pub fn from(&self) -> PortId {
        match self.direction {
            Direction::ServerToClient => self.link.server,
            Direction::ClientToServer => self.link.client,
        }
    }

    pub fn to(&self) -> PortId {
        match self.direction {
            Direction::ServerToClient => self.link.client,
            Direction::ClientToServer => self.link.server,
        }
    }
}

impl fmt::Display for ClassicalMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "session={} link={} seq={} {}->{} {} {}",
            self.session,
            self.link,
            self.seq,
            self.from(),
            self.to(),
            self.body.kind(),
            self.body.summary()
        )
    }
}

/// Receives messages of one link in send order.
pub trait MessageSink {
    fn send(&mut self, direction: Direction, body: MessageBody);
}

/// Ordered record of every public-channel message of a session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    session: u64,
    messages: Vec<ClassicalMessage>,
}

impl Transcript {
    pub fn new(session: u64) -> Self {
        Transcript {
            session,
            messages: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        link: LinkId,
        direction: Direction,
        body: MessageBody,
    ) -> &ClassicalMessage {
        let seq = self.messages.len() as u64;
        self.messages.push(ClassicalMessage {
            session: self.session,
            link,
            seq,
            direction,
            body,
        });
        self.messages.last().expect("just pushed")
    }

    pub fn messages(&self) -> &[ClassicalMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn parity_bit_count(&self) -> usize {
        self.messages.iter().map(|m| m.body.parity_bits()).sum()
    }

    pub fn parity_bits_on(&self, link: LinkId) -> usize {
        self.messages
            .iter()
            .filter(|m| m.link == link)
            .map(|m| m.body.parity_bits())
            .sum()
    }

    /// Sink that appends to this transcript on a fixed link.
    pub fn sink(&mut self, link: LinkId) -> TranscriptSink<'_> {
        TranscriptSink {
            transcript: self,
            link,
        }
    }

    /// True if `key` occurs as a contiguous run in any message payload.
    pub fn exposes(&self, key: &[bool]) -> bool {
        if key.is_empty() {
            return false;
        }
        self.messages.iter().any(|m| {
            m.body
                .bit_payload()
                .is_some_and(|p| p.windows(key.len()).any(|w| w == key))
        })
    }
}

pub struct TranscriptSink<'a> {
    transcript: &'a mut Transcript,
    link: LinkId,
}

impl MessageSink for TranscriptSink<'_> {
    fn send(&mut self, direction: Direction, body: MessageBody) {
        self.transcript.push(self.link, direction, body);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINK: LinkId = LinkId {
        server: PortId(3),
        client: PortId(1),
    };

    #[test]
    fn sequence_numbers_and_parties() {
        let mut t = Transcript::new(9);
        t.push(
            LINK,
            Direction::ClientToServer,
            MessageBody::KeyRequest {
                mode: SessionMode::Broadcast,
            },
        );
        let m = t.push(
            LINK,
            Direction::ServerToClient,
            MessageBody::ParityReply { parity: true },
        );
        assert_eq!(m.seq, 1);
        assert_eq!(m.from(), PortId(3));
        assert_eq!(m.to(), PortId(1));
        assert_eq!(t.parity_bit_count(), 1);
        assert_eq!(
            t.messages()[0].to_string(),
            "session=9 link=D-B seq=0 B->D KeyRequest mode=broadcast"
        );
    }

    #[test]
    fn exposure_scan() {
        let mut t = Transcript::new(1);
        t.push(
            LINK,
            Direction::ServerToClient,
            MessageBody::SampleDisclosure {
                indices: vec![0, 1, 2, 3],
                bits: vec![true, false, true, true],
            },
        );
        assert!(t.exposes(&[false, true, true]));
        assert!(!t.exposes(&[false, false]));
        assert!(!t.exposes(&[]));
    }
}
