use std::fmt;

use crate::router::PortId;

use super::ProtocolError;

/// Directed quantum link from the server to one client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId {
    pub server: PortId,
    pub client: PortId,
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.server, self.client)
    }
}

/// Key bits together with the frame each bit came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyBlock {
    bits: Vec<bool>,
    frames: Vec<u64>,
    link: LinkId,
}

impl KeyBlock {
    pub fn new(bits: Vec<bool>, frames: Vec<u64>, link: LinkId) -> Result<Self, ProtocolError> {
        if bits.len() != frames.len() {
            return Err(ProtocolError::LengthMismatch {
                expected: bits.len(),
                found: frames.len(),
            });
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProtocolError::NonIncreasingFrames);
        }
        Ok(KeyBlock { bits, frames, link })
    }

    /// Block whose frames are simply `0..bits.len()`.
    pub fn from_bits(bits: Vec<bool>, link: LinkId) -> Self {
        let frames = (0..bits.len() as u64).collect();
        KeyBlock { bits, frames, link }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn frames(&self) -> &[u64] {
        &self.frames
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.bits.truncate(len);
        self.frames.truncate(len);
    }

    pub fn mismatches(&self, other: &KeyBlock) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub(crate) fn aligned_with(&self, other: &KeyBlock) -> bool {
        self.frames == other.frames
    }

    pub(crate) fn with_bits(&self, bits: Vec<bool>) -> KeyBlock {
        debug_assert_eq!(bits.len(), self.frames.len());
        KeyBlock {
            bits,
            frames: self.frames.clone(),
            link: self.link,
        }
    }

    /// Copy without the (sorted) positions in `drop`.
    pub(crate) fn without(&self, drop: &[usize]) -> KeyBlock {
        let mut skip = drop.iter().peekable();
        let mut bits = Vec::with_capacity(self.len() - drop.len());
        let mut frames = Vec::with_capacity(self.len() - drop.len());
        for (i, (&b, &f)) in self.bits.iter().zip(&self.frames).enumerate() {
            if skip.peek() == Some(&&i) {
                skip.next();
                continue;
            }
            bits.push(b);
            frames.push(f);
        }
        KeyBlock {
            bits,
            frames,
            link: self.link,
        }
    }
}

/// Set of bit positions to invert in a key of known length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlipMask {
    len: usize,
    positions: Vec<usize>,
}

impl FlipMask {
    /// Zero-based positions; duplicates are merged.
    pub fn from_positions(len: usize, mut positions: Vec<usize>) -> Result<Self, ProtocolError> {
        positions.sort_unstable();
        positions.dedup();
        if let Some(&p) = positions.last() {
            if p >= len {
                return Err(ProtocolError::InvalidArgument(format!(
                    "position {p} outside key of length {len}"
                )));
            }
        }
        Ok(FlipMask { len, positions })
    }

    pub fn empty(len: usize) -> Self {
        FlipMask {
            len,
            positions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Zero-based positions, ascending.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Positions counted from 1, as announced to a client.
    pub fn one_based(&self) -> Vec<usize> {
        self.positions.iter().map(|p| p + 1).collect()
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.len];
        for &p in &self.positions {
            bits[p] = true;
        }
        bits
    }
}

/// Positions where `other` differs from `reference`.
pub fn compute_flip_mask(
    reference: &KeyBlock,
    other: &KeyBlock,
) -> Result<FlipMask, ProtocolError> {
    if reference.len() != other.len() {
        return Err(ProtocolError::LengthMismatch {
            expected: reference.len(),
            found: other.len(),
        });
    }
    let positions = reference
        .bits
        .iter()
        .zip(&other.bits)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    Ok(FlipMask {
        len: reference.len(),
        positions,
    })
}

/// Inverts the masked bits of `key`.
pub fn apply_flip_mask(key: &KeyBlock, mask: &FlipMask) -> Result<KeyBlock, ProtocolError> {
    if key.len() != mask.len {
        return Err(ProtocolError::LengthMismatch {
            expected: key.len(),
            found: mask.len,
        });
    }
    let mut bits = key.bits.clone();
    for &p in &mask.positions {
        bits[p] = !bits[p];
    }
    Ok(key.with_bits(bits))
}
