//! Cascade reconciliation.
//!
//! The server side (`a`) is authoritative; only the client side (`b`) is
//! corrected. Each pass shuffles positions with a seed announced on the
//! public channel, splits them into blocks, compares block parities and
//! bisects every odd-parity block down to one bit. Flipping a bit changes the
//! parity of the blocks containing it in all earlier passes, which are then
//! re-examined. Pass `i` uses blocks twice as large as pass `i − 1`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Direction, KeyBlock, MessageBody, MessageSink, ProtocolError};

pub const CASCADE_PASSES: usize = 4;

/// Lower clamp on the QBER used for block sizing.
pub const QBER_FLOOR: f64 = 0.005;

/// Number of random-subset parities in the closing check.
pub const FINAL_CHECK_BITS: usize = 64;

/// Pass-1 block size `ceil(0.73 / max(qber, QBER_FLOOR))`.
pub fn first_pass_block_size(qber_estimate: f64) -> usize {
    (0.73 / qber_estimate.max(QBER_FLOOR)).ceil() as usize
}

/// Parities of 64 subsets, each containing every position with probability ½.
pub fn subset_parities(bits: &[bool], seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0u64;
    for &b in bits {
        let m = rng.next_u64();
        if b {
            acc ^= m;
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconciled {
    pub a: KeyBlock,
    pub b: KeyBlock,
    /// Parity bits disclosed, including the final check.
    pub leaked_bits: usize,
    /// `(pass, position)` of every bit flipped in `b`, in order.
    pub corrections: Vec<(usize, usize)>,
}

struct Pass {
    order: Vec<usize>,
    slot_of: Vec<usize>,
    block_size: usize,
    a_parity: Vec<bool>,
}

impl Pass {
    fn new(n: usize, block_size: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut slot_of = vec![0; n];
        for (slot, &pos) in order.iter().enumerate() {
            slot_of[pos] = slot;
        }
        Pass {
            order,
            slot_of,
            block_size,
            a_parity: Vec::new(),
        }
    }

    fn n_blocks(&self) -> usize {
        self.order.len().div_ceil(self.block_size)
    }

    fn block_range(&self, block: usize) -> (usize, usize) {
        let start = block * self.block_size;
        (start, (start + self.block_size).min(self.order.len()))
    }

    fn block_of(&self, pos: usize) -> usize {
        self.slot_of[pos] / self.block_size
    }

    fn parity(&self, bits: &[bool], start: usize, end: usize) -> bool {
        self.order[start..end]
            .iter()
            .fold(false, |p, &i| p ^ bits[i])
    }
}

fn disclose_parity(
    sink: &mut dyn MessageSink,
    leaked: &mut usize,
    pass_idx: usize,
    pass: &Pass,
    a: &[bool],
    start: usize,
    end: usize,
) -> bool {
    sink.send(
        Direction::ClientToServer,
        MessageBody::ParityQuery {
            pass: pass_idx,
            start,
            end,
        },
    );
    let parity = pass.parity(a, start, end);
    sink.send(
        Direction::ServerToClient,
        MessageBody::ParityReply { parity },
    );
    *leaked += 1;
    parity
}

/// Corrects `b` towards `a`.
///
/// Refuses to run when `qber_estimate >= abort_threshold`. Fails with
/// [`ProtocolError::ReconciliationFailed`] if the closing subset-parity check
/// still sees a difference; the caller decides whether to retry or abort.
pub fn reconcile<R: Rng + ?Sized>(
    a: &KeyBlock,
    b: &KeyBlock,
    qber_estimate: f64,
    abort_threshold: f64,
    rng: &mut R,
    sink: &mut dyn MessageSink,
) -> Result<Reconciled, ProtocolError> {
    if !a.aligned_with(b) {
        return Err(ProtocolError::Misaligned);
    }
    if qber_estimate >= abort_threshold {
        return Err(ProtocolError::QberAboveThreshold {
            estimate: qber_estimate,
            threshold: abort_threshold,
        });
    }
    reconcile_with_block_size(a, b, first_pass_block_size(qber_estimate), rng, sink)
}

/// [`reconcile`] with an explicit pass-1 block size and no threshold check.
pub fn reconcile_with_block_size<R: Rng + ?Sized>(
    a: &KeyBlock,
    b: &KeyBlock,
    first_block: usize,
    rng: &mut R,
    sink: &mut dyn MessageSink,
) -> Result<Reconciled, ProtocolError> {
    if !a.aligned_with(b) {
        return Err(ProtocolError::Misaligned);
    }
    let n = a.len();
    let a_bits = a.bits();
    let mut b_bits = b.bits().to_vec();
    let mut leaked = 0;
    let mut corrections = Vec::new();
    let mut passes: Vec<Pass> = Vec::with_capacity(CASCADE_PASSES);

    if n > 0 {
        let mut block_size = first_block.clamp(1, n);
        for pass_idx in 0..CASCADE_PASSES {
            let seed = rng.next_u64();
            sink.send(
                Direction::ServerToClient,
                MessageBody::PermutationSeed {
                    pass: pass_idx,
                    seed,
                },
            );
            let mut pass = Pass::new(n, block_size, seed);
            let mut queue = VecDeque::new();
            for blk in 0..pass.n_blocks() {
                let (start, end) = pass.block_range(blk);
                let pa = disclose_parity(sink, &mut leaked, pass_idx, &pass, a_bits, start, end);
                pass.a_parity.push(pa);
                if pa != pass.parity(&b_bits, start, end) {
                    queue.push_back((pass_idx, blk));
                }
            }
            passes.push(pass);

            while let Some((p, blk)) = queue.pop_front() {
                let pass = &passes[p];
                let (mut lo, mut hi) = pass.block_range(blk);
                if pass.parity(&b_bits, lo, hi) == pass.a_parity[blk] {
                    continue;
                }
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    let pa = disclose_parity(sink, &mut leaked, p, pass, a_bits, lo, mid);
                    if pa != pass.parity(&b_bits, lo, mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let pos = pass.order[lo];
                b_bits[pos] = !b_bits[pos];
                corrections.push((pass_idx, pos));
                for (q, other) in passes.iter().enumerate() {
                    if q != p {
                        queue.push_back((q, other.block_of(pos)));
                    }
                }
            }
            block_size = (block_size * 2).min(n);
        }
    }

    let seed = rng.next_u64();
    let parities = subset_parities(a_bits, seed);
    sink.send(
        Direction::ServerToClient,
        MessageBody::FinalCheck { seed, parities },
    );
    leaked += FINAL_CHECK_BITS;
    if subset_parities(&b_bits, seed) != parities {
        return Err(ProtocolError::ReconciliationFailed {
            leaked_bits: leaked,
        });
    }
    Ok(Reconciled {
        a: a.clone(),
        b: b.with_bits(b_bits),
        leaked_bits: leaked,
        corrections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{LinkId, Transcript};
    use crate::router::PortId;

    const LINK: LinkId = LinkId {
        server: PortId(0),
        client: PortId(2),
    };

    fn random_block(n: usize, rng: &mut ChaCha8Rng) -> KeyBlock {
        KeyBlock::from_bits((0..n).map(|_| rng.random::<bool>()).collect(), LINK)
    }

    #[test]
    fn block_sizing() {
        assert_eq!(first_pass_block_size(0.03), 25);
        assert_eq!(first_pass_block_size(0.0), 146);
        assert_eq!(first_pass_block_size(0.001), 146);
        assert_eq!(first_pass_block_size(0.1), 8);
    }

    #[test]
    fn identical_blocks_only_disclose_parities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_block(256, &mut rng);
        let mut t = Transcript::new(1);
        let r = reconcile(&a, &a.clone(), 0.0, 0.11, &mut rng, &mut t.sink(LINK)).unwrap();
        assert!(r.corrections.is_empty());
        assert_eq!(r.b, a);
        assert_eq!(r.leaked_bits, t.parity_bit_count());
        // 146, 256, 256, 256 → 2 + 1 + 1 + 1 top-level blocks, plus the final check
        assert_eq!(r.leaked_bits, 5 + FINAL_CHECK_BITS);
    }

    #[test]
    fn single_error_fixed_in_first_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for pos in [0, 77, 128, 255] {
            let a = random_block(256, &mut rng);
            let mut bits = a.bits().to_vec();
            bits[pos] = !bits[pos];
            let b = KeyBlock::from_bits(bits, LINK);
            let mut t = Transcript::new(1);
            let r = reconcile(&a, &b, 0.004, 0.11, &mut rng, &mut t.sink(LINK)).unwrap();
            assert_eq!(r.corrections, vec![(0, pos)]);
            assert_eq!(r.b.bits(), a.bits());
        }
    }

    #[test]
    fn refuses_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_block(64, &mut rng);
        let mut t = Transcript::new(1);
        let e = reconcile(&a, &a.clone(), 0.2, 0.11, &mut rng, &mut t.sink(LINK)).unwrap_err();
        assert!(matches!(e, ProtocolError::QberAboveThreshold { .. }));
        assert!(t.is_empty());
    }

    #[test]
    fn misaligned_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_block(8, &mut rng);
        let b = KeyBlock::new(a.bits().to_vec(), (10..18).collect(), LINK).unwrap();
        let mut t = Transcript::new(1);
        assert_eq!(
            reconcile(&a, &b, 0.01, 0.11, &mut rng, &mut t.sink(LINK)).unwrap_err(),
            ProtocolError::Misaligned
        );
    }

    #[test]
    fn moderate_noise_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_block(2048, &mut rng);
            let bits = a
                .bits()
                .iter()
                .map(|&x| x ^ rng.random_bool(0.03))
                .collect();
            let b = KeyBlock::from_bits(bits, LINK);
            let mut t = Transcript::new(1);
            let r = reconcile(&a, &b, 0.03, 0.11, &mut rng, &mut t.sink(LINK)).unwrap();
            assert_eq!(r.b.bits(), a.bits());
            assert_eq!(r.leaked_bits, t.parity_bit_count());
            assert_eq!(r.corrections.len(), a.mismatches(&b));
        }
    }

    #[test]
    fn empty_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e = KeyBlock::from_bits(vec![], LINK);
        let mut t = Transcript::new(1);
        let r = reconcile(&e, &e, 0.01, 0.11, &mut rng, &mut t.sink(LINK)).unwrap();
        assert_eq!(r.leaked_bits, FINAL_CHECK_BITS);
    }

    #[test]
    fn final_check_catches_leftover_errors() {
        // Two errors inside one block are invisible to its parity; with a
        // 2-bit key every pass is a single block.
        let a = KeyBlock::from_bits(vec![false, false], LINK);
        let b = KeyBlock::from_bits(vec![true, true], LINK);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = Transcript::new(1);
        // qber 0.4 → block size 2 = whole key in every pass
        let e = reconcile(&a, &b, 0.4, 0.5, &mut rng, &mut t.sink(LINK)).unwrap_err();
        assert_eq!(
            e,
            ProtocolError::ReconciliationFailed {
                leaked_bits: 4 + FINAL_CHECK_BITS
            }
        );
        assert_eq!(t.parity_bit_count(), 4 + FINAL_CHECK_BITS);
        assert_eq!(t.messages().last().unwrap().body.kind(), "FinalCheck");
    }
}
