use std::fmt;

use rand::Rng;

use crate::photonics::{p_dark_per_gate, simulate_gate, DetectorModel, GateOutcome, SourceModel};
use crate::router::ChannelId;

use super::{KeyBlock, LinkId, ProtocolError};

/// Conjugate encoding bases. Phase values are abstracted away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }

    pub fn as_bit(self) -> bool {
        self == Basis::Diagonal
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Rectilinear => "Z",
            Basis::Diagonal => "X",
        })
    }
}

/// One emitted weak pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseRecord {
    pub frame: u64,
    pub basis: Basis,
    pub bit: bool,
    pub channel: ChannelId,
    pub mean_photon_number: f64,
}

/// One receiver gate. `bit` is meaningless unless `clicked`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionRecord {
    pub frame: u64,
    pub basis: Basis,
    pub clicked: bool,
    pub bit: bool,
}

impl DetectionRecord {
    pub fn no_click(frame: u64, basis: Basis) -> Self {
        DetectionRecord {
            frame,
            basis,
            clicked: false,
            bit: false,
        }
    }
}

/// Frames `0..n_frames` with uniform random bits and bases.
pub fn generate_train<R: Rng + ?Sized>(
    n_frames: u64,
    channel: ChannelId,
    src: &SourceModel,
    rng: &mut R,
) -> Result<Vec<PulseRecord>, ProtocolError> {
    if n_frames == 0 {
        return Err(ProtocolError::InvalidArgument(
            "train needs at least one frame".into(),
        ));
    }
    Ok((0..n_frames)
        .map(|frame| {
            let bit = rng.random::<bool>();
            let basis = Basis::random(rng);
            PulseRecord {
                frame,
                basis,
                bit,
                channel,
                mean_photon_number: src.mean_photon_number(),
            }
        })
        .collect())
}

/// Receiver picks a random basis and opens one gate for `pulse`.
pub fn measure_pulse<R: Rng + ?Sized>(
    pulse: &PulseRecord,
    p_sig: f64,
    p_dark: f64,
    e_opt: f64,
    rng: &mut R,
) -> DetectionRecord {
    let basis = Basis::random(rng);
    match simulate_gate(pulse.bit, basis == pulse.basis, p_sig, p_dark, e_opt, rng) {
        GateOutcome::NoClick => DetectionRecord::no_click(pulse.frame, basis),
        GateOutcome::Click { bit } => DetectionRecord {
            frame: pulse.frame,
            basis,
            clicked: true,
            bit,
        },
    }
}

pub fn measure_train<R: Rng + ?Sized>(
    train: &[PulseRecord],
    det: &DetectorModel,
    p_sig: f64,
    e_opt: f64,
    rng: &mut R,
) -> Vec<DetectionRecord> {
    let p_dark = p_dark_per_gate(det);
    train
        .iter()
        .map(|p| measure_pulse(p, p_sig, p_dark, e_opt, rng))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sifted {
    pub sender: KeyBlock,
    pub receiver: KeyBlock,
    /// No frame survived sifting.
    pub empty: bool,
}

/// Keeps the frames that clicked in the sender's basis.
pub fn sift(
    sent: &[PulseRecord],
    received: &[DetectionRecord],
    link: LinkId,
) -> Result<Sifted, ProtocolError> {
    if sent.len() != received.len() {
        return Err(ProtocolError::LengthMismatch {
            expected: sent.len(),
            found: received.len(),
        });
    }
    let mut frames = Vec::new();
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for (p, d) in sent.iter().zip(received) {
        if p.frame != d.frame {
            return Err(ProtocolError::Misaligned);
        }
        if d.clicked && d.basis == p.basis {
            frames.push(p.frame);
            tx.push(p.bit);
            rx.push(d.bit);
        }
    }
    let sender = KeyBlock::new(tx, frames.clone(), link)?;
    let receiver = KeyBlock::new(rx, frames, link)?;
    let empty = sender.is_empty();
    Ok(Sifted {
        sender,
        receiver,
        empty,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QberEstimate {
    pub estimate: f64,
    /// Positions (in the input blocks) that were disclosed, ascending.
    pub disclosed: Vec<usize>,
    pub remaining_a: KeyBlock,
    pub remaining_b: KeyBlock,
}

/// Discloses a uniformly chosen `ceil(sample_fraction · len)` positions,
/// measures their mismatch rate and drops them from both blocks.
pub fn estimate_qber<R: Rng + ?Sized>(
    a: &KeyBlock,
    b: &KeyBlock,
    sample_fraction: f64,
    rng: &mut R,
) -> Result<QberEstimate, ProtocolError> {
    if !a.aligned_with(b) {
        return Err(ProtocolError::Misaligned);
    }
    if sample_fraction.is_nan() || sample_fraction <= 0.0 {
        return Err(ProtocolError::InvalidArgument(format!(
            "sample fraction must be > 0, got {sample_fraction}"
        )));
    }
    let available = a.len();
    let requested = ((sample_fraction * available as f64).ceil() as usize).max(1);
    if sample_fraction > 1.0 || requested > available {
        return Err(ProtocolError::SampleTooLarge {
            requested,
            available,
        });
    }
    let mut disclosed = rand::seq::index::sample(rng, available, requested).into_vec();
    disclosed.sort_unstable();
    let errors = disclosed
        .iter()
        .filter(|&&i| a.bits()[i] != b.bits()[i])
        .count();
    Ok(QberEstimate {
        estimate: errors as f64 / requested as f64,
        remaining_a: a.without(&disclosed),
        remaining_b: b.without(&disclosed),
        disclosed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{expected_qber, p_any_click};
    use crate::router::PortId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LINK: LinkId = LinkId {
        server: PortId(3),
        client: PortId(0),
    };

    fn det(dark: f64) -> DetectorModel {
        DetectorModel::reference(dark).unwrap()
    }

    #[test]
    fn train_is_reproducible() {
        let src = SourceModel::default();
        let t1 = generate_train(4, ChannelId(1), &src, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let t2 = generate_train(4, ChannelId(1), &src, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(
            t1.iter().map(|p| p.frame).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert!(generate_train(0, ChannelId(0), &src, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn train_is_balanced() {
        let src = SourceModel::default();
        for seed in 0..5 {
            let t = generate_train(
                100_000,
                ChannelId(0),
                &src,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            let bits = t.iter().filter(|p| p.bit).count() as f64 / 1e5;
            let bases = t.iter().filter(|p| p.basis.as_bit()).count() as f64 / 1e5;
            assert!((0.49..=0.51).contains(&bits), "{bits}");
            assert!((0.49..=0.51).contains(&bases), "{bases}");
        }
    }

    #[test]
    fn noiseless_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = generate_train(2000, ChannelId(0), &SourceModel::default(), &mut rng).unwrap();
        let d = measure_train(&t, &det(0.0), 1.0, 0.0, &mut rng);
        assert_eq!(d.len(), t.len());
        for (p, r) in t.iter().zip(&d) {
            assert!(r.clicked);
            if r.basis == p.basis {
                assert_eq!(r.bit, p.bit);
            }
        }
        let silent = measure_train(&t, &det(0.0), 0.0, 0.0, &mut rng);
        assert!(silent.iter().all(|r| !r.clicked));
    }

    #[test]
    fn click_count_is_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 1_000_000u64;
        let t = generate_train(n, ChannelId(0), &SourceModel::default(), &mut rng).unwrap();
        let detector = det(41.7);
        let p_sig = 6.3e-3;
        let d = measure_train(&t, &detector, p_sig, 0.01, &mut rng);
        let clicks = d.iter().filter(|r| r.clicked).count() as f64;
        let p = p_any_click(p_sig, p_dark_per_gate(&detector));
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((clicks - n as f64 * p).abs() <= 4.0 * sigma);
    }

    #[test]
    fn sifting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let t = generate_train(n, ChannelId(0), &SourceModel::default(), &mut rng).unwrap();
        let d = measure_train(&t, &det(0.0), 1.0, 0.0, &mut rng);
        let s = sift(&t, &d, LINK).unwrap();
        assert_eq!(s.sender, s.receiver);
        assert_eq!(s.sender.frames(), s.receiver.frames());
        let half = n as f64 / 2.0;
        assert!((s.sender.len() as f64 - half).abs() < 4.0 * (n as f64 / 4.0).sqrt());

        let silent = measure_train(&t, &det(0.0), 0.0, 0.0, &mut rng);
        let s = sift(&t, &silent, LINK).unwrap();
        assert!(s.empty && s.sender.is_empty() && s.receiver.is_empty());

        assert_eq!(
            sift(&t, &d[1..], LINK).unwrap_err(),
            ProtocolError::LengthMismatch {
                expected: t.len(),
                found: t.len() - 1
            }
        );
    }

    #[test]
    fn noisy_sift_matches_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p_sig, e_opt) = (0.02, 0.03);
        let detector = det(41.7);
        let t = generate_train(400_000, ChannelId(0), &SourceModel::default(), &mut rng).unwrap();
        let d = measure_train(&t, &detector, p_sig, e_opt, &mut rng);
        let s = sift(&t, &d, LINK).unwrap();
        let q = expected_qber(p_sig, p_dark_per_gate(&detector), e_opt).unwrap();
        let m = s.sender.mismatches(&s.receiver) as f64 / s.sender.len() as f64;
        let sigma = (q * (1.0 - q) / s.sender.len() as f64).sqrt();
        assert!((m - q).abs() <= 4.0 * sigma, "{m} vs {q}");
    }

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn qber_estimation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = KeyBlock::from_bits(bits(&[1, 0, 1, 1, 0, 0, 1, 0]), LINK);
        let e = estimate_qber(&a, &a, 0.5, &mut rng).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.disclosed.len(), 4);
        assert_eq!(e.remaining_a.len(), 4);

        let comp = KeyBlock::from_bits(a.bits().iter().map(|b| !b).collect(), LINK);
        assert_eq!(
            estimate_qber(&a, &comp, 0.25, &mut rng).unwrap().estimate,
            1.0
        );

        let x: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let mut y = x.clone();
        for p in [3, 17, 40, 41, 99] {
            y[p] = !y[p];
        }
        let (x, y) = (KeyBlock::from_bits(x, LINK), KeyBlock::from_bits(y, LINK));
        let full = estimate_qber(&x, &y, 1.0, &mut rng).unwrap();
        assert_eq!(full.estimate, 0.05);
        assert!(full.remaining_a.is_empty());

        assert!(matches!(
            estimate_qber(&x, &y, 1.5, &mut rng),
            Err(ProtocolError::SampleTooLarge { .. })
        ));
        let shifted = KeyBlock::new(x.bits().to_vec(), (1..=100).collect(), LINK).unwrap();
        assert_eq!(
            estimate_qber(&x, &shifted, 0.1, &mut rng).unwrap_err(),
            ProtocolError::Misaligned
        );
        let empty = KeyBlock::from_bits(vec![], LINK);
        assert!(matches!(
            estimate_qber(&empty, &empty, 0.1, &mut rng),
            Err(ProtocolError::SampleTooLarge {
                requested: 1,
                available: 0
            })
        ));
    }

    #[test]
    fn estimate_keeps_remaining_aligned() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = KeyBlock::new(bits(&[1, 1, 0, 0, 1, 0]), vec![3, 8, 9, 20, 21, 40], LINK).unwrap();
        let e = estimate_qber(&a, &a.clone(), 0.3, &mut rng).unwrap();
        assert_eq!(e.remaining_a.frames(), e.remaining_b.frames());
        for &i in &e.disclosed {
            assert!(!e.remaining_a.frames().contains(&a.frames()[i]));
        }
    }
}
