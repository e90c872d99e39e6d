//! Click-level channel model: attenuated laser source, lossy path, gated
//! single-photon detector.
//!
//! Nothing here tracks quantum states. A gate either clicks or not; a click is
//! attributed to the signal or to a dark count, and the bit it yields is
//! correct, flipped by optical error, or uniformly random.

use rand::Rng;
use thiserror::Error;

pub const DEFAULT_MEAN_PHOTON_NUMBER: f64 = 0.1;
pub const DEFAULT_OPTICAL_ERROR: f64 = 0.01;
pub const DEFAULT_FIBER_ALPHA_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_REP_RATE_HZ: f64 = 1.0e6;
pub const DEFAULT_GATE_WIDTH_NS: f64 = 2.5;
pub const DEFAULT_DETECTOR_EFFICIENCY: f64 = 0.10;

/// Dark-count rates of the three client detectors of the 4-user demonstration, Hz.
pub const REFERENCE_DARK_RATES_HZ: [f64; 3] = [41.7, 18.00, 15.40];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonicsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("click probability is zero: QBER undefined")]
    UndefinedRate,
}

fn invalid(msg: String) -> PhotonicsError {
    PhotonicsError::InvalidArgument(msg)
}

/// Weak-pulse laser source.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    mean_photon_number: f64,
    rep_rate_hz: f64,
    optical_error: f64,
}

impl SourceModel {
    pub fn new(
        mean_photon_number: f64,
        rep_rate_hz: f64,
        optical_error: f64,
    ) -> Result<Self, PhotonicsError> {
        if !(mean_photon_number.is_finite() && mean_photon_number > 0.0) {
            return Err(invalid(format!(
                "mean photon number must be > 0, got {mean_photon_number}"
            )));
        }
        if !(rep_rate_hz.is_finite() && rep_rate_hz > 0.0) {
            return Err(invalid(format!(
                "repetition rate must be > 0, got {rep_rate_hz}"
            )));
        }
        if !(0.0..0.5).contains(&optical_error) {
            return Err(invalid(format!(
                "optical error must be in [0, 0.5), got {optical_error}"
            )));
        }
        Ok(SourceModel {
            mean_photon_number,
            rep_rate_hz,
            optical_error,
        })
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.mean_photon_number
    }

    pub fn rep_rate_hz(&self) -> f64 {
        self.rep_rate_hz
    }

    pub fn optical_error(&self) -> f64 {
        self.optical_error
    }

    /// True when μ exceeds the single-photon policy limit of 1. Allowed, but
    /// callers should warn: multi-photon pulses are not modeled.
    pub fn above_single_photon_level(&self) -> bool {
        self.mean_photon_number > 1.0
    }
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            mean_photon_number: DEFAULT_MEAN_PHOTON_NUMBER,
            rep_rate_hz: DEFAULT_REP_RATE_HZ,
            optical_error: DEFAULT_OPTICAL_ERROR,
        }
    }
}

/// Gated single-photon detector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    efficiency: f64,
    dark_rate_hz: f64,
    gate_width_ns: f64,
    rep_rate_hz: f64,
}

impl DetectorModel {
    pub fn new(
        efficiency: f64,
        dark_rate_hz: f64,
        gate_width_ns: f64,
        rep_rate_hz: f64,
    ) -> Result<Self, PhotonicsError> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(invalid(format!(
                "efficiency must be in (0, 1], got {efficiency}"
            )));
        }
        if !(gate_width_ns.is_finite() && gate_width_ns > 0.0) {
            return Err(invalid(format!(
                "gate width must be > 0 ns, got {gate_width_ns}"
            )));
        }
        if !(rep_rate_hz.is_finite() && rep_rate_hz > 0.0) {
            return Err(invalid(format!(
                "repetition rate must be > 0, got {rep_rate_hz}"
            )));
        }
        if !(dark_rate_hz >= 0.0 && dark_rate_hz < rep_rate_hz) {
            return Err(invalid(format!(
                "dark rate {dark_rate_hz} Hz must be in [0, {rep_rate_hz}) Hz"
            )));
        }
        Ok(DetectorModel {
            efficiency,
            dark_rate_hz,
            gate_width_ns,
            rep_rate_hz,
        })
    }

    /// Demonstration detector: 10 % efficiency, 2.5 ns gate, 1 MHz.
    pub fn reference(dark_rate_hz: f64) -> Result<Self, PhotonicsError> {
        Self::new(
            DEFAULT_DETECTOR_EFFICIENCY,
            dark_rate_hz,
            DEFAULT_GATE_WIDTH_NS,
            DEFAULT_REP_RATE_HZ,
        )
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn dark_rate_hz(&self) -> f64 {
        self.dark_rate_hz
    }

    pub fn gate_width_ns(&self) -> f64 {
        self.gate_width_ns
    }

    pub fn rep_rate_hz(&self) -> f64 {
        self.rep_rate_hz
    }
}

/// Ordered list of attenuating elements along one path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkBudget {
    components: Vec<(String, f64)>,
}

impl LinkBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: impl Into<String>, db: f64) -> Result<Self, PhotonicsError> {
        self.push(label, db)?;
        Ok(self)
    }

    pub fn push(&mut self, label: impl Into<String>, db: f64) -> Result<(), PhotonicsError> {
        if !(db.is_finite() && db >= 0.0) {
            return Err(invalid(format!("attenuation must be >= 0 dB, got {db}")));
        }
        self.components.push((label.into(), db));
        Ok(())
    }

    /// Concatenation of two paths.
    pub fn then(mut self, other: &LinkBudget) -> Self {
        self.components.extend(other.components.iter().cloned());
        self
    }

    pub fn components(&self) -> &[(String, f64)] {
        &self.components
    }

    pub fn total_db(&self) -> f64 {
        self.components.iter().map(|(_, db)| db).sum()
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.total_db() / 10.0)
    }
}

/// Power fraction surviving `loss_db`.
pub fn transmittance(loss_db: f64) -> Result<f64, PhotonicsError> {
    if loss_db.is_nan() || loss_db < 0.0 {
        return Err(invalid(format!("loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Probability that a Poisson pulse of mean `μ` yields a detector click
/// through a path of transmittance `t` and detector efficiency `η`.
pub fn p_click_poisson(mu: f64, efficiency: f64, t: f64) -> f64 {
    -(-mu * efficiency * t).exp_m1()
}

/// Per-gate signal click probability 1 − exp(−μ·η·T).
pub fn p_signal_click(src: &SourceModel, budget: &LinkBudget, det: &DetectorModel) -> f64 {
    p_click_poisson(
        src.mean_photon_number,
        det.efficiency,
        budget.transmittance(),
    )
}

/// Per-gate dark-click probability.
pub fn p_dark_per_gate(det: &DetectorModel) -> f64 {
    det.dark_rate_hz / det.rep_rate_hz
}

/// Expected error fraction among clicks: signal clicks err with `e_opt`,
/// dark clicks with ½.
pub fn expected_qber(p_sig: f64, p_dark: f64, e_opt: f64) -> Result<f64, PhotonicsError> {
    for (name, p) in [("p_sig", p_sig), ("p_dark", p_dark)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("{name} must be a probability, got {p}")));
        }
    }
    if !(0.0..=0.5).contains(&e_opt) {
        return Err(invalid(format!("e_opt must be in [0, 0.5], got {e_opt}")));
    }
    let total = p_sig + p_dark;
    if total <= 0.0 {
        return Err(PhotonicsError::UndefinedRate);
    }
    Ok((e_opt * p_sig + 0.5 * p_dark) / total)
}

/// Probability of at least one click when signal and dark counts are independent.
pub fn p_any_click(p_sig: f64, p_dark: f64) -> f64 {
    p_sig + p_dark - p_sig * p_dark
}

/// Equivalent fiber length of an extra attenuation.
pub fn attenuation_to_length(
    extra_db: f64,
    fiber_alpha_db_per_km: f64,
) -> Result<f64, PhotonicsError> {
    if fiber_alpha_db_per_km.is_nan() || fiber_alpha_db_per_km <= 0.0 {
        return Err(invalid(format!(
            "fiber attenuation must be > 0 dB/km, got {fiber_alpha_db_per_km}"
        )));
    }
    Ok(extra_db / fiber_alpha_db_per_km)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateOutcome {
    NoClick,
    Click { bit: bool },
}

impl GateOutcome {
    pub fn clicked(self) -> bool {
        matches!(self, GateOutcome::Click { .. })
    }
}

/// One detector gate.
///
/// Clicks with probability `p_sig + p_dark − p_sig·p_dark`. A click is
/// attributed to the signal with probability `p_sig / (p_sig + p_dark)`, so
/// the error rate among clicks equals [`expected_qber`] exactly. A signal click
/// in the matching basis returns `bit_sent`, flipped with probability `e_opt`;
/// anything else returns a uniform bit.
pub fn simulate_gate<R: Rng + ?Sized>(
    bit_sent: bool,
    basis_match: bool,
    p_sig: f64,
    p_dark: f64,
    e_opt: f64,
    rng: &mut R,
) -> GateOutcome {
    let p_click = p_any_click(p_sig, p_dark);
    if rng.random::<f64>() >= p_click {
        return GateOutcome::NoClick;
    }
    let from_signal = rng.random::<f64>() < p_sig / (p_sig + p_dark);
    let bit = if from_signal && basis_match {
        bit_sent ^ (rng.random::<f64>() < e_opt)
    } else {
        rng.random::<bool>()
    };
    GateOutcome::Click { bit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn db_conversion() {
        assert_eq!(transmittance(0.0).unwrap(), 1.0);
        assert!(close(transmittance(10.0).unwrap(), 0.1, 1e-15));
        assert!(close(transmittance(1.70).unwrap(), 0.6761, 1e-4));
        assert!(transmittance(-1.0).is_err());
    }

    #[test]
    fn signal_click_probability() {
        let src = SourceModel::new(0.1, 1e6, 0.01).unwrap();
        let det = DetectorModel::new(0.1, 0.0, 2.5, 1e6).unwrap();
        let p0 = p_signal_click(&src, &LinkBudget::new(), &det);
        assert!(close(p0, 1.0 - (-0.01f64).exp(), 1e-15));
        assert!(close(p0, 0.00995, 1e-5));
        let p10 = p_signal_click(&src, &LinkBudget::new().with("eATT", 10.0).unwrap(), &det);
        assert!(close(p10, 0.0009995, 1e-7));
        let far = p_signal_click(&src, &LinkBudget::new().with("eATT", 400.0).unwrap(), &det);
        assert!(far < 1e-40);
    }

    #[test]
    fn dark_probability() {
        let d = |rate| DetectorModel::reference(rate).unwrap();
        assert!(close(p_dark_per_gate(&d(41.7)), 4.17e-5, 1e-18));
        assert!(close(p_dark_per_gate(&d(15.40)), 1.54e-5, 1e-18));
        assert_eq!(p_dark_per_gate(&d(0.0)), 0.0);
        assert!(DetectorModel::new(0.1, 1e6, 2.5, 1e6).is_err());
        assert!(DetectorModel::new(0.1, 2e6, 2.5, 1e6).is_err());
        assert!(DetectorModel::new(1.5, 10.0, 2.5, 1e6).is_err());
        assert!(DetectorModel::new(0.0, 10.0, 2.5, 1e6).is_err());
    }

    #[test]
    fn qber_formula() {
        assert_eq!(expected_qber(0.0, 4.17e-5, 0.01).unwrap(), 0.5);
        assert!(close(expected_qber(0.3, 0.0, 0.01).unwrap(), 0.01, 1e-15));
        let q = expected_qber(9.95e-4, 4.17e-5, 0.01).unwrap();
        assert!(close(q, 0.02971, 1e-5), "{q}");
        assert_eq!(
            expected_qber(0.0, 0.0, 0.01),
            Err(PhotonicsError::UndefinedRate)
        );
    }

    #[test]
    fn length_mapping() {
        assert_eq!(attenuation_to_length(0.0, 0.2).unwrap(), 0.0);
        assert!(close(
            attenuation_to_length(10.0, 0.2).unwrap(),
            50.0,
            1e-12
        ));
        assert!(close(attenuation_to_length(4.0, 0.2).unwrap(), 20.0, 1e-12));
        assert!(attenuation_to_length(1.0, 0.0).is_err());
        assert!(attenuation_to_length(1.0, -0.2).is_err());
    }

    #[test]
    fn source_validation() {
        assert!(SourceModel::new(0.0, 1e6, 0.01).is_err());
        assert!(SourceModel::new(0.1, 1e6, 0.5).is_err());
        assert!(SourceModel::new(2.0, 1e6, 0.01)
            .unwrap()
            .above_single_photon_level());
        assert!(!SourceModel::default().above_single_photon_level());
    }

    #[test]
    fn budget_sums() {
        let b = LinkBudget::new()
            .with("router", 1.96)
            .unwrap()
            .with("eATT", 5.0)
            .unwrap();
        assert_eq!(b.total_db(), 1.96 + 5.0);
        assert!(LinkBudget::new().with("x", -0.1).is_err());
    }

    #[test]
    fn deterministic_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(
                simulate_gate(true, true, 1.0, 0.0, 0.0, &mut rng),
                GateOutcome::Click { bit: true }
            );
            assert_eq!(
                simulate_gate(true, true, 0.0, 0.0, 0.0, &mut rng),
                GateOutcome::NoClick
            );
        }
    }

    #[test]
    fn gate_streams_reproducible() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500)
                .map(|i| simulate_gate(i % 3 == 0, i % 2 == 0, 0.2, 0.05, 0.01, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn gate_monte_carlo_matches_closed_form() {
        let (p_sig, p_dark, e_opt) = (9.95e-4, 4.17e-5, 0.01);
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let (mut clicks, mut errors) = (0u64, 0u64);
        for i in 0..n {
            let bit = i % 2 == 0;
            if let GateOutcome::Click { bit: b } =
                simulate_gate(bit, true, p_sig, p_dark, e_opt, &mut rng)
            {
                clicks += 1;
                errors += (b != bit) as u64;
            }
        }
        let pc = p_any_click(p_sig, p_dark);
        let sigma_c = (n as f64 * pc * (1.0 - pc)).sqrt();
        assert!((clicks as f64 - n as f64 * pc).abs() <= 4.0 * sigma_c);
        let q = expected_qber(p_sig, p_dark, e_opt).unwrap();
        let sigma_q = (q * (1.0 - q) / clicks as f64).sqrt();
        let measured = errors as f64 / clicks as f64;
        assert!((measured - q).abs() <= 3.0 * sigma_q, "{measured} vs {q}");
    }
}
