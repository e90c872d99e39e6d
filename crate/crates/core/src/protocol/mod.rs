//! Server-client BB84 with key reverse.
//!
//! The server holds one laser per wavelength; every client holds a detector.
//! Each server→client link runs plain BB84 (prepare, measure, sift, sample,
//! reconcile). The server then takes the lowest-port client's key as the
//! reference and tells every other client which of its bits differ; flipping
//! them leaves all clients with the same key.

mod bb84;
mod block;
mod cascade;
mod message;
mod session;

pub use bb84::{
    estimate_qber, generate_train, measure_pulse, measure_train, sift, Basis, DetectionRecord,
    PulseRecord, QberEstimate, Sifted,
};
pub use block::{apply_flip_mask, compute_flip_mask, FlipMask, KeyBlock, LinkId};
pub use cascade::{
    first_pass_block_size, reconcile, reconcile_with_block_size, subset_parities, Reconciled,
    CASCADE_PASSES, FINAL_CHECK_BITS, QBER_FLOOR,
};
pub use message::{ClassicalMessage, Direction, MessageBody, MessageSink, Transcript};
pub use session::{
    run_session, DirectNetwork, LinkReport, SessionConfig, SessionError, SessionMode,
    SessionNetwork, SessionResult, DEFAULT_QBER_ABORT_THRESHOLD, DEFAULT_SAMPLE_FRACTION,
    MAX_RECONCILE_ATTEMPTS,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("blocks are not aligned on the same frames")]
    Misaligned,
    #[error("frame indices must be strictly increasing")]
    NonIncreasingFrames,
    #[error("sample of {requested} bits exceeds block of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("QBER estimate {estimate:.4} at or above abort threshold {threshold:.4}: possible eavesdropping")]
    QberAboveThreshold { estimate: f64, threshold: f64 },
    #[error("reconciliation final check failed after disclosing {leaked_bits} parity bits")]
    ReconciliationFailed { leaked_bits: usize },
}
