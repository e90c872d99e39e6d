//! Simulator and protocol library for a wavelength-addressed QKD network.
//!
//! * [`router`] builds N-port router designs (which wavelength links which
//!   pair of ports) and holds their loss figures.
//! * [`photonics`] is the click-level channel model.
//! * [`protocol`] runs BB84 sifting, error estimation, Cascade reconciliation
//!   and the key-reverse step that turns per-link keys into one shared key.
//! * [`netsim`] drives sessions through a deterministic discrete-event network.
//! * [`config`] and [`cli`] are the operator entry point.

pub mod cli;
pub mod config;
pub mod netsim;
pub mod photonics;
pub mod protocol;
pub mod router;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed derived from a master seed; distinct `index` values give
/// unrelated seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, 0x5eed_0000_0000 + index).next_u64()
}
