//! Named random substreams derived from the scenario seed.
//!
//! Every (node, purpose) pair gets its own ChaCha stream, so adding a node
//! or a draw in one place leaves all other sequences untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Backoff = 1,
    Error = 2,
    Traffic = 3,
    Phase = 4,
    Placement = 5,
}

/// Stream for `(owner, purpose, sub)`. `sub` distinguishes several
/// instances of one purpose on the same owner (e.g. backbone interfaces).
pub fn substream(seed: u64, owner: u32, purpose: Purpose, sub: u16) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(owner) << 32) | (u64::from(purpose as u8) << 16) | u64::from(sub));
    rng
}
