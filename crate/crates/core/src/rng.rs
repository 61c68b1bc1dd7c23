//! Named random substreams derived from a master seed.
//!
//! Each substream seed is `SHA-256("fairstream/v1/" || label || seed_le_bytes)`
//! used as a ChaCha8 key. Rounds of the input stream additionally select the
//! ChaCha stream id `t`, so round `t` can be regenerated without replaying
//! rounds `1..t`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub const STREAM: &str = "stream";
pub const FTPL: &str = "ftpl";
pub const RESAMPLE: &str = "resample";
pub const DEPLOY: &str = "deploy";

pub fn substream_key(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"fairstream/v1/");
    hasher.update(label.as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

pub fn substream(seed: u64, label: &str) -> Rng {
    ChaCha8Rng::from_seed(substream_key(seed, label))
}

/// Per-round generator for the adversary's stream.
pub fn round_stream(seed: u64, t: usize) -> Rng {
    let mut rng = substream(seed, STREAM);
    rng.set_stream(t as u64);
    rng
}
