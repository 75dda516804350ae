//! Named random streams derived from one master seed.
//!
//! A stream seed is `SHA-256(master_seed as little-endian u64 || stream name)`,
//! used verbatim as the 32-byte ChaCha20 key. Every consumer of randomness owns
//! its own stream, so enabling one feature never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

/// Stream names used by the simulator.
pub mod streams {
    pub const DATA: &str = "data";
    pub const ORDERING: &str = "ordering";
    pub const SPLIT: &str = "split";
    pub const PARTITION: &str = "partition";
    pub const INIT: &str = "init";
    pub const SELECTION: &str = "selection";
    pub const SHUFFLE: &str = "shuffle";
}

pub fn stream_seed(master_seed: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

pub fn stream(master_seed: u64, name: &str) -> StreamRng {
    ChaCha20Rng::from_seed(stream_seed(master_seed, name))
}

/// Serializable position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &StreamRng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> StreamRng {
        let mut rng = ChaCha20Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
