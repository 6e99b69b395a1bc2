//! Reproducible random streams.
//!
//! A 64-bit master seed expands into independent named streams. The 32-byte
//! ChaCha8 key of a stream is
//!
//! ```text
//! SHA-256("deanon-rng-v1" || master_le || len(label)_le || label || path[0]_le || ...)
//! ```
//!
//! where every integer is a little-endian `u64`. Streams keyed by different
//! labels or paths share no state, so work split across threads draws the
//! same numbers no matter how it is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Well-known stream labels used by the generators.
pub mod labels {
    pub const DATABASE: &str = "database";
    pub const PATTERN: &str = "pattern";
    pub const PERMUTATION: &str = "permutation";
    pub const NOISE: &str = "noise";
    pub const SEED_DATABASE: &str = "seeds";
    pub const SEED_NOISE: &str = "seed-noise";
    pub const TRIAL: &str = "trial";
}

/// Root of a family of named random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    fn digest(&self, label: &str, path: &[u64]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"deanon-rng-v1");
        h.update(self.master.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        for p in path {
            h.update(p.to_le_bytes());
        }
        h.finalize().into()
    }

    /// The stream identified by `label` and an index path.
    pub fn stream(&self, label: &str, path: &[u64]) -> StreamRng {
        ChaCha8Rng::from_seed(self.digest(label, path))
    }

    /// An independent subtree, e.g. one per Monte Carlo trial.
    pub fn child(&self, label: &str, path: &[u64]) -> SeedTree {
        let d = self.digest(label, path);
        let mut word = [0u8; 8];
        word.copy_from_slice(&d[..8]);
        SeedTree::new(u64::from_le_bytes(word))
    }
}
