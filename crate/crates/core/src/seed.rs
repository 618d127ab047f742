//! Per-stage random streams derived from one master seed.
//!
//! Each stage hashes `(master_seed, stage_name)` into its own ChaCha seed, so
//! how many draws one stage consumes never shifts another stage's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stage_rng(master: u64, stage: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stage))
}
