//! Seed derivation.
//!
//! Every consumer of randomness (environment resets, exploration, minibatch
//! sampling, reparameterization noise, weight init) draws from its own stream,
//! derived from the experiment seed plus a textual label. Two runs that use the
//! same labels therefore consume randomness identically, regardless of what
//! other streams are doing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A labelled family of random streams rooted at one seed.
#[derive(Debug, Clone)]
pub struct SeedTree {
    root: u64,
    path: String,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self {
            root: seed,
            path: String::new(),
        }
    }

    /// Child tree whose streams are namespaced under `label`.
    pub fn child(&self, label: &str) -> Self {
        let path = if self.path.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.path, label)
        };
        Self {
            root: self.root,
            path,
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        let full = format!("{}#{}", self.path, label);
        splitmix64(self.root ^ splitmix64(fnv1a(full.as_bytes())))
    }

    pub fn stream(&self, label: &str) -> Rng {
        Rng::seed_from_u64(self.seed_for(label))
    }
}
