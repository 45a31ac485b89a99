//! Seed derivation.
//!
//! Every random stream gets its own seed, the first 8 bytes (little endian) of
//!
//! ```text
//! SHA-256("ofdm-rff/seed/v1" || master || trial || len(device) || device
//!         || frame || p || ebn0_bits || stream || attempt)
//! ```
//!
//! with integers as little-endian `u64`, `ebn0_bits` the IEEE-754 bit pattern
//! of Eb/N0 in dB and `stream` a one-byte tag. A seed therefore depends only on
//! the identity of the sample, never on loop order or on which other grid cells
//! are being run.

use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"ofdm-rff/seed/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    Channel = 1,
    Payload = 2,
    Noise = 3,
    Split = 4,
}

/// Identity of one random draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedPath<'a> {
    pub trial: u64,
    pub device: &'a str,
    pub frame: u64,
    pub p: u64,
    pub ebn0_db: f64,
    pub attempt: u64,
}

impl<'a> SeedPath<'a> {
    pub fn derive(&self, master: u64, stream: Stream) -> u64 {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(master.to_le_bytes());
        h.update(self.trial.to_le_bytes());
        h.update((self.device.len() as u64).to_le_bytes());
        h.update(self.device.as_bytes());
        h.update(self.frame.to_le_bytes());
        h.update(self.p.to_le_bytes());
        // +0.0 and -0.0 name the same setting
        h.update((self.ebn0_db + 0.0).to_bits().to_le_bytes());
        h.update([stream as u8]);
        h.update(self.attempt.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}
