//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, epoch)`, so arms and epochs
//! can be evaluated in any order and still see the same numbers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamId {
    Rcs,
    Measurement,
    Symbols,
    Traffic,
    Selection,
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Rcs => 1,
            StreamId::Measurement => 2,
            StreamId::Symbols => 3,
            StreamId::Traffic => 4,
            StreamId::Selection => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: StreamId,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: StreamId) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for one epoch of this stream.
    pub fn at(&self, epoch: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(epoch);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn reproducible_and_distinct() {
        let a = RngStream::new(7, StreamId::Rcs);
        let x: Vec<u64> = (0..4).map(|_| a.at(3).random()).collect();
        assert!(x.windows(2).all(|w| w[0] == w[1]));
        let first: u64 = a.at(3).random();
        assert_ne!(first, a.at(4).random::<u64>());
        assert_ne!(first, RngStream::new(7, StreamId::Measurement).at(3).random::<u64>());
        assert_ne!(first, RngStream::new(8, StreamId::Rcs).at(3).random::<u64>());
    }

    #[test]
    fn pinned_values() {
        // Guards the stream layout: changing it would silently change every run.
        let mut rng = RngStream::new(42, StreamId::Traffic).at(0);
        let v: u64 = rng.random();
        assert_eq!(v, 2_055_443_106_574_734_060);
    }
}
