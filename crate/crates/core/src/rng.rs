//! Named, independent random streams derived from one master seed.
//!
//! Every consumer of randomness (profile generation, each user's trace,
//! each client's batch sampler and dropout masks, the client sampler) gets
//! its own ChaCha stream, so enabling one feature never shifts the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ProfileGen,
    Init,
    Sampler,
    Trace(u32),
    ClientData(u32),
    ClientDropout(u32),
    Online(u32),
    Mixture,
    Central,
}

impl Stream {
    fn id(self) -> u64 {
        let (tag, idx): (u64, u64) = match self {
            Stream::ProfileGen => (1, 0),
            Stream::Init => (2, 0),
            Stream::Sampler => (3, 0),
            Stream::Trace(i) => (4, i as u64),
            Stream::ClientData(i) => (5, i as u64),
            Stream::ClientDropout(i) => (6, i as u64),
            Stream::Online(i) => (7, i as u64),
            Stream::Mixture => (8, 0),
            Stream::Central => (9, 0),
        };
        (tag << 32) | idx
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
