//! Master-seed splitting.
//!
//! Every random consumer draws from its own stream:
//! `derive_seed(master, stream, index) = splitmix64(splitmix64(master ^ stream_tag) ^ index)`.
//! Streams are independent, so e.g. changing the number of k-means restarts
//! never perturbs the batch sampler.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Batches = 3,
    KMeans = 4,
    Demo = 5,
    Run = 6,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let tag = (stream as u64).wrapping_mul(GOLDEN);
    splitmix64(splitmix64(master ^ tag) ^ index)
}
