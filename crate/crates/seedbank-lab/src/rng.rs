//! Reproducible random streams and the replica runner.
//!
//! Every replica gets its own ChaCha8 stream keyed by `(master seed, stream tag)`
//! and selected by the replica index, so results never depend on how replicas
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Stream tags keep unrelated experiments that share a master seed independent.
pub mod tag {
    pub const FORWARD: u64 = 0x0f;
    pub const COUPLED: u64 = 0x1c;
    pub const DUAL: u64 = 0x2d;
    pub const TAU: u64 = 0x3a;
    pub const ACTIVITY: u64 = 0x4c;
    pub const COALESCENCE: u64 = 0x5e;
    pub const IBM_FW: u64 = 0x6f;
    pub const IBM_FW_LIMIT: u64 = 0x70;
    pub const IBM_MORAN: u64 = 0x81;
    pub const INITIAL: u64 = 0x92;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one replica. The key mixes the master seed and the tag, the ChaCha
/// stream id is the replica index.
pub fn stream(master_seed: u64, stream_tag: u64, replica: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ stream_tag.rotate_left(32);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(replica);
    rng
}

/// Replicas per work unit. Fixed so the reduction tree never depends on the
/// thread count.
pub const CHUNK: usize = 256;

/// Accumulators that can absorb another accumulator built from later replicas.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Run `replicas` independent replicas and collect their results in replica order.
pub fn replicate<T, F>(replicas: usize, master_seed: u64, stream_tag: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(master_seed, stream_tag, r as u64);
            f(r, &mut rng)
        })
        .collect()
}

/// Run replicas in fixed chunks, fold each chunk into a fresh accumulator,
/// then merge chunk accumulators in chunk order.
pub fn replicate_reduce<A, I, F>(
    replicas: usize,
    master_seed: u64,
    stream_tag: u64,
    init: I,
    fold: F,
) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize, &mut ChaCha8Rng) + Sync,
{
    let chunks = replicas.div_ceil(CHUNK);
    let partial: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicas) {
                let mut rng = stream(master_seed, stream_tag, r as u64);
                fold(&mut acc, r, &mut rng);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in partial {
        out.merge(p);
    }
    out
}
