use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `stream` under a master `seed`. Streams never
/// overlap, so per-draw or per-replicate work can run in any order.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
