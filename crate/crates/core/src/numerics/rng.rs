use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded, platform-independent random stream used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`. Different stream ids
/// never overlap, so components can draw without perturbing each other.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
