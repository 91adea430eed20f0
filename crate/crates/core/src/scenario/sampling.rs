use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::IdioLaw;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Derive an independent seed for resample `index` (splitmix64 finalizer).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for agent `agent` under `seed`: one ChaCha stream per agent.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

/// Draw one atom index per agent by inverse CDF. Draw `i` depends only on
/// `(seed, i)`.
pub fn sample_idiosyncratic(law: &IdioLaw, agents: usize, seed: u64) -> Result<Vec<usize>> {
    if law.atoms.is_empty() {
        return Err(Error::Validation("idiosyncratic law has no atoms".into()));
    }
    let last = law.atoms.len() - 1;
    Ok((0..agents)
        .map(|i| {
            let u: f64 = agent_rng(seed, i).random();
            let mut acc = 0.0;
            for (k, a) in law.atoms.iter().enumerate() {
                acc += a.weight;
                if u < acc {
                    return k;
                }
            }
            last
        })
        .collect())
}
