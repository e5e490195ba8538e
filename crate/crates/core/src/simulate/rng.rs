use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator behind every simulation stream.
pub type StreamRng = ChaCha8Rng;

/// Independent uses of one master seed. Each domain gets its own family of
/// streams so that, e.g., pilot paths never share randomness with the
/// estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Classical and conditional estimation; classical path i uses the same
    /// stream as conditional family i's trunk.
    Estimate = 1,
    Pilot = 2,
    Reference = 3,
    Auxiliary = 4,
}

/// Master seed from which all streams are derived by hashing
/// `(master, domain, path index, branch index)`. Stream contents depend only
/// on that tuple, never on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Stream for `(domain, path, branch)`. Branch 0 is the trunk; branches of
    /// a family are numbered from 1.
    pub fn stream(&self, domain: Domain, path: u64, branch: u64) -> StreamRng {
        let mut h = splitmix64(self.master_seed ^ 0x243f_6a88_85a3_08d3);
        h = splitmix64(h ^ domain as u64);
        h = splitmix64(h ^ path);
        h = splitmix64(h ^ branch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut key = [0u8; 32];
        let mut s = h;
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// A child seed, e.g. for the r-th replicate of an experiment.
    pub fn child(&self, tag: u64) -> SeedSpec {
        SeedSpec::new(splitmix64(splitmix64(self.master_seed) ^ tag.wrapping_add(0x5851_f42d)))
    }
}

/// The streams of one branch family: a trunk over `[0, t-h]` and `m`
/// branches over `[t-h, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyStream {
    pub seed: SeedSpec,
    pub domain: Domain,
    pub index: u64,
}

impl FamilyStream {
    pub fn new(seed: SeedSpec, domain: Domain, index: u64) -> Self {
        Self {
            seed,
            domain,
            index,
        }
    }

    pub fn trunk(&self) -> StreamRng {
        self.seed.stream(self.domain, self.index, 0)
    }

    /// Stream of branch `j`, `j >= 1`.
    pub fn branch(&self, j: u64) -> StreamRng {
        self.seed.stream(self.domain, self.index, j)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
