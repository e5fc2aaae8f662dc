//! Counter-keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit seed is a pure function
//! of `(master_seed, purpose, condition, student, lane)`. No stream depends on
//! scheduling order, so parallel runs draw exactly the same numbers as serial
//! ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Student proficiency draw. Shared by every condition.
    Proficiency = 1,
    /// Response sampling; one lane per skill.
    Response = 2,
    /// Randomized problem selection.
    Selection = 3,
    /// Synthetic log generation and other tooling.
    Auxiliary = 4,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master_seed: u64, purpose: Purpose, condition: u64, student: u64, lane: u64) -> Stream {
    let mut state = master_seed;
    for word in [purpose as u64, condition, student, lane] {
        state = splitmix64(&mut state) ^ word;
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// The independent streams one simulated student consumes.
#[derive(Debug, Clone)]
pub struct StudentStreams {
    pub proficiency: Stream,
    pub responses: Vec<Stream>,
    pub selection: Stream,
}

impl StudentStreams {
    /// `condition` identifies the selector arm. The proficiency stream ignores
    /// it so every arm sees the same student; fast-forward on/off arms share
    /// all streams.
    pub fn new(master_seed: u64, condition: u64, student: u64, n_skills: usize) -> Self {
        StudentStreams {
            proficiency: derive(master_seed, Purpose::Proficiency, 0, student, 0),
            responses: (0..n_skills as u64)
                .map(|skill| derive(master_seed, Purpose::Response, condition, student, skill))
                .collect(),
            selection: derive(master_seed, Purpose::Selection, condition, student, 0),
        }
    }
}
