use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, FilmError, Result};

/// How frequency bins are chosen for the spectral mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModePolicy {
    /// The `m` lowest bins.
    #[default]
    Lowest,
    /// `m` bins drawn uniformly without replacement.
    Random,
    /// `ceil(0.8 m)` lowest bins plus random higher bins for the rest.
    LowRandom,
}

impl fmt::Display for ModePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModePolicy::Lowest => "lowest",
            ModePolicy::Random => "random",
            ModePolicy::LowRandom => "low_random",
        })
    }
}

impl FromStr for ModePolicy {
    type Err = FilmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest" => Ok(ModePolicy::Lowest),
            "random" => Ok(ModePolicy::Random),
            "low_random" | "low-random" => Ok(ModePolicy::LowRandom),
            other => invalid(format!("unknown mode policy `{other}`")),
        }
    }
}

/// Sorted, distinct real-FFT bin indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSet {
    indices: Vec<usize>,
    policy: ModePolicy,
    seed: u64,
}

impl ModeSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn policy(&self) -> ModePolicy {
        self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Builds a set from explicit indices (sorted and deduplicated).
    pub fn from_indices(mut indices: Vec<usize>, bin_count: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= bin_count) {
            return invalid(format!("mode {bad} outside the {bin_count} available bins"));
        }
        Ok(Self {
            indices,
            policy: ModePolicy::Lowest,
            seed: 0,
        })
    }
}

pub fn select_modes(policy: ModePolicy, m: usize, bin_count: usize, seed: u64) -> Result<ModeSet> {
    if m == 0 {
        return invalid("mode count must be at least 1");
    }
    if bin_count == 0 {
        return invalid("no frequency bins available");
    }
    let m = if m > bin_count {
        log::warn!("requested {m} modes but only {bin_count} bins exist; clamping");
        bin_count
    } else {
        m
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = match policy {
        ModePolicy::Lowest => (0..m).collect(),
        ModePolicy::Random => index::sample(&mut rng, bin_count, m).into_vec(),
        ModePolicy::LowRandom => {
            let low = ((0.8 * m as f64).ceil() as usize).min(m);
            let mut picked: Vec<usize> = (0..low).collect();
            let extra = m - low;
            if extra > 0 {
                picked.extend(
                    index::sample(&mut rng, bin_count - low, extra)
                        .into_iter()
                        .map(|i| i + low),
                );
            }
            picked
        }
    };
    indices.sort_unstable();
    Ok(ModeSet {
        indices,
        policy,
        seed,
    })
}
