//! Portable seeded randomness.
//!
//! All seeded instances are drawn from SplitMix64 (Steele, Lea & Flood 2014):
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! with wrapping 64-bit arithmetic. A uniform double in `[0, 1)` is
//! `(out >> 11) * 2^-53`. Table entries are built with `+`, `*` and `/` only,
//! so identical seeds give bit-identical tables on every IEEE-754 platform.

use nalgebra::DMatrix;

use crate::dist::{Alphabet, JointDistribution};
use crate::feature::Feature;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Independent stream for sub-task `stream` of a run seeded with `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut mix = SplitMix64::new(seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
        SplitMix64::new(mix.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Positive weight `1e-3 + u³`; the cube skews tables toward strong dependence.
    fn weight(&mut self) -> f64 {
        let u = self.uniform();
        1e-3 + u * u * u
    }

    /// Index drawn from unnormalized weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut t = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if t < w {
                return i;
            }
            t -= w;
        }
        weights.len() - 1
    }
}

/// Deterministic positive `nx × ny` table normalized to one, with indexed
/// alphabets `"0".."n-1"`.
pub fn seeded_random_joint(seed: u64, nx: usize, ny: usize) -> Result<JointDistribution> {
    random_joint(&mut SplitMix64::new(seed), nx, ny)
}

pub fn random_joint(rng: &mut SplitMix64, nx: usize, ny: usize) -> Result<JointDistribution> {
    if nx < 2 || ny < 2 {
        return Err(Error::invalid(
            "size",
            format!("need nx, ny >= 2, got {nx}x{ny}"),
        ));
    }
    let mut m = DMatrix::from_fn(nx, ny, |_, _| 0.0);
    for i in 0..nx {
        for j in 0..ny {
            m[(i, j)] = rng.weight();
        }
    }
    let total = m.sum();
    JointDistribution::new(Alphabet::indexed(nx)?, Alphabet::indexed(ny)?, m / total)
}

/// Random joint with `Y ∈ {-1, 1}` and `P_Y(±1) = 1/2`.
pub fn random_balanced_binary(rng: &mut SplitMix64, nx: usize) -> Result<JointDistribution> {
    if nx < 2 {
        return Err(Error::invalid("size", "need at least two x-symbols"));
    }
    let mut m = DMatrix::zeros(nx, 2);
    for j in 0..2 {
        let col: Vec<f64> = (0..nx).map(|_| rng.weight()).collect();
        let s: f64 = col.iter().sum();
        for (i, w) in col.into_iter().enumerate() {
            m[(i, j)] = 0.5 * w / s;
        }
    }
    JointDistribution::new(Alphabet::indexed(nx)?, Alphabet::new(["-1", "1"])?, m)
}

/// Feature with entries uniform in `[-1, 1)`.
pub fn random_feature(rng: &mut SplitMix64, alphabet: &Alphabet, dim: usize) -> Feature {
    let values =
        DMatrix::from_fn(dim, alphabet.len(), |_, _| 0.0).map(|_: f64| rng.range(-1.0, 1.0));
    Feature::new(alphabet.clone(), values).expect("finite random values")
}

/// Draw `n` i.i.d. label pairs from `joint`.
pub fn sample_pairs(
    rng: &mut SplitMix64,
    joint: &JointDistribution,
    n: usize,
) -> Vec<(String, String)> {
    let ny = joint.ny();
    let flat: Vec<f64> = (0..joint.nx())
        .flat_map(|i| (0..ny).map(move |j| (i, j)))
        .map(|(i, j)| joint.p(i, j))
        .collect();
    (0..n)
        .map(|_| {
            let k = rng.categorical(&flat);
            (
                joint.x_alphabet().label(k / ny).to_string(),
                joint.y_alphabet().label(k % ny).to_string(),
            )
        })
        .collect()
}
