use crate::{Error, Result};

/// SplitMix64 generator. The output sequence depends on the seed only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    state: u64,
    seed: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`: the top 53 bits of the mixed output over 2^53.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below(0)");
        ((self.next_uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Index drawn with probability proportional to `weights`, by inverting
    /// the cumulative sum at one uniform draw.
    pub fn choose_weighted(&mut self, weights: &[f64]) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::DegenerateDistribution);
        }
        let target = self.next_uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if target < acc {
                    return Ok(i);
                }
            }
        }
        Ok(last_positive)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// Independent stream derived from this generator's seed and a stream id.
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut mixer = RngState::new(seed ^ id.wrapping_mul(0xD1B5_4A32_D192_ED03));
        RngState::new(mixer.next_u64())
    }
}
