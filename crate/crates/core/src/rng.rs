//! Counter-addressed Gaussian draws.
//!
//! Every draw is a pure function of `(seed, stream, trial, index)`: the
//! ChaCha8 keystream for `(seed, stream, trial)` is addressed directly at
//! word `4·index`, so the value never depends on which thread asks for it or
//! in what order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent families of random variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    /// Threshold mismatch of array cells.
    CellVth = 1,
    /// Input offset of sense amplifiers.
    SenseOffset = 2,
    /// Threshold mismatch of replica-column cells.
    ReplicaVth = 3,
}

const TRIAL_BITS: u32 = 56;

#[derive(Debug, Clone)]
pub struct CounterRng {
    base: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn positioned(&self, stream: Stream, trial: u64, index: u64) -> ChaCha8Rng {
        assert!(trial < 1 << TRIAL_BITS, "trial index {trial} exceeds 2^56");
        let mut rng = self.base.clone();
        rng.set_stream(((stream as u64) << TRIAL_BITS) | trial);
        rng.set_word_pos(u128::from(index) * 4);
        rng
    }

    /// One standard normal draw.
    pub fn normal(&self, stream: Stream, trial: u64, index: u64) -> f64 {
        box_muller(&mut self.positioned(stream, trial, index))
    }

    /// Draws for indices `first, first + 1, …` into `out`; identical to
    /// calling [`CounterRng::normal`] for each index.
    pub fn fill_normals(&self, stream: Stream, trial: u64, first: u64, out: &mut [f64]) {
        let mut rng = self.positioned(stream, trial, first);
        for x in out.iter_mut() {
            *x = box_muller(&mut rng);
        }
    }
}

/// Consumes exactly two 64-bit words.
fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1).
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bulk_matches_single() {
        let rng = CounterRng::new(7);
        let mut bulk = [0.0; 37];
        rng.fill_normals(Stream::CellVth, 3, 100, &mut bulk);
        for (k, x) in bulk.iter().enumerate() {
            assert_eq!(*x, rng.normal(Stream::CellVth, 3, 100 + k as u64));
        }
    }

    #[test]
    fn streams_and_trials_differ() {
        let rng = CounterRng::new(7);
        let a = rng.normal(Stream::CellVth, 0, 5);
        assert_ne!(a, rng.normal(Stream::SenseOffset, 0, 5));
        assert_ne!(a, rng.normal(Stream::CellVth, 1, 5));
        assert_ne!(a, CounterRng::new(8).normal(Stream::CellVth, 0, 5));
        assert_eq!(a, CounterRng::new(7).normal(Stream::CellVth, 0, 5));
    }

    #[test]
    fn moments() {
        let rng = CounterRng::new(11);
        let mut x = vec![0.0; 200_000];
        rng.fill_normals(Stream::SenseOffset, 0, 0, &mut x);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
        let tail = x.iter().filter(|v| **v > 3.0).count() as f64 / n;
        assert!((tail - 0.00135).abs() < 0.0004, "{tail}");
    }
}
