//! Randomly shifted Kronecker lattice (Richtmyer generators `frac(sqrt(prime))`).
//!
//! The point set is extensible: the first `n` points of a larger set are the
//! `n`-point set, so sample sums can be accumulated while doubling.

use rand::Rng;

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Largest integration dimension supported by the generator table.
pub const MAX_DIM: usize = PRIMES.len();

#[derive(Clone, Debug)]
pub struct ShiftedKronecker {
    generator: Vec<f64>,
    shift: Vec<f64>,
}

impl ShiftedKronecker {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim <= MAX_DIM, "lattice dimension {dim} exceeds {MAX_DIM}");
        let generator = PRIMES[..dim]
            .iter()
            .map(|&p| (p as f64).sqrt().fract())
            .collect();
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self { generator, shift }
    }

    /// Writes point `index` after the tent (baker's) periodization into `out`.
    #[inline]
    pub fn point(&self, index: u64, out: &mut [f64]) {
        let j = index as f64;
        for ((o, g), s) in out.iter_mut().zip(&self.generator).zip(&self.shift) {
            let x = (j * g + s).fract();
            *o = (2.0 * x - 1.0).abs();
        }
    }
}
