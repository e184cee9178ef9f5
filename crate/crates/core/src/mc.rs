//! Seeded Monte Carlo that gives identical results for any worker count.
//!
//! Work is cut into fixed-size chunks; chunk `k` draws from the ChaCha stream
//! `k` of the run seed, and chunk results are combined in chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const CHUNK: u64 = 4096;

pub type McRng = ChaCha8Rng;

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for a named sub-experiment.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f(rng, count)` on each chunk in parallel and returns the chunk
/// results in chunk order.
pub fn run_chunks<T, F>(samples: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut McRng, u64) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let count = CHUNK.min(samples - k * CHUNK);
            let mut rng = stream_rng(seed, k);
            f(&mut rng, count)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            samples: 0,
        }
    }

    pub fn from_moments(sum: f64, sum_sq: f64, samples: u64) -> Self {
        if samples == 0 {
            return Estimate {
                value: f64::NAN,
                stderr: f64::INFINITY,
                samples,
            };
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = if samples > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n).sqrt(),
            samples,
        }
    }

    /// Whether `target` lies within `k` standard errors (plus `slack`).
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + slack
    }
}

/// Mean of `f` over `samples` independent draws.
pub fn mean<F>(samples: u64, seed: u64, f: F) -> Estimate
where
    F: Fn(&mut McRng) -> f64 + Sync,
{
    let parts = run_chunks(samples, seed, |rng, count| {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..count {
            let v = f(rng);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Estimate::from_moments(s, s2, samples)
}

/// Probability estimate of a Bernoulli event, counted exactly in integers.
pub fn frequency<F>(samples: u64, seed: u64, f: F) -> Estimate
where
    F: Fn(&mut McRng) -> bool + Sync,
{
    let hits: u64 = run_chunks(samples, seed, |rng, count| {
        (0..count).filter(|_| f(rng)).count() as u64
    })
    .into_iter()
    .sum();
    let p = hits as f64 / samples as f64;
    Estimate {
        value: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    }
}

/// Pearson statistic and upper-tail p-value of `counts` against `expected`
/// probabilities (which must sum to 1).
pub fn chi_square(counts: &[u64], expected: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (counts.len().max(2) - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

/// [`chi_square`] against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let p = 1.0 / counts.len() as f64;
    chi_square(counts, &vec![p; counts.len()])
}

/// Two-sample Pearson homogeneity test of two histograms over the same cells.
/// Cells empty in both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let pooled = (x + y) as f64 / (na + nb);
        if pooled == 0.0 {
            continue;
        }
        cells += 1;
        let (ea, eb) = (pooled * na, pooled * nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = (cells.max(2) - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn two_sample_identical_histograms() {
        let (stat, p) = chi_square_two_sample(&[10, 20, 0, 30], &[10, 20, 0, 30]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mean(50_000, 7, |rng| rng.gen::<f64>()))
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert!(a.within(0.5, 4.0, 0.0));
    }

    #[test]
    fn frequency_of_fair_coin() {
        let e = frequency(100_000, 3, |rng| rng.gen::<bool>());
        assert!(e.within(0.5, 4.0, 0.0));
        assert!(e.stderr < 0.002);
    }

    #[test]
    fn chi_square_examples() {
        let (stat, p) = chi_square_uniform(&[100, 100, 100, 100]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        // Statistic 4 on one degree of freedom.
        let (stat, p) = chi_square_uniform(&[60, 40]);
        assert!((stat - 4.0).abs() < 1e-12);
        assert!((p - 0.0455003).abs() < 1e-6);
    }

    #[test]
    fn subseeds_differ() {
        assert_ne!(subseed(1, 1), subseed(1, 2));
        assert_ne!(subseed(1, 1), subseed(2, 1));
    }
}
