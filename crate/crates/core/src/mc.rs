//! Chunked, reproducible Monte-Carlo averaging.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::seed::{self, CHUNK};

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_err: 0.0,
            samples: 0,
        }
    }
}

/// Averages `sample(rng)` over `samples` draws. Chunk `c` uses the stream
/// `seed::rng(seed, [c])`, and chunk sums are combined in chunk order, so the
/// result depends only on `(seed, samples)`.
pub fn estimate<F>(samples: usize, seed: u64, sample: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    assert!(samples > 0, "need at least one sample");
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed, &[c as u64]);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let v = sample(&mut rng);
                sum += v;
                sq += v * v;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        std_err: (var / n).sqrt(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_mean() {
        let e = estimate(100_000, 1, |r| r.random::<f64>());
        assert!((e.mean - 0.5).abs() < 3.0 * e.std_err);
        assert!((e.std_err - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-4);
        assert_eq!(e, estimate(100_000, 1, |r| r.random::<f64>()));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(20_000, 9, |r| r.random::<f64>().powi(2)))
        };
        assert_eq!(run(1), run(3));
    }
}
