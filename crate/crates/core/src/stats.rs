//! Seeded random streams and resampling error bars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for `(seed, stream)`; used to split work into
/// deterministic chunks regardless of how many threads run them.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation of the values (n − 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Means of `batches` contiguous, nearly equal batches.
pub fn batch_means(xs: &[f64], batches: usize) -> Vec<f64> {
    let b = batches.clamp(1, xs.len().max(1));
    (0..b)
        .map(|i| {
            let (lo, hi) = (i * xs.len() / b, (i + 1) * xs.len() / b);
            mean(&xs[lo..hi])
        })
        .filter(|m| m.is_finite())
        .collect()
}

/// Standard error of the mean from batch means; robust to serial correlation
/// as long as batches are long compared to the correlation time.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let bm = batch_means(xs, batches);
    if bm.len() < 2 {
        return 0.0;
    }
    std_dev(&bm) / (bm.len() as f64).sqrt()
}

/// Delete-one-block jackknife standard error of the mean.
pub fn jackknife_se(xs: &[f64], blocks: usize) -> f64 {
    let n = xs.len();
    let b = blocks.clamp(1, n.max(1));
    if b < 2 {
        return 0.0;
    }
    let total: f64 = xs.iter().sum();
    let leave_out: Vec<f64> = (0..b)
        .map(|i| {
            let (lo, hi) = (i * n / b, (i + 1) * n / b);
            let s: f64 = xs[lo..hi].iter().sum();
            (total - s) / (n - (hi - lo)) as f64
        })
        .collect();
    let m = mean(&leave_out);
    let var = leave_out.iter().map(|x| (x - m).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
    var.sqrt()
}

/// Bootstrap standard error of the mean of `values` with a fixed seed.
pub fn bootstrap_se(values: &[f64], reps: usize, seed: u64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = stream_rng(seed, 0xb007);
    let means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    std_dev(&means)
}
