//! Monte Carlo plumbing: parallel replication with ordered results, thread
//! pools, quantiles and binomial standard errors.
//!
//! Replication `r` always draws from its own stream, so results depend only on
//! the replication index and never on how work is split across threads.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Runs `f(r)` for `r` in `range` in parallel (on the current rayon pool)
/// and returns the results in index order.
pub fn replicate<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    range.into_par_iter().map(f).collect()
}

/// Like [`replicate`] for fallible work; the first error in index order wins.
pub fn try_replicate<T, F>(range: std::ops::Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    range.into_par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers (`0` = available
/// parallelism).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(f)
}

/// Order statistic of rank `⌈(1−α)·n⌉` (the right-continuous empirical
/// `(1−α)`-quantile). Sorts `values` in place.
pub fn upper_quantile(values: &mut [f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("values", "empty sample"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(crate::error::Error::NanInput);
    }
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values[upper_rank(values.len(), alpha) - 1])
}

/// `⌈(1−α)·n⌉`, clamped to `1..=n`, computed without floating-point
/// round-up surprises for exact products.
pub fn upper_rank(n: usize, alpha: f64) -> usize {
    let x = (1.0 - alpha) * n as f64;
    let r = x.round();
    let rank = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (rank as usize).clamp(1, n)
}

/// Binomial standard error `sqrt(p(1−p)/n)`.
pub fn proportion_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Fraction of `true` values and its standard error.
pub fn rate(flags: &[bool]) -> (f64, f64) {
    if flags.is_empty() {
        return (0.0, 0.0);
    }
    let p = flags.iter().filter(|b| **b).count() as f64 / flags.len() as f64;
    (p, proportion_se(p, flags.len()))
}
