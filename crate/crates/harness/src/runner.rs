//! Worker pool sizing and replication ranges with partial-output reporting.

use std::ops::Range;

use adaptinf::mc::try_replicate;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "ADAPTINF_THREADS";

/// Worker count: the environment override if set and valid, else the flag,
/// else the available parallelism.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    let env = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    match env.or(flag) {
        Some(n) if n > 0 => n,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Replications completed before a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    /// First replication that was not completed; resume from here.
    pub next: u64,
    pub error: String,
}

/// Outcome of running a replication range.
#[derive(Debug)]
pub struct Chunked<T> {
    pub results: Vec<T>,
    pub partial: Option<Partial>,
}

/// Replications per chunk; results of completed chunks survive a failure.
pub const CHUNK: u64 = 256;

/// Runs `f` over `range` in chunks, in parallel within each chunk. Results
/// come back in replication order. On the first failing chunk the results
/// of the earlier chunks are returned with a [`Partial`] marker.
pub fn run_range<T, F>(range: Range<u64>, f: F) -> Chunked<T>
where
    T: Send,
    F: Fn(u64) -> adaptinf::Result<T> + Sync + Send,
{
    let mut results = Vec::with_capacity((range.end.saturating_sub(range.start)) as usize);
    let mut start = range.start;
    while start < range.end {
        let end = (start + CHUNK).min(range.end);
        match try_replicate(start..end, &f) {
            Ok(mut v) => results.append(&mut v),
            Err(e) => {
                return Chunked {
                    results,
                    partial: Some(Partial {
                        next: start,
                        error: e.to_string(),
                    }),
                }
            }
        }
        start = end;
    }
    Chunked { results, partial: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_keeps_completed_chunks() {
        let out = run_range(0..1000, |r| {
            if r == 600 {
                Err(adaptinf::Error::Degenerate("boom"))
            } else {
                Ok(r)
            }
        });
        assert_eq!(out.results.len(), 512);
        assert_eq!(out.partial.unwrap().next, 512);
        let ok = run_range(5..9, Ok);
        assert_eq!(ok.results, vec![5, 6, 7, 8]);
        assert!(ok.partial.is_none());
    }
}
