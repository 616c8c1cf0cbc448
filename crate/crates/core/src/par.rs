//! Order-preserving parallel trial runner.

use rayon::prelude::*;

const CHUNK: usize = 256;

/// Runs `run(i)` for `i in 0..trials` on the rayon pool, chunk by chunk, and
/// feeds each successful result to `fold` in index order. Returns how many
/// trials yielded `None`.
pub(crate) fn for_each_trial<T: Send>(
    trials: usize,
    run: impl Fn(usize) -> Option<T> + Sync,
    mut fold: impl FnMut(T),
) -> usize {
    let mut aborted = 0;
    for start in (0..trials).step_by(CHUNK) {
        let end = (start + CHUNK).min(trials);
        let results: Vec<Option<T>> = (start..end).into_par_iter().with_max_len(1).map(&run).collect();
        for r in results {
            match r {
                Some(v) => fold(v),
                None => aborted += 1,
            }
        }
    }
    aborted
}
