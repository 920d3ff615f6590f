//! Counter-based random streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha8 keystream position:
//! the 64-bit seed is the key (expanded by `SeedableRng::seed_from_u64`), the
//! stream id is the ChaCha nonce, and the trial index selects a disjoint
//! window of 2³² words inside that stream. A trial's random numbers are
//! therefore a pure function of `(seed, stream, trial)` and do not depend on
//! which worker thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type TrialRng = ChaCha8Rng;

/// Number of trials evaluated per block. Blocks are the unit of parallel work
/// and of the ordered reduction.
pub const BLOCK_SIZE: u64 = 4096;

const WORDS_PER_TRIAL_SHIFT: u32 = 32;

pub fn trial_rng(seed: u64, stream: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(trial) << WORDS_PER_TRIAL_SHIFT);
    rng
}

/// Pairwise (cascade) summation. The split points depend only on the slice
/// length, so the rounding is reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Per-block sum and sum of squares of a trial statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockSums {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

/// Evaluates `trial_fn` for trials `0..trials`, in parallel over fixed blocks,
/// and returns the per-block sums in block order.
pub fn blocked_sums<F>(trials: u64, seed: u64, stream: u64, trial_fn: F) -> Vec<BlockSums>
where
    F: Fn(&mut TrialRng, u64) -> f64 + Sync,
{
    let blocks = trials.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .map(|block| {
            let start = block * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(trials);
            let values: Vec<f64> = (start..end)
                .map(|t| {
                    let mut rng = trial_rng(seed, stream, t);
                    trial_fn(&mut rng, t)
                })
                .collect();
            let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
            BlockSums { count: end - start, sum: pairwise_sum(&values), sum_sq: pairwise_sum(&squares) }
        })
        .collect()
}

/// Mean and plug-in standard error from ordered block sums.
pub fn mean_and_stderr(blocks: &[BlockSums]) -> (f64, f64) {
    let count: u64 = blocks.iter().map(|b| b.count).sum();
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let sums: Vec<f64> = blocks.iter().map(|b| b.sum).collect();
    let sqs: Vec<f64> = blocks.iter().map(|b| b.sum_sq).collect();
    let n = count as f64;
    let mean = pairwise_sum(&sums) / n;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = ((pairwise_sum(&sqs) - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Evaluates `trial_fn` for every trial and returns the values in trial
/// order. Used where the whole sequence is needed (running means).
pub fn ordered_values<F>(trials: u64, seed: u64, stream: u64, trial_fn: F) -> Vec<f64>
where
    F: Fn(&mut TrialRng, u64) -> f64 + Sync,
{
    let blocks = trials.div_ceil(BLOCK_SIZE);
    let per_block: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let start = block * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(trials);
            (start..end)
                .map(|t| {
                    let mut rng = trial_rng(seed, stream, t);
                    trial_fn(&mut rng, t)
                })
                .collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn trial_stream_is_a_pure_function_of_its_key() {
        let a: u64 = trial_rng(7, 3, 12345).random();
        let b: u64 = trial_rng(7, 3, 12345).random();
        let c: u64 = trial_rng(7, 3, 12346).random();
        let d: u64 = trial_rng(7, 4, 12345).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn block_results_do_not_depend_on_thread_count() {
        let f = |rng: &mut TrialRng, _t: u64| rng.random::<f64>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap();
        let a = one.install(|| mean_and_stderr(&blocked_sums(20_000, 1, 0, f)));
        let b = many.install(|| mean_and_stderr(&blocked_sums(20_000, 1, 0, f)));
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }
}
