//! Log-space arithmetic and deterministic reductions.

use rayon::prelude::*;

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))`, with `-inf` as the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == NEG_INF {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(x)))` over the iterator; `-inf` when empty or all `-inf`.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let max = it.clone().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Number of dataset rows handled by one unit of parallel work. Fixed, so
/// the reduction tree does not depend on the worker count.
pub(crate) const CHUNK_ROWS: usize = 64;

/// Reduces `items` with a fixed balanced binary tree (left-to-right halves).
pub(crate) fn pairwise_reduce<T>(mut items: Vec<T>, combine: &impl Fn(T, T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => items.pop(),
        n => {
            let right = items.split_off(n / 2);
            let l = pairwise_reduce(items, combine)?;
            let r = pairwise_reduce(right, combine)?;
            Some(combine(l, r))
        }
    }
}

/// Maps fixed-size row chunks in parallel with one piece of per-worker state,
/// preserving chunk order in the output.
pub(crate) fn map_row_chunks<S, T, I, F>(num_rows: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, std::ops::Range<usize>) -> T + Sync + Send,
{
    let num_chunks = num_rows.div_ceil(CHUNK_ROWS);
    (0..num_chunks)
        .into_par_iter()
        .map_init(init, |state, c| {
            let start = c * CHUNK_ROWS;
            f(state, start..(start + CHUNK_ROWS).min(num_rows))
        })
        .collect()
}
