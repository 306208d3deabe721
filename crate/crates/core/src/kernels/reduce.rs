//! Deterministic reductions over atoms.
//!
//! Every sum over the ensemble goes through a fixed-shape pairwise tree:
//! ranges are halved until they hold at most [`LEAF`] atoms, leaves are
//! summed sequentially, and siblings are merged left + right. The tree shape
//! depends only on the number of atoms, so the result is bit-identical
//! whether or not the `parallel` feature splits the recursion across threads.

use alloc::vec;
use alloc::vec::Vec;

/// Largest range summed sequentially.
pub const LEAF: usize = 16;

#[cfg(feature = "parallel")]
const PAR_MIN: usize = 512;

/// Pairwise-tree sum of `f(i)` for `i in 0..n`.
pub fn pairwise_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    pairwise_accumulate(n, 1, |i, acc| acc[0] += f(i))[0]
}

/// Pairwise-tree accumulation of a `width`-vector. `f(i, acc)` must add the
/// contribution of atom `i` into `acc`.
pub fn pairwise_accumulate<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if n == 0 {
        return vec![0.0; width];
    }
    accumulate_range(0, n, width, &f)
}

fn accumulate_range<F>(lo: usize, hi: usize, width: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if hi - lo <= LEAF {
        let mut acc = vec![0.0; width];
        for i in lo..hi {
            f(i, &mut acc);
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut left, right) = split(lo, mid, hi, width, f);
    for (l, r) in left.iter_mut().zip(right.iter()) {
        *l += *r;
    }
    left
}

#[cfg(feature = "parallel")]
fn split<F>(lo: usize, mid: usize, hi: usize, width: usize, f: &F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if hi - lo >= PAR_MIN {
        rayon::join(
            || accumulate_range(lo, mid, width, f),
            || accumulate_range(mid, hi, width, f),
        )
    } else {
        (
            accumulate_range(lo, mid, width, f),
            accumulate_range(mid, hi, width, f),
        )
    }
}

#[cfg(not(feature = "parallel"))]
fn split<F>(lo: usize, mid: usize, hi: usize, width: usize, f: &F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    (
        accumulate_range(lo, mid, width, f),
        accumulate_range(mid, hi, width, f),
    )
}

/// Runs `f(i, row_i)` over the rows of a row-major buffer. Rows are disjoint,
/// so the result does not depend on scheduling.
pub fn for_each_row_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if data.len() / width >= PAR_MIN / 4 {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    for (i, row) in data.chunks_mut(width).enumerate() {
        f(i, row);
    }
}

/// Like [`for_each_row_mut`] but walks two row-major buffers in lockstep.
pub fn for_each_row_pair_mut<F>(a: &mut [f64], wa: usize, b: &mut [f64], wb: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    if wa == 0 || wb == 0 {
        return;
    }
    debug_assert_eq!(a.len() / wa, b.len() / wb);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if a.len() / wa >= PAR_MIN / 4 {
            a.par_chunks_mut(wa)
                .zip(b.par_chunks_mut(wb))
                .enumerate()
                .for_each(|(i, (ra, rb))| f(i, ra, rb));
            return;
        }
    }
    for (i, (ra, rb)) in a.chunks_mut(wa).zip(b.chunks_mut(wb)).enumerate() {
        f(i, ra, rb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_range_sums_to_zero() {
        assert_eq!(pairwise_sum(0, |_| 1.0), 0.0);
        assert_eq!(pairwise_accumulate(0, 3, |_, _| {}), vec![0.0; 3]);
    }

    #[test]
    fn integer_sums_are_exact() {
        for n in [1usize, 15, 16, 17, 100, 1000, 4097] {
            let s = pairwise_sum(n, |i| i as f64);
            assert_eq!(s, (n * (n - 1) / 2) as f64);
        }
    }

    #[test]
    fn tree_beats_naive_on_cancellation() {
        // 1 + n tiny terms: sequential summation loses all of them.
        let n = 1 << 20;
        let tiny = 1e-17;
        let s = pairwise_sum(n + 1, |i| if i == 0 { 1.0 } else { tiny });
        let exact = 1.0 + n as f64 * tiny;
        assert!((s - exact).abs() < 1e-15, "{s} vs {exact}");
    }

    #[test]
    fn accumulate_matches_per_component_sums() {
        let n = 333;
        let v = pairwise_accumulate(n, 2, |i, acc| {
            acc[0] += i as f64;
            acc[1] += 1.0;
        });
        assert_eq!(v, vec![(n * (n - 1) / 2) as f64, n as f64]);
    }
}
