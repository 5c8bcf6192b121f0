//! Deterministic reductions and small vector helpers.

use rayon::prelude::*;

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise summation with a fixed recursion order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Number of cells handled by one parallel work item.
pub(crate) const CHUNK: usize = 2048;

/// Map every index in `0..len` through `f` in parallel and sum the results.
///
/// Work is split into fixed-size chunks whose partial sums are combined in
/// index order, so the result does not depend on the thread count.
pub fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(len);
            let vals: Vec<f64> = (lo..hi).map(&f).collect();
            pairwise_sum(&vals)
        })
        .collect();
    pairwise_sum(&partials)
}

/// Vector-valued variant of [`par_sum`]: each chunk folds into an accumulator
/// of length `width`, and accumulators are added in chunk order.
pub fn par_accumulate<F>(len: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(len);
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizer of `sum_i w_i |z_i - l|` over `l` (a weighted median) and the
/// attained value.
pub fn weighted_median_deviation(z: &[f64], w: &[f64]) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    let mut median = z[idx[0]];
    for &i in &idx {
        acc += w[i];
        if acc >= 0.5 * total {
            median = z[i];
            break;
        }
    }
    let value = z.iter().zip(w).map(|(zi, wi)| wi * (zi - median).abs()).sum();
    (median, value)
}
