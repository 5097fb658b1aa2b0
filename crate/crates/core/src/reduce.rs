//! Order-fixed reductions.
//!
//! Every parallel quadrature in this crate produces one partial value per
//! row (computed sequentially inside the row) and then combines the rows with
//! [`tree_sum`]. The combination tree depends only on the slice length, so
//! results are bit-identical for any rayon thread count.

use rayon::prelude::*;

/// Pairwise (binary tree) sum with a fixed split rule.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        len => {
            let mid = len / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}

/// Evaluate `row(i)` for `i in 0..len` in parallel and reduce with [`tree_sum`].
pub fn par_rows_sum<F>(len: usize, row: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..len).into_par_iter().map(row).collect();
    tree_sum(&parts)
}

/// Parallel map over rows; output order is the index order.
pub fn par_rows<F>(len: usize, row: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..len).into_par_iter().map(row).collect()
}
