//! Small numeric helpers shared by the graph and model code.

/// Sums `terms` in ascending `total_cmp` order.
///
/// The result depends only on the multiset of terms, never on their order,
/// so any reduction over atoms built on it is bitwise permutation-invariant.
pub fn order_independent_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}
