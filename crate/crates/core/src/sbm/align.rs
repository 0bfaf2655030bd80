use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::sbm::BlockAssignment;

/// Relabels `target` so that it agrees with `reference` on as many nodes as
/// possible.
///
/// The permutation is an optimal assignment on the label contingency table,
/// padded to `max(k_ref, k_target)` labels. Target labels that find no
/// reference partner receive the spare indices, so the output block count is
/// `max(k_ref, k_target)`.
pub fn align_labels(reference: &BlockAssignment, target: &BlockAssignment) -> Result<BlockAssignment> {
    if reference.n_nodes() != target.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} nodes, target has {}",
            reference.n_nodes(),
            target.n_nodes()
        )));
    }
    let k = reference.k().max(target.k());
    let mut overlap = Matrix::new(k, k, 0i64);
    for (&t, &r) in target.labels().iter().zip(reference.labels()) {
        overlap[(t as usize, r as usize)] += 1;
    }
    let (_, mapping) = kuhn_munkres(&overlap);
    let mapping: Vec<u32> = mapping.into_iter().map(|m| m as u32).collect();
    target.relabel(&mapping, k)
}
