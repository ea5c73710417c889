use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::DenseMatrix;

/// Width of the uniform noise added to SBM features.
const FEATURE_NOISE: f64 = 0.1;

/// Block of each node: contiguous, as equal in size as possible.
pub fn sbm_blocks(n: usize, num_blocks: usize) -> Vec<usize> {
    (0..n).map(|i| i * num_blocks / n).collect()
}

/// Stochastic block model. Nodes are split into contiguous blocks (see
/// [`sbm_blocks`]); each pair is an edge with probability `p_in` inside a
/// block and `p_out` across blocks. Features are the block one-hot in the
/// first `num_blocks` columns plus `U[0, 0.1)` noise on every entry.
pub fn generate_sbm<R: Rng + ?Sized>(
    n: usize,
    num_blocks: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    rng: &mut R,
) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::input(format!(
            "probabilities {p_in}, {p_out} must lie in [0, 1]"
        )));
    }
    if num_blocks == 0 || num_blocks > n.max(1) || feature_dim < num_blocks {
        return Err(Error::input(format!(
            "{num_blocks} blocks need 1..={n} nodes and at least as many feature columns (got {feature_dim})"
        )));
    }
    let blocks = sbm_blocks(n, num_blocks);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if blocks[u] == blocks[v] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let mut x = DenseMatrix::zeros(n, feature_dim);
    for (i, &b) in blocks.iter().enumerate() {
        let row = x.row_mut(i);
        row[b] = 1.0;
        row.iter_mut()
            .for_each(|v| *v += rng.random_range(0.0..FEATURE_NOISE));
    }
    Graph::new(Arc::new(x), edges)
}
