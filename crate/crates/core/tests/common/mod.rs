//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use npgnn_core::data::{generate_sbm, sbm_blocks};
use npgnn_core::{DenseMatrix, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with `U[0, 1)` features.
pub fn random_graph(n: usize, p: f64, feature_dim: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let data = (0..n * feature_dim).map(|_| r.random::<f64>()).collect();
    let x = DenseMatrix::from_vec(n, feature_dim, data).unwrap();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(Arc::new(x), edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Entries with random sign and magnitude in `[lo, hi)`, away from zero.
pub fn signed_matrix(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m = r.random_range(lo..hi);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                c[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    c
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` built densely: adjacency from the edge list,
/// degrees from row sums and two full matrix products.
pub fn dense_normalized_oracle(g: &Graph) -> DenseMatrix {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        d[i][i] = 1.0 / a[i].iter().sum::<f64>().sqrt();
    }
    let out = naive_matmul(&naive_matmul(&d, &a), &d);
    DenseMatrix::from_rows(&out)
}

/// Pairwise definition of ROC AUC.
pub fn brute_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact non-negative rational used by [`brute_ap`].
#[derive(Clone, Copy)]
struct Ratio(u128, u128);

impl Ratio {
    fn add(self, o: Ratio) -> Ratio {
        let den = self.1 / gcd(self.1, o.1) * o.1;
        let num = self.0 * (den / self.1) + o.0 * (den / o.1);
        let g = gcd(num, den).max(1);
        Ratio(num / g, den / g)
    }

    fn mul(self, o: Ratio) -> Ratio {
        let (num, den) = (self.0 * o.0, self.1 * o.1);
        let g = gcd(num, den).max(1);
        Ratio(num / g, den / g)
    }
}

/// Average precision `Σ_k (R_k − R_{k−1})·P_k` in exact rational arithmetic
/// from explicit precision / recall at every cut-off of the descending
/// ranking, ties kept in input order. Returns the value rounded to `f64`.
/// Exact for up to about 40 items.
pub fn brute_ap(labels: &[bool], scores: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // insertion sort: stable by construction
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && scores[order[j - 1]] < scores[order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let total_pos = labels.iter().filter(|&&l| l).count() as u128;
    let mut prev_tp = 0u128;
    let mut ap = Ratio(0, 1);
    for k in 1..=order.len() {
        let tp = order[..k].iter().filter(|&&i| labels[i]).count() as u128;
        let precision = Ratio(tp, k as u128);
        let recall_step = Ratio(tp - prev_tp, total_pos);
        ap = ap.add(recall_step.mul(precision));
        prev_tp = tp;
    }
    ap.0 as f64 / ap.1 as f64
}

/// Two-block SBM on 30 nodes with `p_in = 0.5`, `p_out = 0.02` and four
/// feature columns, plus each node's block.
pub fn sbm_fixture() -> (Graph, Vec<usize>) {
    let g = generate_sbm(30, 2, 0.5, 0.02, 4, &mut rng(0)).unwrap();
    (g, sbm_blocks(30, 2))
}
