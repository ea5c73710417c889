use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use super::{canonical, induce_subgraph, quota_ceil, Edge, Graph, SubgraphRef};
use crate::error::{Error, Result};

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "context fraction {fraction} must lie in (0, 1]"
        )))
    }
}

/// Draws `⌈fraction·|E|⌉` distinct edges uniformly without replacement.
/// The result is sorted.
pub fn sample_context_edges<R: Rng + ?Sized>(
    train_edges: &[Edge],
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<Edge>> {
    check_fraction(fraction)?;
    if train_edges.is_empty() {
        return Err(Error::input(
            "cannot sample context edges from an empty edge list",
        ));
    }
    let count = quota_ceil(fraction, train_edges.len());
    let mut picked = index::sample(rng, train_edges.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| train_edges[i]).collect())
}

/// Draws `⌈fraction·n⌉` nodes and returns the subgraph they induce, with
/// nodes in ascending order.
pub fn sample_context_nodes<'g, R: Rng + ?Sized>(
    g: &'g Graph,
    fraction: f64,
    rng: &mut R,
) -> Result<SubgraphRef<'g>> {
    check_fraction(fraction)?;
    if g.num_nodes() == 0 {
        return Err(Error::input(
            "cannot sample context nodes from an empty graph",
        ));
    }
    let count = quota_ceil(fraction, g.num_nodes()).max(1);
    let mut nodes = index::sample(rng, g.num_nodes(), count).into_vec();
    nodes.sort_unstable();
    induce_subgraph(g, &nodes)
}

/// Samples `count` distinct non-edges uniformly. With a `constraint`, only
/// pairs having at least one endpoint in that node set are eligible.
pub fn sample_negative_edges<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    constraint: Option<&[usize]>,
    rng: &mut R,
) -> Result<Vec<Edge>> {
    sample_negatives_excluding(g, count, constraint, &HashSet::new(), rng)
}

/// [`sample_negative_edges`] that additionally never returns a pair in
/// `exclude` (used to keep validation and test negatives apart).
pub(crate) fn sample_negatives_excluding<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    constraint: Option<&[usize]>,
    exclude: &HashSet<Edge>,
    rng: &mut R,
) -> Result<Vec<Edge>> {
    let n = g.num_nodes();
    let in_set: Vec<bool> = match constraint {
        Some(nodes) => {
            let mut mask = vec![false; n];
            for &v in nodes {
                if v >= n {
                    return Err(Error::input(format!("constraint node {v} out of range")));
                }
                mask[v] = true;
            }
            mask
        }
        None => vec![true; n],
    };
    let s = in_set.iter().filter(|&&b| b).count();
    let eligible = |(u, v): Edge| in_set[u] || in_set[v];

    let pairs_inside = s * s.saturating_sub(1) / 2;
    let pairs_across = s * (n - s);
    let total = pairs_inside + pairs_across;
    let taken = g.edges().iter().filter(|&&e| eligible(e)).count()
        + exclude
            .iter()
            .filter(|&&e| eligible(e) && !g.has_edge(e.0, e.1))
            .count();
    let available = total - taken;
    if count > available {
        return Err(Error::input(format!(
            "requested {count} negative pairs but only {available} non-edges are eligible"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }

    let usable = |e: Edge| !g.has_edge(e.0, e.1) && !exclude.contains(&e);

    // Dense regime: enumerate every eligible pair and subsample.
    if available < 4 * count {
        let mut candidates = Vec::with_capacity(available);
        for u in 0..n {
            for v in u + 1..n {
                let e = (u, v);
                if eligible(e) && usable(e) {
                    candidates.push(e);
                }
            }
        }
        let mut picked: Vec<Edge> = index::sample(rng, candidates.len(), count)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        picked.sort_unstable();
        return Ok(picked);
    }

    let inside: Vec<usize> = (0..n).filter(|&v| in_set[v]).collect();
    let outside: Vec<usize> = (0..n).filter(|&v| !in_set[v]).collect();
    let mut chosen = HashSet::with_capacity(count);
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        // Choose between "both endpoints inside" and "one inside, one
        // outside" in proportion to how many pairs each holds, then pick
        // uniformly within it.
        let e = if rng.random_range(0..total) < pairs_inside {
            let a = inside[rng.random_range(0..s)];
            let b = inside[rng.random_range(0..s)];
            if a == b {
                continue;
            }
            canonical(a, b)
        } else {
            let a = inside[rng.random_range(0..s)];
            let b = outside[rng.random_range(0..outside.len())];
            canonical(a, b)
        };
        if usable(e) && chosen.insert(e) {
            picked.push(e);
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn full_fraction_returns_everything() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3)];
        let mut got = sample_context_edges(&edges, 1.0, &mut rng(0)).unwrap();
        got.sort_unstable();
        let mut want = edges.clone();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn tenth_of_ten_edges() {
        let edges: Vec<Edge> = (0..10).map(|i| (i, i + 1)).collect();
        let got = sample_context_edges(&edges, 0.1, &mut rng(3)).unwrap();
        assert_eq!(got.len(), 1);
        assert!(edges.contains(&got[0]));
    }

    #[test]
    fn edge_sampling_is_seeded() {
        let edges: Vec<Edge> = (0..50).map(|i| (i, i + 1)).collect();
        let a = sample_context_edges(&edges, 0.3, &mut rng(9)).unwrap();
        let b = sample_context_edges(&edges, 0.3, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn context_edge_errors() {
        assert!(sample_context_edges(&[], 0.5, &mut rng(0)).is_err());
        assert!(sample_context_edges(&[(0, 1)], 0.0, &mut rng(0)).is_err());
        assert!(sample_context_edges(&[(0, 1)], 1.5, &mut rng(0)).is_err());
    }

    #[test]
    fn context_nodes_whole_graph() {
        let g = Graph::structural(4, vec![(0, 1), (2, 3), (1, 2)]).unwrap();
        let sub = sample_context_nodes(&g, 1.0, &mut rng(1)).unwrap();
        assert_eq!(sub.node_ids(), &[0, 1, 2, 3]);
        assert_eq!(sub.induced_edges(), g.edges());
    }

    #[test]
    fn context_nodes_match_filter_oracle() {
        let edges: Vec<Edge> = (0..20)
            .flat_map(|i| [(i, (i + 1) % 20), (i, (i + 7) % 20)])
            .map(|(a, b)| canonical(a, b))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        let g = Graph::structural(20, edges).unwrap();
        for seed in 0..20 {
            let sub = sample_context_nodes(&g, 0.4, &mut rng(seed)).unwrap();
            assert_eq!(sub.num_nodes(), 8);
            let ids = sub.node_ids();
            let mut oracle: Vec<Edge> = g
                .edges()
                .iter()
                .filter(|(u, v)| ids.contains(u) && ids.contains(v))
                .map(|(u, v)| {
                    let a = ids.iter().position(|x| x == u).unwrap();
                    let b = ids.iter().position(|x| x == v).unwrap();
                    canonical(a, b)
                })
                .collect();
            oracle.sort_unstable();
            assert_eq!(sub.induced_edges(), oracle.as_slice());
            let again = sample_context_nodes(&g, 0.4, &mut rng(seed)).unwrap();
            assert_eq!(again.node_ids(), ids);
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let g = Graph::structural(3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        assert!(matches!(
            sample_negative_edges(&g, 1, None, &mut rng(0)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn single_possible_pair() {
        let g = Graph::structural(2, vec![]).unwrap();
        assert_eq!(
            sample_negative_edges(&g, 1, None, &mut rng(0)).unwrap(),
            vec![(0, 1)]
        );
    }

    #[test]
    fn constrained_negatives_touch_the_set() {
        let g = Graph::structural(30, (0..29).map(|i| (i, i + 1)).collect()).unwrap();
        let set = [3usize, 17];
        for seed in 0..10 {
            let negs = sample_negative_edges(&g, 20, Some(&set), &mut rng(seed)).unwrap();
            assert_eq!(negs.len(), 20);
            let uniq: HashSet<_> = negs.iter().collect();
            assert_eq!(uniq.len(), 20);
            for &(u, v) in &negs {
                assert!(u < v);
                assert!(!g.has_edge(u, v));
                assert!(set.contains(&u) || set.contains(&v));
            }
        }
    }

    #[test]
    fn exclusion_is_respected_in_the_dense_regime() {
        let g = Graph::structural(5, vec![(0, 1)]).unwrap();
        let exclude: HashSet<Edge> = [(0, 2), (3, 4)].into_iter().collect();
        // 10 pairs, 1 edge, 2 excluded
        let negs = sample_negatives_excluding(&g, 7, None, &exclude, &mut rng(2)).unwrap();
        assert_eq!(negs.len(), 7);
        assert!(negs.iter().all(|e| !exclude.contains(e) && *e != (0, 1)));
        assert!(sample_negatives_excluding(&g, 8, None, &exclude, &mut rng(2)).is_err());
    }
}
