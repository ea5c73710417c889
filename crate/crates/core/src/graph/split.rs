use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{induce_subgraph, quota_floor, sample_negatives_excluding, Edge, Graph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Transductive,
    Inductive,
    #[serde(rename = "fewshot")]
    FewShot,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Transductive => "transductive",
            Task::Inductive => "inductive",
            Task::FewShot => "fewshot",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(Task::Transductive),
            "inductive" => Ok(Task::Inductive),
            "fewshot" | "few-shot" => Ok(Task::FewShot),
            other => Err(Error::input(format!("unknown task {other:?}"))),
        }
    }
}

/// Training graph plus held-out positive / negative pairs for one task.
///
/// `train_graph` is indexed locally; `train_nodes[k]` is the full-graph
/// index of its node `k`. For transductive splits that mapping is the
/// identity. All pair lists use full-graph indices.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub task: Task,
    pub full_graph: Graph,
    pub train_graph: Graph,
    pub train_nodes: Vec<usize>,
    /// Held-out nodes (inductive: validation nodes; empty otherwise).
    pub val_nodes: Vec<usize>,
    /// Held-out nodes (inductive: test nodes; few-shot: every node outside
    /// the training graph; empty for transductive).
    pub test_nodes: Vec<usize>,
    pub val_pos: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

impl SplitBundle {
    /// Training edges mapped back to full-graph indices.
    pub fn train_edges_global(&self) -> Vec<Edge> {
        self.train_graph
            .edges()
            .iter()
            .map(|&(a, b)| super::canonical(self.train_nodes[a], self.train_nodes[b]))
            .collect()
    }

    /// Checks every structural invariant of the bundle.
    pub fn validate(&self) -> Result<()> {
        let full = &self.full_graph;
        let train: Vec<Edge> = self.train_edges_global();
        let mut seen = HashSet::new();
        for (name, list) in [
            ("train", &train),
            ("val_pos", &self.val_pos),
            ("test_pos", &self.test_pos),
        ] {
            for &(u, v) in list.iter() {
                if !full.has_edge(u, v) {
                    return Err(Error::Contract(format!(
                        "{name} pair ({u}, {v}) is not an edge"
                    )));
                }
                if !seen.insert((u, v)) {
                    return Err(Error::Contract(format!(
                        "pair ({u}, {v}) appears twice across positives"
                    )));
                }
            }
        }
        let mut negs = HashSet::new();
        for (name, list) in [("val_neg", &self.val_neg), ("test_neg", &self.test_neg)] {
            for &(u, v) in list.iter() {
                if u >= v || full.has_edge(u, v) {
                    return Err(Error::Contract(format!(
                        "{name} pair ({u}, {v}) is not a valid non-edge"
                    )));
                }
                if !negs.insert((u, v)) {
                    return Err(Error::Contract(format!(
                        "{name} pair ({u}, {v}) duplicated"
                    )));
                }
            }
        }
        if self.val_neg.len() != self.val_pos.len() || self.test_neg.len() != self.test_pos.len() {
            return Err(Error::Contract(
                "negative counts differ from positive counts".into(),
            ));
        }
        Ok(())
    }
}

fn check_fractions(a: f64, b: f64, allow_zero: bool) -> Result<()> {
    let ok = |f: f64| if allow_zero { f >= 0.0 } else { f > 0.0 };
    if ok(a) && ok(b) && a + b < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "split fractions {a} and {b} must be positive and sum below 1"
        )))
    }
}

/// Hides `⌊test_frac·|E|⌋` edges for testing and `⌊val_frac·|E|⌋` for
/// validation; every node and feature row stays in the training graph.
/// Negatives are uniform non-edges of the full graph, and validation
/// negatives never repeat a test negative.
pub fn make_transductive_split<R: Rng + ?Sized>(
    g: &Graph,
    test_frac: f64,
    val_frac: f64,
    rng: &mut R,
) -> Result<SplitBundle> {
    check_fractions(test_frac, val_frac, false)?;
    let m = g.num_edges();
    let n_test = quota_floor(test_frac, m);
    let n_val = quota_floor(val_frac, m);
    if n_test == 0 || n_val == 0 {
        return Err(Error::input(format!(
            "{m} edges are too few to hold out {test_frac} / {val_frac} of them"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let pick = |ix: &[usize]| -> Vec<Edge> {
        let mut v: Vec<Edge> = ix.iter().map(|&i| g.edges()[i]).collect();
        v.sort_unstable();
        v
    };
    let test_pos = pick(&order[..n_test]);
    let val_pos = pick(&order[n_test..n_test + n_val]);
    let train_edges = pick(&order[n_test + n_val..]);

    let test_neg = sample_negatives_excluding(g, n_test, None, &HashSet::new(), rng)?;
    let exclude: HashSet<Edge> = test_neg.iter().copied().collect();
    let val_neg = sample_negatives_excluding(g, n_val, None, &exclude, rng)?;

    Ok(SplitBundle {
        task: Task::Transductive,
        full_graph: g.clone(),
        train_graph: g.with_edges(train_edges)?,
        train_nodes: (0..g.num_nodes()).collect(),
        val_nodes: Vec::new(),
        test_nodes: Vec::new(),
        val_pos,
        val_neg,
        test_pos,
        test_neg,
    })
}

/// Holds out `⌊test_node_frac·n⌋` test nodes and `⌊val_node_frac·n⌋`
/// validation nodes. Edges touching a validation node are validation
/// positives; the remaining edges touching a test node are test positives.
/// The training graph is induced on the nodes that are in neither set, so
/// no training edge touches a held-out node. Negatives have at least one
/// endpoint in the corresponding held-out set.
pub fn make_inductive_split<R: Rng + ?Sized>(
    g: &Graph,
    test_node_frac: f64,
    val_node_frac: f64,
    rng: &mut R,
) -> Result<SplitBundle> {
    check_fractions(test_node_frac, val_node_frac, true)?;
    let n = g.num_nodes();
    let n_test = quota_floor(test_node_frac, n);
    let n_val = quota_floor(val_node_frac, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut test_nodes = order[..n_test].to_vec();
    let mut val_nodes = order[n_test..n_test + n_val].to_vec();
    let mut train_nodes = order[n_test + n_val..].to_vec();
    test_nodes.sort_unstable();
    val_nodes.sort_unstable();
    train_nodes.sort_unstable();

    let mut role = vec![Role::Train; n];
    test_nodes.iter().for_each(|&v| role[v] = Role::Test);
    val_nodes.iter().for_each(|&v| role[v] = Role::Val);

    let mut val_pos = Vec::new();
    let mut test_pos = Vec::new();
    for &(u, v) in g.edges() {
        match (role[u], role[v]) {
            (Role::Val, _) | (_, Role::Val) => val_pos.push((u, v)),
            (Role::Test, _) | (_, Role::Test) => test_pos.push((u, v)),
            _ => {}
        }
    }

    let train_graph = induce_subgraph(g, &train_nodes)?.to_graph();
    if train_graph.num_edges() == 0 {
        return Err(Error::input("inductive split leaves no training edges"));
    }
    let test_neg =
        sample_negatives_excluding(g, test_pos.len(), Some(&test_nodes), &HashSet::new(), rng)?;
    let exclude: HashSet<Edge> = test_neg.iter().copied().collect();
    let val_neg = sample_negatives_excluding(g, val_pos.len(), Some(&val_nodes), &exclude, rng)?;

    Ok(SplitBundle {
        task: Task::Inductive,
        full_graph: g.clone(),
        train_graph,
        train_nodes,
        val_nodes,
        test_nodes,
        val_pos,
        val_neg,
        test_pos,
        test_neg,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Train,
    Val,
    Test,
}

/// Trains on the subgraph induced by `⌊train_node_frac·n⌋` random nodes and
/// tests on every other edge. Test negatives have at least one endpoint
/// outside the training nodes. There is no validation set.
///
/// `train_node_frac = 1` is accepted and yields an empty test set.
pub fn make_fewshot_split<R: Rng + ?Sized>(
    g: &Graph,
    train_node_frac: f64,
    rng: &mut R,
) -> Result<SplitBundle> {
    if !(train_node_frac > 0.0 && train_node_frac <= 1.0) {
        return Err(Error::input(format!(
            "few-shot training fraction {train_node_frac} must lie in (0, 1]"
        )));
    }
    let n = g.num_nodes();
    let n_train = quota_floor(train_node_frac, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut train_nodes = order[..n_train].to_vec();
    train_nodes.sort_unstable();
    let mut unseen: Vec<usize> = order[n_train..].to_vec();
    unseen.sort_unstable();

    let mut is_train = vec![false; n];
    train_nodes.iter().for_each(|&v| is_train[v] = true);
    let test_pos: Vec<Edge> = g
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| !(is_train[u] && is_train[v]))
        .collect();

    let train_graph = induce_subgraph(g, &train_nodes)?.to_graph();
    if train_graph.num_edges() == 0 {
        return Err(Error::input("few-shot split leaves no training edges"));
    }
    let test_neg =
        sample_negatives_excluding(g, test_pos.len(), Some(&unseen), &HashSet::new(), rng)?;

    Ok(SplitBundle {
        task: Task::FewShot,
        full_graph: g.clone(),
        train_graph,
        train_nodes,
        val_nodes: Vec::new(),
        test_nodes: unseen,
        val_pos: Vec::new(),
        val_neg: Vec::new(),
        test_pos,
        test_neg,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::canonical;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut r = rng(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Graph::structural(n, edges).unwrap()
    }

    /// Graph with exactly `m` edges spread over `n` nodes.
    fn graph_with_edge_count(n: usize, m: usize) -> Graph {
        let mut edges = Vec::with_capacity(m);
        'outer: for gap in 1..n {
            for u in 0..n - gap {
                if edges.len() == m {
                    break 'outer;
                }
                edges.push((u, u + gap));
            }
        }
        assert_eq!(edges.len(), m);
        Graph::structural(n, edges).unwrap()
    }

    #[test]
    fn cora_sized_quotas() {
        let g = graph_with_edge_count(2708, 5429);
        let split = make_transductive_split(&g, 0.10, 0.05, &mut rng(0)).unwrap();
        assert_eq!(split.test_pos.len(), 542);
        assert_eq!(split.val_pos.len(), 271);
        assert_eq!(split.train_graph.num_edges(), 5429 - 542 - 271);
        assert_eq!(split.train_graph.num_nodes(), 2708);
        split.validate().unwrap();
    }

    #[test]
    fn transductive_too_small() {
        let g = Graph::structural(4, vec![(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            make_transductive_split(&g, 0.1, 0.05, &mut rng(0)),
            Err(Error::Input(_))
        ));
        assert!(make_transductive_split(&g, 0.6, 0.5, &mut rng(0)).is_err());
    }

    #[test]
    fn inductive_without_test_nodes() {
        let g = random_graph(40, 0.2, 1);
        let split = make_inductive_split(&g, 0.0, 0.0, &mut rng(0)).unwrap();
        assert!(split.test_pos.is_empty() && split.test_neg.is_empty());
        assert_eq!(split.train_graph.num_edges(), g.num_edges());
    }

    #[test]
    fn inductive_matches_enumeration_on_toy_graph() {
        let g = random_graph(16, 0.25, 7);
        for seed in 0..25 {
            let split = make_inductive_split(&g, 0.125, 0.0625, &mut rng(seed)).unwrap();
            split.validate().unwrap();
            let train: HashSet<usize> = split.train_nodes.iter().copied().collect();
            // held-out nodes are exactly the ones missing from training
            let held: Vec<usize> = (0..16).filter(|v| !train.contains(v)).collect();
            assert_eq!(held.len(), 3);
            assert_eq!(split.test_nodes.len(), 2);
            assert_eq!(split.val_nodes.len(), 1);
            let val_nodes: HashSet<usize> = split.val_nodes.iter().copied().collect();
            let test_nodes: HashSet<usize> = split.test_nodes.iter().copied().collect();
            let oracle: Vec<Edge> = g
                .edges()
                .iter()
                .copied()
                .filter(|&(u, v)| test_nodes.contains(&u) || test_nodes.contains(&v))
                .filter(|&(u, v)| !(val_nodes.contains(&u) || val_nodes.contains(&v)))
                .collect();
            assert_eq!(split.test_pos, oracle);
            for &(u, v) in &split.test_neg {
                assert!(test_nodes.contains(&u) || test_nodes.contains(&v));
            }
            for &(u, v) in split.train_edges_global().iter() {
                assert!(train.contains(&u) && train.contains(&v));
            }
        }
    }

    #[test]
    fn fewshot_full_fraction_has_empty_test() {
        let g = random_graph(20, 0.3, 2);
        let split = make_fewshot_split(&g, 1.0, &mut rng(0)).unwrap();
        assert!(split.test_pos.is_empty());
        assert_eq!(split.train_graph.num_edges(), g.num_edges());
    }

    #[test]
    fn fewshot_train_edges_match_filter() {
        let g = random_graph(60, 0.1, 3);
        for seed in 0..10 {
            let split = make_fewshot_split(&g, 0.5, &mut rng(seed)).unwrap();
            split.validate().unwrap();
            assert_eq!(split.train_nodes.len(), 30);
            let train: HashSet<usize> = split.train_nodes.iter().copied().collect();
            let mut oracle: Vec<Edge> = g
                .edges()
                .iter()
                .copied()
                .filter(|(u, v)| train.contains(u) && train.contains(v))
                .collect();
            oracle.sort_unstable();
            let mut got = split.train_edges_global();
            got.sort_unstable();
            assert_eq!(got, oracle);
            assert_eq!(got.len() + split.test_pos.len(), g.num_edges());
            for &(u, v) in &split.test_neg {
                assert!(!train.contains(&u) || !train.contains(&v));
            }
        }
    }

    #[test]
    fn task_names_round_trip() {
        for t in [Task::Transductive, Task::Inductive, Task::FewShot] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("bogus".parse::<Task>().is_err());
        assert_eq!(canonical(3, 1), (1, 3));
    }
}
