use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{canonical, Edge, Graph};
use crate::numerics::DenseMatrix;

/// What the loader kept and dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadAudit {
    pub nodes: usize,
    pub feature_dim: usize,
    /// Non-empty lines in the cites file.
    pub raw_citations: usize,
    pub self_citations: usize,
    /// Citations with an endpoint missing from the content file.
    pub unresolved_citations: usize,
    /// Citations repeating an undirected pair already seen, including the
    /// reverse direction.
    pub duplicate_citations: usize,
    pub edges: usize,
}

#[derive(Debug, Clone)]
pub struct ContentCitesDataset {
    pub graph: Graph,
    pub id_index: HashMap<String, usize>,
    pub labels: Vec<String>,
    pub audit: LoadAudit,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a citation network.
///
/// Content lines are `<id> <f1> ... <fk> <label>` and cites lines are
/// `<cited id> <citing id>`, with fields separated by tabs or spaces. Nodes
/// are numbered in content-file order. Citations become undirected edges;
/// self-citations, repeats and citations naming an unknown id are dropped
/// and counted in the audit.
pub fn load_content_cites(
    content_path: impl AsRef<Path>,
    cites_path: impl AsRef<Path>,
) -> Result<ContentCitesDataset> {
    let content_path = content_path.as_ref();
    let cites_path = cites_path.as_ref();

    let mut id_index = HashMap::new();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    for (k, line) in read(content_path)?.lines().enumerate() {
        let lineno = k + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(
                content_path,
                lineno,
                "expected an id, features and a label",
            ));
        }
        let feats = &fields[1..fields.len() - 1];
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(Error::Format(format!(
                    "{}:{lineno}: {} features where earlier lines have {w}",
                    content_path.display(),
                    feats.len()
                )))
            }
            _ => {}
        }
        for f in feats {
            let v: f64 = f.parse().map_err(|_| {
                parse_err(
                    content_path,
                    lineno,
                    format!("feature {f:?} is not a number"),
                )
            })?;
            values.push(v);
        }
        let id = fields[0].to_string();
        if id_index.insert(id.clone(), ids.len()).is_some() {
            return Err(parse_err(
                content_path,
                lineno,
                format!("duplicate node id {id:?}"),
            ));
        }
        ids.push(id);
        labels.push(fields[fields.len() - 1].to_string());
    }
    let n = ids.len();
    let f = width.unwrap_or(0);

    let mut audit = LoadAudit {
        nodes: n,
        feature_dim: f,
        ..LoadAudit::default()
    };
    let mut seen: HashSet<Edge> = HashSet::new();
    for (k, line) in read(cites_path)?.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(cites_path, k + 1, "expected two node ids"));
        }
        audit.raw_citations += 1;
        let (Some(&a), Some(&b)) = (id_index.get(fields[0]), id_index.get(fields[1])) else {
            audit.unresolved_citations += 1;
            continue;
        };
        if a == b {
            audit.self_citations += 1;
        } else if !seen.insert(canonical(a, b)) {
            audit.duplicate_citations += 1;
        }
    }
    let mut edges: Vec<Edge> = seen.into_iter().collect();
    edges.sort_unstable();
    audit.edges = edges.len();

    let features = DenseMatrix::from_vec(n, f, values)?;
    let graph = Graph::new(Arc::new(features), edges)?.with_node_ids(ids)?;
    Ok(ContentCitesDataset {
        graph,
        id_index,
        labels,
        audit,
    })
}

/// Scales every row to unit sum; all-zero rows are left as they are.
pub fn row_normalize(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let s: f64 = row.iter().sum();
        if s != 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn files(
        content: &str,
        cites: &str,
    ) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("x.content");
        let e = dir.path().join("x.cites");
        fs::File::create(&c)
            .unwrap()
            .write_all(content.as_bytes())
            .unwrap();
        fs::File::create(&e)
            .unwrap()
            .write_all(cites.as_bytes())
            .unwrap();
        (dir, c, e)
    }

    #[test]
    fn toy_dataset() {
        let (_d, c, e) = files("a\t1\t0\tX\nb\t0\t1\tY\n", "a\tb\n");
        let ds = load_content_cites(&c, &e).unwrap();
        assert_eq!(ds.graph.num_nodes(), 2);
        assert_eq!(ds.graph.edges(), &[(0, 1)]);
        assert_eq!(ds.graph.features().row(1), &[0.0, 1.0]);
        assert_eq!(ds.labels, vec!["X", "Y"]);
    }

    #[test]
    fn reciprocal_self_and_dangling_citations() {
        let (_d, c, e) = files("a 1 L\nb 0 L\nc 1 L\n", "a b\nb a\nc c\nq a\n\nb c\n");
        let ds = load_content_cites(&c, &e).unwrap();
        assert_eq!(ds.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(
            ds.audit,
            LoadAudit {
                nodes: 3,
                feature_dim: 1,
                raw_citations: 5,
                self_citations: 1,
                unresolved_citations: 1,
                duplicate_citations: 1,
                edges: 2,
            }
        );
    }

    #[test]
    fn cites_order_does_not_matter() {
        let (_d, c, e1) = files("a 1 L\nb 0 L\nc 1 L\n", "a b\nc b\n");
        let e2 = e1.with_extension("rev");
        fs::write(&e2, "b c\nb a\n").unwrap();
        let g1 = load_content_cites(&c, &e1).unwrap().graph;
        let g2 = load_content_cites(&c, &e2).unwrap().graph;
        assert_eq!(g1.edges(), g2.edges());
    }

    #[test]
    fn malformed_lines() {
        let (_d, c, e) = files("a 1 L\nb 0 1 L\n", "");
        assert!(matches!(load_content_cites(&c, &e), Err(Error::Format(_))));
        let (_d, c, e) = files("a 1 L\nb z L\n", "");
        assert!(matches!(
            load_content_cites(&c, &e),
            Err(Error::Parse { line: 2, .. })
        ));
        let (_d, c, e) = files("a 1 L\n", "a\n");
        assert!(matches!(
            load_content_cites(&c, &e),
            Err(Error::Parse { line: 1, .. })
        ));
        let (_d, c, e) = files("a 1 L\na 1 L\n", "");
        assert!(matches!(
            load_content_cites(&c, &e),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_content_cites("/nonexistent/a", "/nonexistent/b"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn row_normalisation() {
        let x = DenseMatrix::from_rows(&[[1.0, 3.0], [0.0, 0.0]]);
        assert_eq!(
            row_normalize(&x),
            DenseMatrix::from_rows(&[[0.25, 0.75], [0.0, 0.0]])
        );
    }
}
