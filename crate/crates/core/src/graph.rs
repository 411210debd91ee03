//! Undirected graphs, the topologies used by the experiments, and a plain
//! edge-list text format.
//!
//! Nodes are stored 0-based. Every external surface (edge lists, CLI specs,
//! CSV output) uses 1-based labels.
//!
//! Storage is a simple graph: adjacency lists never contain the node itself.
//! The protocols treat every node as its own neighbor; that convention lives
//! in [`Graph::closed_neighbors`].

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    tag: String,
}

/// Structural equality: node count and edge set. The provenance tag is ignored.
impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.adjacency == other.adjacency
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a graph from 0-based undirected edges. Duplicates are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], tag: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidSize(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop on node {}", a + 1)));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let graph = Graph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            tag: tag.into(),
        };
        let components = graph.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(graph)
    }

    /// The one-node graph. Its only closed neighbor is itself.
    pub fn single_node() -> Self {
        Graph {
            adjacency: vec![Vec::new()],
            tag: "single".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Sorted neighbors of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Neighbors of `i` including `i` (sorted).
    pub fn closed_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = self.adjacency[i].clone();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as 0-based pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().copied().filter(move |&j| j > i).map(move |j| (i, j)))
    }

    /// Provenance string, e.g. `lollipop:n=100 (clique=50)`.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    /// Canonical edge-list text: a header `n <count>` then one sorted `i j`
    /// line per edge, 1-based, no trailing newline.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}", self.len());
        for (i, j) in self.edges() {
            write!(out, "\n{} {}", i + 1, j + 1).expect("writing to a String");
        }
        out
    }
}

/// Result of parsing an edge list: the graph plus non-fatal warnings.
#[derive(Debug, Clone)]
pub struct ParsedGraph {
    pub graph: Graph,
    pub warnings: Vec<String>,
}

/// Parses the edge-list format written by [`Graph::to_edge_list`].
///
/// Lines are `i j` (1-based); an optional `n <count>` header fixes the node
/// count, otherwise the largest label is used. `#` starts a comment.
/// Duplicate edges (in either orientation) are merged with a warning;
/// self-loops are rejected.
pub fn parse_edge_list(text: &str) -> Result<ParsedGraph> {
    let mut declared_n = None;
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut max_label = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_label = |s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{s}` is not a node label"),
            })
        };
        match fields.as_slice() {
            ["n", count] => {
                if declared_n.is_some() || !edges.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "the `n` header must come first and appear once".into(),
                    });
                }
                declared_n = Some(parse_label(count)?);
            }
            [a, b] => {
                let (a, b) = (parse_label(a)?, parse_label(b)?);
                if a == 0 || b == 0 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "labels are 1-based".into(),
                    });
                }
                if a == b {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "self-loop on node {a}; every node is implicitly its own neighbor"
                        ),
                    });
                }
                let key = (a.min(b), a.max(b));
                if !seen.insert(key) {
                    warnings.push(format!(
                        "line {line_no}: duplicate edge {} {} ignored",
                        key.0, key.1
                    ));
                    continue;
                }
                max_label = max_label.max(key.1);
                edges.push((key.0 - 1, key.1 - 1));
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `i j` or `n <count>`, found `{line}`"),
                })
            }
        }
    }

    let n = match declared_n {
        Some(n) if n < max_label => {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares n={n} but label {max_label} is used"),
            })
        }
        Some(n) => n,
        None => max_label,
    };
    if n == 0 {
        return Err(Error::InvalidSize("edge list describes no nodes".into()));
    }
    let graph = if n == 1 {
        Graph::single_node()
    } else {
        Graph::from_edges(n, &edges, "edge-list")?
    };
    Ok(ParsedGraph { graph, warnings })
}

/// Path 1–2–…–n.
pub fn make_line(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("line graph needs n >= 2, got {n}")));
    }
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    Graph::from_edges(n, &edges, format!("line:n={n}"))
}

/// Clique on nodes 1..=n/2 joined at node n/2 to the path n/2–…–n.
pub fn make_lollipop(n: usize) -> Result<Graph> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidSize(format!(
            "lollipop graph needs an even n >= 4, got {n}"
        )));
    }
    let clique = n / 2;
    let mut edges = Vec::with_capacity(clique * (clique - 1) / 2 + n - clique);
    for i in 0..clique {
        for j in i + 1..clique {
            edges.push((i, j));
        }
    }
    for i in clique - 1..n - 1 {
        edges.push((i, i + 1));
    }
    Graph::from_edges(n, &edges, format!("lollipop:n={n} (clique={clique})"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cycle,
    Complete,
    Star,
    RandomConnected,
}

/// Additional topologies for scaling studies. `seed` is only read by
/// [`Family::RandomConnected`].
pub fn make_family(kind: Family, n: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("graph family needs n >= 2, got {n}")));
    }
    match kind {
        Family::Cycle => {
            let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            if n > 2 {
                edges.push((0, n - 1));
            }
            Graph::from_edges(n, &edges, format!("cycle:n={n}"))
        }
        Family::Complete => {
            let edges: Vec<_> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            Graph::from_edges(n, &edges, format!("complete:n={n}"))
        }
        Family::Star => {
            let edges: Vec<_> = (1..n).map(|j| (0, j)).collect();
            Graph::from_edges(n, &edges, format!("star:n={n}"))
        }
        Family::RandomConnected => random_connected(n, seed),
    }
}

/// Erdős–Rényi with p = 2 ln(n)/n, resampled until connected.
fn random_connected(n: usize, seed: u64) -> Result<Graph> {
    let p = (2.0 * (n as f64).ln() / n as f64).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = format!("random_connected:n={n},seed={seed}");
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        match Graph::from_edges(n, &edges, tag.clone()) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// A generator selection in CLI form: `line:n=50`, `lollipop:n=100`,
/// `cycle:n=8`, `complete:n=5`, `star:n=6`, `random_connected:n=30,seed=7`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Line,
    Lollipop,
    Family(Family),
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Line => "line",
            GraphKind::Lollipop => "lollipop",
            GraphKind::Family(Family::Cycle) => "cycle",
            GraphKind::Family(Family::Complete) => "complete",
            GraphKind::Family(Family::Star) => "star",
            GraphKind::Family(Family::RandomConnected) => "random_connected",
        }
    }

    pub fn build(self, n: usize, seed: u64) -> Result<Graph> {
        match self {
            GraphKind::Line => make_line(n),
            GraphKind::Lollipop => make_lollipop(n),
            GraphKind::Family(f) => make_family(f, n, seed),
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "line" => GraphKind::Line,
            "lollipop" => GraphKind::Lollipop,
            "cycle" => GraphKind::Family(Family::Cycle),
            "complete" => GraphKind::Family(Family::Complete),
            "star" => GraphKind::Family(Family::Star),
            "random_connected" => GraphKind::Family(Family::RandomConnected),
            other => return Err(Error::config("graph", format!("unknown graph kind `{other}`"))),
        })
    }
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        self.kind.build(self.n, self.seed)
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let kind: GraphKind = kind.trim().parse()?;
        let mut n = None;
        let mut seed = 0;
        for param in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = param
                .split_once('=')
                .ok_or_else(|| Error::config("graph", format!("expected key=value, got `{param}`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::config("graph", format!("`{v}` is not a nonnegative integer")))
            };
            match key.trim() {
                "n" => n = Some(parse(value)? as usize),
                "seed" => seed = parse(value)?,
                other => {
                    return Err(Error::config("graph", format!("unknown graph parameter `{other}`")))
                }
            }
        }
        let n = n.ok_or_else(|| Error::config("graph", format!("`{s}` is missing n=<count>")))?;
        Ok(GraphSpec { kind, n, seed })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:n={}", self.kind.name(), self.n)?;
        if self.kind == GraphKind::Family(Family::RandomConnected) {
            write!(f, ",seed={}", self.seed)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().map(|(i, j)| (i + 1, j + 1)).collect()
    }

    #[test]
    fn line_small_cases() {
        assert_eq!(edge_set(&make_line(2).unwrap()), vec![(1, 2)]);
        let g = make_line(3).unwrap();
        assert_eq!(edge_set(&g), vec![(1, 2), (2, 3)]);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert!(matches!(make_line(1), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn line_fifty_by_enumeration() {
        let g = make_line(50).unwrap();
        assert_eq!(g.edge_count(), 49);
        assert_eq!(g.max_degree(), 2);
        for i in 0..50 {
            let expected = if i == 0 || i == 49 { 1 } else { 2 };
            assert_eq!(g.degree(i), expected);
        }
    }

    #[test]
    fn lollipop_small_cases() {
        assert_eq!(edge_set(&make_lollipop(4).unwrap()), vec![(1, 2), (2, 3), (3, 4)]);
        assert_eq!(
            edge_set(&make_lollipop(6).unwrap()),
            vec![(1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 6)]
        );
        let g = make_lollipop(8).unwrap();
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.degree(3), 4);
        assert!(make_lollipop(5).is_err());
        assert!(make_lollipop(2).is_err());
    }

    #[test]
    fn families() {
        let k3 = make_family(Family::Complete, 3, 0).unwrap();
        assert_eq!(edge_set(&k3), vec![(1, 2), (1, 3), (2, 3)]);
        let star = make_family(Family::Star, 4, 0).unwrap();
        assert_eq!(star.degrees(), vec![3, 1, 1, 1]);
        let c5 = make_family(Family::Cycle, 5, 0).unwrap();
        assert!(c5.degrees().iter().all(|&d| d == 2));
        let a = make_family(Family::RandomConnected, 20, 7).unwrap();
        let b = make_family(Family::RandomConnected, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tag(), "random_connected:n=20,seed=7");
    }

    #[test]
    fn closed_neighbors_include_self() {
        let g = make_line(4).unwrap();
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.closed_neighbors(1), vec![0, 1, 2]);
        assert_eq!(g.closed_neighbors(3), vec![2, 3]);
        assert_eq!(Graph::single_node().closed_neighbors(0), vec![0]);
    }

    #[test]
    fn edge_list_examples() {
        let parsed = parse_edge_list("n 2\n1 2").unwrap();
        assert_eq!(parsed.graph.len(), 2);
        assert_eq!(edge_set(&parsed.graph), vec![(1, 2)]);
        assert!(parsed.warnings.is_empty());

        assert_eq!(make_line(3).unwrap().to_edge_list(), "n 3\n1 2\n2 3");

        let parsed = parse_edge_list("1 2\n2 1").unwrap();
        assert_eq!(parsed.graph.edge_count(), 1);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn edge_list_rejections() {
        assert!(matches!(parse_edge_list("1 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_edge_list("n 4\n1 2\n3 4"),
            Err(Error::Disconnected { components: 2 })
        ));
        assert!(matches!(parse_edge_list("1 x"), Err(Error::Parse { .. })));
        assert!(parse_edge_list("n 2\n1 3").is_err());
        let commented = parse_edge_list("# a path\nn 3\n1 2 # first\n2 3\n").unwrap();
        assert_eq!(commented.graph, make_line(3).unwrap());
    }

    #[test]
    fn graph_spec_strings() {
        let spec: GraphSpec = "random_connected:n=30,seed=7".parse().unwrap();
        assert_eq!(spec.n, 30);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.to_string(), "random_connected:n=30,seed=7");
        let spec: GraphSpec = "lollipop:n=100".parse().unwrap();
        assert_eq!(spec.build().unwrap().len(), 100);
        assert!("torus:n=4".parse::<GraphSpec>().is_err());
        assert!("line".parse::<GraphSpec>().is_err());
    }
}
