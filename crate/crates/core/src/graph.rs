//! Undirected simple graphs over dense vertex indices.
//!
//! Adjacency is stored as one sorted neighbor list per vertex. Graphs are
//! immutable once built, so they can be shared freely across worker threads.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

/// Identifier of the Erdős–Rényi sampler. Seeds reproduce graphs only within
/// one version.
pub const ER_ALGORITHM: &str = "er-geometric-skip-v1";

/// Default cap on connectivity retries.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex index {index} out of range for graph with {n_vertices} vertices")]
    OutOfRange { index: usize, n_vertices: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("duplicate vertex {0} in vertex set")]
    DuplicateVertex(usize),
    #[error("no connected graph after {attempts} attempts; tie probability too small for this size")]
    ConnectivityExhausted { attempts: usize },
    #[error("invalid tie probability {0}; expected a value in [0, 1]")]
    InvalidProbability(f64),
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n_vertices: usize) -> Self {
        Graph {
            adjacency: vec![Vec::new(); n_vertices],
        }
    }

    /// Builds a graph from an edge list, rejecting self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges<I>(n_vertices: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); n_vertices];
        for (j, k) in edges {
            for index in [j, k] {
                if index >= n_vertices {
                    return Err(GraphError::OutOfRange { index, n_vertices });
                }
            }
            if j == k {
                return Err(GraphError::SelfLoop(j));
            }
            adjacency[j].push(k);
            adjacency[k].push(j);
        }
        for (j, neighbors) in adjacency.iter_mut().enumerate() {
            neighbors.sort_unstable();
            if let Some(w) = neighbors.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(j.min(w[0]), j.max(w[0])));
            }
        }
        Ok(Graph { adjacency })
    }

    /// Builds from already symmetric, sorted, duplicate-free lists.
    pub(crate) fn from_sorted_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        debug_assert!(adjacency
            .iter()
            .enumerate()
            .all(|(j, nb)| nb.windows(2).all(|w| w[0] < w[1]) && !nb.contains(&j)));
        Graph { adjacency }
    }

    pub fn complete(n_vertices: usize) -> Self {
        let adjacency = (0..n_vertices)
            .map(|j| (0..n_vertices).filter(|&k| k != j).collect())
            .collect();
        Graph { adjacency }
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.adjacency[j]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.adjacency[j].len()
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        j < self.n_vertices() && self.adjacency[j].binary_search(&k).is_ok()
    }

    /// Edges as `(j, k)` with `j < k`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(j, nb)| nb.iter().copied().filter(move |&k| k > j).map(move |k| (j, k)))
    }
}

/// An ordered set of distinct vertex indices valid for some host graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    members: Vec<usize>,
}

impl VertexSet {
    pub fn new(members: Vec<usize>, n_vertices: usize) -> Result<Self, GraphError> {
        let mut seen = vec![false; n_vertices];
        for &m in &members {
            if m >= n_vertices {
                return Err(GraphError::OutOfRange { index: m, n_vertices });
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(GraphError::DuplicateVertex(m));
            }
        }
        Ok(VertexSet { members })
    }

    pub fn all(n_vertices: usize) -> Self {
        VertexSet {
            members: (0..n_vertices).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Draws G(n, p).
///
/// Uses the geometric skip sampler: the gap between successive present pairs
/// in the lexicographic order of `{(v, w) : w < v}` is geometric with
/// parameter `p`, so each edge costs one uniform draw.
pub fn generate_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    if p == 0.0 || n < 2 {
        return Ok(Graph::empty(n));
    }
    if p == 1.0 {
        return Ok(Graph::complete(n));
    }
    let mut adjacency = vec![Vec::new(); n];
    let log_q = (1.0 - p).ln();
    let mut v: usize = 1;
    let mut w: i64 = -1;
    while v < n {
        let r: f64 = rng.gen();
        let skip = ((1.0 - r).ln() / log_q).floor();
        // A skip past every remaining pair ends the draw.
        if skip >= (n * n) as f64 {
            break;
        }
        w += 1 + skip as i64;
        while v < n && w >= v as i64 {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            let w = w as usize;
            adjacency[v].push(w);
            adjacency[w].push(v);
        }
    }
    // Pairs are emitted with increasing v, and increasing w within a v, so
    // lists are already sorted.
    Ok(Graph::from_sorted_adjacency(adjacency))
}

/// Draws G(n, p) repeatedly until the draw is connected.
pub fn generate_connected_er<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Graph, GraphError> {
    for _ in 0..max_attempts {
        let g = generate_er(n, p, rng)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(GraphError::ConnectivityExhausted { attempts: max_attempts })
}

/// True iff every vertex is reachable from vertex 0.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.n_vertices();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == n
}

pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.n_vertices()).map(|j| g.degree(j)).collect()
}

/// Induced subgraph on `s`, with vertex `s.members()[i]` mapped to `i`.
///
/// Returns the subgraph and the old→new index table (`None` for vertices
/// outside `s`).
pub fn induced_subgraph(g: &Graph, s: &VertexSet) -> Result<(Graph, Vec<Option<usize>>), GraphError> {
    let n = g.n_vertices();
    let mut remap = vec![None; n];
    for (new, &old) in s.members().iter().enumerate() {
        if old >= n {
            return Err(GraphError::OutOfRange {
                index: old,
                n_vertices: n,
            });
        }
        if remap[old].is_some() {
            return Err(GraphError::DuplicateVertex(old));
        }
        remap[old] = Some(new);
    }
    let adjacency = s
        .members()
        .iter()
        .map(|&old| {
            let mut nb: Vec<usize> = g.neighbors(old).iter().filter_map(|&k| remap[k]).collect();
            nb.sort_unstable();
            nb
        })
        .collect();
    Ok((Graph::from_sorted_adjacency(adjacency), remap))
}

/// Writes the edge-list format: `# vertices=<n>`, an optional `# <tag>` line,
/// then one `j,k` line per edge with `j < k`.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W, tag: Option<&str>) -> std::io::Result<()> {
    writeln!(out, "# vertices={}", g.n_vertices())?;
    if let Some(tag) = tag {
        writeln!(out, "# {tag}")?;
    }
    for (j, k) in g.edges() {
        writeln!(out, "{j},{k}")?;
    }
    out.flush()
}

/// Reads the edge-list format. Extra `#` lines after the header are tags and
/// are skipped.
pub fn read_edge_list<R: BufRead>(input: R) -> Result<Graph, GraphError> {
    let mut lines = input.lines().enumerate();
    let n_vertices = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            line.trim()
                .strip_prefix("# vertices=")
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| GraphError::Parse {
                    line: 1,
                    message: format!("expected `# vertices=<n>` header, found {line:?}"),
                })?
        }
        None => {
            return Err(GraphError::Parse {
                line: 1,
                message: "empty edge list".into(),
            })
        }
    };
    let mut edges = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| GraphError::Parse { line: i + 1, message };
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected `j,k`, found {line:?}")))?;
        let j: usize = a.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let k: usize = b.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        if j == k {
            return Err(GraphError::SelfLoop(j));
        }
        if j > k {
            return Err(parse_err(format!("edge ({j},{k}) not written with j < k")));
        }
        edges.push((j, k));
    }
    Graph::from_edges(n_vertices, edges)
}
