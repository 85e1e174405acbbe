//! Network topologies and doubly stochastic, graph-conformant weight
//! matrices.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, salt};
use crate::spectral::{check_symmetric, sym_eigenvalues_desc};

/// Undirected simple connected graph on `m` nodes. Edges are stored with
/// `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(u32, u32)>,
}

impl Graph {
    /// Builds a graph, normalizing edge order and rejecting self-loops,
    /// duplicates and disconnected inputs.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut norm: Vec<(u32, u32)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            if a as usize >= m || b as usize >= m {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) outside 0..{m}"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::InvalidArgument("duplicate edges".into()));
        }
        let g = Self { m, edges: norm };
        if !g.is_connected() {
            return Err(Error::InvalidArgument("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.m];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        if self.m == 1 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.m];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.m
    }

    /// Edge-list text: first line the node count, then one `i j` pair per
    /// line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.m);
        for &(a, b) in &self.edges {
            s.push_str(&format!("{a} {b}\n"));
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let m: usize = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing node count".into() })?
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line: 1, msg: "bad node count".into() })?;
        let mut edges = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<u32> {
                tok.ok_or_else(|| Error::Parse { line: i + 2, msg: "expected two node ids".into() })?
                    .parse()
                    .map_err(|_| Error::Parse { line: i + 2, msg: "bad node id".into() })
            };
            edges.push((parse(it.next())?, parse(it.next())?));
        }
        Self::new(m, edges)
    }
}

/// Dense doubly stochastic weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    inner: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn from_dense(inner: DMatrix<f64>) -> Self {
        debug_assert_eq!(inner.nrows(), inner.ncols());
        Self { inner }
    }

    pub fn identity(m: usize) -> Self {
        Self { inner: DMatrix::identity(m, m) }
    }

    /// `(1/m) 1 1ᵀ`, the uniform averaging matrix of the complete graph.
    pub fn uniform(m: usize) -> Self {
        Self { inner: DMatrix::from_element(m, m, 1.0 / m as f64) }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    /// Nonzero entries per row, for sparse mixing.
    pub fn sparse_rows(&self) -> Vec<Vec<(u32, f64)>> {
        let m = self.dim();
        (0..m)
            .map(|i| {
                (0..m)
                    .filter_map(|j| {
                        let v = self.inner[(i, j)];
                        (v != 0.0).then_some((j as u32, v))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let mut s = String::new();
        for i in 0..m {
            for j in 0..m {
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&format!("{}", self.inner[(i, j)]));
            }
            s.push('\n');
        }
        s
    }
}

/// First doubly stochastic / conformance violation found, if any.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeEntry { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColSum { col: usize, sum: f64 },
    Conformance { row: usize, col: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row},{col})")
            }
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::ColSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Violation::Conformance { row, col, value } => {
                write!(f, "off-graph entry {value} at ({row},{col})")
            }
        }
    }
}

/// Checks entries >= 0, row sums = 1, column sums = 1 (all within `tol`) and,
/// when a graph is given, that off-diagonal support lies on its edges.
/// Returns the first violation in that order, or `None` when the matrix is
/// valid.
pub fn validate_doubly_stochastic(
    p: &StochasticMatrix,
    graph: Option<&Graph>,
    tol: f64,
) -> Option<Violation> {
    let m = p.dim();
    for i in 0..m {
        for j in 0..m {
            let v = p.get(i, j);
            if v < -tol {
                return Some(Violation::NegativeEntry { row: i, col: j, value: v });
            }
        }
    }
    for i in 0..m {
        let sum: f64 = (0..m).map(|j| p.get(i, j)).sum();
        if (sum - 1.0).abs() > tol {
            return Some(Violation::RowSum { row: i, sum });
        }
    }
    for j in 0..m {
        let sum: f64 = (0..m).map(|i| p.get(i, j)).sum();
        if (sum - 1.0).abs() > tol {
            return Some(Violation::ColSum { col: j, sum });
        }
    }
    if let Some(g) = graph {
        for i in 0..m {
            for j in 0..m {
                let v = p.get(i, j);
                if i != j && v.abs() > tol && !g.has_edge(i as u32, j as u32) {
                    return Some(Violation::Conformance { row: i, col: j, value: v });
                }
            }
        }
    }
    None
}

/// Connected k-regular graph: circulant base (each node tied to the k/2
/// nearest neighbors on each side, plus the diametric edge when k is odd),
/// then seeded degree-preserving edge swaps that reject disconnecting moves.
pub fn gen_k_regular(m: usize, k: usize, seed: u64) -> Result<Graph> {
    if k < 2 || k >= m {
        return Err(Error::Infeasible(format!("need 2 <= k < m, got k={k}, m={m}")));
    }
    if !(m * k).is_multiple_of(2) {
        return Err(Error::Infeasible(format!(
            "no {k}-regular graph on {m} nodes (m*k is odd)"
        )));
    }
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for i in 0..m as u32 {
        for off in 1..=(k / 2) as u32 {
            let j = (i + off) % m as u32;
            edges.push((i.min(j), i.max(j)));
        }
    }
    if k % 2 == 1 {
        for i in 0..(m / 2) as u32 {
            edges.push((i, i + (m / 2) as u32));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut g = Graph { m, edges };
    debug_assert!(g.degrees().iter().all(|&d| d == k));

    let mut rng = rng::stream(&[seed, salt::GRAPH, m as u64, k as u64]);
    let attempts = 4 * g.edges.len();
    for _ in 0..attempts {
        let e1 = rng.gen_range(0..g.edges.len());
        let e2 = rng.gen_range(0..g.edges.len());
        if e1 == e2 {
            continue;
        }
        let (a, b) = g.edges[e1];
        let (c, d) = g.edges[e2];
        if a == c || a == d || b == c || b == d {
            continue;
        }
        // Two possible rewirings preserve degrees.
        let (x, y) = if rng.gen_bool(0.5) { ((a, c), (b, d)) } else { ((a, d), (b, c)) };
        let norm = |(p, q): (u32, u32)| (p.min(q), p.max(q));
        let (x, y) = (norm(x), norm(y));
        if x == y || g.has_edge(x.0, x.1) || g.has_edge(y.0, y.1) {
            continue;
        }
        let mut next = g.edges.clone();
        next.retain(|&e| e != (a, b) && e != (c, d));
        next.push(x);
        next.push(y);
        next.sort_unstable();
        let candidate = Graph { m, edges: next };
        if candidate.is_connected() {
            g = candidate;
        }
    }
    Ok(g)
}

/// Named topologies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedTopology {
    Complete,
    Star,
    Cycle,
    /// Uniform points in the unit square joined within `radius`
    /// (default `sqrt(2 ln m / m)`); the seed is advanced until the result
    /// is connected.
    RandomGeometric { radius: Option<f64>, seed: u64 },
}

pub fn gen_named(kind: NamedTopology, m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidArgument("named topologies need m >= 2".into()));
    }
    match kind {
        NamedTopology::Complete => Graph::new(
            m,
            (0..m as u32).flat_map(|i| ((i + 1)..m as u32).map(move |j| (i, j))),
        ),
        NamedTopology::Star => Graph::new(m, (1..m as u32).map(|j| (0, j))),
        NamedTopology::Cycle => {
            if m == 2 {
                return Graph::new(2, [(0, 1)]);
            }
            Graph::new(m, (0..m as u32).map(|i| (i, (i + 1) % m as u32)))
        }
        NamedTopology::RandomGeometric { radius, seed } => {
            let r = radius.unwrap_or_else(|| (2.0 * (m as f64).ln() / m as f64).sqrt());
            for attempt in 0..10_000u64 {
                let mut rng = rng::stream(&[seed, salt::GRAPH, attempt]);
                let pts: Vec<(f64, f64)> =
                    (0..m).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
                let mut edges = Vec::new();
                for i in 0..m {
                    for j in (i + 1)..m {
                        let dx = pts[i].0 - pts[j].0;
                        let dy = pts[i].1 - pts[j].1;
                        if (dx * dx + dy * dy).sqrt() <= r {
                            edges.push((i as u32, j as u32));
                        }
                    }
                }
                let g = Graph { m, edges };
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Infeasible(format!(
                "no connected geometric graph found for m={m}, radius={r}"
            )))
        }
    }
}

/// Max-degree random walk weights: `P_ij = min(1/d_i, 1/d_j)` on edges, a
/// compensating diagonal, zero elsewhere. Symmetric and doubly stochastic by
/// construction.
pub fn max_degree_weights(graph: &Graph) -> StochasticMatrix {
    let m = graph.nodes();
    let deg = graph.degrees();
    let mut p = DMatrix::zeros(m, m);
    for &(a, b) in graph.edges() {
        let (a, b) = (a as usize, b as usize);
        let w = (1.0 / deg[a] as f64).min(1.0 / deg[b] as f64);
        p[(a, b)] = w;
        p[(b, a)] = w;
    }
    let adj = graph.adjacency();
    for i in 0..m {
        let di = 1.0 / deg[i] as f64;
        let mut diag = 0.0;
        for &k in &adj[i] {
            diag += (di - 1.0 / deg[k as usize] as f64).max(0.0);
        }
        p[(i, i)] = diag;
    }
    StochasticMatrix::from_dense(p)
}

/// Second largest (signed) eigenvalue of a symmetric stochastic matrix.
/// Returns 0 for the 1x1 matrix, whose spectrum is just {1}.
pub fn lambda2(p: &StochasticMatrix) -> Result<f64> {
    check_symmetric(p.as_matrix(), 1e-9)?;
    if p.dim() == 1 {
        return Ok(0.0);
    }
    let vals = sym_eigenvalues_desc(p.as_matrix());
    Ok(vals[1])
}
