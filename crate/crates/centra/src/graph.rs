//! Undirected simple graphs with optional node features and labels, plus the
//! file formats, summary statistics, and graph distances built on them.
//!
//! Graphs are immutable after construction: edges are stored as sorted,
//! deduplicated `(min, max)` pairs with a CSR neighbor index built up front,
//! so values are safe to share across threads and every operation here is a
//! pure function.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use ndarray::{Array2, ArrayView2};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Option<Array2<f64>>,
    labels: Option<Vec<usize>>,
    // CSR neighbor index over both edge directions.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Graph {
    /// Build a graph from raw undirected pairs. Self-loops are dropped and
    /// duplicates (in either orientation) collapse to one edge. Endpoints must
    /// be < `n`; features, when given, must have `n` rows.
    pub fn new(
        n: usize,
        raw_edges: impl IntoIterator<Item = (usize, usize)>,
        features: Option<Array2<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in raw_edges {
            if u >= n || v >= n {
                return Err(Error::Bounds {
                    index: u.max(v),
                    bound: n,
                    what: "nodes",
                });
            }
            if u == v {
                continue;
            }
            set.insert((u.min(v), u.max(v)));
        }
        if let Some(f) = &features {
            if f.nrows() != n {
                return Err(Error::shape(format!("{n} feature rows"), format!("{}", f.nrows())));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape(format!("{n} labels"), format!("{}", l.len())));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let (row_ptr, col_idx) = build_csr(n, &edges);
        Ok(Self {
            n,
            edges,
            features,
            labels,
            row_ptr,
            col_idx,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted unordered edge pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> Option<ArrayView2<'_, f64>> {
        self.features.as_ref().map(|f| f.view())
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Dense symmetric adjacency matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Sparse matvec `y = A x` over the undirected edges.
    pub fn adj_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(u, v) in &self.edges {
            y[u] += x[v];
            y[v] += x[u];
        }
        y
    }

    /// Connected components as per-node component ids (BFS order).
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut comp = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }

    /// Graph diameter (max eccentricity over BFS from every node).
    /// Errors on disconnected or empty graphs.
    pub fn diameter(&self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::invalid("diameter of empty graph"));
        }
        let mut diam = 0usize;
        let mut dist = vec![usize::MAX; self.n];
        for s in 0..self.n {
            dist.iter_mut().for_each(|d| *d = usize::MAX);
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for &d in &dist {
                if d == usize::MAX {
                    return Err(Error::invalid("diameter of disconnected graph"));
                }
                diam = diam.max(d);
            }
        }
        Ok(diam)
    }

    /// Copy of this graph with the features replaced.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Graph> {
        Graph::new(self.n, self.edges.iter().copied(), Some(features), self.labels.clone())
    }

    /// Copy of this graph with the given edge set (same n/features/labels).
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        Graph::new(self.n, edges, self.features.clone(), self.labels.clone())
    }
}

fn build_csr(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut row_ptr = vec![0usize; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = row_ptr[i] + deg[i];
    }
    let mut col_idx = vec![0usize; row_ptr[n]];
    let mut fill = row_ptr.clone();
    for &(u, v) in edges {
        col_idx[fill[u]] = v;
        fill[u] += 1;
        col_idx[fill[v]] = u;
        fill[v] += 1;
    }
    for i in 0..n {
        col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
    }
    (row_ptr, col_idx)
}

/// Node partition into clusters `0..C-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(pub Vec<usize>);

impl Partition {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// File IO
// ---------------------------------------------------------------------------

/// Load an edge list: one `u v` pair per line, `#` starts a comment. A comment
/// of the form `# n=<count>` (as written by [`write_edge_list`]) acts as an
/// additional node-count hint, so graphs with trailing isolated nodes
/// round-trip exactly.
pub fn load_edge_list(path: impl AsRef<Path>, n_hint: Option<usize>) -> Result<Graph> {
    let text = std::fs::read_to_string(path)?;
    let mut edges = Vec::new();
    let mut max_idx: Option<usize> = None;
    let mut hint = n_hint;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("n=") {
                if let Ok(n) = v.trim().parse::<usize>() {
                    hint = Some(hint.map_or(n, |h| h.max(n)));
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>, lineno: usize| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected \"u v\"".into(),
            })?
            .parse::<usize>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })
        };
        let u = parse(parts.next(), lineno)?;
        let v = parse(parts.next(), lineno)?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "trailing tokens after \"u v\"".into(),
            });
        }
        max_idx = Some(max_idx.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let needed = max_idx.map_or(0, |m| m + 1);
    if let Some(h) = n_hint {
        if needed > h {
            return Err(Error::Bounds {
                index: needed - 1,
                bound: h,
                what: "nodes (edge endpoint exceeds n_hint)",
            });
        }
    }
    let n = hint.map_or(needed, |h| h.max(needed));
    Graph::new(n, edges, None, None)
}

/// Load a headerless CSV of node features; must have exactly `n` rows of equal
/// column counts.
pub fn load_features(path: impl AsRef<Path>, n: usize) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v = cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric cell at ({}, {col})", rows.len()),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::shape(
                    format!("{} columns", first.len()),
                    format!("{} at row {}", row.len(), rows.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::shape(format!("{n} rows"), format!("{}", rows.len())));
    }
    let k = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((n, k));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[[i, j]] = *v;
        }
    }
    Ok(m)
}

/// Load a headerless single-column CSV of integer labels.
pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line.parse::<usize>().map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        labels.push(v);
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), format!("{}", labels.len())));
    }
    Ok(labels)
}

/// Render the edge-list format: `# n=<n>` header then sorted `u v` lines.
pub fn edge_list_string(g: &Graph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n={}", g.n());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, edge_list_string(g))?;
    Ok(())
}

/// Render features as headerless CSV, node-major. Floats use the shortest
/// round-trip representation so write/load is exact.
pub fn features_csv_string(features: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in features.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn write_features(features: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, features_csv_string(features))?;
    Ok(())
}

pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GraphStats {
    pub edge_density: f64,
    /// Fraction of edges joining same-label endpoints; `None` when labels are
    /// absent or the graph has no edges.
    pub homophily: Option<f64>,
    pub degrees: Vec<usize>,
    pub min_degree: usize,
    pub max_degree: usize,
}

/// Edge density 2m/(n(n-1)), homophily ratio, and the degree sequence.
pub fn graph_stats(g: &Graph) -> Result<GraphStats> {
    let n = g.n();
    if n < 2 {
        return Err(Error::invalid(format!("density undefined for n = {n}")));
    }
    let m = g.num_edges();
    let density = 2.0 * m as f64 / (n as f64 * (n as f64 - 1.0));
    let homophily = match (g.labels(), m) {
        (Some(labels), m) if m > 0 => {
            let same = g
                .edges()
                .iter()
                .filter(|&&(u, v)| labels[u] == labels[v])
                .count();
            Some(same as f64 / m as f64)
        }
        _ => None,
    };
    let degrees = g.degrees();
    let min_degree = degrees.iter().copied().min().unwrap_or(0);
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    Ok(GraphStats {
        edge_density: density,
        homophily,
        degrees,
        min_degree,
        max_degree,
    })
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Count of unordered pairs whose edge/non-edge status differs (one flip
    /// costs 1, matching the edit-count convention of the structural sampler).
    Hamming,
    Frobenius,
    Spectral,
}

/// Fixed-alignment graph distance `alpha * ||A1 - A2|| + beta * ||X1 - X2||_F`.
/// The feature term is 0 when either graph lacks features.
pub fn graph_distance(g1: &Graph, g2: &Graph, alpha: f64, beta: f64, norm: NormKind) -> Result<f64> {
    if g1.n() != g2.n() {
        return Err(Error::shape(format!("n = {}", g1.n()), format!("n = {}", g2.n())));
    }
    let structural = match norm {
        NormKind::Hamming => {
            let s1: BTreeSet<_> = g1.edges().iter().copied().collect();
            let s2: BTreeSet<_> = g2.edges().iter().copied().collect();
            s1.symmetric_difference(&s2).count() as f64
        }
        NormKind::Frobenius => {
            let d = g1.adjacency() - g2.adjacency();
            crate::linalg::norm_fro(d.view())
        }
        NormKind::Spectral => {
            let d = g1.adjacency() - g2.adjacency();
            crate::linalg::norm_spectral(d.view())
        }
    };
    let feature = match (g1.features(), g2.features()) {
        (Some(x1), Some(x2)) => {
            if x1.dim() != x2.dim() {
                return Err(Error::shape(format!("{:?}", x1.dim()), format!("{:?}", x2.dim())));
            }
            let d = &x1 - &x2;
            crate::linalg::norm_fro(d.view())
        }
        _ => 0.0,
    };
    Ok(alpha * structural + beta * feature)
}

/// Alignment-minimizing distance: brute force over all node permutations.
/// This is an oracle for small graphs, limited to n <= 8.
pub fn permutation_distance(g1: &Graph, g2: &Graph, alpha: f64, beta: f64) -> Result<f64> {
    if g1.n() != g2.n() {
        return Err(Error::shape(format!("n = {}", g1.n()), format!("n = {}", g2.n())));
    }
    let n = g1.n();
    if n > 8 {
        return Err(Error::Scale {
            op: "permutation_distance",
            max: 8,
            n,
        });
    }
    let a1 = g1.adjacency();
    let a2 = g2.adjacency();
    let x1 = g1.features();
    let x2 = g2.features();
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..n).collect();
    permute_all(&mut perm, 0, &mut |p| {
        // structural: ||A1 - P A2 P^T||_F where (P A2 P^T)[i][j] = A2[p(i)][p(j)]
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = a1[[i, j]] - a2[[p[i], p[j]]];
                s += d * d;
            }
        }
        let mut cost = alpha * s.sqrt();
        if let (Some(x1), Some(x2)) = (&x1, &x2) {
            let mut f = 0.0;
            for i in 0..n {
                for k in 0..x1.ncols() {
                    let d = x1[[i, k]] - x2[[p[i], k]];
                    f += d * d;
                }
            }
            cost += beta * f.sqrt();
        }
        if cost < best {
            best = cost;
        }
    });
    Ok(if n == 0 { 0.0 } else { best })
}

fn permute_all(perm: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    let n = perm.len();
    if n == 0 {
        return;
    }
    if k == n {
        f(perm);
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute_all(perm, k + 1, f);
        perm.swap(k, i);
    }
}

/// Convenience constructors used throughout the tests and fixtures.
pub fn complete_graph(n: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    Graph::new(n, edges, None, None).expect("complete graph")
}

pub fn path_graph(n: usize) -> Graph {
    Graph::new(n, (1..n).map(|i| (i - 1, i)), None, None).expect("path graph")
}

pub fn cycle_graph(n: usize) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 2 {
        edges.push((n - 1, 0));
    }
    Graph::new(n, edges, None, None).expect("cycle graph")
}

/// Star with the hub at node 0 and `leaves` spokes.
pub fn star_graph(leaves: usize) -> Graph {
    Graph::new(leaves + 1, (1..=leaves).map(|i| (0, i)), None, None).expect("star graph")
}

/// Erdos-Renyi style random simple graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = SplitMix64::new(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.next_f64() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges, None, None).expect("random graph")
}
