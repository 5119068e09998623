//! Node centrality metrics and the diagonal centrality matrix used by the
//! centrality graph shift operators: degree, k-core numbers via bucket
//! peeling, PageRank by damped power iteration, and walk counts A^l 1.

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Which centrality fills the diagonal matrix V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CentralityKind {
    Degree,
    KCore,
    /// PageRank with damping `alpha`; the diagonal entry is (1 - PR(i))^-1.
    Pagerank { alpha: f64 },
    /// Walks of length `l` starting at each node, (A^l 1)_i.
    Walk { l: usize },
}

impl CentralityKind {
    /// PageRank at the conventional damping 0.85.
    pub fn pagerank_default() -> Self {
        CentralityKind::Pagerank { alpha: 0.85 }
    }

    /// Walk counts at l = 2, the length used for all experiments here.
    pub fn walk_default() -> Self {
        CentralityKind::Walk { l: 2 }
    }
}

/// The diagonal of the centrality matrix V, with a flag recording whether any
/// entry had to be clamped away from zero.
#[derive(Debug, Clone)]
pub struct CentralityVector {
    pub kind: CentralityKind,
    pub values: Vec<f64>,
    pub clamped: bool,
}

impl CentralityVector {
    /// Construct directly from known-positive values (no clamping applied).
    pub fn from_values(kind: CentralityKind, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("centrality values must be finite and positive"));
        }
        Ok(Self {
            kind,
            values,
            clamped: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Core numbers by iterative pruning: core(i) is the largest k such that node
/// i survives repeated removal of vertices with degree < k. Bucket-based
/// peeling, O(n + m).
pub fn kcore(g: &Graph) -> Vec<usize> {
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let mut degree = g.degrees();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    // bucket[d] holds vertices of current degree d
    let mut bucket: Vec<Vec<usize>> = vec![Vec::new(); max_deg + 1];
    for (v, &d) in degree.iter().enumerate() {
        bucket[d].push(v);
    }
    let mut core = vec![0usize; n];
    let mut removed = vec![false; n];
    let mut k = 0usize;
    for _ in 0..n {
        // pop the current-minimum-degree vertex, skipping stale entries
        // (a vertex is re-pushed every time its degree drops)
        let mut d = 0usize;
        let v = loop {
            while bucket[d].is_empty() {
                d += 1;
            }
            let v = bucket[d].pop().expect("non-empty bucket");
            if !removed[v] && degree[v] == d {
                break v;
            }
        };
        k = k.max(d);
        core[v] = k;
        removed[v] = true;
        for &w in g.neighbors(v) {
            if !removed[w] {
                degree[w] -= 1;
                bucket[degree[w]].push(w);
            }
        }
    }
    core
}

/// PageRank scores by damped power iteration with the uniform-teleport
/// handling of dangling (degree-0) nodes. Undirected edges act as two
/// opposite arcs. Stops when the L1 step residual drops to `tol`.
pub fn pagerank(g: &Graph, alpha: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("damping {alpha} outside [0, 1]")));
    }
    if tol <= 0.0 {
        return Err(Error::invalid("tol must be positive"));
    }
    let n = g.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let deg = g.degrees();
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = vec![(1.0 - alpha) / n as f64; n];
        let mut dangling = 0.0;
        for v in 0..n {
            if deg[v] == 0 {
                dangling += pi[v];
            }
        }
        let dangling_share = alpha * dangling / n as f64;
        for x in next.iter_mut() {
            *x += dangling_share;
        }
        for v in 0..n {
            if deg[v] > 0 {
                let share = alpha * pi[v] / deg[v] as f64;
                for &w in g.neighbors(v) {
                    next[w] += share;
                }
            }
        }
        residual = pi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
        pi = next;
        if residual <= tol {
            // keep the mass exactly normalized
            let s: f64 = pi.iter().sum();
            for x in pi.iter_mut() {
                *x /= s;
            }
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual,
    })
}

/// Number of walks of length `l` from each node, (A^l 1)_i, by repeated
/// sparse matvec. No self-loops are added.
pub fn walk_count(g: &Graph, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::invalid("walk length must be >= 1"));
    }
    let mut w = vec![1.0; g.n()];
    for _ in 0..l {
        w = g.adj_matvec(&w);
    }
    Ok(w)
}

/// Diagonal of the centrality matrix V for the chosen kind, with the PageRank
/// transform (1 - PR)^-1 applied where relevant. Entries below `clamp`
/// are raised to it (flagged); with `clamp = None` any non-positive entry is
/// an error, since V must be invertible.
pub fn centrality_matrix(
    g: &Graph,
    kind: CentralityKind,
    clamp: Option<f64>,
) -> Result<CentralityVector> {
    if let Some(eps) = clamp {
        if eps <= 0.0 {
            return Err(Error::invalid("clamp_eps must be positive"));
        }
    }
    let raw: Vec<f64> = match kind {
        CentralityKind::Degree => g.degrees().iter().map(|&d| d as f64).collect(),
        CentralityKind::KCore => kcore(g).iter().map(|&c| c as f64).collect(),
        CentralityKind::Pagerank { alpha } => {
            let pr = pagerank(g, alpha, 1e-12, 10_000)?;
            pr.iter().map(|&p| 1.0 / (1.0 - p)).collect()
        }
        CentralityKind::Walk { l } => walk_count(g, l)?,
    };
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite centrality value".into()));
    }
    let mut clamped = false;
    let values: Vec<f64> = match clamp {
        Some(eps) => raw
            .iter()
            .map(|&v| {
                if v < eps {
                    clamped = true;
                    eps
                } else {
                    v
                }
            })
            .collect(),
        None => {
            if raw.iter().any(|&v| v <= 0.0) {
                return Err(Error::invalid(
                    "zero centrality entry; enable clamping to proceed",
                ));
            }
            raw
        }
    };
    Ok(CentralityVector {
        kind,
        values,
        clamped,
    })
}
