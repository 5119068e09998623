//! Synthetic graph generators: stochastic block models, Barabasi-Albert
//! preferential attachment, their combination (SBBAM: one BA graph per block
//! plus Bernoulli cross-block edges), and configuration-model rewiring.
//!
//! All generators are deterministic functions of (spec, seed).

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

/// Parameters of a stochastic block Barabasi-Albert model.
///
/// Block k is a BA graph of `block_sizes[k]` nodes grown with `ba_r[k]` edges
/// per step from a seed of `ba_n0[k]` nodes carrying `ba_r0[k]` random edges;
/// cross-block pairs are then connected independently with probability
/// `p_off`.
#[derive(Debug, Clone)]
pub struct SbbamSpec {
    pub block_sizes: Vec<usize>,
    pub ba_r: Vec<usize>,
    pub ba_n0: Vec<usize>,
    pub ba_r0: Vec<usize>,
    pub p_off: f64,
    pub seed: u64,
}

impl SbbamSpec {
    /// Spec with the seed parameters defaulted to N0_k = r_k and
    /// r0_k = r_k (r_k - 1) / 2 (a small near-clique seed per block).
    pub fn with_default_seeds(
        block_sizes: Vec<usize>,
        ba_r: Vec<usize>,
        p_off: f64,
        seed: u64,
    ) -> Self {
        let ba_n0 = ba_r.clone();
        let ba_r0 = ba_r.iter().map(|&r| r * r.saturating_sub(1) / 2).collect();
        Self {
            block_sizes,
            ba_r,
            ba_n0,
            ba_r0,
            p_off,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.block_sizes.len();
        if k == 0 {
            return Err(Error::invalid("SBBAM needs at least one block"));
        }
        if self.ba_r.len() != k || self.ba_n0.len() != k || self.ba_r0.len() != k {
            return Err(Error::invalid("per-block parameter lists must match block count"));
        }
        if !(0.0..=1.0).contains(&self.p_off) {
            return Err(Error::invalid(format!("p_off {} outside [0, 1]", self.p_off)));
        }
        for i in 0..k {
            if self.ba_r[i] > self.ba_n0[i] {
                return Err(Error::invalid(format!(
                    "block {i}: r = {} exceeds seed size N0 = {}",
                    self.ba_r[i], self.ba_n0[i]
                )));
            }
            let max_seed_edges = self.ba_n0[i] * self.ba_n0[i].saturating_sub(1) / 2;
            if self.ba_r0[i] > max_seed_edges {
                return Err(Error::invalid(format!(
                    "block {i}: r0 = {} exceeds seed capacity {max_seed_edges}",
                    self.ba_r0[i]
                )));
            }
            if self.block_sizes[i] < self.ba_n0[i] {
                return Err(Error::invalid(format!(
                    "block {i}: size {} smaller than seed N0 = {}",
                    self.block_sizes[i], self.ba_n0[i]
                )));
            }
        }
        Ok(())
    }
}

/// Stochastic block model: each unordered pair (i, j) becomes an edge with
/// probability `p[block(i)][block(j)]`. Labels are the block memberships.
pub fn gen_sbm(sizes: &[usize], p: &[Vec<f64>], seed: u64) -> Result<Graph> {
    let k = sizes.len();
    if p.len() != k || p.iter().any(|row| row.len() != k) {
        return Err(Error::shape(format!("{k}x{k} probability matrix"), format!("{}", p.len())));
    }
    for i in 0..k {
        for j in 0..k {
            if !(0.0..=1.0).contains(&p[i][j]) {
                return Err(Error::invalid(format!("probability p[{i}][{j}] outside [0, 1]")));
            }
            if (p[i][j] - p[j][i]).abs() > 0.0 {
                return Err(Error::invalid(format!("probability matrix asymmetric at ({i},{j})")));
            }
        }
    }
    let n: usize = sizes.iter().sum();
    let mut block = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        block.extend(std::iter::repeat(b).take(s));
    }
    let mut rng = SplitMix64::new(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.next_f64() < p[block[i]][block[j]] {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges, None, Some(block))
}

/// Barabasi-Albert graph: a seed of `n0` nodes with `r0` uniformly random
/// edges, then one node per step attaching to `r` distinct existing nodes
/// sampled without replacement with probability proportional to degree + 1
/// (the +1 keeps the distribution defined while seed nodes have degree 0).
/// The edge count is exactly r0 + r (n - n0) for every seed.
pub fn gen_ba(n: usize, n0: usize, r0: usize, r: usize, seed: u64) -> Result<Graph> {
    if n0 >= n {
        return Err(Error::invalid(format!("need N0 < N, got N0 = {n0}, N = {n}")));
    }
    if r > n0 {
        return Err(Error::invalid(format!("need r <= N0, got r = {r}, N0 = {n0}")));
    }
    let max_seed_edges = n0 * n0.saturating_sub(1) / 2;
    if r0 > max_seed_edges {
        return Err(Error::invalid(format!(
            "need r0 <= N0(N0-1)/2 = {max_seed_edges}, got r0 = {r0}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(r0 + r * (n - n0));
    let mut degree = vec![0usize; n];

    // Seed graph: r0 distinct pairs drawn uniformly from the n0 choose 2 pool.
    let pair_of = |idx: usize| -> (usize, usize) {
        // row-major unordered pair enumeration
        let mut i = 0usize;
        let mut offset = idx;
        loop {
            let row = n0 - 1 - i;
            if offset < row {
                return (i, i + 1 + offset);
            }
            offset -= row;
            i += 1;
        }
    };
    for idx in rng.sample_distinct(max_seed_edges, r0) {
        let (u, v) = pair_of(idx);
        degree[u] += 1;
        degree[v] += 1;
        edges.push((u, v));
    }

    // Growth: weighted sampling without replacement by deg + 1.
    let mut weights = vec![0.0f64; n];
    for t in n0..n {
        for (v, w) in weights.iter_mut().enumerate().take(t) {
            *w = (degree[v] + 1) as f64;
        }
        let mut total: f64 = weights[..t].iter().sum();
        let mut chosen = Vec::with_capacity(r);
        for _ in 0..r {
            let mut x = rng.next_f64() * total;
            let mut pick = t - 1;
            for (v, &w) in weights.iter().enumerate().take(t) {
                if w <= 0.0 {
                    continue;
                }
                if x < w {
                    pick = v;
                    break;
                }
                x -= w;
            }
            chosen.push(pick);
            total -= weights[pick];
            weights[pick] = 0.0;
        }
        for &v in &chosen {
            degree[v] += 1;
            degree[t] += 1;
            edges.push((v, t));
        }
    }
    Graph::new(n, edges, None, None)
}

/// Stochastic block Barabasi-Albert model: one BA graph per block plus
/// Bernoulli(p_off) cross-block edges. Labels are block ids.
pub fn gen_sbbam(spec: &SbbamSpec) -> Result<Graph> {
    spec.validate()?;
    let k = spec.block_sizes.len();
    let n: usize = spec.block_sizes.iter().sum();
    let mut rng = SplitMix64::new(spec.seed);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut labels = Vec::with_capacity(n);
    let mut offset = 0usize;
    let mut offsets = Vec::with_capacity(k);
    for (b, &size) in spec.block_sizes.iter().enumerate() {
        offsets.push(offset);
        labels.extend(std::iter::repeat(b).take(size));
        let mut block_rng = rng.split();
        let block = gen_ba(
            size,
            spec.ba_n0[b],
            spec.ba_r0[b],
            spec.ba_r[b],
            block_rng.next_u64(),
        )?;
        for &(u, v) in block.edges() {
            edges.push((u + offset, v + offset));
        }
        offset += size;
    }
    let mut cross_rng = rng.split();
    for bi in 0..k {
        for bj in (bi + 1)..k {
            for u in offsets[bi]..offsets[bi] + spec.block_sizes[bi] {
                for v in offsets[bj]..offsets[bj] + spec.block_sizes[bj] {
                    if cross_rng.next_f64() < spec.p_off {
                        edges.push((u, v));
                    }
                }
            }
        }
    }
    Graph::new(n, edges, None, Some(labels))
}

/// Configuration-model rewiring: each edge is broken into two stubs with
/// probability `r`, stubs are then paired uniformly at random. The
/// pre-simplification multigraph preserves the degree multiset exactly;
/// the returned simple graph drops any self-loops and parallel edges.
pub fn config_rewire(g: &Graph, r: f64, seed: u64) -> Result<Graph> {
    let multi = config_rewire_multigraph(g, r, seed)?;
    g.with_edges(multi.into_iter().filter(|&(u, v)| u != v))
}

/// The intermediate multigraph of [`config_rewire`] before simplification:
/// kept edges plus the random stub pairing. May contain self-loops and
/// parallel edges; its degree multiset equals the input's.
pub fn config_rewire_multigraph(g: &Graph, r: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("break probability {r} outside [0, 1]")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut kept = Vec::new();
    let mut stubs = Vec::new();
    for &(u, v) in g.edges() {
        if rng.next_f64() < r {
            stubs.push(u);
            stubs.push(v);
        } else {
            kept.push((u, v));
        }
    }
    // uniform pairing: shuffle and take consecutive pairs
    for i in (1..stubs.len()).rev() {
        let j = rng.next_below(i + 1);
        stubs.swap(i, j);
    }
    for pair in stubs.chunks_exact(2) {
        kept.push((pair[0], pair[1]));
    }
    Ok(kept)
}
