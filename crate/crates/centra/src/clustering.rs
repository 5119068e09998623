//! Spectral clustering on centrality GSOs: top eigenvectors of
//! `V^{e2} A V^{e3}` clustered row-wise by k-means, evaluated with the
//! adjusted mutual information and adjusted Rand index.

use crate::centrality::CentralityVector;
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::gso::spectrum_of_two_sided;
use crate::rng::SplitMix64;
use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub partition: Partition,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub seed: u64,
    /// Set when some cluster ended up empty and was re-seeded from the
    /// farthest point during Lloyd iterations.
    pub empty_cluster_reseeded: bool,
}

/// Lloyd's algorithm with k-means++ seeding; best of `n_init` restarts by
/// inertia (ties broken by lowest restart index). Empty clusters are
/// re-seeded from the point farthest from its assigned centroid.
pub fn kmeans(
    points: ArrayView2<f64>,
    c: usize,
    seed: u64,
    max_iter: usize,
    n_init: usize,
) -> Result<ClusterResult> {
    let n = points.nrows();
    if c == 0 || c > n {
        return Err(Error::invalid(format!("need 0 < C <= n, got C = {c}, n = {n}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut best: Option<ClusterResult> = None;
    for _ in 0..n_init.max(1) {
        let mut restart_rng = rng.split();
        let run = kmeans_single(points, c, &mut restart_rng, max_iter, seed)?;
        let better = match &best {
            None => true,
            Some(b) => run.inertia < b.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

fn squared_distance(points: ArrayView2<f64>, i: usize, centroid: &[f64]) -> f64 {
    let row = points.row(i);
    row.iter()
        .zip(centroid)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn kmeans_single(
    points: ArrayView2<f64>,
    c: usize,
    rng: &mut SplitMix64,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterResult> {
    let n = points.nrows();
    let d = points.ncols();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(c);
    centroids.push(points.row(rng.next_below(n)).to_vec());
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points, i, &centroids[0]))
        .collect();
    while centroids.len() < c {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            rng.next_below(n)
        } else {
            let mut x = rng.next_f64() * total;
            let mut pick = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        };
        centroids.push(points.row(next).to_vec());
        for i in 0..n {
            let d2 = squared_distance(points, i, centroids.last().unwrap());
            if d2 < dist2[i] {
                dist2[i] = d2;
            }
        }
    }

    let mut assign = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut reseeded = false;
    for _ in 0..max_iter {
        // assignment step
        let mut new_inertia = 0.0;
        for i in 0..n {
            let mut best_k = 0;
            let mut best_d = f64::INFINITY;
            for (k, cent) in centroids.iter().enumerate() {
                let d2 = squared_distance(points, i, cent);
                if d2 < best_d {
                    best_d = d2;
                    best_k = k;
                }
            }
            assign[i] = best_k;
            new_inertia += best_d;
        }
        // update step
        let mut counts = vec![0usize; c];
        let mut sums = vec![vec![0.0; d]; c];
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums[assign[i]][j] += points[[i, j]];
            }
        }
        for k in 0..c {
            if counts[k] == 0 {
                // re-seed from the point farthest from its centroid
                reseeded = true;
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(points, a, &centroids[assign[a]]);
                        let db = squared_distance(points, b, &centroids[assign[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[k] = points.row(far).to_vec();
            } else {
                for j in 0..d {
                    centroids[k][j] = sums[k][j] / counts[k] as f64;
                }
            }
        }
        // Lloyd iterations never increase the objective.
        debug_assert!(new_inertia <= inertia + 1e-9 * inertia.abs().max(1.0));
        let shift = (inertia - new_inertia).abs();
        inertia = new_inertia;
        if shift <= 1e-6 {
            break;
        }
    }
    // final assignment pass so inertia matches the returned centroids
    let mut final_inertia = 0.0;
    for i in 0..n {
        let mut best_k = 0;
        let mut best_d = f64::INFINITY;
        for (k, cent) in centroids.iter().enumerate() {
            let d2 = squared_distance(points, i, cent);
            if d2 < best_d {
                best_d = d2;
                best_k = k;
            }
        }
        assign[i] = best_k;
        final_inertia += best_d;
    }
    let mut cent = Array2::zeros((c, d));
    for k in 0..c {
        for j in 0..d {
            cent[[k, j]] = centroids[k][j];
        }
    }
    Ok(ClusterResult {
        partition: Partition(assign),
        centroids: cent,
        inertia: final_inertia,
        seed,
        empty_cluster_reseeded: reseeded,
    })
}

/// Spectral clustering per the CGSO recipe: take the eigenvectors of
/// `V^{e2} A V^{e3}` for the C algebraically largest eigenvalues and k-means
/// the rows. Rows are not normalized unless `normalize_rows` is set.
pub fn spectral_cluster(
    g: &Graph,
    v: &CentralityVector,
    e2: f64,
    e3: f64,
    c: usize,
    seed: u64,
    normalize_rows: bool,
) -> Result<ClusterResult> {
    let n = g.n();
    if c == 0 || c > n {
        return Err(Error::invalid(format!("need 0 < C <= n, got C = {c}, n = {n}")));
    }
    let spectrum = spectrum_of_two_sided(g, v, e2, e3)?;
    let mut u = Array2::zeros((n, c));
    for k in 0..c {
        for i in 0..n {
            u[[i, k]] = spectrum.eigenvectors[[i, k]];
        }
    }
    if normalize_rows {
        for mut row in u.rows_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    kmeans(u.view(), c, seed, 300, 10)
}

fn contingency(p1: &Partition, p2: &Partition) -> Result<(Vec<Vec<usize>>, Vec<usize>, Vec<usize>)> {
    if p1.len() != p2.len() {
        return Err(Error::shape(format!("{} entries", p1.len()), format!("{}", p2.len())));
    }
    let c1 = p1.num_clusters();
    let c2 = p2.num_clusters();
    let mut table = vec![vec![0usize; c2]; c1];
    for (&a, &b) in p1.as_slice().iter().zip(p2.as_slice()) {
        table[a][b] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..c2).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok((table, rows, cols))
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Adjusted mutual information with the hypergeometric expected-MI correction
/// and arithmetic-mean normalization:
/// `(MI - E[MI]) / (mean(H1, H2) - E[MI])`.
pub fn ami(p1: &Partition, p2: &Partition) -> Result<f64> {
    let (table, rows, cols) = contingency(p1, p2)?;
    let n = p1.len();
    if n == 0 {
        return Err(Error::invalid("empty partitions"));
    }
    let h1 = entropy(&rows, n);
    let h2 = entropy(&cols, n);
    if h1 == 0.0 && h2 == 0.0 {
        // both partitions trivial: perfectly aligned by convention
        return Ok(1.0);
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij_f = nij as f64;
                mi += nij_f / nf * ((nf * nij_f) / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mi(&rows, &cols, n);
    let denom = 0.5 * (h1 + h2) - emi;
    if denom.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// E[MI] under the permutation model: sum over cells and over the
/// hypergeometric support of nij, with log-factorials for stability.
fn expected_mi(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    // ln k! table
    let mut lnfac = vec![0.0f64; n + 1];
    for k in 1..=n {
        lnfac[k] = lnfac[k - 1] + (k as f64).ln();
    }
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = if a + b > n { (a + b - n).max(1) } else { 1 };
            let hi = a.min(b);
            for nij in lo..=hi {
                let nij_f = nij as f64;
                let term = nij_f / nf * ((nf * nij_f) / (a as f64 * b as f64)).ln();
                // hypergeometric pmf in ln-space
                let ln_p = lnfac[a] + lnfac[b] + lnfac[n - a] + lnfac[n - b]
                    - lnfac[n]
                    - lnfac[nij]
                    - lnfac[a - nij]
                    - lnfac[b - nij]
                    - lnfac[(n + nij) - a - b];
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

/// Adjusted Rand index, pair-counting form.
pub fn ari(p1: &Partition, p2: &Partition) -> Result<f64> {
    let (table, rows, cols) = contingency(p1, p2)?;
    let n = p1.len();
    if n == 0 {
        return Err(Error::invalid("empty partitions"));
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let sum_ij: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_a: f64 = rows.iter().map(|&x| choose2(x)).sum();
    let sum_b: f64 = cols.iter().map(|&x| choose2(x)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        // degenerate: identical trivial partitions score 1, otherwise 0
        return Ok(if sum_ij == max_index { 1.0 } else { 0.0 });
    }
    Ok((sum_ij - expected) / (max_index - expected))
}
