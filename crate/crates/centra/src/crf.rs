//! Post-hoc CRF smoothing of model predictions: sample neighbors of the input
//! in structure or feature space, then run mean-field coordinate-ascent
//! updates bottom-up over a depth-K tree of sampled neighbors,
//!
//! `Y~_a = (sigma Y_a + (1 - sigma) sum_b g_ab Y~_b) / (sigma + (1 - sigma) sum_b g_ab)`,
//!
//! which keeps every smoothed row a convex combination of raw predictions.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;
use ndarray::{Array2, ArrayView2};

/// Neighborhood space for CRF sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrfSpace {
    /// Flip up to `radius` unordered node pairs; features untouched.
    Structure { radius: usize },
    /// Per-row L_p ball feature perturbations; structure untouched.
    Feature { eps: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Similarity {
    /// Cosine of the flattened feature matrices, clamped to [0, 1] so the
    /// update stays convex.
    Cosine,
    /// Binomial prior C(r, d) / 2^r of the sampled Hamming distance.
    BinomialPrior,
    /// g == 1 (plain randomized smoothing when sigma = 0, K = 1).
    Uniform,
}

#[derive(Debug, Clone)]
pub struct CrfConfig {
    /// Mixing weight of the base prediction, in [0, 1].
    pub sigma: f64,
    /// Mean-field iterations (tree depth).
    pub k: usize,
    /// Sampled neighbors per node.
    pub l: usize,
    pub space: CrfSpace,
    pub similarity: Similarity,
    pub seed: u64,
    /// Hard cap on L^K before any model call.
    pub budget: usize,
}

impl CrfConfig {
    /// Defaults: sigma 0.9, two iterations, five neighbors per node.
    pub fn new(space: CrfSpace, seed: u64) -> Self {
        Self {
            sigma: 0.9,
            k: 2,
            l: 5,
            space,
            similarity: match space {
                CrfSpace::Structure { .. } => Similarity::BinomialPrior,
                CrfSpace::Feature { .. } => Similarity::Cosine,
            },
            seed,
            budget: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::invalid(format!("sigma {} outside [0, 1]", self.sigma)));
        }
        if self.l == 0 {
            return Err(Error::invalid("need at least one neighbor per node"));
        }
        if let CrfSpace::Feature { eps, p } = self.space {
            if eps <= 0.0 || p <= 0.0 {
                return Err(Error::invalid("feature space needs eps > 0 and p > 0"));
            }
        }
        Ok(())
    }
}

/// Draw d ~ Binomial(r, 1/2), i.e. the prior p(d) = C(r, d) / 2^r.
fn sample_binomial_half(r: usize, rng: &mut SplitMix64) -> usize {
    let mut d = 0usize;
    let mut remaining = r;
    // count set bits of 64-bit words for speed
    while remaining >= 64 {
        d += rng.next_u64().count_ones() as usize;
        remaining -= 64;
    }
    if remaining > 0 {
        let mask = if remaining == 64 { u64::MAX } else { (1u64 << remaining) - 1 };
        d += (rng.next_u64() & mask).count_ones() as usize;
    }
    d
}

fn pair_from_index(idx: usize, n: usize) -> (usize, usize) {
    // row-major enumeration of unordered off-diagonal pairs
    let mut i = 0usize;
    let mut offset = idx;
    loop {
        let row = n - 1 - i;
        if offset < row {
            return (i, i + 1 + offset);
        }
        offset -= row;
        i += 1;
    }
}

/// Sample `l` structural neighbors: each draws a Hamming distance d from the
/// Binomial(r, 1/2) prior and flips exactly d distinct unordered pairs
/// (edge <-> non-edge). Features and node count are untouched.
pub fn sample_structural_neighbors(
    g: &Graph,
    radius: usize,
    l: usize,
    seed: u64,
) -> Result<Vec<(Graph, usize)>> {
    let n = g.n();
    let total_pairs = n * n.saturating_sub(1) / 2;
    if radius > total_pairs {
        return Err(Error::invalid(format!(
            "radius {radius} exceeds the {total_pairs} available pairs"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(l);
    for _ in 0..l {
        let d = sample_binomial_half(radius, &mut rng);
        if d > total_pairs {
            return Err(Error::invalid("sampled distance exceeds available pairs"));
        }
        let flips = rng.sample_distinct(total_pairs, d);
        let mut edges: std::collections::BTreeSet<(usize, usize)> =
            g.edges().iter().copied().collect();
        for idx in flips {
            let pair = pair_from_index(idx, n);
            if !edges.remove(&pair) {
                edges.insert(pair);
            }
        }
        let neighbor = g.with_edges(edges)?;
        out.push((neighbor, d));
    }
    Ok(out)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let lnfac = |m: usize| -> f64 { (1..=m).map(|x| (x as f64).ln()).sum() };
    lnfac(n) - lnfac(k) - lnfac(n - k)
}

/// Binomial prior C(r, d) / 2^r.
fn binomial_prior(r: usize, d: usize) -> f64 {
    if d > r {
        return 0.0;
    }
    if r == 0 {
        return 1.0;
    }
    (ln_choose(r, d) - r as f64 * (2.0f64).ln()).exp()
}

/// Cosine similarity of flattened matrices, clamped to [0, 1].
fn cosine_clamped(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Smooth a model's predictions by recursive mean-field over sampled
/// neighbors. The model is any closure from (graph, features) to prediction
/// rows; it runs once per tree node (L^K leaves dominate).
pub fn crf_smooth(
    model: &dyn Fn(&Graph, ArrayView2<f64>) -> Result<Array2<f64>>,
    g: &Graph,
    x: ArrayView2<f64>,
    cfg: &CrfConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let leaves = (cfg.l as f64).powi(cfg.k as i32);
    if leaves > cfg.budget as f64 {
        return Err(Error::invalid(format!(
            "L^K = {leaves} exceeds the evaluation budget {}",
            cfg.budget
        )));
    }
    if cfg.sigma == 1.0 || cfg.k == 0 {
        // degenerate: the update returns the base prediction bit-exactly
        return model(g, x);
    }
    let mut rng = SplitMix64::new(cfg.seed);
    smooth_rec(model, g, x, cfg, cfg.k, &mut rng)
}

fn smooth_rec(
    model: &dyn Fn(&Graph, ArrayView2<f64>) -> Result<Array2<f64>>,
    g: &Graph,
    x: ArrayView2<f64>,
    cfg: &CrfConfig,
    depth: usize,
    rng: &mut SplitMix64,
) -> Result<Array2<f64>> {
    let base = model(g, x)?;
    if depth == 0 {
        return Ok(base);
    }
    // sample this node's neighbors
    let mut weighted_sum = Array2::<f64>::zeros(base.dim());
    let mut weight_total = 0.0;
    match cfg.space {
        CrfSpace::Structure { radius } => {
            let mut sample_rng = rng.split();
            let neighbors =
                sample_structural_neighbors(g, radius, cfg.l, sample_rng.next_u64())?;
            for (neighbor, d) in neighbors {
                let sim = match cfg.similarity {
                    Similarity::BinomialPrior => binomial_prior(radius, d),
                    Similarity::Cosine => cosine_clamped(x, x), // features unchanged
                    Similarity::Uniform => 1.0,
                };
                let mut child_rng = rng.split();
                let smoothed = smooth_rec(model, &neighbor, x, cfg, depth - 1, &mut child_rng)?;
                weighted_sum.scaled_add(sim, &smoothed);
                weight_total += sim;
            }
        }
        CrfSpace::Feature { eps, p } => {
            for _ in 0..cfg.l {
                let mut sample_rng = rng.split();
                let xt = crate::robustness::sample_feature_perturbation(
                    x,
                    eps,
                    p,
                    sample_rng.next_u64(),
                )?;
                let sim = match cfg.similarity {
                    Similarity::Cosine => cosine_clamped(x, xt.view()),
                    Similarity::BinomialPrior => {
                        return Err(Error::invalid(
                            "binomial prior similarity needs the structure space",
                        ))
                    }
                    Similarity::Uniform => 1.0,
                };
                let mut child_rng = rng.split();
                let smoothed = smooth_rec(model, g, xt.view(), cfg, depth - 1, &mut child_rng)?;
                weighted_sum.scaled_add(sim, &smoothed);
                weight_total += sim;
            }
        }
    }
    let sigma = cfg.sigma;
    let denom = sigma + (1.0 - sigma) * weight_total;
    if denom <= 0.0 {
        // all similarities zero with sigma = 0: fall back to the base
        return Ok(base);
    }
    let mut out = base.mapv(|v| sigma * v);
    out.scaled_add(1.0 - sigma, &weighted_sum);
    out.mapv_inplace(|v| v / denom);
    Ok(out)
}

/// Counting lower bound on the number of graphs within Hamming radius r:
/// `2^{H(eps) n(n+1)/2} / sqrt(4 n (n+1) eps (1 - eps))` with
/// `eps = 2r / (n(n+1))`. Errors at eps in {0, 1} where the denominator
/// vanishes.
pub fn neighborhood_lower_bound(n: usize, r: usize) -> Result<f64> {
    let pairs = n * (n + 1) / 2;
    if r > pairs {
        return Err(Error::invalid(format!("r = {r} exceeds n(n+1)/2 = {pairs}")));
    }
    let eps = 2.0 * r as f64 / (n as f64 * (n + 1) as f64);
    if eps <= 0.0 || eps >= 1.0 {
        return Err(Error::invalid(format!("entropy bound undefined at eps = {eps}")));
    }
    let h = -eps * eps.log2() - (1.0 - eps) * (1.0 - eps).log2();
    let numerator = (h * pairs as f64).exp2();
    let denominator = (4.0 * n as f64 * (n + 1) as f64 * eps * (1.0 - eps)).sqrt();
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, random_graph, NormKind};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn softmax_model() -> impl Fn(&Graph, ArrayView2<f64>) -> Result<Array2<f64>> {
        |g: &Graph, x: ArrayView2<f64>| {
            // toy prediction: softmax of (degree + mean feature) per node
            let n = g.n();
            let mut out = Array2::<f64>::zeros((n, 2));
            for i in 0..n {
                let s = g.degree(i) as f64 + x.row(i).sum();
                let p = 1.0 / (1.0 + (-s).exp());
                out[[i, 0]] = p;
                out[[i, 1]] = 1.0 - p;
            }
            Ok(out)
        }
    }

    #[test]
    fn zero_radius_yields_identical_neighbors() {
        let g = random_graph(7, 0.4, 1);
        let neighbors = sample_structural_neighbors(&g, 0, 6, 3).unwrap();
        for (ng, d) in neighbors {
            assert_eq!(d, 0);
            assert_eq!(ng.edges(), g.edges());
        }
    }

    #[test]
    fn sampled_distance_is_exact_hamming() {
        let g = random_graph(8, 0.35, 2);
        let neighbors = sample_structural_neighbors(&g, 9, 20, 7).unwrap();
        for (ng, d) in neighbors {
            let dist =
                crate::graph::graph_distance(&g, &ng, 1.0, 0.0, NormKind::Hamming).unwrap();
            assert_abs_diff_eq!(dist, d as f64);
            assert_eq!(ng.n(), g.n());
        }
    }

    #[test]
    fn binomial_distance_mean() {
        let g = complete_graph(8);
        let mut total = 0.0;
        let samples = 100_000usize;
        // draw distances directly through the sampler's prior
        let mut rng = SplitMix64::new(11);
        for _ in 0..samples {
            total += sample_binomial_half(10, &mut rng) as f64;
        }
        let mean = total / samples as f64;
        assert!((mean - 5.0).abs() <= 0.05, "mean {mean}");
        let _ = g;
    }

    #[test]
    fn sigma_one_returns_base_bit_exact() {
        let g = random_graph(6, 0.5, 5);
        let x = Array2::from_elem((6, 2), 0.3);
        let model = softmax_model();
        let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 4 }, 9);
        cfg.sigma = 1.0;
        let smoothed = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
        let base = model(&g, x.view()).unwrap();
        assert_eq!(smoothed, base);
    }

    #[test]
    fn k_zero_returns_base() {
        let g = random_graph(6, 0.5, 5);
        let x = Array2::from_elem((6, 2), -0.1);
        let model = softmax_model();
        let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 4 }, 9);
        cfg.k = 0;
        let smoothed = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
        assert_eq!(smoothed, model(&g, x.view()).unwrap());
    }

    #[test]
    fn randomized_smoothing_degeneracy_is_neighbor_mean() {
        let g = random_graph(6, 0.5, 8);
        let x = Array2::from_elem((6, 2), 0.2);
        let model = softmax_model();
        let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 5 }, 21);
        cfg.sigma = 0.0;
        cfg.k = 1;
        cfg.similarity = Similarity::Uniform;
        let smoothed = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
        // replay the same child sampling to compute the mean directly
        let mut rng = SplitMix64::new(21);
        let mut sample_rng = rng.split();
        let neighbors = sample_structural_neighbors(&g, 5, cfg.l, sample_rng.next_u64()).unwrap();
        let mut mean = Array2::<f64>::zeros((6, 2));
        for (ng, _) in &neighbors {
            mean += &model(ng, x.view()).unwrap();
        }
        mean.mapv_inplace(|v| v / cfg.l as f64);
        for (a, b) in smoothed.iter().zip(mean.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothed_rows_stay_on_simplex() {
        let g = random_graph(6, 0.5, 12);
        let x = Array2::from_elem((6, 2), 0.05);
        let model = softmax_model();
        for sigma in [0.0, 0.3, 0.9] {
            let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 6 }, 33);
            cfg.sigma = sigma;
            cfg.l = 3;
            let smoothed = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
            for i in 0..6 {
                let row_sum: f64 = smoothed.row(i).sum();
                assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-10);
                assert!(smoothed.row(i).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = random_graph(6, 0.5, 12);
        let x = Array2::from_elem((6, 2), 0.05);
        let model = softmax_model();
        let cfg = CrfConfig::new(CrfSpace::Feature { eps: 0.5, p: 2.0 }, 77);
        let a = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
        let b = crf_smooth(&model, &g, x.view(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_rejected_before_model_calls() {
        let g = complete_graph(4);
        let x = Array2::<f64>::zeros((4, 1));
        let calls = std::cell::Cell::new(0usize);
        let model = |_: &Graph, _: ArrayView2<f64>| -> Result<Array2<f64>> {
            calls.set(calls.get() + 1);
            Ok(Array2::zeros((4, 2)))
        };
        let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 2 }, 0);
        cfg.l = 100;
        cfg.k = 4;
        cfg.budget = 1000;
        assert!(crf_smooth(&model, &g, x.view(), &cfg).is_err());
        assert_eq!(calls.get(), 0);
    }

    #[test]
    fn lower_bound_small_case() {
        // n = 3, r = 3: eps = 0.5, H = 1 -> 2^6 / sqrt(12)
        let bound = neighborhood_lower_bound(3, 3).unwrap();
        assert_abs_diff_eq!(bound, 64.0 / 12.0f64.sqrt(), epsilon = 1e-10);
        // true neighbor count at radius 3 over 6 flippable pairs
        let count: u64 = (0..=3).map(|d| binomial_u64(6, d)).sum();
        assert_eq!(count, 42);
        assert!(bound <= count as f64);
    }

    fn binomial_u64(n: u64, k: u64) -> u64 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut num = 1u64;
        let mut den = 1u64;
        for i in 0..k {
            num *= n - i;
            den *= i + 1;
        }
        num / den
    }

    #[test]
    fn lower_bound_below_exhaustive_count_small_n() {
        for n in 1..=6usize {
            let pairs = n * (n + 1) / 2;
            for r in 1..pairs {
                let bound = neighborhood_lower_bound(n, r).unwrap();
                let count: u64 = (0..=r as u64).map(|d| binomial_u64(pairs as u64, d)).sum();
                assert!(
                    bound <= count as f64,
                    "n = {n}, r = {r}: {bound} > {count}"
                );
            }
        }
    }

    #[test]
    fn lower_bound_monotone_below_midpoint() {
        let n = 6usize;
        let mid = n * (n + 1) / 4;
        let mut last = 0.0;
        for r in 1..mid {
            let b = neighborhood_lower_bound(n, r).unwrap();
            assert!(b > last, "r = {r}");
            last = b;
        }
    }

    #[test]
    fn lower_bound_rejects_degenerate_eps() {
        assert!(neighborhood_lower_bound(3, 0).is_err());
        assert!(neighborhood_lower_bound(3, 6).is_err());
    }
}
