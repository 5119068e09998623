//! Feature-attack robustness machinery: Bjorck weight orthonormalization
//! (with gradients through the iteration), normalized walk sums, the
//! closed-form expected-vulnerability bounds, stratified L_p-ball feature
//! perturbation sampling, random and PGD feature attacks, and the Monte Carlo
//! expected-vulnerability estimator.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::nn::{self, Model};
use crate::rng::SplitMix64;
use ndarray::{Array2, ArrayView2};
use serde::Serialize;

/// Budget/threshold configuration of the vulnerability estimator.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessConfig {
    /// Attack budget: max per-row L_p perturbation norm.
    pub eps: f64,
    /// Output-distance threshold (after the 2 sqrt(n) rescale).
    pub sigma: f64,
    /// Row-norm order; `f64::INFINITY` selects the max-norm sampler.
    pub p: f64,
    /// Perturbation samples per input.
    pub l_max: usize,
    pub seed: u64,
}

impl RobustnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.p <= 0.0 {
            return Err(Error::invalid("p must be positive (or infinity)"));
        }
        if self.l_max == 0 {
            return Err(Error::invalid("l_max must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BjorckConfig {
    /// Truncation order of the series factor (>= 1).
    pub p_order: usize,
    pub iterations: usize,
    /// Divide by the spectral norm first so the convergence condition
    /// ||W^T W - I|| <= 1 holds regardless of the input scale.
    pub prescale: bool,
}

impl Default for BjorckConfig {
    fn default() -> Self {
        Self {
            p_order: 1,
            iterations: 15,
            prescale: true,
        }
    }
}

/// Taylor coefficients of (1 - q)^{-1/2}: c_0 = 1, c_j = c_{j-1} (2j-1)/(2j).
fn bjorck_coefficients(p: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for j in 1..=p {
        let prev = c[j - 1];
        c.push(prev * (2.0 * j as f64 - 1.0) / (2.0 * j as f64));
    }
    c
}

fn bjorck_iterate(w: &Array2<f64>, coeff: &[f64]) -> Array2<f64> {
    let c = w.ncols();
    let q = Array2::<f64>::eye(c) - w.t().dot(w);
    // S = sum_j c_j Q^j
    let mut s = Array2::<f64>::eye(c) * coeff[0];
    let mut power = Array2::<f64>::eye(c);
    for &cj in &coeff[1..] {
        power = power.dot(&q);
        s.scaled_add(cj, &power);
    }
    w.dot(&s)
}

/// Orthonormalize by the truncated-series fixed-point iteration
/// `W_{k+1} = W_k (c_0 I + c_1 Q_k + ... + c_p Q_k^p)` with
/// `Q_k = I - W_k^T W_k`. Errors when the residual `||Q_k||_F` grows, which
/// signals the convergence condition was violated.
pub fn bjorck_orthonormalize(w: ArrayView2<f64>, cfg: &BjorckConfig) -> Result<Array2<f64>> {
    if cfg.p_order < 1 {
        return Err(Error::invalid("p_order must be >= 1"));
    }
    let mut cur = w.to_owned();
    if cfg.prescale {
        let s = linalg::norm_spectral(cur.view());
        if s > 1e-300 {
            cur.mapv_inplace(|x| x / s);
        }
    }
    let coeff = bjorck_coefficients(cfg.p_order);
    let c = cur.ncols();
    let mut last_residual = f64::INFINITY;
    for k in 0..cfg.iterations {
        let q = Array2::<f64>::eye(c) - cur.t().dot(&cur);
        let residual = linalg::norm_fro(q.view());
        if residual > last_residual * (1.0 + 1e-9) && residual > 1e-10 {
            return Err(Error::NoConvergence {
                iters: k,
                residual,
            });
        }
        last_residual = residual;
        cur = bjorck_iterate(&cur, &coeff);
    }
    Ok(cur)
}

/// Adjoint of [`bjorck_orthonormalize`]: pull the gradient on the projected
/// weight back to the raw weight. The iteration is a matrix polynomial, so
/// this replays it storing iterates and applies the exact chain rule; the
/// prescale factor is treated as a constant (stop-gradient).
pub fn bjorck_backward(
    w: ArrayView2<f64>,
    cfg: &BjorckConfig,
    grad_out: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let mut cur = w.to_owned();
    let mut scale = 1.0;
    if cfg.prescale {
        let s = linalg::norm_spectral(cur.view());
        if s > 1e-300 {
            cur.mapv_inplace(|x| x / s);
            scale = s;
        }
    }
    let coeff = bjorck_coefficients(cfg.p_order);
    let mut iterates = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        iterates.push(cur.clone());
        cur = bjorck_iterate(&cur, &coeff);
    }
    let c = w.ncols();
    let mut g = grad_out.to_owned();
    for wk in iterates.iter().rev() {
        let q = Array2::<f64>::eye(c) - wk.t().dot(wk);
        // powers of Q up to p-1 (needed inside the product-rule sum)
        let mut q_pows = vec![Array2::<f64>::eye(c)];
        for _ in 1..coeff.len() {
            let next = q_pows.last().unwrap().dot(&q);
            q_pows.push(next);
        }
        // S = sum_j c_j Q^j
        let mut s = Array2::<f64>::zeros((c, c));
        for (j, &cj) in coeff.iter().enumerate() {
            s.scaled_add(cj, &q_pows[j]);
        }
        let t = wk.t().dot(&g);
        // G_Q = sum_{j>=1} c_j sum_{k=0}^{j-1} Q^k T Q^{j-1-k}
        let mut g_q = Array2::<f64>::zeros((c, c));
        for (j, &cj) in coeff.iter().enumerate().skip(1) {
            for k in 0..j {
                let term = q_pows[k].dot(&t).dot(&q_pows[j - 1 - k]);
                g_q.scaled_add(cj, &term);
            }
        }
        let sym = &g_q + &g_q.t();
        g = g.dot(&s.t()) - wk.dot(&sym);
    }
    if cfg.prescale && scale > 1e-300 {
        g.mapv_inplace(|x| x / scale);
    }
    Ok(g)
}

/// Normalized walk sums `w_hat = Ahat^{L-1} 1` on the self-loop-augmented
/// symmetric normalization, plus their maximum `w_hat_G`.
#[derive(Debug, Clone)]
pub struct WalkSums {
    pub per_node: Vec<f64>,
    pub max: f64,
}

pub fn normalized_walk_sums(g: &Graph, layers: usize) -> Result<WalkSums> {
    if layers == 0 {
        return Err(Error::invalid("walk sums need L >= 1"));
    }
    let n = g.n();
    let scale: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / (d as f64 + 1.0).sqrt())
        .collect();
    let mut w = vec![1.0f64; n];
    for _ in 0..(layers - 1) {
        let mut next = vec![0.0f64; n];
        for i in 0..n {
            next[i] += scale[i] * scale[i] * w[i];
        }
        for &(u, v) in g.edges() {
            let f = scale[u] * scale[v];
            next[u] += f * w[v];
            next[v] += f * w[u];
        }
        w = next;
    }
    let max = w.iter().copied().fold(0.0f64, f64::max);
    Ok(WalkSums { per_node: w, max })
}

/// Which closed-form vulnerability bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    /// Feature attacks, d_1 output distance: prod ||W||_1 eps (sum w_hat) / sigma.
    GcnFeatD1,
    /// Feature attacks, d_inf output distance: prod ||W||_inf eps w_hat_G / sigma.
    GcnFeatDinf,
    /// Structural attacks: prod ||W||_2 ||X||_2 eps (1 + L prod ||W||_2) / sigma.
    GcnStruct,
    /// GIN feature attacks: prod ||W||_inf (B L Delta_G + eps) / sigma.
    GinFeat,
    /// Simultaneous structural+feature attacks:
    /// prod ||W||_2 ((sum w_hat)^2 + B (1 + L prod ||W||_2)) eps / sigma.
    GcnCombined,
}

/// Evaluate the closed-form robustness bound gamma for the model's effective
/// (projected) weights. `x` supplies ||X||_2 for the kinds that need it.
pub fn robustness_bound(
    model: &Model,
    g: &Graph,
    x: Option<ArrayView2<f64>>,
    eps: f64,
    sigma: f64,
    kind: BoundKind,
) -> Result<f64> {
    if eps <= 0.0 || sigma <= 0.0 {
        return Err(Error::invalid("eps and sigma must be positive"));
    }
    let weights = model.effective_weights()?;
    let l = weights.len();
    let gcn_like = matches!(
        kind,
        BoundKind::GcnFeatD1 | BoundKind::GcnFeatDinf | BoundKind::GcnStruct | BoundKind::GcnCombined
    );
    for layer in &model.layers {
        let ok = match (&layer.kind, gcn_like) {
            (nn::LayerKind::Gcn, true) => true,
            (nn::LayerKind::Gin, false) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "bound kind {kind:?} does not match layer kind {:?}",
                layer.kind
            )));
        }
    }
    let xnorm = || -> Result<f64> {
        let x = x.ok_or_else(|| Error::invalid("this bound kind needs the feature matrix"))?;
        Ok(linalg::norm_spectral(x))
    };
    let gamma = match kind {
        BoundKind::GcnFeatD1 => {
            let prod: f64 = weights.iter().map(|w| linalg::norm_l1(w.view())).product();
            let sums = normalized_walk_sums(g, l.max(1))?;
            let total: f64 = sums.per_node.iter().sum();
            prod * eps * total / sigma
        }
        BoundKind::GcnFeatDinf => {
            let prod: f64 = weights.iter().map(|w| linalg::norm_linf(w.view())).product();
            let sums = normalized_walk_sums(g, l.max(1))?;
            prod * eps * sums.max / sigma
        }
        BoundKind::GcnStruct => {
            let prod: f64 = weights.iter().map(|w| linalg::norm_spectral(w.view())).product();
            prod * xnorm()? * eps * (1.0 + l as f64 * prod) / sigma
        }
        BoundKind::GinFeat => {
            let prod: f64 = weights.iter().map(|w| linalg::norm_linf(w.view())).product();
            let b = xnorm()?;
            let max_deg = g.degrees().into_iter().max().unwrap_or(0) as f64;
            prod * (b * l as f64 * max_deg + eps) / sigma
        }
        BoundKind::GcnCombined => {
            let prod: f64 = weights.iter().map(|w| linalg::norm_spectral(w.view())).product();
            let sums = normalized_walk_sums(g, l.max(1))?;
            let total: f64 = sums.per_node.iter().sum();
            let b = xnorm()?;
            prod * (total * total + b * (1.0 + l as f64 * prod)) * eps / sigma
        }
    };
    Ok(gamma)
}

/// Draw the outer radius r with density K (r/eps)^{K-1} / eps via inverse CDF.
fn sample_radius(eps: f64, k: usize, rng: &mut SplitMix64) -> f64 {
    eps * rng.next_f64().powf(1.0 / k as f64)
}

/// Uniform sample from the set of perturbations whose max row L_p norm is
/// exactly the stratified radius: one uniformly chosen row sits at radius r
/// drawn from the (r/eps)^K law, the others at r_i = r u^{1/K}.
///
/// For p < infinity row magnitudes come from a random simplex partition
/// (sorted-uniform gaps) raised to 1/p with uniform signs; for p = infinity
/// one coordinate per row is pinned at r_i and the rest are uniform in
/// [0, r_i].
pub fn sample_feature_perturbation(
    x: ArrayView2<f64>,
    eps: f64,
    p: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    if p <= 0.0 {
        return Err(Error::invalid("p must be positive (or infinity)"));
    }
    let (n, k) = x.dim();
    if n == 0 || k == 0 {
        return Ok(x.to_owned());
    }
    let mut rng = SplitMix64::new(seed);
    let r = sample_radius(eps, k, &mut rng);
    let i0 = rng.next_below(n);
    let mut radii = vec![0.0f64; n];
    for (i, slot) in radii.iter_mut().enumerate() {
        *slot = if i == i0 {
            r
        } else {
            r * rng.next_f64().powf(1.0 / k as f64)
        };
    }
    let mut out = x.to_owned();
    if p.is_infinite() {
        for i in 0..n {
            let j0 = rng.next_below(k);
            for j in 0..k {
                let mag = if j == j0 { radii[i] } else { rng.next_f64() * radii[i] };
                let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                out[[i, j]] += sign * mag;
            }
        }
    } else {
        for i in 0..n {
            // random partition of [0,1] into k parts: gaps of k-1 sorted uniforms
            let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.next_f64()).collect();
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = 0.0;
            for j in 0..k {
                let next = if j == k - 1 { 1.0 } else { cuts[j] };
                let part = next - prev;
                prev = next;
                let mag = radii[i] * part.powf(1.0 / p);
                let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                out[[i, j]] += sign * mag;
            }
        }
    }
    Ok(out)
}

/// Gaussian feature noise X + psi * G.
pub fn attack_random(x: ArrayView2<f64>, psi: f64, seed: u64) -> Result<Array2<f64>> {
    if psi < 0.0 {
        return Err(Error::invalid("psi must be non-negative"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = x.to_owned();
    for v in out.iter_mut() {
        *v += psi * rng.next_normal();
    }
    Ok(out)
}

/// Projected gradient ascent on the cross-entropy w.r.t. the features, with
/// the per-row L2 perturbation projected onto the eps ball after every step.
pub fn attack_pgd_features(
    model: &Model,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    eps: f64,
    steps: usize,
    step_size: f64,
) -> Result<Array2<f64>> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut cur = x.to_owned();
    for _ in 0..steps {
        let (_, grads) = nn::loss_and_grad(model, g, cur.view(), targets, mask)?;
        cur.scaled_add(step_size, &grads.input);
        // project each row's perturbation back into the L2 ball
        for i in 0..cur.nrows() {
            let mut norm2 = 0.0;
            for j in 0..cur.ncols() {
                let d = cur[[i, j]] - x[[i, j]];
                norm2 += d * d;
            }
            let norm = norm2.sqrt();
            if norm > eps {
                let f = eps / norm;
                for j in 0..cur.ncols() {
                    let d = cur[[i, j]] - x[[i, j]];
                    cur[[i, j]] = x[[i, j]] + f * d;
                }
            }
        }
    }
    Ok(cur)
}

/// Serialized result of the expected-vulnerability estimation.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub adv: f64,
    /// Closed-form d_inf bound when the model is a pure GCN stack.
    pub gamma: Option<f64>,
    pub eps: f64,
    pub sigma: f64,
    pub p: f64,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub seed: u64,
    pub n_inputs: usize,
}

impl RobustnessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Output distance between probability matrices: the max-over-nodes row L2
/// distance rescaled into [0, 1] by 2 sqrt(n).
pub fn output_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut d2 = 0.0;
        for j in 0..a.ncols() {
            let d = a[[i, j]] - b[[i, j]];
            d2 += d * d;
        }
        worst = worst.max(d2.sqrt());
    }
    worst / (2.0 * (n as f64).sqrt())
}

/// Monte Carlo estimate of the expected vulnerability: the fraction of
/// uniform in-ball feature perturbations that move the output distance past
/// sigma, averaged over the inputs.
pub fn estimate_expected_vulnerability(
    model: &Model,
    dataset: &[(&Graph, ArrayView2<'_, f64>)],
    cfg: &RobustnessConfig,
) -> Result<RobustnessReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("estimator needs at least one input"));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut total = 0.0;
    for (g, x) in dataset {
        let base = nn::forward(model, g, *x)?;
        let mut hits = 0usize;
        for _ in 0..cfg.l_max {
            let sample_seed = rng.next_u64();
            let xt = sample_feature_perturbation(*x, cfg.eps, cfg.p, sample_seed)?;
            let pert = nn::forward(model, g, xt.view())?;
            if output_distance(pert.probs.view(), base.probs.view()) > cfg.sigma {
                hits += 1;
            }
        }
        total += hits as f64 / cfg.l_max as f64;
    }
    let adv = total / dataset.len() as f64;
    let all_gcn = model
        .layers
        .iter()
        .all(|l| matches!(l.kind, nn::LayerKind::Gcn));
    let gamma = if all_gcn && !model.layers.is_empty() {
        // the bound covering every input is the worst (largest) per-input bound
        let mut worst = 0.0f64;
        for (g, x) in dataset {
            let b = robustness_bound(model, g, Some(*x), cfg.eps, cfg.sigma, BoundKind::GcnFeatDinf)?;
            worst = worst.max(b);
        }
        Some(worst)
    } else {
        None
    };
    Ok(RobustnessReport {
        adv,
        gamma,
        eps: cfg.eps,
        sigma: cfg.sigma,
        p: cfg.p,
        l_max: cfg.l_max,
        seed: cfg.seed,
        n_inputs: dataset.len(),
    })
}

/// Train with Bjorck-projected weights in every forward pass (GCORN).
/// Gradients flow through the projection polynomial exactly.
pub fn train_gcorn(
    model: &mut Model,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    cfg: &nn::TrainCfg,
    bjorck: &BjorckConfig,
) -> Result<nn::History> {
    model.orthonormal = nn::OrthoMode::Bjorck(*bjorck);
    nn::train_node(model, g, x, targets, mask, cfg)
}
