//! Latent-space augmentation for graph classification: per-class Gaussian
//! mixtures fitted by EM on readout embeddings, sampling of labeled synthetic
//! embeddings, head-only finetuning, influence scores through the head
//! Hessian, Fisher-guided filtering, input-space baseline augmentations, and
//! the expected embedding-shift diagnostic.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::cholesky;
use crate::nn::{self, GraphDataset, Model};
use crate::rng::SplitMix64;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// A Gaussian mixture with full covariances.
#[derive(Debug, Clone)]
pub struct Gmm {
    /// Mixture weights on the simplex.
    pub weights: Vec<f64>,
    /// K x d component means.
    pub means: Array2<f64>,
    /// Per-component d x d covariances (positive definite up to the
    /// regularization floor).
    pub covariances: Vec<Array2<f64>>,
}

impl Gmm {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

fn ln_mvn_pdf(x: ArrayView1<f64>, mean: ArrayView1<f64>, chol: &Array2<f64>) -> f64 {
    let d = x.len();
    // solve L y = (x - mu), then pdf uses ||y||^2 and log det
    let mut y = Array1::<f64>::zeros(d);
    for i in 0..d {
        let mut sum = x[i] - mean[i];
        for k in 0..i {
            sum -= chol[[i, k]] * y[k];
        }
        y[i] = sum / chol[[i, i]];
    }
    let maha: f64 = y.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..d).map(|i| chol[[i, i]].ln()).sum::<f64>() * 2.0;
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + maha)
}

fn regularize(cov: &mut Array2<f64>, reg: f64) {
    for i in 0..cov.nrows() {
        cov[[i, i]] += reg;
    }
}

/// Fit a GMM by EM with k-means initialization. Stops when the per-point
/// log-likelihood gain drops below `tol` or after `max_iter` iterations.
/// Returns the model and the per-iteration log-likelihood history.
pub fn fit_gmm(
    points: ArrayView2<f64>,
    k: usize,
    max_iter: usize,
    tol: f64,
    reg: f64,
    seed: u64,
) -> Result<(Gmm, Vec<f64>)> {
    let (m, d) = points.dim();
    if m < k || k == 0 {
        return Err(Error::invalid(format!("need m >= K >= 1, got m = {m}, K = {k}")));
    }
    if reg <= 0.0 {
        return Err(Error::invalid("covariance floor must be positive"));
    }
    // init: k-means centroids, cluster shares, within-cluster covariance
    let km = crate::clustering::kmeans(points, k, seed, 50, 3)?;
    let assign = km.partition.as_slice().to_vec();
    let mut weights = vec![0.0f64; k];
    for &a in &assign {
        weights[a] += 1.0;
    }
    for w in weights.iter_mut() {
        *w = (*w / m as f64).max(1e-6);
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mut means = km.centroids.clone();
    let mut covariances: Vec<Array2<f64>> = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..m).filter(|&i| assign[i] == c).collect();
            let mut cov = Array2::<f64>::zeros((d, d));
            if members.len() > 1 {
                for &i in &members {
                    for a in 0..d {
                        for b in 0..d {
                            cov[[a, b]] += (points[[i, a]] - means[[c, a]])
                                * (points[[i, b]] - means[[c, b]]);
                        }
                    }
                }
                cov.mapv_inplace(|v| v / members.len() as f64);
            }
            regularize(&mut cov, reg);
            cov
        })
        .collect();

    let mut history = Vec::new();
    let mut resp = Array2::<f64>::zeros((m, k));
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        // E step in log space
        let chols: Vec<Array2<f64>> = covariances
            .iter()
            .map(|c| {
                cholesky(c.view()).or_else(|_| {
                    let mut fixed = c.clone();
                    regularize(&mut fixed, reg * 10.0);
                    cholesky(fixed.view())
                })
            })
            .collect::<Result<_>>()?;
        let mut ll = 0.0;
        for i in 0..m {
            let mut lps = vec![0.0f64; k];
            for c in 0..k {
                lps[c] = weights[c].ln() + ln_mvn_pdf(points.row(i), means.row(c), &chols[c]);
            }
            let max = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lps.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            ll += lse;
            for c in 0..k {
                resp[[i, c]] = (lps[c] - lse).exp();
            }
        }
        ll /= m as f64;
        history.push(ll);
        if (ll - last_ll).abs() < tol && last_ll.is_finite() {
            break;
        }
        last_ll = ll;
        // M step
        for c in 0..k {
            let nc: f64 = (0..m).map(|i| resp[[i, c]]).sum();
            let nc_safe = nc.max(1e-12);
            weights[c] = nc / m as f64;
            for a in 0..d {
                let s: f64 = (0..m).map(|i| resp[[i, c]] * points[[i, a]]).sum();
                means[[c, a]] = s / nc_safe;
            }
            let mut cov = Array2::<f64>::zeros((d, d));
            for i in 0..m {
                let r = resp[[i, c]];
                if r > 0.0 {
                    for a in 0..d {
                        let da = points[[i, a]] - means[[c, a]];
                        for b in 0..d {
                            let db = points[[i, b]] - means[[c, b]];
                            cov[[a, b]] += r * da * db;
                        }
                    }
                }
            }
            cov.mapv_inplace(|v| v / nc_safe);
            regularize(&mut cov, reg);
            covariances[c] = cov;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok((
        Gmm {
            weights,
            means,
            covariances,
        },
        history,
    ))
}

/// Sample `m` points: component from Categorical(weights), then the
/// component Gaussian via its Cholesky factor.
pub fn sample_gmm(gmm: &Gmm, m: usize, seed: u64) -> Result<Array2<f64>> {
    let d = gmm.dim();
    let mut out = Array2::<f64>::zeros((m, d));
    if m == 0 {
        return Ok(out);
    }
    let chols: Vec<Array2<f64>> = gmm
        .covariances
        .iter()
        .map(|c| cholesky(c.view()))
        .collect::<Result<_>>()?;
    let mut rng = SplitMix64::new(seed);
    for i in 0..m {
        let mut u = rng.next_f64();
        let mut comp = gmm.n_components() - 1;
        for (c, &w) in gmm.weights.iter().enumerate() {
            if u < w {
                comp = c;
                break;
            }
            u -= w;
        }
        let z: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
        for a in 0..d {
            let mut v = gmm.means[[comp, a]];
            for b in 0..=a {
                v += chols[comp][[a, b]] * z[b];
            }
            out[[i, a]] = v;
        }
    }
    Ok(out)
}

/// Labeled store of augmented (or original) embeddings.
#[derive(Debug, Clone)]
pub struct AugStore {
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
}

impl AugStore {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// CSV rows of d feature columns plus the label column.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (row, &label) in self.embeddings.rows().into_iter().zip(&self.labels) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{},{label}", cells.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<AugStore> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "need embedding columns plus a label".into(),
                });
            }
            let mut row = Vec::with_capacity(cells.len() - 1);
            for c in &cells[..cells.len() - 1] {
                row.push(c.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?);
            }
            labels.push(cells[cells.len() - 1].trim().parse::<usize>().map_err(|e| {
                Error::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                }
            })?);
            rows.push(row);
        }
        let d = rows.first().map_or(0, |r| r.len());
        let mut emb = Array2::<f64>::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::shape(format!("{d} columns"), format!("{}", r.len())));
            }
            for (j, v) in r.iter().enumerate() {
                emb[[i, j]] = *v;
            }
        }
        Ok(AugStore {
            embeddings: emb,
            labels,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GratinCfg {
    /// Gaussian components per class (reduced with a warning when a class has
    /// fewer graphs).
    pub k_per_class: usize,
    /// Augmented embeddings sampled per class.
    pub m_aug: usize,
    pub train_epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// EM settings.
    pub em_max_iter: usize,
    pub em_tol: f64,
    pub cov_reg: f64,
}

impl Default for GratinCfg {
    fn default() -> Self {
        Self {
            k_per_class: 2,
            m_aug: 20,
            train_epochs: 200,
            finetune_epochs: 100,
            lr: 0.01,
            seed: 0,
            em_max_iter: 100,
            em_tol: 1e-3,
            cov_reg: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GratinOutcome {
    pub model: Model,
    /// Augmented embeddings with their class labels.
    pub augmented: AugStore,
    /// Readout embeddings of the training graphs.
    pub train_embeddings: AugStore,
    /// Classes whose component count had to be reduced.
    pub reduced_classes: Vec<usize>,
}

/// Newton training of the softmax head on fixed embeddings; exact because the
/// objective is convex. `sample_weights` upweights individual points
/// (influence-function probes); `l2` adds (l2/2)||theta||^2.
pub fn train_head_newton(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    classes: usize,
    sample_weights: Option<&[f64]>,
    l2: f64,
    iters: usize,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let (m, d) = embeddings.dim();
    if labels.len() != m {
        return Err(Error::shape(format!("{m} labels"), format!("{}", labels.len())));
    }
    let dim = (d + 1) * classes;
    let mut theta = vec![0.0f64; dim];
    for _ in 0..iters {
        let (_, grad, hess) = head_objective(
            embeddings,
            labels,
            classes,
            &theta,
            sample_weights,
            l2,
            true,
        )?;
        let hess = hess.expect("requested");
        // damped Newton step: solve (H + small ridge) s = grad
        let mut h = hess;
        for i in 0..dim {
            h[[i, i]] += 1e-9;
        }
        let step = crate::linalg::solve_spd(h.view(), &Array1::from_vec(grad.clone()))?;
        let mut moved = 0.0;
        for i in 0..dim {
            theta[i] -= step[i];
            moved += step[i] * step[i];
        }
        if moved.sqrt() < 1e-12 {
            break;
        }
    }
    Ok(unpack_head(&theta, d, classes))
}

fn unpack_head(theta: &[f64], d: usize, classes: usize) -> (Array2<f64>, Array1<f64>) {
    let mut w = Array2::<f64>::zeros((d, classes));
    for a in 0..d {
        for c in 0..classes {
            w[[a, c]] = theta[a * classes + c];
        }
    }
    let mut b = Array1::<f64>::zeros(classes);
    for c in 0..classes {
        b[c] = theta[d * classes + c];
    }
    (w, b)
}

/// Mean weighted CE of the softmax head (plus optional L2) with gradient and
/// optionally the exact Hessian over theta = vec(W row-major, then bias).
pub fn head_objective(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    classes: usize,
    theta: &[f64],
    sample_weights: Option<&[f64]>,
    l2: f64,
    want_hessian: bool,
) -> Result<(f64, Vec<f64>, Option<Array2<f64>>)> {
    let (m, d) = embeddings.dim();
    let dim = (d + 1) * classes;
    if theta.len() != dim {
        return Err(Error::shape(format!("{dim} params"), format!("{}", theta.len())));
    }
    let (w, b) = unpack_head(theta, d, classes);
    let mut loss = 0.0;
    let mut grad = vec![0.0f64; dim];
    let mut hess = want_hessian.then(|| Array2::<f64>::zeros((dim, dim)));
    let total_weight: f64 = match sample_weights {
        Some(ws) => ws.iter().sum(),
        None => m as f64,
    };
    if total_weight <= 0.0 {
        return Err(Error::invalid("total sample weight must be positive"));
    }
    for i in 0..m {
        let sw = sample_weights.map_or(1.0, |ws| ws[i]) / total_weight;
        if sw == 0.0 {
            continue;
        }
        let x = embeddings.row(i);
        let mut logits = vec![0.0f64; classes];
        for c in 0..classes {
            logits[c] = b[c];
            for a in 0..d {
                logits[c] += x[a] * w[[a, c]];
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
        let t = labels[i];
        if t >= classes {
            return Err(Error::Bounds {
                index: t,
                bound: classes,
                what: "classes",
            });
        }
        loss += sw * (lse - logits[t]);
        // gradient: (p - y) outer [x; 1]
        for c in 0..classes {
            let dc = sw * (probs[c] - if c == t { 1.0 } else { 0.0 });
            for a in 0..d {
                grad[a * classes + c] += dc * x[a];
            }
            grad[d * classes + c] += dc;
        }
        if let Some(h) = hess.as_mut() {
            // (diag(p) - p p^T) kron ([x;1][x;1]^T)
            for c1 in 0..classes {
                for c2 in 0..classes {
                    let s = sw
                        * (if c1 == c2 { probs[c1] } else { 0.0 } - probs[c1] * probs[c2]);
                    if s == 0.0 {
                        continue;
                    }
                    for a1 in 0..=d {
                        let xa1 = if a1 == d { 1.0 } else { x[a1] };
                        for a2 in 0..=d {
                            let xa2 = if a2 == d { 1.0 } else { x[a2] };
                            h[[a1 * classes + c1, a2 * classes + c2]] += s * xa1 * xa2;
                        }
                    }
                }
            }
        }
    }
    // L2 term
    for i in 0..dim {
        loss += 0.5 * l2 * theta[i] * theta[i];
        grad[i] += l2 * theta[i];
    }
    if let Some(h) = hess.as_mut() {
        for i in 0..dim {
            h[[i, i]] += l2;
        }
    }
    Ok((loss, grad, hess))
}

/// The GRATIN pipeline: train the full model, embed the training graphs, fit
/// one GMM per class, sample labeled embeddings, and finetune only the
/// post-readout head on originals plus augmentations. Message-passing weights
/// are untouched after step 1.
pub fn gratin_train(model: &mut Model, data: &GraphDataset, cfg: &GratinCfg) -> Result<GratinOutcome> {
    if model.readout == nn::Readout::None {
        return Err(Error::invalid("GRATIN needs a graph-level model"));
    }
    // step 1: full training
    let train_cfg = nn::TrainCfg {
        epochs: cfg.train_epochs,
        lr: cfg.lr,
        seed: cfg.seed,
        ..Default::default()
    };
    nn::train_graph(model, data, None, &train_cfg)?;

    // step 2: readout embeddings
    let d = model.head_weight.nrows();
    let mut emb = Array2::<f64>::zeros((data.len(), d));
    for (i, g) in data.graphs.iter().enumerate() {
        let x = g
            .features()
            .ok_or_else(|| Error::invalid(format!("graph {i} lacks features")))?;
        let e = nn::embed_graph(model, g, x)?;
        emb.row_mut(i).assign(&e);
    }

    // step 3: per-class GMM fit and sampling
    let classes = model.classes();
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5eed_6a11);
    let mut aug_rows: Vec<Array1<f64>> = Vec::new();
    let mut aug_labels: Vec<usize> = Vec::new();
    let mut reduced_classes = Vec::new();
    if cfg.m_aug > 0 {
        for c in 0..classes {
            let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut k = cfg.k_per_class.max(1);
            if members.len() < k {
                k = members.len();
                reduced_classes.push(c);
            }
            let mut class_points = Array2::<f64>::zeros((members.len(), d));
            for (row, &i) in members.iter().enumerate() {
                class_points.row_mut(row).assign(&emb.row(i));
            }
            let fit_seed = rng.next_u64();
            let (gmm, _) = fit_gmm(
                class_points.view(),
                k,
                cfg.em_max_iter,
                cfg.em_tol,
                cfg.cov_reg,
                fit_seed,
            )?;
            let sample_seed = rng.next_u64();
            let samples = sample_gmm(&gmm, cfg.m_aug, sample_seed)?;
            for row in samples.rows() {
                aug_rows.push(row.to_owned());
                aug_labels.push(c);
            }
        }
    }
    let mut aug_emb = Array2::<f64>::zeros((aug_rows.len(), d));
    for (i, r) in aug_rows.iter().enumerate() {
        aug_emb.row_mut(i).assign(r);
    }

    // step 4: head-only finetune on originals + augmentations
    let mut all_emb = Array2::<f64>::zeros((data.len() + aug_labels.len(), d));
    let mut all_labels = Vec::with_capacity(data.len() + aug_labels.len());
    for i in 0..data.len() {
        all_emb.row_mut(i).assign(&emb.row(i));
        all_labels.push(data.labels[i]);
    }
    for i in 0..aug_labels.len() {
        all_emb.row_mut(data.len() + i).assign(&aug_emb.row(i));
        all_labels.push(aug_labels[i]);
    }
    finetune_head(model, all_emb.view(), &all_labels, cfg.finetune_epochs, cfg.lr)?;

    Ok(GratinOutcome {
        model: model.clone(),
        augmented: AugStore {
            embeddings: aug_emb,
            labels: aug_labels,
        },
        train_embeddings: AugStore {
            embeddings: emb,
            labels: data.labels.clone(),
        },
        reduced_classes,
    })
}

/// Adam finetuning of the head on fixed embeddings (message-passing weights
/// never enter the computation).
pub fn finetune_head(
    model: &mut Model,
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<()> {
    let (m, d) = embeddings.dim();
    if labels.len() != m {
        return Err(Error::shape(format!("{m} labels"), format!("{}", labels.len())));
    }
    let classes = model.classes();
    let dim = (d + 1) * classes;
    let mut theta = vec![0.0f64; dim];
    for a in 0..d {
        for c in 0..classes {
            theta[a * classes + c] = model.head_weight[[a, c]];
        }
    }
    for c in 0..classes {
        theta[d * classes + c] = model.head_bias[c];
    }
    let mut state = nn::AdamState::new(dim);
    for _ in 0..epochs {
        let (_, grad, _) = head_objective(embeddings, labels, classes, &theta, None, 0.0, false)?;
        nn::adam_step(&mut theta, &grad, &mut state, |_| lr, (0.9, 0.999), 1e-8, None);
    }
    let (w, b) = unpack_head(&theta, d, classes);
    model.head_weight = w;
    model.head_bias = b;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct InfluenceReport {
    /// Average influence of each augmented point on the evaluation set
    /// (positive: adding it should reduce evaluation loss).
    pub scores: Vec<f64>,
    pub damping: f64,
}

/// Influence score machinery on explicit ingredients: given the training
/// Hessian H, the gradient of one augmented point's loss, and evaluation
/// gradients, the per-eval-point upweighting derivative is
/// `d loss_eval / d eps = -g_eval^T (H + damping I)^{-1} g_aug`; the reported
/// average influence flips the sign and averages over the evaluation set.
pub fn influence_from_parts(
    hessian: ArrayView2<f64>,
    grad_aug: ArrayView1<f64>,
    eval_grads: &[Array1<f64>],
    damping: f64,
) -> Result<f64> {
    let dim = grad_aug.len();
    let mut h = hessian.to_owned();
    for i in 0..dim {
        h[[i, i]] += damping;
    }
    // positive definiteness is required for the solve
    let s = crate::linalg::solve_spd(h.view(), &grad_aug.to_owned())?;
    let mut total = 0.0;
    for ge in eval_grads {
        let d_eps: f64 = -ge.dot(&s);
        total += d_eps;
    }
    Ok(-total / eval_grads.len().max(1) as f64)
}

/// Average influence of each augmented embedding on the evaluation set,
/// through the head-only Hessian of the training objective at the current
/// head parameters.
pub fn influence_scores(
    model: &Model,
    train: &AugStore,
    augmented: &AugStore,
    eval_set: &AugStore,
    damping: f64,
    l2: f64,
) -> Result<InfluenceReport> {
    let classes = model.classes();
    let d = model.head_weight.nrows();
    let dim = (d + 1) * classes;
    let mut theta = vec![0.0f64; dim];
    for a in 0..d {
        for c in 0..classes {
            theta[a * classes + c] = model.head_weight[[a, c]];
        }
    }
    for c in 0..classes {
        theta[d * classes + c] = model.head_bias[c];
    }
    let (_, _, hess) = head_objective(
        train.embeddings.view(),
        &train.labels,
        classes,
        &theta,
        None,
        l2,
        true,
    )?;
    let hess = hess.expect("requested");
    // per-point gradients of the evaluation losses
    let eval_grads: Vec<Array1<f64>> = (0..eval_set.len())
        .map(|i| {
            let row = eval_set.embeddings.row(i).insert_axis(Axis(0));
            let (_, g, _) = head_objective(
                row,
                &eval_set.labels[i..i + 1],
                classes,
                &theta,
                None,
                0.0,
                false,
            )?;
            Ok(Array1::from_vec(g))
        })
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(augmented.len());
    for i in 0..augmented.len() {
        let row = augmented.embeddings.row(i).insert_axis(Axis(0));
        let (_, g_aug, _) = head_objective(
            row,
            &augmented.labels[i..i + 1],
            classes,
            &theta,
            None,
            0.0,
            false,
        )?;
        scores.push(influence_from_parts(
            hess.view(),
            Array1::from_vec(g_aug).view(),
            &eval_grads,
            damping,
        )?);
    }
    Ok(InfluenceReport { scores, damping })
}

/// Keep the ceil(keep_frac * m) highest-scoring augmented points, ties broken
/// toward lower indices.
pub fn fisher_filter(store: &AugStore, scores: &[f64], keep_frac: f64) -> Result<AugStore> {
    if scores.len() != store.len() {
        return Err(Error::shape(
            format!("{} scores", store.len()),
            format!("{}", scores.len()),
        ));
    }
    if !(0.0..=1.0).contains(&keep_frac) {
        return Err(Error::invalid("keep_frac must lie in [0, 1]"));
    }
    let m = store.len();
    let keep = (keep_frac * m as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(keep).collect();
    chosen.sort_unstable();
    let d = store.embeddings.ncols();
    let mut emb = Array2::<f64>::zeros((chosen.len(), d));
    let mut labels = Vec::with_capacity(chosen.len());
    for (row, &i) in chosen.iter().enumerate() {
        emb.row_mut(row).assign(&store.embeddings.row(i));
        labels.push(store.labels[i]);
    }
    Ok(AugStore {
        embeddings: emb,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineAugment {
    /// Remove each edge independently with the given probability.
    DropEdge { rate: f64 },
    /// Remove nodes (and incident edges) with the given probability,
    /// reindexing the survivors.
    DropNode { rate: f64 },
    /// Add lambda * standard normal noise to the features.
    FeatureNoise { lambda: f64 },
}

/// Input-space augmentation baselines.
pub fn baseline_augment(g: &Graph, kind: BaselineAugment, seed: u64) -> Result<Graph> {
    let mut rng = SplitMix64::new(seed);
    match kind {
        BaselineAugment::DropEdge { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::invalid("rate must lie in [0, 1]"));
            }
            let kept: Vec<(usize, usize)> = g
                .edges()
                .iter()
                .copied()
                .filter(|_| rng.next_f64() >= rate)
                .collect();
            g.with_edges(kept)
        }
        BaselineAugment::DropNode { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::invalid("rate must lie in [0, 1]"));
            }
            let keep: Vec<bool> = (0..g.n()).map(|_| rng.next_f64() >= rate).collect();
            let survivors: Vec<usize> = (0..g.n()).filter(|&i| keep[i]).collect();
            if survivors.is_empty() {
                return Err(Error::invalid("drop_node removed every node"));
            }
            let mut new_index = vec![usize::MAX; g.n()];
            for (new, &old) in survivors.iter().enumerate() {
                new_index[old] = new;
            }
            let edges: Vec<(usize, usize)> = g
                .edges()
                .iter()
                .filter(|&&(u, v)| keep[u] && keep[v])
                .map(|&(u, v)| (new_index[u], new_index[v]))
                .collect();
            let features = g.features().map(|x| {
                let mut f = Array2::<f64>::zeros((survivors.len(), x.ncols()));
                for (new, &old) in survivors.iter().enumerate() {
                    f.row_mut(new).assign(&x.row(old));
                }
                f
            });
            let labels = g
                .labels()
                .map(|l| survivors.iter().map(|&i| l[i]).collect::<Vec<_>>());
            Graph::new(survivors.len(), edges, features, labels)
        }
        BaselineAugment::FeatureNoise { lambda } => {
            let x = g
                .features()
                .ok_or_else(|| Error::invalid("feature_noise needs features"))?;
            let mut noisy = x.to_owned();
            for v in noisy.iter_mut() {
                *v += lambda * rng.next_normal();
            }
            g.with_features(noisy)
        }
    }
}

/// Mean L2 distance over all (original, augmented) embedding pairs:
/// the Monte Carlo estimate of the expected embedding shift.
pub fn expected_embedding_shift(orig: ArrayView2<f64>, aug: ArrayView2<f64>) -> Result<f64> {
    if orig.nrows() == 0 || aug.nrows() == 0 {
        return Err(Error::invalid("both embedding sets must be non-empty"));
    }
    if orig.ncols() != aug.ncols() {
        return Err(Error::shape(
            format!("{} columns", orig.ncols()),
            format!("{}", aug.ncols()),
        ));
    }
    let mut total = 0.0;
    for a in orig.rows() {
        for b in aug.rows() {
            let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            total += d2.sqrt();
        }
    }
    Ok(total / (orig.nrows() * aug.nrows()) as f64)
}
