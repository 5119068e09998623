//! Minimal dense message-passing engine: GCN / GIN / CGNN layers with exact
//! hand-derived reverse-mode gradients (including the seven CGSO scalars and
//! the GIN epsilon), log-sum-exp softmax cross-entropy, Adam, and
//! deterministic full-batch training for node and graph tasks.
//!
//! Aggregation uses sparse edge iteration; everything else is dense ndarray.

use crate::centrality::{centrality_matrix, CentralityKind, CentralityVector};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gso::CgsoParams;
use crate::rng::SplitMix64;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use std::fmt::Write as _;

pub const DEFAULT_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|x| x.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Elementwise derivative evaluated at the pre-activation.
    fn derivative(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Activation::Identity => Array2::ones(z.dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Aggregation by (D+I)^{-1/2} (A+I) (D+I)^{-1/2}.
    Gcn,
    /// (1 + eps) h_v + sum of neighbor states, then the layer's linear map.
    Gin,
    /// Aggregation by the parameterized CGSO on the chosen centrality.
    Cgnn { centrality: CentralityKind },
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    /// d_in x d_out.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    /// GIN self-weight; ignored by other kinds.
    pub gin_eps: f64,
    /// CGSO scalars; ignored by non-CGNN kinds.
    pub cgso: CgsoParams,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Sum,
    Mean,
    /// Node-level task: the head applies per node.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrthoMode {
    Off,
    /// Bjorck-orthonormalize every layer weight in the forward pass.
    Bjorck(crate::robustness::BjorckConfig),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub readout: Readout,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
    pub orthonormal: OrthoMode,
}

/// Shape-level description used to initialize a model.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub d_in: usize,
    pub d_out: usize,
    pub bias: bool,
    pub activation: Activation,
}

impl Model {
    /// Glorot-uniform initialization, deterministic per seed. `head_in` must
    /// equal the last layer output (or the input dim with no layers).
    pub fn init(specs: &[LayerSpec], readout: Readout, head_in: usize, classes: usize, seed: u64) -> Model {
        let mut rng = SplitMix64::new(seed);
        let mut glorot = |rows: usize, cols: usize| -> Array2<f64> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| (rng.next_f64() * 2.0 - 1.0) * a)
        };
        let layers = specs
            .iter()
            .map(|s| Layer {
                kind: s.kind.clone(),
                weight: glorot(s.d_in, s.d_out),
                bias: s.bias.then(|| Array1::zeros(s.d_out)),
                gin_eps: 0.0,
                cgso: CgsoParams::normalized_adjacency(),
                activation: s.activation,
            })
            .collect();
        let head_weight = glorot(head_in, classes);
        Model {
            layers,
            readout,
            head_weight,
            head_bias: Array1::zeros(classes),
            orthonormal: OrthoMode::Off,
        }
    }

    pub fn classes(&self) -> usize {
        self.head_weight.ncols()
    }

    /// Layer weights as used in the forward pass (Bjorck-projected when the
    /// orthonormal mode is on).
    pub fn effective_weights(&self) -> Result<Vec<Array2<f64>>> {
        self.layers
            .iter()
            .map(|l| match &self.orthonormal {
                OrthoMode::Off => Ok(l.weight.clone()),
                OrthoMode::Bjorck(cfg) => {
                    crate::robustness::bjorck_orthonormalize(l.weight.view(), cfg)
                }
            })
            .collect()
    }
}

/// Flat parameter vector plus grouping (exponent parameters may get their own
/// learning rate). Order: per layer [weight, bias?, gin_eps, cgso x7], then
/// head weight, head bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Normal,
    Exponent,
}

pub fn params_flat(model: &Model) -> (Vec<f64>, Vec<ParamGroup>) {
    let mut out = Vec::new();
    let mut groups = Vec::new();
    for layer in &model.layers {
        out.extend(layer.weight.iter());
        groups.extend(std::iter::repeat(ParamGroup::Normal).take(layer.weight.len()));
        if let Some(b) = &layer.bias {
            out.extend(b.iter());
            groups.extend(std::iter::repeat(ParamGroup::Normal).take(b.len()));
        }
        out.push(layer.gin_eps);
        groups.push(ParamGroup::Normal);
        let p = layer.cgso.as_array();
        out.extend_from_slice(&p);
        groups.extend([
            ParamGroup::Normal,
            ParamGroup::Normal,
            ParamGroup::Normal,
            ParamGroup::Exponent,
            ParamGroup::Exponent,
            ParamGroup::Exponent,
            ParamGroup::Normal,
        ]);
    }
    out.extend(model.head_weight.iter());
    groups.extend(std::iter::repeat(ParamGroup::Normal).take(model.head_weight.len()));
    out.extend(model.head_bias.iter());
    groups.extend(std::iter::repeat(ParamGroup::Normal).take(model.head_bias.len()));
    (out, groups)
}

pub fn set_params_flat(model: &mut Model, flat: &[f64]) {
    let mut it = flat.iter().copied();
    for layer in &mut model.layers {
        for w in layer.weight.iter_mut() {
            *w = it.next().expect("param underflow");
        }
        if let Some(b) = &mut layer.bias {
            for x in b.iter_mut() {
                *x = it.next().expect("param underflow");
            }
        }
        layer.gin_eps = it.next().expect("param underflow");
        let mut p = [0.0; 7];
        for x in p.iter_mut() {
            *x = it.next().expect("param underflow");
        }
        layer.cgso = CgsoParams::from_array(p);
    }
    for w in model.head_weight.iter_mut() {
        *w = it.next().expect("param underflow");
    }
    for x in model.head_bias.iter_mut() {
        *x = it.next().expect("param underflow");
    }
    assert!(it.next().is_none(), "param overflow");
}

/// Per-parameter gradients mirroring the model shapes.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub gin_eps: f64,
    pub cgso: [f64; 7],
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
    /// Gradient of the loss w.r.t. the input features (used by PGD attacks).
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weight.iter());
            if let Some(b) = &g.bias {
                out.extend(b.iter());
            }
            out.push(g.gin_eps);
            out.extend_from_slice(&g.cgso);
        }
        out.extend(self.head_weight.iter());
        out.extend(self.head_bias.iter());
        out
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Self-loop-augmented symmetric GCN aggregation applied sparsely:
/// out_i = sum_j ahat_ij x_j with ahat over A + I and degrees D + I.
fn gcn_aggregate(g: &Graph, x: &Array2<f64>) -> Array2<f64> {
    let n = g.n();
    let scale: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / (d as f64 + 1.0).sqrt())
        .collect();
    let mut out = Array2::<f64>::zeros(x.dim());
    for i in 0..n {
        let self_w = scale[i] * scale[i];
        for k in 0..x.ncols() {
            out[[i, k]] += self_w * x[[i, k]];
        }
    }
    for &(u, v) in g.edges() {
        let w = scale[u] * scale[v];
        for k in 0..x.ncols() {
            out[[u, k]] += w * x[[v, k]];
            out[[v, k]] += w * x[[u, k]];
        }
    }
    out
}

/// Strict-neighbor sum: out_i = sum_{j in N(i)} x_j.
fn neighbor_sum(g: &Graph, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(x.dim());
    for &(u, v) in g.edges() {
        for k in 0..x.ncols() {
            out[[u, k]] += x[[v, k]];
            out[[v, k]] += x[[u, k]];
        }
    }
    out
}

/// Pieces of the CGSO needed by both forward and backward passes.
struct CgsoPieces {
    v: CentralityVector,
    /// V^{e2} (A + aI) V^{e3}
    middle: Array2<f64>,
    phi: Array2<f64>,
}

fn cgso_pieces(g: &Graph, params: &CgsoParams, centrality: CentralityKind) -> Result<CgsoPieces> {
    let v = centrality_matrix(g, centrality, Some(DEFAULT_CLAMP))?;
    let v2 = crate::gso::diag_pow(&v, params.e2)?;
    let v3 = crate::gso::diag_pow(&v, params.e3)?;
    let v1 = crate::gso::diag_pow(&v, params.e1)?;
    let n = g.n();
    let a = g.adjacency();
    let mut middle = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a_a = a[[i, j]] + if i == j { params.a } else { 0.0 };
            middle[[i, j]] = v2[i] * a_a * v3[j];
        }
    }
    let mut phi = middle.mapv(|x| params.m2 * x);
    for i in 0..n {
        phi[[i, i]] += params.m1 * v1[i] + params.m3;
    }
    Ok(CgsoPieces { v, middle, phi })
}

/// All intermediate states needed to answer queries and run backward.
pub struct Forward {
    /// hidden[0] = X, hidden[l] = output of layer l.
    pub hidden: Vec<Array2<f64>>,
    /// pre-activation of each layer.
    pre_act: Vec<Array2<f64>>,
    /// aggregated input M of each layer (what multiplies W).
    aggregated: Vec<Array2<f64>>,
    /// CGSO pieces per layer (None for non-CGNN layers).
    cgso: Vec<Option<CgsoPieces>>,
    /// effective (possibly orthonormalized) layer weights used in the pass.
    pub effective: Vec<Array2<f64>>,
    /// pooled graph embedding when readout is Sum/Mean.
    pub pooled: Option<Array1<f64>>,
    /// logits: n x C for node tasks, 1 x C for graph tasks.
    pub logits: Array2<f64>,
    /// softmax probabilities, same shape as logits.
    pub probs: Array2<f64>,
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}

pub fn forward(model: &Model, g: &Graph, x: ArrayView2<f64>) -> Result<Forward> {
    if x.nrows() != g.n() {
        return Err(Error::shape(format!("{} feature rows", g.n()), format!("{}", x.nrows())));
    }
    let effective = model.effective_weights()?;
    let mut hidden = vec![x.to_owned()];
    let mut pre_act = Vec::new();
    let mut aggregated = Vec::new();
    let mut cgso_store = Vec::new();
    for (layer, w_eff) in model.layers.iter().zip(&effective) {
        let h = hidden.last().unwrap();
        if h.ncols() != w_eff.nrows() {
            return Err(Error::shape(
                format!("layer input dim {}", w_eff.nrows()),
                format!("{}", h.ncols()),
            ));
        }
        let (m, pieces) = match &layer.kind {
            LayerKind::Gcn => (gcn_aggregate(g, h), None),
            LayerKind::Gin => {
                let mut m = neighbor_sum(g, h);
                m.scaled_add(1.0 + layer.gin_eps, h);
                (m, None)
            }
            LayerKind::Cgnn { centrality } => {
                let pieces = cgso_pieces(g, &layer.cgso, *centrality)?;
                (pieces.phi.dot(h), Some(pieces))
            }
        };
        let mut z = m.dot(w_eff);
        if let Some(b) = &layer.bias {
            z += &b.view().insert_axis(Axis(0));
        }
        let out = layer.activation.apply(&z);
        aggregated.push(m);
        pre_act.push(z);
        cgso_store.push(pieces);
        hidden.push(out);
    }
    let last = hidden.last().unwrap();
    let (pooled, logits) = match model.readout {
        Readout::None => {
            let logits = last.dot(&model.head_weight) + &model.head_bias.view().insert_axis(Axis(0));
            (None, logits)
        }
        Readout::Sum | Readout::Mean => {
            let mut pooled = last.sum_axis(Axis(0));
            if model.readout == Readout::Mean {
                pooled /= g.n().max(1) as f64;
            }
            let logits = pooled
                .view()
                .insert_axis(Axis(0))
                .dot(&model.head_weight)
                + &model.head_bias.view().insert_axis(Axis(0));
            (Some(pooled), logits)
        }
    };
    let probs = softmax_rows(&logits);
    Ok(Forward {
        hidden,
        pre_act,
        aggregated,
        cgso: cgso_store,
        effective,
        pooled,
        logits,
        probs,
    })
}

/// Mean negative log-likelihood of the targets under given probability rows.
pub fn cross_entropy(probs: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
    if probs.nrows() != targets.len() {
        return Err(Error::shape(
            format!("{} prob rows", targets.len()),
            format!("{}", probs.nrows()),
        ));
    }
    let c = probs.ncols();
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::Bounds {
                index: t,
                bound: c,
                what: "classes",
            });
        }
        total -= probs[[i, t]].max(1e-300).ln();
    }
    Ok(total / targets.len().max(1) as f64)
}

/// Numerically stable CE from logits via log-sum-exp.
pub(crate) fn ce_from_logits(logits: &Array2<f64>, rows: &[usize], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (&row, &t) in rows.iter().zip(targets) {
        let r = logits.row(row);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + r.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - r[t];
    }
    total / rows.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Backpropagate an adjoint on the final hidden states through all layers,
/// producing layer gradients and the input gradient.
fn backward_layers(
    model: &Model,
    g: &Graph,
    fwd: &Forward,
    mut d_hidden: Array2<f64>,
) -> Result<(Vec<LayerGrads>, Array2<f64>)> {
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(model.layers.len());
    for (idx, layer) in model.layers.iter().enumerate().rev() {
        let z = &fwd.pre_act[idx];
        let m = &fwd.aggregated[idx];
        let h_in = &fwd.hidden[idx];
        let w_eff = &fwd.effective[idx];
        let dz = &d_hidden * &layer.activation.derivative(z);
        let mut d_weight_eff = m.t().dot(&dz);
        let d_bias = layer.bias.as_ref().map(|_| dz.sum_axis(Axis(0)));
        let dm = dz.dot(&w_eff.t());
        let mut gin_eps_grad = 0.0;
        let mut cgso_grad = [0.0; 7];
        let d_in = match &layer.kind {
            LayerKind::Gcn => gcn_aggregate(g, &dm), // symmetric operator
            LayerKind::Gin => {
                gin_eps_grad = (&dm * h_in).sum();
                let mut d = neighbor_sum(g, &dm); // A is symmetric
                d.scaled_add(1.0 + layer.gin_eps, &dm);
                d
            }
            LayerKind::Cgnn { .. } => {
                let pieces = fwd.cgso[idx].as_ref().expect("cgso pieces stored");
                // dL/dPhi = dM . H_in^T
                let d_phi = dm.dot(&h_in.t());
                let p = &layer.cgso;
                let v = &pieces.v.values;
                let n = g.n();
                let ln_v: Vec<f64> = v.iter().map(|x| x.ln()).collect();
                let v1 = crate::gso::diag_pow(&pieces.v, p.e1)?;
                let v23 = crate::gso::diag_pow(&pieces.v, p.e2 + p.e3)?;
                let mut m1_g = 0.0;
                let mut m3_g = 0.0;
                let mut e1_g = 0.0;
                let mut a_g = 0.0;
                for i in 0..n {
                    let dii = d_phi[[i, i]];
                    m1_g += dii * v1[i];
                    m3_g += dii;
                    e1_g += p.m1 * dii * v1[i] * ln_v[i];
                    a_g += p.m2 * dii * v23[i];
                }
                let mut m2_g = 0.0;
                let mut e2_g = 0.0;
                let mut e3_g = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let mid = pieces.middle[[i, j]];
                        if mid != 0.0 || i == j {
                            let dij = d_phi[[i, j]];
                            m2_g += dij * mid;
                            e2_g += p.m2 * dij * mid * ln_v[i];
                            e3_g += p.m2 * dij * mid * ln_v[j];
                        }
                    }
                }
                cgso_grad = [m1_g, m2_g, m3_g, e1_g, e2_g, e3_g, a_g];
                pieces.phi.t().dot(&dm)
            }
        };
        // Gradient through the Bjorck projection when active.
        if let OrthoMode::Bjorck(cfg) = &model.orthonormal {
            d_weight_eff =
                crate::robustness::bjorck_backward(layer.weight.view(), cfg, d_weight_eff.view())?;
        }
        grads.push(LayerGrads {
            weight: d_weight_eff,
            bias: d_bias,
            gin_eps: gin_eps_grad,
            cgso: cgso_grad,
        });
        d_hidden = d_in;
    }
    grads.reverse();
    Ok((grads, d_hidden))
}

/// Public adjoint entry point (used by the adaptive-depth trainer to push
/// multi-exit adjoints through a shared stack).
pub fn backward_layers_public(
    model: &Model,
    g: &Graph,
    fwd: &Forward,
    d_hidden: Array2<f64>,
) -> Result<(Vec<LayerGrads>, Array2<f64>)> {
    backward_layers(model, g, fwd, d_hidden)
}

/// Loss and exact gradients for a node-level task. `mask` selects the nodes
/// contributing to the loss (all nodes when empty).
pub fn loss_and_grad(
    model: &Model,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
) -> Result<(f64, Gradients)> {
    if model.readout != Readout::None {
        return Err(Error::invalid("node loss needs readout None"));
    }
    let n = g.n();
    if targets.len() != n {
        return Err(Error::shape(format!("{n} targets"), format!("{}", targets.len())));
    }
    let fwd = forward(model, g, x)?;
    let rows: Vec<usize> = match mask {
        Some(m) => m.to_vec(),
        None => (0..n).collect(),
    };
    if rows.is_empty() {
        return Err(Error::invalid("empty loss mask"));
    }
    for &r in &rows {
        if r >= n {
            return Err(Error::Bounds {
                index: r,
                bound: n,
                what: "mask nodes",
            });
        }
        if targets[r] >= model.classes() {
            return Err(Error::Bounds {
                index: targets[r],
                bound: model.classes(),
                what: "classes",
            });
        }
    }
    let row_targets: Vec<usize> = rows.iter().map(|&r| targets[r]).collect();
    let loss = ce_from_logits(&fwd.logits, &rows, &row_targets);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    // d logits: (p - y) / count on masked rows
    let count = rows.len() as f64;
    let mut d_logits = Array2::<f64>::zeros(fwd.logits.dim());
    for (&r, &t) in rows.iter().zip(&row_targets) {
        for c in 0..model.classes() {
            d_logits[[r, c]] = fwd.probs[[r, c]] / count;
        }
        d_logits[[r, t]] -= 1.0 / count;
    }
    let last = fwd.hidden.last().unwrap();
    let head_weight = last.t().dot(&d_logits);
    let head_bias = d_logits.sum_axis(Axis(0));
    let d_hidden = d_logits.dot(&model.head_weight.t());
    let (layers, input) = backward_layers(model, g, &fwd, d_hidden)?;
    Ok((
        loss,
        Gradients {
            layers,
            head_weight,
            head_bias,
            input,
        },
    ))
}

/// Loss and gradients for one graph-level example.
pub fn graph_loss_and_grad(
    model: &Model,
    g: &Graph,
    x: ArrayView2<f64>,
    label: usize,
) -> Result<(f64, Gradients)> {
    if model.readout == Readout::None {
        return Err(Error::invalid("graph loss needs a pooling readout"));
    }
    if label >= model.classes() {
        return Err(Error::Bounds {
            index: label,
            bound: model.classes(),
            what: "classes",
        });
    }
    let fwd = forward(model, g, x)?;
    let loss = ce_from_logits(&fwd.logits, &[0], &[label]);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    let mut d_logits = fwd.probs.clone();
    d_logits[[0, label]] -= 1.0;
    let pooled = fwd.pooled.as_ref().expect("pooling readout");
    let head_weight = pooled
        .view()
        .insert_axis(Axis(1))
        .dot(&d_logits.row(0).insert_axis(Axis(0)));
    let head_bias = d_logits.row(0).to_owned();
    let d_pooled = d_logits.row(0).dot(&model.head_weight.t());
    let n = g.n();
    let scale = match model.readout {
        Readout::Mean => 1.0 / n.max(1) as f64,
        _ => 1.0,
    };
    let last_dim = fwd.hidden.last().unwrap().ncols();
    let mut d_hidden = Array2::<f64>::zeros((n, last_dim));
    for i in 0..n {
        for k in 0..last_dim {
            d_hidden[[i, k]] = d_pooled[k] * scale;
        }
    }
    let (layers, input) = backward_layers(model, g, &fwd, d_hidden)?;
    Ok((
        loss,
        Gradients {
            layers,
            head_weight,
            head_bias,
            input,
        },
    ))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step on a flat parameter vector. `lr_of` gives the
/// per-parameter learning rate (parameter groups); `frozen` entries are left
/// untouched entirely (their moments do not advance).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr_of: impl Fn(usize) -> f64,
    betas: (f64, f64),
    eps: f64,
    frozen: Option<&[bool]>,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        if frozen.map_or(false, |f| f[i]) {
            continue;
        }
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr_of(i) * m_hat / (v_hat.sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainCfg {
    pub epochs: usize,
    pub lr: f64,
    /// Separate learning rate for the CGSO exponent parameters (e1, e2, e3).
    pub exponent_lr: Option<f64>,
    pub seed: u64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
}

impl Default for TrainCfg {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            exponent_lr: None,
            seed: 0,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

pub fn accuracy(probs: ArrayView2<f64>, targets: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let correct = rows
        .iter()
        .filter(|&&r| argmax_row(probs, r) == targets[r])
        .count();
    correct as f64 / rows.len() as f64
}

pub fn argmax_row(m: ArrayView2<f64>, row: usize) -> usize {
    let r = m.row(row);
    let mut best = 0;
    for (i, &x) in r.iter().enumerate() {
        if x > r[best] {
            best = i;
        }
    }
    best
}

/// Full-batch Adam training on a node classification task.
pub fn train_node(
    model: &mut Model,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    cfg: &TrainCfg,
) -> Result<History> {
    let (mut flat, groups) = params_flat(model);
    let mut state = AdamState::new(flat.len());
    let mut history = History::default();
    let rows: Vec<usize> = mask.map_or_else(|| (0..g.n()).collect(), |m| m.to_vec());
    for _ in 0..cfg.epochs {
        let (loss, grads) = loss_and_grad(model, g, x, targets, mask)?;
        let gflat = grads.flat();
        adam_step(
            &mut flat,
            &gflat,
            &mut state,
            |i| match groups[i] {
                ParamGroup::Exponent => cfg.exponent_lr.unwrap_or(cfg.lr),
                ParamGroup::Normal => cfg.lr,
            },
            cfg.betas,
            cfg.adam_eps,
            None,
        );
        set_params_flat(model, &flat);
        let fwd = forward(model, g, x)?;
        history.loss.push(loss);
        history.accuracy.push(accuracy(fwd.probs.view(), targets, &rows));
    }
    Ok(history)
}

/// A labeled graph-classification dataset; each graph carries its features.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub graphs: Vec<Graph>,
    pub labels: Vec<usize>,
}

impl GraphDataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Full-batch Adam training on a graph classification task (gradient summed
/// over `indices`, or the full set when None).
pub fn train_graph(
    model: &mut Model,
    data: &GraphDataset,
    indices: Option<&[usize]>,
    cfg: &TrainCfg,
) -> Result<History> {
    if data.graphs.len() != data.labels.len() {
        return Err(Error::shape(
            format!("{} labels", data.graphs.len()),
            format!("{}", data.labels.len()),
        ));
    }
    let idx: Vec<usize> = indices.map_or_else(|| (0..data.len()).collect(), |m| m.to_vec());
    if idx.is_empty() {
        return Err(Error::invalid("empty training index set"));
    }
    let (mut flat, groups) = params_flat(model);
    let mut state = AdamState::new(flat.len());
    let mut history = History::default();
    for _ in 0..cfg.epochs {
        let mut total_loss = 0.0;
        let mut total: Option<Vec<f64>> = None;
        for &i in &idx {
            let g = &data.graphs[i];
            let x = g
                .features()
                .ok_or_else(|| Error::invalid(format!("graph {i} lacks features")))?;
            let (loss, grads) = graph_loss_and_grad(model, g, x, data.labels[i])?;
            total_loss += loss;
            let gf = grads.flat();
            match &mut total {
                None => total = Some(gf),
                Some(t) => t.iter_mut().zip(gf).for_each(|(a, b)| *a += b),
            }
        }
        let count = idx.len() as f64;
        let mut gflat = total.expect("non-empty index set");
        gflat.iter_mut().for_each(|x| *x /= count);
        adam_step(
            &mut flat,
            &gflat,
            &mut state,
            |i| match groups[i] {
                ParamGroup::Exponent => cfg.exponent_lr.unwrap_or(cfg.lr),
                ParamGroup::Normal => cfg.lr,
            },
            cfg.betas,
            cfg.adam_eps,
            None,
        );
        set_params_flat(model, &flat);
        // training accuracy
        let mut correct = 0usize;
        for &i in &idx {
            let g = &data.graphs[i];
            let fwd = forward(model, g, g.features().unwrap())?;
            if argmax_row(fwd.probs.view(), 0) == data.labels[i] {
                correct += 1;
            }
        }
        history.loss.push(total_loss / count);
        history.accuracy.push(correct as f64 / count);
    }
    Ok(history)
}

/// Graph-level embedding: the readout-pooled hidden state before the head.
pub fn embed_graph(model: &Model, g: &Graph, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if model.readout == Readout::None {
        return Err(Error::invalid("embedding needs a pooling readout"));
    }
    let fwd = forward(model, g, x)?;
    Ok(fwd.pooled.expect("pooling readout"))
}

// ---------------------------------------------------------------------------
// Checkpoint serialization (text, round-trip exact via shortest-float repr)
// ---------------------------------------------------------------------------

pub fn checkpoint_string(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "centra-model v1");
    let _ = writeln!(out, "layers {}", model.layers.len());
    for l in &model.layers {
        let kind = match &l.kind {
            LayerKind::Gcn => "gcn".to_string(),
            LayerKind::Gin => "gin".to_string(),
            LayerKind::Cgnn { centrality } => match centrality {
                CentralityKind::Degree => "cgnn:degree".to_string(),
                CentralityKind::KCore => "cgnn:kcore".to_string(),
                CentralityKind::Pagerank { alpha } => format!("cgnn:pagerank:{alpha}"),
                CentralityKind::Walk { l } => format!("cgnn:walk:{l}"),
            },
        };
        let act = match l.activation {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        let _ = writeln!(
            out,
            "layer {kind} {} {} {act} bias={}",
            l.weight.nrows(),
            l.weight.ncols(),
            l.bias.is_some() as u8
        );
        let _ = writeln!(out, "gin_eps {}", l.gin_eps);
        let p = l.cgso.as_array();
        let _ = writeln!(
            out,
            "cgso {} {} {} {} {} {} {}",
            p[0], p[1], p[2], p[3], p[4], p[5], p[6]
        );
        for w in l.weight.iter() {
            let _ = writeln!(out, "{w}");
        }
        if let Some(b) = &l.bias {
            for x in b.iter() {
                let _ = writeln!(out, "{x}");
            }
        }
    }
    let readout = match model.readout {
        Readout::Sum => "sum",
        Readout::Mean => "mean",
        Readout::None => "none",
    };
    let _ = writeln!(
        out,
        "head {readout} {} {}",
        model.head_weight.nrows(),
        model.head_weight.ncols()
    );
    for w in model.head_weight.iter() {
        let _ = writeln!(out, "{w}");
    }
    for x in model.head_bias.iter() {
        let _ = writeln!(out, "{x}");
    }
    out
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, checkpoint_string(model))?;
    Ok(())
}

pub fn parse_checkpoint(text: &str) -> Result<Model> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (ln, header) = lines.next().ok_or_else(|| perr(0, "empty checkpoint"))?;
    if header.trim() != "centra-model v1" {
        return Err(perr(ln, "bad header"));
    }
    let (ln, count_line) = lines.next().ok_or_else(|| perr(1, "missing layer count"))?;
    let layer_count: usize = count_line
        .trim()
        .strip_prefix("layers ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(ln, "bad layer count"))?;
    let next_f64 = |lines: &mut std::iter::Enumerate<std::str::Lines>| -> Result<f64> {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of checkpoint"))?;
        l.trim().parse::<f64>().map_err(|e| perr(ln, &e.to_string()))
    };
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (ln, spec) = lines.next().ok_or_else(|| perr(0, "missing layer line"))?;
        let toks: Vec<&str> = spec.split_whitespace().collect();
        if toks.len() != 6 || toks[0] != "layer" {
            return Err(perr(ln, "bad layer line"));
        }
        let kind = match toks[1] {
            "gcn" => LayerKind::Gcn,
            "gin" => LayerKind::Gin,
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                if parts.first() != Some(&"cgnn") {
                    return Err(perr(ln, "unknown layer kind"));
                }
                let centrality = match parts.get(1) {
                    Some(&"degree") => CentralityKind::Degree,
                    Some(&"kcore") => CentralityKind::KCore,
                    Some(&"pagerank") => CentralityKind::Pagerank {
                        alpha: parts
                            .get(2)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| perr(ln, "bad pagerank alpha"))?,
                    },
                    Some(&"walk") => CentralityKind::Walk {
                        l: parts
                            .get(2)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| perr(ln, "bad walk length"))?,
                    },
                    _ => return Err(perr(ln, "unknown centrality")),
                };
                LayerKind::Cgnn { centrality }
            }
        };
        let d_in: usize = toks[2].parse().map_err(|_| perr(ln, "bad d_in"))?;
        let d_out: usize = toks[3].parse().map_err(|_| perr(ln, "bad d_out"))?;
        let activation = match toks[4] {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            _ => return Err(perr(ln, "unknown activation")),
        };
        let has_bias = toks[5] == "bias=1";
        let (ln2, eps_line) = lines.next().ok_or_else(|| perr(ln, "missing gin_eps"))?;
        let gin_eps: f64 = eps_line
            .trim()
            .strip_prefix("gin_eps ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln2, "bad gin_eps"))?;
        let (ln3, cg_line) = lines.next().ok_or_else(|| perr(ln2, "missing cgso"))?;
        let cg: Vec<f64> = cg_line
            .trim()
            .strip_prefix("cgso ")
            .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
            .ok_or_else(|| perr(ln3, "bad cgso line"))?;
        if cg.len() != 7 {
            return Err(perr(ln3, "cgso needs 7 scalars"));
        }
        let mut weight = Array2::<f64>::zeros((d_in, d_out));
        for w in weight.iter_mut() {
            *w = next_f64(&mut lines)?;
        }
        let bias = if has_bias {
            let mut b = Array1::<f64>::zeros(d_out);
            for x in b.iter_mut() {
                *x = next_f64(&mut lines)?;
            }
            Some(b)
        } else {
            None
        };
        layers.push(Layer {
            kind,
            weight,
            bias,
            gin_eps,
            cgso: CgsoParams::from_array([cg[0], cg[1], cg[2], cg[3], cg[4], cg[5], cg[6]]),
            activation,
        });
    }
    let (ln, head_line) = lines.next().ok_or_else(|| perr(0, "missing head line"))?;
    let toks: Vec<&str> = head_line.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "head" {
        return Err(perr(ln, "bad head line"));
    }
    let readout = match toks[1] {
        "sum" => Readout::Sum,
        "mean" => Readout::Mean,
        "none" => Readout::None,
        _ => return Err(perr(ln, "unknown readout")),
    };
    let hr: usize = toks[2].parse().map_err(|_| perr(ln, "bad head rows"))?;
    let hc: usize = toks[3].parse().map_err(|_| perr(ln, "bad head cols"))?;
    let mut head_weight = Array2::<f64>::zeros((hr, hc));
    for w in head_weight.iter_mut() {
        *w = next_f64(&mut lines)?;
    }
    let mut head_bias = Array1::<f64>::zeros(hc);
    for x in head_bias.iter_mut() {
        *x = next_f64(&mut lines)?;
    }
    Ok(Model {
        layers,
        readout,
        head_weight,
        head_bias,
        orthonormal: OrthoMode::Off,
    })
}

pub fn load_checkpoint(path: impl AsRef<std::path::Path>) -> Result<Model> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
