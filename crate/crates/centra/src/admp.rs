//! Adaptive-depth message passing: a message-passing stack with one linear
//! exit head per depth so every node can be classified at any layer, trained
//! either by aggregate loss minimization or stage-wise sequential training,
//! plus the oracle accuracy and the centrality-bucket exit policy.

use crate::centrality::CentralityVector;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{
    self, accuracy, adam_step, argmax_row, forward, AdamState, Layer, Model, OrthoMode, ParamGroup,
    Readout,
};
use crate::rng::SplitMix64;
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Message-passing layers plus L+1 exit heads (head `l` reads the depth-`l`
/// hidden state; head 0 reads the raw features).
#[derive(Debug, Clone)]
pub struct AdmpModel {
    pub layers: Vec<Layer>,
    pub exit_weights: Vec<Array2<f64>>,
    pub exit_biases: Vec<Array1<f64>>,
    /// Per-parameter freeze mask in `params_flat` order; set by sequential
    /// training as stages complete.
    pub frozen_mask: Vec<bool>,
}

impl AdmpModel {
    /// Initialize with Glorot weights: `dims[l]` is the width after layer l
    /// (`dims[0]` = input width), every depth gets an exit head onto
    /// `classes`.
    pub fn init(
        kind: nn::LayerKind,
        dims: &[usize],
        classes: usize,
        activation: nn::Activation,
        seed: u64,
    ) -> AdmpModel {
        let mut rng = SplitMix64::new(seed);
        let mut glorot = |rows: usize, cols: usize| -> Array2<f64> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| (rng.next_f64() * 2.0 - 1.0) * a)
        };
        let layers: Vec<Layer> = (1..dims.len())
            .map(|l| Layer {
                kind: kind.clone(),
                weight: glorot(dims[l - 1], dims[l]),
                bias: Some(Array1::zeros(dims[l])),
                gin_eps: 0.0,
                cgso: crate::gso::CgsoParams::normalized_adjacency(),
                activation,
            })
            .collect();
        let exit_weights: Vec<Array2<f64>> =
            dims.iter().map(|&d| glorot(d, classes)).collect();
        let exit_biases: Vec<Array1<f64>> =
            dims.iter().map(|_| Array1::zeros(classes)).collect();
        let mut model = AdmpModel {
            layers,
            exit_weights,
            exit_biases,
            frozen_mask: Vec::new(),
        };
        model.frozen_mask = vec![false; params_flat(&model).0.len()];
        model
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn classes(&self) -> usize {
        self.exit_weights[0].ncols()
    }

    /// The truncated model producing exactly the depth-`l` exit predictions:
    /// the first `l` layers with exit head `l` as the classifier head.
    pub fn truncated(&self, l: usize) -> Model {
        Model {
            layers: self.layers[..l].to_vec(),
            readout: Readout::None,
            head_weight: self.exit_weights[l].clone(),
            head_bias: self.exit_biases[l].clone(),
            orthonormal: OrthoMode::Off,
        }
    }
}

/// Flat parameters: per layer [weight, bias, gin_eps, cgso x7] as in
/// `nn::params_flat`, then each exit head's weight and bias in depth order.
pub fn params_flat(model: &AdmpModel) -> (Vec<f64>, Vec<ParamGroup>) {
    let probe = Model {
        layers: model.layers.clone(),
        readout: Readout::None,
        head_weight: Array2::zeros((1, 1)),
        head_bias: Array1::zeros(1),
        orthonormal: OrthoMode::Off,
    };
    let (mut flat, mut groups) = nn::params_flat(&probe);
    // strip the probe head (1 weight + 1 bias)
    flat.truncate(flat.len() - 2);
    groups.truncate(groups.len() - 2);
    for (w, b) in model.exit_weights.iter().zip(&model.exit_biases) {
        flat.extend(w.iter());
        groups.extend(std::iter::repeat(ParamGroup::Normal).take(w.len()));
        flat.extend(b.iter());
        groups.extend(std::iter::repeat(ParamGroup::Normal).take(b.len()));
    }
    (flat, groups)
}

pub fn set_params_flat(model: &mut AdmpModel, flat: &[f64]) {
    let mut offset = 0usize;
    for layer in &mut model.layers {
        for w in layer.weight.iter_mut() {
            *w = flat[offset];
            offset += 1;
        }
        if let Some(b) = &mut layer.bias {
            for x in b.iter_mut() {
                *x = flat[offset];
                offset += 1;
            }
        }
        layer.gin_eps = flat[offset];
        offset += 1;
        let mut p = [0.0; 7];
        for x in p.iter_mut() {
            *x = flat[offset];
            offset += 1;
        }
        layer.cgso = crate::gso::CgsoParams::from_array(p);
    }
    for (w, b) in model.exit_weights.iter_mut().zip(&mut model.exit_biases) {
        for x in w.iter_mut() {
            *x = flat[offset];
            offset += 1;
        }
        for x in b.iter_mut() {
            *x = flat[offset];
            offset += 1;
        }
    }
    assert_eq!(offset, flat.len(), "param count mismatch");
}

/// Per-depth prediction matrices p^(0) .. p^(L) (softmax rows).
pub fn admp_forward(model: &AdmpModel, g: &Graph, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    let mut preds = Vec::with_capacity(model.depth() + 1);
    for l in 0..=model.depth() {
        let truncated = model.truncated(l);
        let fwd = forward(&truncated, g, x)?;
        preds.push(fwd.probs);
    }
    Ok(preds)
}

/// Aggregate loss sum_l CE(p^(l)) over the masked nodes, with gradients for
/// every parameter, computed in one backward sweep through the shared stack.
pub fn admp_loss_and_grad(
    model: &AdmpModel,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
) -> Result<(f64, Vec<f64>)> {
    let n = g.n();
    let rows: Vec<usize> = mask.map_or_else(|| (0..n).collect(), |m| m.to_vec());
    if rows.is_empty() {
        return Err(Error::invalid("empty loss mask"));
    }
    let depth = model.depth();
    let mut total_loss = 0.0;
    // one full-depth forward through the shared stack
    let full = model.truncated(depth);
    let fwd = forward(&full, g, x)?;
    // exit predictions per depth from the stored hidden states
    let count = rows.len() as f64;
    let classes = model.classes();
    let row_targets: Vec<usize> = rows.iter().map(|&r| targets[r]).collect();
    let mut exit_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(depth + 1);
    let mut d_hidden_per_level: Vec<Array2<f64>> = Vec::with_capacity(depth + 1);
    for l in 0..=depth {
        let h = &fwd.hidden[l];
        let logits = h.dot(&model.exit_weights[l]) + &model.exit_biases[l].view().insert_axis(Axis(0));
        // the exact same softmax/CE ops as the single-head loss path, so a
        // depth-0 model reduces bitwise to head-only training
        total_loss += nn::ce_from_logits(&logits, &rows, &row_targets);
        let probs = nn::softmax_rows(&logits);
        let mut d_logits = Array2::<f64>::zeros(logits.dim());
        for &r in &rows {
            for c in 0..classes {
                d_logits[[r, c]] = probs[[r, c]] / count;
            }
            d_logits[[r, targets[r]]] -= 1.0 / count;
        }
        exit_grads.push((h.t().dot(&d_logits), d_logits.sum_axis(Axis(0))));
        d_hidden_per_level.push(d_logits.dot(&model.exit_weights[l].t()));
    }
    if !total_loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {total_loss}")));
    }
    // single backward sweep accumulating the exit adjoints level by level
    let mut layer_grads: Vec<nn::LayerGrads> = Vec::with_capacity(depth);
    let mut d_hidden = d_hidden_per_level[depth].clone();
    for l in (0..depth).rev() {
        let d_out = model.layers[l].weight.ncols();
        let single = Model {
            layers: vec![model.layers[l].clone()],
            readout: Readout::None,
            // dummy head, only the layer pass of this probe is used
            head_weight: Array2::zeros((d_out, 1)),
            head_bias: Array1::zeros(1),
            orthonormal: OrthoMode::Off,
        };
        let sub_fwd = nn::forward(&single, g, fwd.hidden[l].view())?;
        let (grads, d_in) = nn::backward_layers_public(&single, g, &sub_fwd, d_hidden)?;
        layer_grads.push(grads.into_iter().next().unwrap());
        d_hidden = d_in + &d_hidden_per_level[l];
    }
    layer_grads.reverse();
    // assemble flat gradient in params_flat order
    let mut flat = Vec::new();
    for gl in &layer_grads {
        flat.extend(gl.weight.iter());
        if let Some(b) = &gl.bias {
            flat.extend(b.iter());
        }
        flat.push(gl.gin_eps);
        flat.extend_from_slice(&gl.cgso);
    }
    for (gw, gb) in &exit_grads {
        flat.extend(gw.iter());
        flat.extend(gb.iter());
    }
    Ok((total_loss, flat))
}

#[derive(Debug, Clone)]
pub struct AdmpTrainCfg {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AdmpTrainCfg {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Aggregate loss minimization: joint Adam on sum_l CE(p^(l)).
pub fn train_alm(
    model: &mut AdmpModel,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    cfg: &AdmpTrainCfg,
) -> Result<Vec<f64>> {
    let (mut flat, _groups) = params_flat(model);
    let mut state = AdamState::new(flat.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (loss, grads) = admp_loss_and_grad(model, g, x, targets, mask)?;
        adam_step(
            &mut flat,
            &grads,
            &mut state,
            |_| cfg.lr,
            (0.9, 0.999),
            1e-8,
            None,
        );
        set_params_flat(model, &flat);
        history.push(loss);
    }
    Ok(history)
}

/// Index ranges of each unit (layer l, exit head l) inside the flat vector.
fn param_layout(model: &AdmpModel) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut layer_spans = Vec::new();
    let mut offset = 0usize;
    for layer in &model.layers {
        let mut len = layer.weight.len();
        if let Some(b) = &layer.bias {
            len += b.len();
        }
        len += 1 + 7; // gin_eps + cgso
        layer_spans.push((offset, offset + len));
        offset += len;
    }
    let mut exit_spans = Vec::new();
    for (w, b) in model.exit_weights.iter().zip(&model.exit_biases) {
        let len = w.len() + b.len();
        exit_spans.push((offset, offset + len));
        offset += len;
    }
    (layer_spans, exit_spans)
}

/// Sequential training: stage t trains only layer t's parameters and exit
/// head t against CE(p^(t)), then freezes them; all earlier parameters stay
/// bit-identical through later stages (recorded in `frozen_mask`).
pub fn train_st(
    model: &mut AdmpModel,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    cfg: &AdmpTrainCfg,
) -> Result<Vec<Vec<f64>>> {
    let mut histories = Vec::new();
    for stage in 0..=model.depth() {
        histories.push(train_st_stage(model, g, x, targets, mask, cfg, stage)?);
    }
    Ok(histories)
}

/// One sequential-training stage: thaw only layer `stage` (when > 0) and exit
/// head `stage`, minimize CE(p^(stage)), then record them as frozen. Every
/// other parameter is bit-identical before and after.
pub fn train_st_stage(
    model: &mut AdmpModel,
    g: &Graph,
    x: ArrayView2<f64>,
    targets: &[usize],
    mask: Option<&[usize]>,
    cfg: &AdmpTrainCfg,
    stage: usize,
) -> Result<Vec<f64>> {
    if stage > model.depth() {
        return Err(Error::Bounds {
            index: stage,
            bound: model.depth() + 1,
            what: "training stages",
        });
    }
    let (layer_spans, exit_spans) = param_layout(model);
    let (mut flat, _groups) = params_flat(model);
    // thaw exactly this stage's units
    let mut frozen = vec![true; flat.len()];
    if stage >= 1 {
        let (a, b) = layer_spans[stage - 1];
        frozen[a..b].iter_mut().for_each(|f| *f = false);
    }
    let (a, b) = exit_spans[stage];
    frozen[a..b].iter_mut().for_each(|f| *f = false);

    let mut state = AdamState::new(flat.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        // loss at exit `stage` only
        let truncated = model.truncated(stage);
        let (loss, grads) = nn::loss_and_grad(&truncated, g, x, targets, mask)?;
        // scatter the truncated-model grads into the flat layout
        let mut gflat = vec![0.0; flat.len()];
        for (l, lg) in grads.layers.iter().enumerate() {
            let (a, _) = layer_spans[l];
            let mut o = a;
            for v in lg.weight.iter() {
                gflat[o] = *v;
                o += 1;
            }
            if let Some(bias) = &lg.bias {
                for v in bias.iter() {
                    gflat[o] = *v;
                    o += 1;
                }
            }
            gflat[o] = lg.gin_eps;
            o += 1;
            for v in lg.cgso {
                gflat[o] = v;
                o += 1;
            }
        }
        let (a, _) = exit_spans[stage];
        let mut o = a;
        for v in grads.head_weight.iter() {
            gflat[o] = *v;
            o += 1;
        }
        for v in grads.head_bias.iter() {
            gflat[o] = *v;
            o += 1;
        }
        adam_step(
            &mut flat,
            &gflat,
            &mut state,
            |_| cfg.lr,
            (0.9, 0.999),
            1e-8,
            Some(&frozen),
        );
        set_params_flat(model, &flat);
        history.push(loss);
    }
    // permanently freeze this stage
    if stage >= 1 {
        let (a, b) = layer_spans[stage - 1];
        model.frozen_mask[a..b].iter_mut().for_each(|f| *f = true);
    }
    let (a, b) = exit_spans[stage];
    model.frozen_mask[a..b].iter_mut().for_each(|f| *f = true);
    Ok(history)
}

/// Fraction of test nodes whose true label is predicted at some depth.
pub fn oracle_accuracy(
    preds: &[Array2<f64>],
    targets: &[usize],
    test_mask: &[usize],
) -> f64 {
    if test_mask.is_empty() {
        return 0.0;
    }
    let hit = test_mask
        .iter()
        .filter(|&&v| preds.iter().any(|p| argmax_row(p.view(), v) == targets[v]))
        .count();
    hit as f64 / test_mask.len() as f64
}

/// Exit policy: centrality thresholds into equal-count buckets, with the
/// per-bucket best validation layer.
#[derive(Debug, Clone)]
pub struct ExitPolicy {
    /// C+1 sorted thresholds; bucket b covers `[edges[b], edges[b+1])`.
    pub bucket_edges: Vec<f64>,
    pub bucket_layer: Vec<usize>,
}

impl ExitPolicy {
    /// Route a centrality value to its bucket (values outside the covered
    /// range clamp to the nearest bucket).
    pub fn bucket_of(&self, value: f64) -> usize {
        let c = self.bucket_layer.len();
        let mut b = 0usize;
        for k in 0..c {
            if value >= self.bucket_edges[k] {
                b = k;
            }
        }
        b
    }
}

/// Learn the exit policy: rank all nodes by centrality (ties by node index),
/// cut into `c_buckets` equal-count buckets, then give each bucket the layer
/// with the best validation accuracy (ties to the smallest layer; buckets
/// without validation nodes fall back to the globally best layer).
pub fn learn_exit_policy(
    preds: &[Array2<f64>],
    targets: &[usize],
    val_mask: &[usize],
    centrality: &CentralityVector,
    c_buckets: usize,
) -> Result<ExitPolicy> {
    let n = centrality.len();
    if c_buckets == 0 {
        return Err(Error::invalid("need at least one bucket"));
    }
    if val_mask.is_empty() {
        return Err(Error::invalid("empty validation mask"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        centrality.values[a]
            .partial_cmp(&centrality.values[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut edges = Vec::with_capacity(c_buckets + 1);
    edges.push(f64::NEG_INFINITY);
    for k in 1..c_buckets {
        let idx = k * n / c_buckets;
        edges.push(centrality.values[order[idx]]);
    }
    edges.push(f64::INFINITY);
    let policy_probe = ExitPolicy {
        bucket_edges: edges.clone(),
        bucket_layer: vec![0; c_buckets],
    };

    // per-layer accuracy of each bucket on the validation nodes
    let layers = preds.len();
    let global_best = (0..layers)
        .map(|l| {
            (
                l,
                accuracy(preds[l].view(), targets, val_mask),
            )
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .unwrap_or(0);
    let mut bucket_layer = vec![global_best; c_buckets];
    for b in 0..c_buckets {
        let members: Vec<usize> = val_mask
            .iter()
            .copied()
            .filter(|&v| policy_probe.bucket_of(centrality.values[v]) == b)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut best_layer = 0usize;
        let mut best_acc = -1.0;
        for (l, p) in preds.iter().enumerate() {
            let acc = accuracy(p.view(), targets, &members);
            if acc > best_acc {
                best_acc = acc;
                best_layer = l;
            }
        }
        bucket_layer[b] = best_layer;
    }
    Ok(ExitPolicy {
        bucket_edges: edges,
        bucket_layer,
    })
}

/// Route each test node through its bucket's exit layer; returns the chosen
/// per-node predictions and the resulting accuracy.
pub fn apply_exit_policy(
    policy: &ExitPolicy,
    preds: &[Array2<f64>],
    centrality: &CentralityVector,
    targets: &[usize],
    test_mask: &[usize],
) -> (Vec<usize>, f64) {
    let mut chosen = Vec::with_capacity(test_mask.len());
    let mut correct = 0usize;
    for &v in test_mask {
        let bucket = policy.bucket_of(centrality.values[v]);
        let layer = policy.bucket_layer[bucket].min(preds.len() - 1);
        let pred = argmax_row(preds[layer].view(), v);
        if pred == targets[v] {
            correct += 1;
        }
        chosen.push(pred);
    }
    let acc = if test_mask.is_empty() {
        0.0
    } else {
        correct as f64 / test_mask.len() as f64
    };
    (chosen, acc)
}
