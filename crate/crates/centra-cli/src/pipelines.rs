//! The experiment pipelines behind each CLI command. Every pipeline reads its
//! parameters through [`Config`] (recording defaults), runs deterministic
//! library calls, and returns a JSON report embedding the resolved config.

use crate::config::{Config, ConfigError};
use centra::centrality::{centrality_matrix, CentralityKind};
use centra::clustering::{ami, ari, spectral_cluster};
use centra::generators::{gen_ba, gen_sbbam, gen_sbm, SbbamSpec};
use centra::graph::{self, Graph, Partition};
use centra::gratin::{self, GratinCfg};
use centra::nn::{self, Activation, LayerKind, LayerSpec, Model, Readout, TrainCfg};
use centra::robustness::{self, BjorckConfig, BoundKind, RobustnessConfig};
use centra::rng::SplitMix64;
use ndarray::Array2;
use serde_json::{json, Map, Value};

pub enum PipelineError {
    Config(ConfigError),
    Run(String),
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e)
    }
}

impl From<centra::Error> for PipelineError {
    fn from(e: centra::Error) -> Self {
        PipelineError::Run(e.to_string())
    }
}

type PResult<T> = Result<T, PipelineError>;

fn stage<T>(name: &str, r: centra::Result<T>) -> PResult<T> {
    r.map_err(|e| PipelineError::Run(format!("[{name}] {e}")))
}

pub fn run(cfg: &Config) -> PResult<Value> {
    let command = cfg.require("command")?;
    let _ = cfg.optional("output"); // record the report destination if set
    let mut report = match command.as_str() {
        "generate" => cmd_generate(cfg)?,
        "cluster" => cmd_cluster(cfg)?,
        "train" => cmd_train(cfg)?,
        "admp" => cmd_admp(cfg)?,
        "gcorn" => cmd_gcorn(cfg)?,
        "estimate" => cmd_estimate(cfg)?,
        "crf" => cmd_crf(cfg)?,
        "gratin" => cmd_gratin(cfg)?,
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "command".into(),
                msg: format!("unknown command `{other}`"),
            }))
        }
    };
    // echo the fully resolved configuration for exact replay
    let mut config_obj = Map::new();
    for (k, v) in cfg.resolved() {
        config_obj.insert(k, Value::String(v));
    }
    let obj = report.as_object_mut().expect("report is an object");
    obj.insert("config".into(), Value::Object(config_obj));
    obj.insert(
        "timestamp_unix".into(),
        json!(std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)),
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

fn centrality_kind(cfg: &Config, key: &str, default: &str) -> PResult<CentralityKind> {
    let raw = cfg.get_or(key, default);
    Ok(match raw.as_str() {
        "degree" => CentralityKind::Degree,
        "kcore" => CentralityKind::KCore,
        "pagerank" => CentralityKind::Pagerank {
            alpha: cfg.parse_or("centrality.alpha", 0.85)?,
        },
        "walk" => CentralityKind::Walk {
            l: cfg.parse_or("centrality.walk_length", 2)?,
        },
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: key.into(),
                msg: format!("unknown centrality `{other}`"),
            }))
        }
    })
}

fn generate_graph(cfg: &Config, seed: u64) -> PResult<Graph> {
    let kind = cfg.require("generate.kind")?;
    let g = match kind.as_str() {
        "sbm" => {
            let sizes: Vec<usize> = cfg.parse_list_or("generate.sizes", "50,50")?;
            let p_in: f64 = cfg.parse_or("generate.p_in", 0.3)?;
            let p_out: f64 = cfg.parse_or("generate.p_out", 0.05)?;
            let k = sizes.len();
            let p: Vec<Vec<f64>> = (0..k)
                .map(|i| (0..k).map(|j| if i == j { p_in } else { p_out }).collect())
                .collect();
            stage("generate", gen_sbm(&sizes, &p, seed))?
        }
        "ba" => {
            let n: usize = cfg.parse_or("generate.n", 100)?;
            let n0: usize = cfg.parse_or("generate.n0", 5)?;
            let r0: usize = cfg.parse_or("generate.r0", 3)?;
            let r: usize = cfg.parse_or("generate.r", 2)?;
            stage("generate", gen_ba(n, n0, r0, r, seed))?
        }
        "sbbam" => {
            let sizes: Vec<usize> = cfg.parse_list_or("generate.sizes", "100,100,100")?;
            let rs: Vec<usize> = cfg.parse_list_or("generate.r", "5,10,15")?;
            let p_off: f64 = cfg.parse_or("generate.p_off", 0.1)?;
            let spec = SbbamSpec::with_default_seeds(sizes, rs, p_off, seed);
            stage("generate", gen_sbbam(&spec))?
        }
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "generate.kind".into(),
                msg: format!("unknown generator `{other}`"),
            }))
        }
    };
    Ok(g)
}

fn load_input_graph(cfg: &Config) -> PResult<Graph> {
    if cfg.has("input.edges") {
        let path = cfg.require("input.edges")?;
        if !std::path::Path::new(&path).exists() {
            return Err(PipelineError::Config(ConfigError {
                field: "input.edges".into(),
                msg: format!("file `{path}` does not exist"),
            }));
        }
        let mut g = stage("load", graph::load_edge_list(&path, None))?;
        if cfg.has("input.features") {
            let fpath = cfg.require("input.features")?;
            if !std::path::Path::new(&fpath).exists() {
                return Err(PipelineError::Config(ConfigError {
                    field: "input.features".into(),
                    msg: format!("file `{fpath}` does not exist"),
                }));
            }
            let x = stage("load", graph::load_features(&fpath, g.n()))?;
            g = stage("load", g.with_features(x))?;
        }
        if cfg.has("input.labels") {
            let lpath = cfg.require("input.labels")?;
            if !std::path::Path::new(&lpath).exists() {
                return Err(PipelineError::Config(ConfigError {
                    field: "input.labels".into(),
                    msg: format!("file `{lpath}` does not exist"),
                }));
            }
            let labels = stage("load", graph::load_labels(&lpath, g.n()))?;
            g = stage(
                "load",
                Graph::new(g.n(), g.edges().iter().copied(), g.features().map(|f| f.to_owned()), Some(labels)),
            )?;
        }
        Ok(g)
    } else if cfg.has("generate.kind") {
        let seed: u64 = cfg.parse_or("seed", 0)?;
        generate_graph(cfg, seed)
    } else {
        Err(PipelineError::Config(ConfigError {
            field: "input.edges".into(),
            msg: "provide input.edges or a [generate] section".into(),
        }))
    }
}

/// Features for learning: file-provided, carried by the generator, or a
/// synthesized [1, degree] pair when `features = degree`.
fn learning_features(cfg: &Config, g: &Graph) -> PResult<Array2<f64>> {
    if let Some(x) = g.features() {
        return Ok(x.to_owned());
    }
    let mode = cfg.get_or("features", "degree");
    match mode.as_str() {
        "degree" => {
            let n = g.n();
            let mut x = Array2::<f64>::zeros((n, 2));
            for i in 0..n {
                x[[i, 0]] = 1.0;
                x[[i, 1]] = g.degree(i) as f64;
            }
            Ok(x)
        }
        other => Err(PipelineError::Config(ConfigError {
            field: "features".into(),
            msg: format!("unknown feature synthesis `{other}`"),
        })),
    }
}

fn require_labels(g: &Graph) -> PResult<Vec<usize>> {
    g.labels()
        .map(|l| l.to_vec())
        .ok_or_else(|| PipelineError::Run("[input] graph has no labels".into()))
}

/// Deterministic node split by shuffled index. Needs at least three nodes so
/// every part is non-empty.
fn node_splits(
    n: usize,
    seed: u64,
    train_frac: f64,
    val_frac: f64,
) -> PResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n < 3 {
        return Err(PipelineError::Run(format!(
            "[split] need at least 3 nodes to split, got {n}"
        )));
    }
    let mut rng = SplitMix64::new(seed ^ 0x5911_7u64);
    let order = rng.sample_distinct(n, n);
    let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 2);
    let n_val = ((n as f64 * val_frac).round() as usize).clamp(1, n - n_train - 1);
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok((train, val, test))
}

fn model_from_config(cfg: &Config, d_in: usize, classes: usize, seed: u64) -> PResult<Model> {
    let layers: usize = cfg.parse_or("model.layers", 2)?;
    let hidden: usize = cfg.parse_or("model.hidden", 16)?;
    let kind_raw = cfg.get_or("model.kind", "gcn");
    let kind = match kind_raw.as_str() {
        "gcn" => LayerKind::Gcn,
        "gin" => LayerKind::Gin,
        "cgnn" => LayerKind::Cgnn {
            centrality: centrality_kind(cfg, "model.centrality", "kcore")?,
        },
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "model.kind".into(),
                msg: format!("unknown layer kind `{other}`"),
            }))
        }
    };
    let mut specs = Vec::new();
    let mut d = d_in;
    for l in 0..layers {
        let out = hidden;
        specs.push(LayerSpec {
            kind: kind.clone(),
            d_in: d,
            d_out: out,
            bias: true,
            activation: if l + 1 == layers {
                Activation::Identity
            } else {
                Activation::Relu
            },
        });
        d = out;
    }
    Ok(Model::init(&specs, Readout::None, d, classes, seed))
}

fn train_cfg(cfg: &Config) -> PResult<TrainCfg> {
    Ok(TrainCfg {
        epochs: cfg.parse_or("train.epochs", 200)?,
        lr: cfg.parse_or("train.lr", 0.01)?,
        exponent_lr: Some(cfg.parse_or("train.exponent_lr", 0.005)?),
        seed: cfg.parse_or("seed", 0)?,
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(cfg: &Config) -> PResult<Value> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let g = generate_graph(cfg, seed)?;
    let dir = cfg.require("output.dir")?;
    write_graph(&g, &dir).map_err(|e| PipelineError::Run(format!("[write] {e}")))?;
    let stats = stage("stats", graph::graph_stats(&g));
    let mut report = Map::new();
    report.insert("n".into(), json!(g.n()));
    report.insert("edges".into(), json!(g.num_edges()));
    if let Ok(s) = stats {
        report.insert("edge_density".into(), json!(s.edge_density));
        if let Some(h) = s.homophily {
            report.insert("homophily".into(), json!(h));
        }
        report.insert("min_degree".into(), json!(s.min_degree));
        report.insert("max_degree".into(), json!(s.max_degree));
    }
    report.insert("output_dir".into(), json!(dir));
    Ok(Value::Object(report))
}

/// Emit `edges.txt` plus `labels.csv` / `features.csv` when present; the
/// formats round-trip through the graph loaders exactly.
pub fn write_graph(g: &Graph, dir: &str) -> centra::Result<()> {
    std::fs::create_dir_all(dir)?;
    let base = std::path::Path::new(dir);
    graph::write_edge_list(g, base.join("edges.txt"))?;
    if let Some(x) = g.features() {
        graph::write_features(x, base.join("features.csv"))?;
    }
    if let Some(labels) = g.labels() {
        graph::write_labels(labels, base.join("labels.csv"))?;
    }
    Ok(())
}

fn cmd_cluster(cfg: &Config) -> PResult<Value> {
    let base_seed: u64 = cfg.parse_or("seed", 0)?;
    let n_seeds: usize = cfg.parse_or("cluster.seeds", 50)?;
    let kind = centrality_kind(cfg, "cluster.centrality", "kcore")?;
    let e2: f64 = cfg.parse_or("cluster.e2", 0.5)?;
    let e3: f64 = cfg.parse_or("cluster.e3", 0.5)?;
    let clusters: usize = cfg.parse_or("cluster.clusters", 3)?;
    let normalize: bool = cfg.parse_or("cluster.normalize_rows", false)?;
    let mut amis = Vec::with_capacity(n_seeds);
    let mut aris = Vec::with_capacity(n_seeds);
    for s in 0..n_seeds {
        let seed = base_seed + s as u64;
        let g = if cfg.has("input.edges") {
            load_input_graph(cfg)?
        } else {
            generate_graph(cfg, seed)?
        };
        let truth = Partition(require_labels(&g)?);
        let v = stage("centrality", centrality_matrix(&g, kind, Some(1e-6)))?;
        let result = stage(
            "spectral",
            spectral_cluster(&g, &v, e2, e3, clusters, seed, normalize),
        )?;
        amis.push(stage("ami", ami(&result.partition, &truth))?);
        aris.push(stage("ari", ari(&result.partition, &truth))?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let std = |v: &[f64], m: f64| {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let ami_mean = mean(&amis);
    let ari_mean = mean(&aris);
    Ok(json!({
        "ami_mean": ami_mean,
        "ami_std": std(&amis, ami_mean),
        "ari_mean": ari_mean,
        "ari_std": std(&aris, ari_mean),
        "ami_per_seed": amis,
        "ari_per_seed": aris,
    }))
}

fn cmd_train(cfg: &Config) -> PResult<Value> {
    let g = load_input_graph(cfg)?;
    let x = learning_features(cfg, &g)?;
    let targets = require_labels(&g)?;
    let classes = targets.iter().copied().max().unwrap_or(0) + 1;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let (train, val, test) = node_splits(
        g.n(),
        seed,
        cfg.parse_or("split.train", 0.5)?,
        cfg.parse_or("split.val", 0.25)?,
    )?;
    let mut model = model_from_config(cfg, x.ncols(), classes, seed)?;
    let tc = train_cfg(cfg)?;
    let history = stage(
        "train",
        nn::train_node(&mut model, &g, x.view(), &targets, Some(&train), &tc),
    )?;
    let fwd = stage("eval", nn::forward(&model, &g, x.view()))?;
    let report = json!({
        "final_loss": history.loss.last().copied().unwrap_or(f64::NAN),
        "train_accuracy": nn::accuracy(fwd.probs.view(), &targets, &train),
        "val_accuracy": nn::accuracy(fwd.probs.view(), &targets, &val),
        "test_accuracy": nn::accuracy(fwd.probs.view(), &targets, &test),
        "epochs_run": history.loss.len(),
    });
    if cfg.has("output.checkpoint") {
        let path = cfg.require("output.checkpoint")?;
        stage("checkpoint", nn::save_checkpoint(&model, &path))?;
    }
    Ok(report)
}

fn cmd_admp(cfg: &Config) -> PResult<Value> {
    use centra::admp;
    let g = load_input_graph(cfg)?;
    let x = learning_features(cfg, &g)?;
    let targets = require_labels(&g)?;
    let classes = targets.iter().copied().max().unwrap_or(0) + 1;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let (train, val, test) = node_splits(
        g.n(),
        seed,
        cfg.parse_or("split.train", 0.5)?,
        cfg.parse_or("split.val", 0.25)?,
    )?;
    let depth: usize = cfg.parse_or("admp.depth", 2)?;
    let hidden: usize = cfg.parse_or("admp.hidden", 16)?;
    let mut dims = vec![x.ncols()];
    dims.extend(std::iter::repeat(hidden).take(depth));
    let mut model = admp::AdmpModel::init(LayerKind::Gcn, &dims, classes, Activation::Relu, seed);
    let tc = admp::AdmpTrainCfg {
        epochs: cfg.parse_or("train.epochs", 150)?,
        lr: cfg.parse_or("train.lr", 0.01)?,
        seed,
    };
    let mode = cfg.get_or("admp.training", "st");
    match mode.as_str() {
        "st" => {
            stage("train", admp::train_st(&mut model, &g, x.view(), &targets, Some(&train), &tc))?;
        }
        "alm" => {
            stage("train", admp::train_alm(&mut model, &g, x.view(), &targets, Some(&train), &tc))?;
        }
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "admp.training".into(),
                msg: format!("unknown training mode `{other}`"),
            }))
        }
    }
    let preds = stage("forward", admp::admp_forward(&model, &g, x.view()))?;
    let per_layer_test: Vec<f64> = preds
        .iter()
        .map(|p| nn::accuracy(p.view(), &targets, &test))
        .collect();
    let oracle = admp::oracle_accuracy(&preds, &targets, &test);
    let kind = centrality_kind(cfg, "policy.centrality", "kcore")?;
    let centrality = stage("centrality", centrality_matrix(&g, kind, Some(1e-6)))?;
    let buckets: usize = cfg.parse_or("policy.buckets", 4)?;
    let policy = stage(
        "policy",
        admp::learn_exit_policy(&preds, &targets, &val, &centrality, buckets),
    )?;
    let (_, policy_acc) = admp::apply_exit_policy(&policy, &preds, &centrality, &targets, &test);
    Ok(json!({
        "per_layer_test_accuracy": per_layer_test,
        "oracle_accuracy": oracle,
        "policy_accuracy": policy_acc,
        "policy_layers": policy.bucket_layer,
        "training_mode": mode,
    }))
}

fn cmd_gcorn(cfg: &Config) -> PResult<Value> {
    let g = load_input_graph(cfg)?;
    let x = learning_features(cfg, &g)?;
    let targets = require_labels(&g)?;
    let classes = targets.iter().copied().max().unwrap_or(0) + 1;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let (train, _val, test) = node_splits(
        g.n(),
        seed,
        cfg.parse_or("split.train", 0.5)?,
        cfg.parse_or("split.val", 0.25)?,
    )?;
    let tc = train_cfg(cfg)?;
    let bjorck = BjorckConfig {
        p_order: cfg.parse_or("bjorck.order", 1)?,
        iterations: cfg.parse_or("bjorck.iterations", 15)?,
        prescale: cfg.parse_or("bjorck.prescale", true)?,
    };
    let eps: f64 = cfg.parse_or("robustness.eps", 0.5)?;
    let sigma: f64 = cfg.parse_or("robustness.sigma", 0.1)?;
    let psi: f64 = cfg.parse_or("attack.psi", 1.0)?;

    let mut plain = model_from_config(cfg, x.ncols(), classes, seed)?;
    stage("train", nn::train_node(&mut plain, &g, x.view(), &targets, Some(&train), &tc))?;
    let mut gcorn = model_from_config(cfg, x.ncols(), classes, seed)?;
    stage(
        "train",
        robustness::train_gcorn(&mut gcorn, &g, x.view(), &targets, Some(&train), &tc, &bjorck),
    )?;

    let norm_prod = |m: &Model| -> PResult<f64> {
        let ws = stage("norms", m.effective_weights())?;
        Ok(ws.iter().map(|w| centra::linalg::norm_linf(w.view())).product())
    };
    let gamma = |m: &Model| -> PResult<f64> {
        stage(
            "bound",
            robustness::robustness_bound(m, &g, Some(x.view()), eps, sigma, BoundKind::GcnFeatDinf),
        )
    };
    let attacked = stage("attack", robustness::attack_random(x.view(), psi, seed ^ 0xa77ac))?;
    let eval = |m: &Model, feats: ndarray::ArrayView2<f64>| -> PResult<f64> {
        let fwd = stage("eval", nn::forward(m, &g, feats))?;
        Ok(nn::accuracy(fwd.probs.view(), &targets, &test))
    };
    Ok(json!({
        "plain_norm_prod_inf": norm_prod(&plain)?,
        "gcorn_norm_prod_inf": norm_prod(&gcorn)?,
        "plain_gamma_dinf": gamma(&plain)?,
        "gcorn_gamma_dinf": gamma(&gcorn)?,
        "plain_clean_accuracy": eval(&plain, x.view())?,
        "gcorn_clean_accuracy": eval(&gcorn, x.view())?,
        "plain_attacked_accuracy": eval(&plain, attacked.view())?,
        "gcorn_attacked_accuracy": eval(&gcorn, attacked.view())?,
    }))
}

fn cmd_estimate(cfg: &Config) -> PResult<Value> {
    let g = load_input_graph(cfg)?;
    let x = learning_features(cfg, &g)?;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let model = if cfg.has("model.checkpoint") {
        let path = cfg.require("model.checkpoint")?;
        if !std::path::Path::new(&path).exists() {
            return Err(PipelineError::Config(ConfigError {
                field: "model.checkpoint".into(),
                msg: format!("file `{path}` does not exist"),
            }));
        }
        stage("checkpoint", nn::load_checkpoint(&path))?
    } else {
        let targets = require_labels(&g)?;
        let classes = targets.iter().copied().max().unwrap_or(0) + 1;
        let (train, _, _) = node_splits(
            g.n(),
            seed,
            cfg.parse_or("split.train", 0.5)?,
            cfg.parse_or("split.val", 0.25)?,
        )?;
        let mut m = model_from_config(cfg, x.ncols(), classes, seed)?;
        let tc = train_cfg(cfg)?;
        stage("train", nn::train_node(&mut m, &g, x.view(), &targets, Some(&train), &tc))?;
        m
    };
    let rc = RobustnessConfig {
        eps: cfg.parse_or("estimate.eps", 0.5)?,
        sigma: cfg.parse_or("estimate.sigma", 0.1)?,
        p: cfg.parse_or("estimate.p", 2.0)?,
        l_max: cfg.parse_or("estimate.l_max", 200)?,
        seed,
    };
    let report = stage(
        "estimate",
        robustness::estimate_expected_vulnerability(&model, &[(&g, x.view())], &rc),
    )?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

fn cmd_crf(cfg: &Config) -> PResult<Value> {
    use centra::crf::{self, CrfConfig, CrfSpace, Similarity};
    let g = load_input_graph(cfg)?;
    let x = learning_features(cfg, &g)?;
    let targets = require_labels(&g)?;
    let classes = targets.iter().copied().max().unwrap_or(0) + 1;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let (train, _val, test) = node_splits(
        g.n(),
        seed,
        cfg.parse_or("split.train", 0.5)?,
        cfg.parse_or("split.val", 0.25)?,
    )?;
    let mut model = model_from_config(cfg, x.ncols(), classes, seed)?;
    let tc = train_cfg(cfg)?;
    stage("train", nn::train_node(&mut model, &g, x.view(), &targets, Some(&train), &tc))?;

    let space_raw = cfg.get_or("crf.space", "feature");
    let space = match space_raw.as_str() {
        "feature" => CrfSpace::Feature {
            eps: cfg.parse_or("crf.eps", 0.5)?,
            p: cfg.parse_or("crf.p", 2.0)?,
        },
        "structure" => CrfSpace::Structure {
            radius: cfg.parse_or("crf.radius", 5)?,
        },
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "crf.space".into(),
                msg: format!("unknown space `{other}`"),
            }))
        }
    };
    let mut crf_cfg = CrfConfig::new(space, seed ^ 0xc2f);
    crf_cfg.sigma = cfg.parse_or("crf.sigma", 0.9)?;
    crf_cfg.k = cfg.parse_or("crf.iterations", 2)?;
    crf_cfg.l = cfg.parse_or("crf.neighbors", 5)?;
    match cfg.get_or("crf.similarity", "default").as_str() {
        "default" => {}
        "cosine" => crf_cfg.similarity = Similarity::Cosine,
        "binomial" => crf_cfg.similarity = Similarity::BinomialPrior,
        "uniform" => crf_cfg.similarity = Similarity::Uniform,
        other => {
            return Err(PipelineError::Config(ConfigError {
                field: "crf.similarity".into(),
                msg: format!("unknown similarity `{other}`"),
            }))
        }
    }

    let psi: f64 = cfg.parse_or("attack.psi", 0.5)?;
    let attacked = stage("attack", robustness::attack_random(x.view(), psi, seed ^ 0xa77ac))?;
    let model_fn = |gg: &Graph, xx: ndarray::ArrayView2<f64>| -> centra::Result<Array2<f64>> {
        Ok(nn::forward(&model, gg, xx)?.probs)
    };
    let acc = |probs: &Array2<f64>| nn::accuracy(probs.view(), &targets, &test);
    let base_clean = stage("eval", model_fn(&g, x.view()))?;
    let base_attacked = stage("eval", model_fn(&g, attacked.view()))?;
    let smooth_clean = stage("crf", crf::crf_smooth(&model_fn, &g, x.view(), &crf_cfg))?;
    let smooth_attacked =
        stage("crf", crf::crf_smooth(&model_fn, &g, attacked.view(), &crf_cfg))?;
    Ok(json!({
        "base_clean_accuracy": acc(&base_clean),
        "base_attacked_accuracy": acc(&base_attacked),
        "crf_clean_accuracy": acc(&smooth_clean),
        "crf_attacked_accuracy": acc(&smooth_attacked),
        "model_calls_per_input": (crf_cfg.l as f64).powi(crf_cfg.k as i32),
    }))
}

fn cmd_gratin(cfg: &Config) -> PResult<Value> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let n_graphs: usize = cfg.parse_or("dataset.graphs", 40)?;
    let nodes: usize = cfg.parse_or("dataset.nodes", 12)?;
    let p0: f64 = cfg.parse_or("dataset.p0", 0.15)?;
    let p1: f64 = cfg.parse_or("dataset.p1", 0.5)?;
    let mut rng = SplitMix64::new(seed);
    let mut graphs = Vec::with_capacity(n_graphs);
    let mut labels = Vec::with_capacity(n_graphs);
    for i in 0..n_graphs {
        let class = i % 2;
        let p = if class == 0 { p0 } else { p1 };
        let g = stage(
            "dataset",
            gen_sbm(&[nodes], &[vec![p]], rng.next_u64()),
        )?;
        let mut x = Array2::<f64>::zeros((nodes, 2));
        for v in 0..nodes {
            x[[v, 0]] = 1.0;
            x[[v, 1]] = g.degree(v) as f64 / nodes as f64;
        }
        let g = stage("dataset", g.with_features(x))?;
        graphs.push(g);
        labels.push(class);
    }
    let n_train = (n_graphs * 8) / 10;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n_graphs).collect();
    let train_data = nn::GraphDataset {
        graphs: graphs[..n_train].to_vec(),
        labels: labels[..n_train].to_vec(),
    };

    let hidden: usize = cfg.parse_or("model.hidden", 8)?;
    let mk_model = || -> Model {
        Model::init(
            &[LayerSpec {
                kind: LayerKind::Gcn,
                d_in: 2,
                d_out: hidden,
                bias: true,
                activation: Activation::Relu,
            }],
            Readout::Mean,
            hidden,
            2,
            seed,
        )
    };
    let gcfg = GratinCfg {
        k_per_class: cfg.parse_or("gratin.k_per_class", 2)?,
        m_aug: cfg.parse_or("gratin.m_aug", 20)?,
        train_epochs: cfg.parse_or("train.epochs", 150)?,
        finetune_epochs: cfg.parse_or("gratin.finetune_epochs", 100)?,
        lr: cfg.parse_or("train.lr", 0.01)?,
        seed,
        ..Default::default()
    };
    let mut model = mk_model();
    let outcome = stage("gratin", gratin::gratin_train(&mut model, &train_data, &gcfg))?;
    // twin with no augmentation
    let mut twin = mk_model();
    let no_aug = GratinCfg {
        m_aug: 0,
        ..gcfg.clone()
    };
    stage("gratin", gratin::gratin_train(&mut twin, &train_data, &no_aug))?;

    let eval = |m: &Model, idx: &[usize]| -> PResult<f64> {
        let mut correct = 0usize;
        for &i in idx {
            let g = &graphs[i];
            let fwd = stage("eval", nn::forward(m, g, g.features().unwrap()))?;
            if nn::argmax_row(fwd.probs.view(), 0) == labels[i] {
                correct += 1;
            }
        }
        Ok(correct as f64 / idx.len().max(1) as f64)
    };
    let shift = stage(
        "shift",
        gratin::expected_embedding_shift(
            outcome.train_embeddings.embeddings.view(),
            outcome.augmented.embeddings.view(),
        ),
    )
    .unwrap_or(f64::NAN);
    if cfg.has("output.aug_store") {
        let path = cfg.require("output.aug_store")?;
        std::fs::write(&path, outcome.augmented.to_csv())
            .map_err(|e| PipelineError::Run(format!("[write] {e}")))?;
    }
    Ok(json!({
        "gratin_test_accuracy": eval(&outcome.model, &test_idx)?,
        "no_aug_test_accuracy": eval(&twin, &test_idx)?,
        "train_accuracy": eval(&outcome.model, &train_idx)?,
        "n_augmented": outcome.augmented.len(),
        "expected_embedding_shift": shift,
        "reduced_classes": outcome.reduced_classes,
    }))
}
