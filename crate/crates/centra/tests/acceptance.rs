//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the measured numbers (run with `--nocapture` to see them).

mod common;

use centra::centrality::{centrality_matrix, CentralityKind};
use centra::clustering::{ami, spectral_cluster};
use centra::generators::{gen_ba, gen_sbbam, SbbamSpec};
use centra::graph::{self, Graph, Partition};
use centra::gratin;
use centra::gso;
use centra::linalg;
use centra::nn::{self, Activation, LayerKind, LayerSpec, Model, Readout, TrainCfg};
use centra::robustness::{self, BjorckConfig, BoundKind, RobustnessConfig};
use centra::rng::SplitMix64;
use common::{random_graph_no_isolated, sparse_dense_fixture, two_clique_fixture};
use ndarray::{Array1, Array2};
use std::time::Instant;

/// Criterion 1: analytic spectrum moments of V^{-1}(A + I) match the
/// eigensolver on 100 random graphs x 4 centralities within 1e-8, in < 30 s.
#[test]
fn criterion_01_markov_moment_identities() {
    let start = Instant::now();
    let kinds = [
        CentralityKind::Degree,
        CentralityKind::KCore,
        CentralityKind::pagerank_default(),
        CentralityKind::walk_default(),
    ];
    let mut rng = SplitMix64::new(0xC1);
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let n = 3 + (rng.next_below(48));
        let p = 0.2 + 0.6 * rng.next_f64();
        let g = random_graph_no_isolated(n, p, 1000 + trial);
        for kind in kinds {
            let v = centrality_matrix(&g, kind, Some(1e-6)).expect("centrality");
            let stats = gso::markov_spectrum_stats(&g, &v).expect("stats");
            worst = worst
                .max((stats.analytic_mean - stats.empirical_mean).abs())
                .max((stats.analytic_std - stats.empirical_std).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-8, "worst moment deviation {worst}");
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
    println!("PASS criterion 1: markov moments, worst deviation {worst:.3e}, {elapsed:.1}s");
}

/// Criterion 2: BA average degree equals 2r + 2 r0/N - 2 N0 r/N exactly on a
/// 10-point parameter grid.
#[test]
fn criterion_02_ba_average_degree_formula() {
    let grid = [
        (100usize, 5usize, 3usize, 2usize),
        (100, 5, 10, 5),
        (50, 4, 2, 3),
        (80, 6, 15, 4),
        (120, 10, 45, 7),
        (200, 8, 20, 8),
        (150, 3, 3, 2),
        (60, 12, 30, 10),
        (300, 5, 10, 5),
        (90, 7, 21, 6),
    ];
    for (i, &(n, n0, r0, r)) in grid.iter().enumerate() {
        let g = gen_ba(n, n0, r0, r, 7000 + i as u64).expect("ba");
        let avg = 2.0 * g.num_edges() as f64 / n as f64;
        let formula =
            2.0 * r as f64 + 2.0 * r0 as f64 / n as f64 - 2.0 * n0 as f64 * r as f64 / n as f64;
        assert!(
            (avg - formula).abs() < 1e-12,
            "grid point {i}: {avg} vs {formula}"
        );
    }
    println!("PASS criterion 2: BA average degree exact on 10-point grid");
}

/// Criterion 3: SBBAM spectral clustering, mean AMI over 50 seeds, k-core
/// CGSO beats degree CGSO by >= 0.03 with a 0.25 floor, in < 5 min. Both
/// centralities use the same two-sided exponents (e2, e3) = (0.5, 0.5), the
/// positive-exponent regime where global centralities carry the block
/// structure.
#[test]
fn criterion_03_sbbam_clustering_ordering() {
    let start = Instant::now();
    let spec_for = |seed: u64| {
        SbbamSpec::with_default_seeds(vec![100, 100, 100], vec![5, 10, 15], 0.1, seed)
    };
    let mean = |kind: CentralityKind| -> f64 {
        let mut total = 0.0;
        for s in 0..50u64 {
            let g = gen_sbbam(&spec_for(31 + s)).expect("sbbam");
            let truth = Partition(g.labels().unwrap().to_vec());
            let v = centrality_matrix(&g, kind, Some(1e-6)).expect("centrality");
            let r = spectral_cluster(&g, &v, 0.5, 0.5, 3, 31 + s, false).expect("cluster");
            total += ami(&r.partition, &truth).expect("ami");
        }
        total / 50.0
    };
    let kcore_mean = mean(CentralityKind::KCore);
    let degree_mean = mean(CentralityKind::Degree);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        kcore_mean >= 0.25,
        "k-core mean AMI {kcore_mean:.4} below the 0.25 floor"
    );
    assert!(
        kcore_mean - degree_mean >= 0.03,
        "ordering gap {:.4} below 0.03 (kcore {kcore_mean:.4}, degree {degree_mean:.4})",
        kcore_mean - degree_mean
    );
    assert!(elapsed < 300.0, "runtime {elapsed:.1}s exceeds 5 min");
    println!(
        "PASS criterion 3: SBBAM AMI kcore {kcore_mean:.4} > degree {degree_mean:.4} (gap {:.4}), {elapsed:.1}s",
        kcore_mean - degree_mean
    );
}

/// Central-difference check of every parameter of a model.
fn worst_gradient_error(model: &Model, g: &Graph, x: &Array2<f64>, targets: &[usize]) -> f64 {
    let (_, grads) = nn::loss_and_grad(model, g, x.view(), targets, None).expect("grad");
    let analytic = grads.flat();
    let (flat, _) = nn::params_flat(model);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut mp = model.clone();
        nn::set_params_flat(&mut mp, &plus);
        let (lp, _) = nn::loss_and_grad(&mp, g, x.view(), targets, None).expect("loss+");
        let mut minus = flat.clone();
        minus[i] -= h;
        let mut mm = model.clone();
        nn::set_params_flat(&mut mm, &minus);
        let (lm, _) = nn::loss_and_grad(&mm, g, x.view(), targets, None).expect("loss-");
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1e-4));
    }
    worst
}

/// Criterion 4: gradient suite across all layer kinds and the CGSO scalars on
/// 20 random fixtures, every entry within 1e-5 relative of central
/// differences.
#[test]
fn criterion_04_gradient_suite() {
    let mut rng = SplitMix64::new(0xC4);
    let mut worst: f64 = 0.0;
    for fixture in 0..20u64 {
        let n = 5 + (fixture as usize % 3);
        let g = random_graph_no_isolated(n, 0.5, 400 + fixture);
        let d_in = 2 + (fixture as usize % 2);
        let x = Array2::from_shape_fn((n, d_in), |_| rng.next_normal());
        let targets: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let kind = match fixture % 4 {
            0 => LayerKind::Gcn,
            1 => LayerKind::Gin,
            2 => LayerKind::Cgnn {
                centrality: CentralityKind::Degree,
            },
            _ => LayerKind::Cgnn {
                centrality: CentralityKind::KCore,
            },
        };
        let activation = if fixture % 2 == 0 {
            Activation::Relu
        } else {
            Activation::Identity
        };
        let two_layer = fixture % 3 == 0;
        let mut specs = vec![LayerSpec {
            kind: kind.clone(),
            d_in,
            d_out: 3,
            bias: true,
            activation,
        }];
        if two_layer {
            specs.push(LayerSpec {
                kind: kind.clone(),
                d_in: 3,
                d_out: 3,
                bias: true,
                activation: Activation::Identity,
            });
        }
        let mut model = Model::init(&specs, Readout::None, 3, 2, 4000 + fixture);
        for layer in &mut model.layers {
            layer.gin_eps = 0.2;
            layer.cgso = gso::CgsoParams::new(0.3, 0.9, -0.1, 0.4, -0.5, -0.25, 0.8);
        }
        let e = worst_gradient_error(&model, &g, &x, &targets);
        worst = worst.max(e);
        assert!(e <= 1e-5, "fixture {fixture} ({kind:?}): rel error {e}");
    }
    println!("PASS criterion 4: gradient suite, worst relative error {worst:.3e}");
}

/// Criterion 5: Bjorck on 50 random prescaled matrices reaches
/// ||W^T W - I||_F <= 1e-3 within 30 order-1 iterations with a monotone
/// residual.
#[test]
fn criterion_05_bjorck_convergence() {
    let mut rng = SplitMix64::new(0xC5);
    let mut worst_resid: f64 = 0.0;
    for trial in 0..50 {
        let rows = 3 + rng.next_below(8);
        let cols = 1 + rng.next_below(rows.min(6));
        let raw = Array2::from_shape_fn((rows, cols), |_| rng.next_normal());
        let s = linalg::norm_spectral(raw.view());
        let mut cur = raw.mapv(|x| x / s);
        let mut last = f64::INFINITY;
        let mut reached = f64::INFINITY;
        for _ in 0..30 {
            let q = Array2::<f64>::eye(cols) - cur.t().dot(&cur);
            let r = linalg::norm_fro(q.view());
            assert!(r <= last + 1e-12, "trial {trial}: residual grew {last} -> {r}");
            last = r;
            reached = r;
            let cfg = BjorckConfig {
                p_order: 1,
                iterations: 1,
                prescale: false,
            };
            cur = robustness::bjorck_orthonormalize(cur.view(), &cfg).expect("iterate");
        }
        let q = Array2::<f64>::eye(cols) - cur.t().dot(&cur);
        reached = reached.min(linalg::norm_fro(q.view()));
        assert!(reached <= 1e-3, "trial {trial}: residual {reached}");
        worst_resid = worst_resid.max(reached);
    }
    println!("PASS criterion 5: Bjorck residual <= 1e-3 on 50 matrices (worst {worst_resid:.3e})");
}

/// Criterion 6: the stratified sampler's outer radius follows the (r/eps)^K
/// law (KS < 0.01 at 1e5 samples for K in {1, 4, 16}) and every sample
/// respects the ball constraint with exactly one row at the radius.
#[test]
fn criterion_06_sampler_radius_law() {
    let eps = 1.0;
    let n_rows = 3usize;
    let samples = 100_000usize;
    for (ki, &k) in [1usize, 4, 16].iter().enumerate() {
        let x = Array2::<f64>::zeros((n_rows, k));
        let mut rng = SplitMix64::new(0xC6 + ki as u64);
        let mut radii = Vec::with_capacity(samples);
        for s in 0..samples {
            let z =
                robustness::sample_feature_perturbation(x.view(), eps, 2.0, rng.next_u64())
                    .expect("sample");
            let mut max_norm = 0.0f64;
            let mut at_max = 0usize;
            let mut norms = Vec::with_capacity(n_rows);
            for i in 0..n_rows {
                let norm: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm <= eps + 1e-12, "K={k} sample {s}: row norm {norm} > eps");
                norms.push(norm);
                max_norm = max_norm.max(norm);
            }
            for &norm in &norms {
                if (norm - max_norm).abs() <= 1e-12 {
                    at_max += 1;
                }
            }
            assert_eq!(at_max, 1, "K={k} sample {s}: {at_max} rows at the radius");
            radii.push(max_norm);
        }
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &r) in radii.iter().enumerate() {
            let cdf = (r / eps).powi(k as i32);
            let hi = (i + 1) as f64 / samples as f64;
            let lo = i as f64 / samples as f64;
            ks = ks.max((hi - cdf).abs()).max((cdf - lo).abs());
        }
        assert!(ks < 0.01, "K={k}: KS statistic {ks}");
        println!("PASS criterion 6 (K={k}): KS statistic {ks:.4}");
    }
}

/// Criterion 7: on 30 random small GCNs the estimated vulnerability stays
/// below the d-infinity bound plus three standard errors.
#[test]
fn criterion_07_estimate_below_bound() {
    let mut rng = SplitMix64::new(0xC7);
    for trial in 0..30u64 {
        let n = 4 + rng.next_below(6);
        let g = random_graph_no_isolated(n, 0.5, 700 + trial);
        let d = 3;
        let x = Array2::from_shape_fn((n, d), |_| rng.next_normal());
        let layers = 1 + (trial as usize % 2);
        let mut specs = Vec::new();
        let mut din = d;
        for _ in 0..layers {
            specs.push(LayerSpec {
                kind: LayerKind::Gcn,
                d_in: din,
                d_out: 4,
                bias: true,
                activation: Activation::Relu,
            });
            din = 4;
        }
        let mut model = Model::init(&specs, Readout::None, 4, 2, 7700 + trial);
        let scale = 0.5 + 2.0 * rng.next_f64();
        for layer in &mut model.layers {
            layer.weight.mapv_inplace(|w| w * scale);
        }
        let cfg = RobustnessConfig {
            eps: 0.5,
            sigma: 0.1,
            p: 2.0,
            l_max: 200,
            seed: 77_000 + trial,
        };
        let report =
            robustness::estimate_expected_vulnerability(&model, &[(&g, x.view())], &cfg)
                .expect("estimate");
        let gamma = report.gamma.expect("pure GCN stack");
        let stderr = (report.adv * (1.0 - report.adv) / cfg.l_max as f64).sqrt();
        assert!(
            report.adv <= gamma + 3.0 * stderr,
            "trial {trial}: Adv {} exceeds gamma {} + 3 stderr",
            report.adv,
            gamma
        );
    }
    println!("PASS criterion 7: Adv <= gamma(d_inf) + 3 stderr on 30 random GCNs");
}

/// Criterion 8: on the two-clique noisy-feature fixture with matched seeds,
/// GCORN has strictly smaller weight-norm product and gamma, and attacked
/// accuracy at psi = 1 at least matches the unconstrained twin in >= 8 of 10
/// seeds.
#[test]
fn criterion_08_gcorn_effect() {
    let mut wins = 0usize;
    for seed in 0..10u64 {
        // square layers: the projection can actually reach orthonormality
        let fx = two_clique_fixture(10, 8, 1.0, 0.6, 800 + seed);
        let specs = [
            LayerSpec {
                kind: LayerKind::Gcn,
                d_in: 8,
                d_out: 8,
                bias: true,
                activation: Activation::Relu,
            },
            LayerSpec {
                kind: LayerKind::Gcn,
                d_in: 8,
                d_out: 8,
                bias: true,
                activation: Activation::Identity,
            },
        ];
        let cfg = TrainCfg {
            epochs: 300,
            lr: 0.02,
            seed: 8800 + seed,
            ..Default::default()
        };
        let mut plain = Model::init(&specs, Readout::None, 8, 2, 8800 + seed);
        nn::train_node(
            &mut plain,
            &fx.graph,
            fx.features.view(),
            &fx.labels,
            Some(&fx.train),
            &cfg,
        )
        .expect("plain");
        let mut gcorn = Model::init(&specs, Readout::None, 8, 2, 8800 + seed);
        robustness::train_gcorn(
            &mut gcorn,
            &fx.graph,
            fx.features.view(),
            &fx.labels,
            Some(&fx.train),
            &cfg,
            &BjorckConfig::default(),
        )
        .expect("gcorn");

        let norm_prod = |m: &Model| -> f64 {
            m.effective_weights()
                .unwrap()
                .iter()
                .map(|w| linalg::norm_linf(w.view()))
                .product()
        };
        let gamma = |m: &Model| -> f64 {
            robustness::robustness_bound(
                m,
                &fx.graph,
                Some(fx.features.view()),
                0.5,
                0.1,
                BoundKind::GcnFeatDinf,
            )
            .unwrap()
        };
        assert!(
            norm_prod(&gcorn) < norm_prod(&plain),
            "seed {seed}: norm product not reduced"
        );
        assert!(gamma(&gcorn) < gamma(&plain), "seed {seed}: gamma not reduced");
        // projected weights are near-orthonormal
        for w in gcorn.effective_weights().unwrap() {
            let q = Array2::<f64>::eye(w.ncols()) - w.t().dot(&w);
            assert!(linalg::norm_fro(q.view()) <= 1e-2, "seed {seed}: projection residual");
        }
        let attacked =
            robustness::attack_random(fx.features.view(), 1.0, 88_000 + seed).expect("attack");
        let acc = |m: &Model| -> f64 {
            let fwd = nn::forward(m, &fx.graph, attacked.view()).unwrap();
            nn::accuracy(fwd.probs.view(), &fx.labels, &fx.test)
        };
        if acc(&gcorn) >= acc(&plain) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "GCORN attacked accuracy won only {wins}/10 seeds");
    println!("PASS criterion 8: GCORN norms/gamma reduced all seeds; attacked accuracy >= twin in {wins}/10");
}

/// Criterion 9: RobustCRF degeneracies — sigma = 1 returns the base
/// predictions bit-exactly; sigma = 0, K = 1, uniform similarity returns the
/// neighbor mean within 1e-12; smoothed rows stay on the simplex.
#[test]
fn criterion_09_crf_degeneracies() {
    use centra::crf::{self, CrfConfig, CrfSpace, Similarity};
    let fx = two_clique_fixture(6, 3, 1.0, 0.4, 900);
    let mut model = Model::init(
        &[LayerSpec {
            kind: LayerKind::Gcn,
            d_in: 3,
            d_out: 4,
            bias: true,
            activation: Activation::Relu,
        }],
        Readout::None,
        4,
        2,
        9,
    );
    nn::train_node(
        &mut model,
        &fx.graph,
        fx.features.view(),
        &fx.labels,
        Some(&fx.train),
        &TrainCfg {
            epochs: 100,
            lr: 0.02,
            ..Default::default()
        },
    )
    .expect("train");
    let model_fn = |g: &Graph, x: ndarray::ArrayView2<f64>| -> centra::Result<Array2<f64>> {
        Ok(nn::forward(&model, g, x)?.probs)
    };
    let base = model_fn(&fx.graph, fx.features.view()).unwrap();

    let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 6 }, 90);
    cfg.sigma = 1.0;
    let same = crf::crf_smooth(&model_fn, &fx.graph, fx.features.view(), &cfg).unwrap();
    assert_eq!(same, base, "sigma = 1 must be bit-exact");

    let mut cfg = CrfConfig::new(CrfSpace::Structure { radius: 6 }, 91);
    cfg.sigma = 0.0;
    cfg.k = 1;
    cfg.similarity = Similarity::Uniform;
    let smoothed = crf::crf_smooth(&model_fn, &fx.graph, fx.features.view(), &cfg).unwrap();
    // replay the sampling chain to compute the neighbor mean independently
    let mut rng = SplitMix64::new(91);
    let mut sample_rng = rng.split();
    let neighbors =
        crf::sample_structural_neighbors(&fx.graph, 6, cfg.l, sample_rng.next_u64()).unwrap();
    let mut mean = Array2::<f64>::zeros(base.dim());
    for (ng, _) in &neighbors {
        mean += &model_fn(ng, fx.features.view()).unwrap();
    }
    mean.mapv_inplace(|v| v / cfg.l as f64);
    let worst = smoothed
        .iter()
        .zip(mean.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-12, "neighbor-mean deviation {worst}");

    let mut cfg = CrfConfig::new(CrfSpace::Feature { eps: 0.5, p: 2.0 }, 92);
    cfg.sigma = 0.7;
    let smoothed = crf::crf_smooth(&model_fn, &fx.graph, fx.features.view(), &cfg).unwrap();
    for i in 0..smoothed.nrows() {
        let s: f64 = smoothed.row(i).sum();
        assert!((s - 1.0).abs() <= 1e-10, "row {i} sum {s}");
        assert!(smoothed.row(i).iter().all(|&v| v >= 0.0));
    }
    println!("PASS criterion 9: CRF degeneracies (bit-exact, neighbor mean {worst:.2e}, simplex)");
}

/// Criterion 10: the entropy lower bound never exceeds the exhaustive
/// neighborhood count for n <= 6 and every valid radius.
#[test]
fn criterion_10_crf_lower_bound() {
    fn binomial(n: u64, k: u64) -> u64 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut out = 1u64;
        for i in 0..k {
            out = out * (n - i) / (i + 1);
        }
        out
    }
    for n in 1..=6usize {
        let pairs = n * (n + 1) / 2;
        for r in 1..pairs {
            let bound = centra::crf::neighborhood_lower_bound(n, r).expect("bound");
            let count: u64 = (0..=r as u64).map(|d| binomial(pairs as u64, d)).sum();
            assert!(
                bound <= count as f64,
                "n = {n}, r = {r}: bound {bound} exceeds count {count}"
            );
        }
    }
    println!("PASS criterion 10: entropy bound below exhaustive count for all n <= 6");
}

/// Criterion 11: EM log-likelihood is monotone on every fixture and a 1-d
/// two-component mixture's means are recovered within 0.2.
#[test]
fn criterion_11_em_monotone_and_recovery() {
    let mut rng = SplitMix64::new(0xCB);
    // monotonicity across random fixtures
    for trial in 0..10 {
        let m = 25 + trial * 5;
        let d = 1 + trial % 3;
        let pts = Array2::from_shape_fn((m, d), |_| rng.next_normal() * 3.0);
        let k = 1 + trial % 4;
        let (_, history) = gratin::fit_gmm(pts.view(), k, 80, 1e-12, 1e-6, trial as u64).expect("fit");
        for w in history.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "trial {trial}: decreased {w:?}");
        }
    }
    // recovery of +-5 means
    let mut pts = Array2::<f64>::zeros((2000, 1));
    for i in 0..2000 {
        let mu = if i % 2 == 0 { -5.0 } else { 5.0 };
        pts[[i, 0]] = mu + rng.next_normal();
    }
    let (gmm, _) = gratin::fit_gmm(pts.view(), 2, 100, 1e-6, 1e-6, 11).expect("fit");
    let mut means: Vec<f64> = (0..2).map(|c| gmm.means[[c, 0]]).collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((means[0] + 5.0).abs() <= 0.2, "low mean {}", means[0]);
    assert!((means[1] - 5.0).abs() <= 0.2, "high mean {}", means[1]);
    println!(
        "PASS criterion 11: EM monotone; recovered means ({:.3}, {:.3})",
        means[0], means[1]
    );
}

/// Criterion 12: the influence formula matches head-retraining finite
/// differences within 10% on 10 fixtures and the closed-form quadratic oracle
/// to 1e-8.
#[test]
fn criterion_12_influence_oracle() {
    // quadratic oracle: H = 1, grad_aug = -1, grad_test = -2 at theta = 0
    let h = ndarray::array![[1.0]];
    let score = gratin::influence_from_parts(
        h.view(),
        Array1::from_vec(vec![-1.0]).view(),
        &[Array1::from_vec(vec![-2.0])],
        0.0,
    )
    .expect("influence");
    assert!((score - 2.0).abs() <= 1e-8, "quadratic oracle {score}");

    let mut rng = SplitMix64::new(0xCC);
    let mut worst_rel: f64 = 0.0;
    for fixture in 0..10u64 {
        let m = 20;
        let d = 3;
        let classes = 2 + (fixture as usize % 2);
        let emb = Array2::from_shape_fn((m, d), |_| rng.next_normal());
        let labels: Vec<usize> = (0..m).map(|_| rng.next_below(classes)).collect();
        let aug_emb = Array2::from_shape_fn((1, d), |_| rng.next_normal());
        let aug_label = rng.next_below(classes);
        let test_emb = Array2::from_shape_fn((4, d), |_| rng.next_normal());
        let test_labels: Vec<usize> = (0..4).map(|_| rng.next_below(classes)).collect();
        let l2 = 1e-3;
        let dim = (d + 1) * classes;

        // base optimum by Newton on the strictly convex objective
        let solve = |eps: f64| -> Vec<f64> {
            let mut theta = vec![0.0f64; dim];
            for _ in 0..60 {
                let (_, mut grad, hess) = gratin::head_objective(
                    emb.view(),
                    &labels,
                    classes,
                    &theta,
                    None,
                    l2,
                    true,
                )
                .expect("objective");
                let mut hess = hess.unwrap();
                if eps != 0.0 {
                    let (_, ga, ha) = gratin::head_objective(
                        aug_emb.view(),
                        &[aug_label],
                        classes,
                        &theta,
                        None,
                        0.0,
                        true,
                    )
                    .expect("aug objective");
                    for i in 0..dim {
                        grad[i] += eps * ga[i];
                    }
                    hess.scaled_add(eps, &ha.unwrap());
                }
                let step =
                    linalg::solve_spd(hess.view(), &Array1::from_vec(grad.clone())).expect("solve");
                let mut moved = 0.0;
                for i in 0..dim {
                    theta[i] -= step[i];
                    moved += step[i] * step[i];
                }
                if moved.sqrt() < 1e-13 {
                    break;
                }
            }
            theta
        };
        let theta_hat = solve(0.0);
        let eps = 1e-4;
        let theta_eps = solve(eps);
        let test_loss = |theta: &[f64]| -> f64 {
            gratin::head_objective(test_emb.view(), &test_labels, classes, theta, None, 0.0, false)
                .expect("test loss")
                .0
        };
        let fd = (test_loss(&theta_eps) - test_loss(&theta_hat)) / eps;

        // influence formula with the same Hessian
        let (_, _, hess) =
            gratin::head_objective(emb.view(), &labels, classes, &theta_hat, None, l2, true)
                .expect("objective");
        let (_, g_aug, _) = gratin::head_objective(
            aug_emb.view(),
            &[aug_label],
            classes,
            &theta_hat,
            None,
            0.0,
            false,
        )
        .expect("aug grad");
        let eval_grads: Vec<Array1<f64>> = (0..4)
            .map(|i| {
                let row = test_emb.row(i).insert_axis(ndarray::Axis(0));
                let (_, g, _) = gratin::head_objective(
                    row,
                    &test_labels[i..i + 1],
                    classes,
                    &theta_hat,
                    None,
                    0.0,
                    false,
                )
                .expect("test grad");
                Array1::from_vec(g)
            })
            .collect();
        let influence = gratin::influence_from_parts(
            hess.unwrap().view(),
            Array1::from_vec(g_aug).view(),
            &eval_grads,
            0.0,
        )
        .expect("influence");
        // influence = -mean(d test loss / d eps); fd approximates the mean derivative
        let formula = -influence;
        let rel = (formula - fd).abs() / fd.abs().max(1e-8);
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 0.10,
            "fixture {fixture}: retraining FD {fd:.6e} vs formula {formula:.6e} (rel {rel:.3})"
        );
    }
    println!("PASS criterion 12: influence vs retraining within 10% (worst {worst_rel:.3}); quadratic oracle exact");
}

/// Criterion 13: ADMP structural contracts plus the sparse-vs-dense
/// qualitative check (optimal exit layers differ in >= 6 of 10 seeds).
#[test]
fn criterion_13_admp_contracts() {
    use centra::admp;
    let mut differ = 0usize;
    for seed in 0..10u64 {
        let fx = sparse_dense_fixture(15, 1300 + seed);
        let dims = vec![fx.features.ncols(), 12, 12];
        let mut model =
            admp::AdmpModel::init(LayerKind::Gcn, &dims, 2, Activation::Relu, 13_000 + seed);
        let cfg = admp::AdmpTrainCfg {
            epochs: 120,
            lr: 0.02,
            seed,
        };
        let before = admp::params_flat(&model).0;
        admp::train_st(
            &mut model,
            &fx.graph,
            fx.features.view(),
            &fx.labels,
            Some(&fx.train),
            &cfg,
        )
        .expect("train");
        assert_ne!(before, admp::params_flat(&model).0, "training must move parameters");

        let preds = admp::admp_forward(&model, &fx.graph, fx.features.view()).expect("forward");
        // exit predictions equal truncated-model forwards exactly
        for l in 0..=model.depth() {
            let truncated = model.truncated(l);
            let fwd = nn::forward(&truncated, &fx.graph, fx.features.view()).expect("truncated");
            assert_eq!(preds[l], fwd.probs, "seed {seed}: exit {l} differs from truncated model");
        }
        // oracle accuracy dominates each per-layer accuracy
        let mut test_all = fx.sparse_test.clone();
        test_all.extend_from_slice(&fx.dense_test);
        let oracle = admp::oracle_accuracy(&preds, &fx.labels, &test_all);
        for p in &preds {
            assert!(
                oracle >= nn::accuracy(p.view(), &fx.labels, &test_all) - 1e-12,
                "oracle below a fixed exit"
            );
        }
        // ST freeze: rerunning stage t leaves stages < t bit-identical; the
        // training above froze everything, recorded in the mask
        assert!(model.frozen_mask.iter().all(|&f| f));

        let best_layer = |mask: &[usize]| -> usize {
            let mut best = 0usize;
            let mut best_acc = -1.0;
            for (l, p) in preds.iter().enumerate() {
                let a = nn::accuracy(p.view(), &fx.labels, mask);
                if a > best_acc {
                    best_acc = a;
                    best = l;
                }
            }
            best
        };
        if best_layer(&fx.sparse_test) != best_layer(&fx.dense_test) {
            differ += 1;
        }
    }
    assert!(differ >= 6, "optimal exit layers differed in only {differ}/10 seeds");
    println!("PASS criterion 13: ADMP contracts hold; exit layers differ in {differ}/10 seeds");
}

/// Criterion 14: brute-force oracles for kcore, walk counts, Cheeger, and the
/// permutation distance all agree exactly with the implementations.
#[test]
fn criterion_14_bruteforce_oracles() {
    // kcore: definition-based subset oracle (n <= 6)
    for seed in 0..12u64 {
        let g = centra::graph::random_graph(6, 0.45, 1400 + seed);
        let mut oracle = vec![0usize; 6];
        for mask in 1u32..(1 << 6) {
            let members: Vec<usize> = (0..6).filter(|&i| mask & (1 << i) != 0).collect();
            let min_deg = members
                .iter()
                .map(|&i| {
                    g.neighbors(i)
                        .iter()
                        .filter(|&&j| mask & (1 << j) != 0)
                        .count()
                })
                .min()
                .unwrap();
            for &i in &members {
                oracle[i] = oracle[i].max(min_deg);
            }
        }
        assert_eq!(centra::centrality::kcore(&g), oracle, "kcore seed {seed}");
    }
    // walk counts: DFS enumeration (n <= 6, l <= 4)
    fn count_walks(g: &Graph, v: usize, remaining: usize) -> usize {
        if remaining == 0 {
            return 1;
        }
        g.neighbors(v)
            .iter()
            .map(|&w| count_walks(g, w, remaining - 1))
            .sum()
    }
    for seed in 0..8u64 {
        let g = centra::graph::random_graph(6, 0.5, 1450 + seed);
        for l in 1..=4 {
            let expect: Vec<f64> = (0..6).map(|v| count_walks(&g, v, l) as f64).collect();
            assert_eq!(
                centra::centrality::walk_count(&g, l).unwrap(),
                expect,
                "walks seed {seed} l {l}"
            );
        }
    }
    // Cheeger: independent subset scan (n <= 10)
    for seed in 0..6u64 {
        let g = centra::graph::random_graph(9, 0.4, 1480 + seed);
        let n = g.n();
        let mut naive = f64::INFINITY;
        for mask in 1usize..(1 << n) {
            let size = (mask as u32).count_ones() as f64;
            if size > n as f64 / 2.0 {
                continue;
            }
            let cut = g
                .edges()
                .iter()
                .filter(|&&(u, v)| (mask >> u) & 1 != (mask >> v) & 1)
                .count();
            naive = naive.min(cut as f64 / size);
        }
        let got = gso::cheeger(&g, gso::CheegerMode::Classical, None).expect("cheeger");
        assert_eq!(got, naive, "cheeger seed {seed}");
    }
    // permutation distance: independent enumeration building relabeled graphs
    fn perms(n: usize) -> Vec<Vec<usize>> {
        fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, n: usize, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for v in 0..n {
                if !used[v] {
                    used[v] = true;
                    cur.push(v);
                    rec(cur, used, n, out);
                    cur.pop();
                    used[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], n, &mut out);
        out
    }
    for seed in 0..5u64 {
        let g1 = centra::graph::random_graph(5, 0.5, 1500 + seed);
        let g2 = centra::graph::random_graph(5, 0.5, 1600 + seed);
        let mut best = f64::INFINITY;
        for p in perms(5) {
            // relabeled copy of g2 under p, then fixed-alignment distance
            let edges: Vec<(usize, usize)> =
                g2.edges().iter().map(|&(u, v)| (p[u], p[v])).collect();
            let relabeled = Graph::new(5, edges, None, None).unwrap();
            let d = graph::graph_distance(&g1, &relabeled, 1.0, 0.0, graph::NormKind::Frobenius)
                .unwrap();
            best = best.min(d);
        }
        let got = graph::permutation_distance(&g1, &g2, 1.0, 0.0).expect("perm distance");
        assert!(
            (got - best).abs() <= 1e-12,
            "perm distance seed {seed}: {got} vs {best}"
        );
    }
    println!("PASS criterion 14: kcore, walk, Cheeger, permutation-distance oracles all exact");
}
