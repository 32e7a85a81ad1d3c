//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with its measured numbers (run with `--nocapture` to see them).
//!
//! The dense-matrix references and the hypergeometric enumeration here are
//! written from first principles, independent of the library's sparse and
//! log-factorial implementations.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use supernode_core::autodiff::{grad_check, Tensor};
use supernode_core::coarsen::{build_hierarchy, CoarseningHierarchy};
use supernode_core::dataio::{random_connected_graph, synth_generate, SyntheticSpec};
use supernode_core::gnn::{
    baseline_param_count, cheb_conv, weighted_pool, ArchitectureConfig, GnnModel, Head,
};
use supernode_core::graph::{GeneGraph, LambdaMaxMode, LaplacianOperator};
use supernode_core::interpret::{
    bh_fdr, hypergeometric_upper_tail, input_saliency, ora, rank_features, supernode_saliency,
    FeatureId, GeneSet, GeneSetCollection, Reduction,
};
use supernode_core::train::{evaluate, fit, TrainConfig};

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

/// The synthetic task pinned by the acceptance criteria: 256-node graph,
/// two planted 16-gene modules, 200 samples per class.
fn acceptance_synth_spec(effect_size: f64) -> SyntheticSpec {
    SyntheticSpec {
        graph_size: 256,
        n_planted_modules: 2,
        module_size: 16,
        effect_size,
        noise_sigma: 1.0,
        n_samples_per_class: 200,
        seed: 11,
    }
}

/// Architecture used for the synthetic task (three levels, convolutions
/// from level 1, default doubling channels, 64 hidden units).
fn acceptance_arch() -> ArchitectureConfig {
    ArchitectureConfig {
        n_levels: 3,
        conv_start_level: 1,
        channel_schedule: vec![],
        hidden_units: 64,
        dropout_p: 0.1,
        head: Head::SigmoidBinary,
    }
}

fn acceptance_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 50,
        batch_size: 32,
        seed,
        ..Default::default()
    }
}

const ACCEPTANCE_SEED: u64 = 1;

// ---------------------------------------------------------------------------
// dense reference implementation (independent oracle)
// ---------------------------------------------------------------------------

type Mat = Vec<Vec<f64>>;

fn dense_scaled_laplacian(g: &GeneGraph) -> Mat {
    let n = g.n_nodes();
    let mut adj = vec![vec![0.0; n]; n];
    for (i, j, w) in g.edges() {
        adj[i][j] = w;
        adj[j][i] = w;
    }
    let deg: Vec<f64> = (0..n).map(|i| adj[i].iter().sum()).collect();
    let inv: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut lt = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { 1.0 } else { 0.0 };
            // 2/λ_max · (I − D^{-1/2} A D^{-1/2}) − I with λ_max = 2.
            lt[i][j] = (eye - inv[i] * adj[i][j] * inv[j]) - eye;
        }
    }
    lt
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for kk in 0..k {
            for j in 0..n {
                out[i][j] += a[i][kk] * b[kk][j];
            }
        }
    }
    out
}

fn mat_add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

fn to_mat(values: &[f64], rows: usize, cols: usize) -> Mat {
    (0..rows)
        .map(|i| values[i * cols..(i + 1) * cols].to_vec())
        .collect()
}

/// Explicit Sᵀ(w ⊙ H), summed in ascending fine-index order.
fn dense_pool(cluster_of: &[usize], n_coarse: usize, w: &[f64], h: &Mat) -> Mat {
    let f = h[0].len();
    let mut out = vec![vec![0.0; f]; n_coarse];
    for (i, &c) in cluster_of.iter().enumerate() {
        for j in 0..f {
            out[c][j] += w[i] * h[i][j];
        }
    }
    out
}

/// Full dense forward of one sample in eval mode (conv → pool → relu per
/// level, then the MLP with eval batch norm).
fn dense_model_forward(model: &GnnModel, x_row: &[f64]) -> Vec<f64> {
    let cfg = model.config();
    let hierarchy = model.hierarchy();
    let mut h: Mat = x_row.iter().map(|&v| vec![v]).collect();
    let channels = cfg.resolved_channels();
    for l in 0..cfg.n_levels {
        if l >= cfg.conv_start_level {
            let i = l - cfg.conv_start_level;
            let f_in = if i == 0 { 1 } else { channels[i - 1] };
            let f_out = channels[i];
            let get = |name: &str| -> Mat {
                let mut out = Vec::new();
                model.for_each_param(|n, t| {
                    if n == name {
                        out = to_mat(t.values(), f_in, f_out);
                    }
                });
                out
            };
            let lt = dense_scaled_laplacian(hierarchy.fine_graph(l));
            let term0 = mat_mul(&h, &get(&format!("conv{i}.theta0")));
            let term1 = mat_mul(&mat_mul(&lt, &h), &get(&format!("conv{i}.theta1")));
            h = mat_add(&term0, &term1);
        }
        let map = &hierarchy.level(l).assignment;
        let mut w = Vec::new();
        model.for_each_param(|n, t| {
            if n == format!("pool{l}.w") {
                w = t.values().to_vec();
            }
        });
        h = dense_pool(&map.cluster_of, map.n_coarse, &w, &h);
        for row in h.iter_mut() {
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    let flat: Vec<f64> = h.iter().flatten().copied().collect();
    let hidden_n = cfg.hidden_units;
    let mut w1 = Vec::new();
    let mut b1 = Vec::new();
    let mut w2 = Vec::new();
    let mut b2 = Vec::new();
    let mut gamma = Vec::new();
    let mut beta = Vec::new();
    model.for_each_param(|n, t| match n {
        "mlp.w1" => w1 = t.values().to_vec(),
        "mlp.b1" => b1 = t.values().to_vec(),
        "mlp.w2" => w2 = t.values().to_vec(),
        "mlp.b2" => b2 = t.values().to_vec(),
        "bn.gamma" => gamma = t.values().to_vec(),
        "bn.beta" => beta = t.values().to_vec(),
        _ => {}
    });
    let bn = model.batch_norm();
    let mut hidden = vec![0.0; hidden_n];
    for jh in 0..hidden_n {
        let mut z = b1[jh];
        for (i, &v) in flat.iter().enumerate() {
            z += v * w1[i * hidden_n + jh];
        }
        let inv = 1.0 / (bn.running_var[jh] + bn.eps).sqrt();
        hidden[jh] = (gamma[jh] * (z - bn.running_mean[jh]) * inv + beta[jh]).max(0.0);
    }
    let out_n = cfg.head.n_outputs();
    (0..out_n)
        .map(|jo| {
            let mut z = b2[jo];
            for (jh, &v) in hidden.iter().enumerate() {
                z += v * w2[jh * out_n + jo];
            }
            z
        })
        .collect()
}

fn rng_values(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    use supernode_core::seeds::hash64;
    (0..n)
        .map(|i| ((hash64(seed, i as u64) % 2_000_001) as f64 / 1_000_000.0 - 1.0) * scale)
        .collect()
}

fn randomize(model: &mut GnnModel, seed: u64) {
    let names: Vec<(String, usize)> = {
        let mut v = Vec::new();
        model.for_each_param(|n, t| v.push((n.to_string(), t.numel())));
        v
    };
    for (k, (name, numel)) in names.into_iter().enumerate() {
        let values = rng_values(seed.wrapping_add(k as u64), numel, 1.0);
        model
            .param_mut(&name)
            .unwrap()
            .values_mut()
            .copy_from_slice(&values);
    }
    let hidden = model.config().hidden_units;
    let bn = model.batch_norm_mut();
    bn.running_mean = rng_values(seed ^ 0xAB, hidden, 0.5);
    bn.running_var = rng_values(seed ^ 0xCD, hidden, 0.4)
        .into_iter()
        .map(|v| 1.0 + v)
        .collect();
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_coarsening_structure() {
    let start = Instant::now();
    let n = 14133;
    let graph = Arc::new(random_connected_graph(n, 8 * n, 2026).unwrap());
    let hierarchy = build_hierarchy(graph, 7, ACCEPTANCE_SEED).unwrap();

    let mut prev = n;
    for l in 0..7 {
        let map = &hierarchy.level(l).assignment;
        map.validate().expect("assignment invariants");
        assert!(map.n_coarse >= prev.div_ceil(2), "halving bound at level {l}");
        assert!(map.n_coarse <= prev);
        prev = map.n_coarse;
    }
    let final_count = hierarchy.n_nodes_at(7);
    assert!(
        final_count >= n.div_ceil(128),
        "final supernode count {final_count} below ceil({n}/128)"
    );
    // Final-level clusters partition the original nodes in groups of ≤ 2^7.
    let composed = hierarchy.composed_assignment(6).unwrap();
    let mut sizes = vec![0usize; final_count];
    for &c in &composed {
        sizes[c] += 1;
    }
    assert_eq!(sizes.iter().sum::<usize>(), n);
    assert!(sizes.iter().all(|&s| (1..=128).contains(&s)));
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "coarsening took {elapsed:?}, budget 30 s"
    );
    println!(
        "criterion 1 (coarsening structure): PASS — 7 levels on {n} nodes, \
         final {final_count} supernodes (bound {}), {elapsed:?}",
        n.div_ceil(128)
    );
}

#[test]
fn criterion_2_dense_oracle_equivalence() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let n = 3 + (seed as usize % 10); // graph sizes 3..=12
        let graph = Arc::new(random_connected_graph(n, 2 * n, 9000 + seed).unwrap());

        // cheb_conv against the dense L̃.
        {
            let lap = Arc::new(LaplacianOperator::new(graph.clone(), LambdaMaxMode::Approximate));
            let mut tape = supernode_core::autodiff::Tape::new();
            let hv = rng_values(seed * 3 + 1, n * 2, 1.0);
            let t0v = rng_values(seed * 3 + 2, 2 * 3, 1.0);
            let t1v = rng_values(seed * 3 + 3, 2 * 3, 1.0);
            let h = tape.constant(Tensor::matrix(n, 2, hv.clone()).unwrap());
            let t0 = tape.constant(Tensor::matrix(2, 3, t0v.clone()).unwrap());
            let t1 = tape.constant(Tensor::matrix(2, 3, t1v.clone()).unwrap());
            let y = cheb_conv(&mut tape, &lap, h, t0, t1).unwrap();
            let lt = dense_scaled_laplacian(&graph);
            let hm = to_mat(&hv, n, 2);
            let expect = mat_add(
                &mat_mul(&hm, &to_mat(&t0v, 2, 3)),
                &mat_mul(&mat_mul(&lt, &hm), &to_mat(&t1v, 2, 3)),
            );
            for i in 0..n {
                for j in 0..3 {
                    worst = worst.max((tape.values(y)[i * 3 + j] - expect[i][j]).abs());
                }
            }
        }

        // weighted_pool against the explicit assignment matrix.
        let n_levels = if n >= 4 { 2 } else { 1 };
        let hierarchy = Arc::new(build_hierarchy(graph.clone(), n_levels, seed).unwrap());
        {
            let map = hierarchy.level(0).assignment.clone();
            let mut tape = supernode_core::autodiff::Tape::new();
            let hv = rng_values(seed * 5 + 1, n * 2, 2.0);
            let wv = rng_values(seed * 5 + 2, n, 2.0);
            let h = tape.constant(Tensor::matrix(n, 2, hv.clone()).unwrap());
            let w = tape.constant(Tensor::vector(wv.clone()));
            let y = weighted_pool(&mut tape, &map, h, w).unwrap();
            let expect = dense_pool(&map.cluster_of, map.n_coarse, &wv, &to_mat(&hv, n, 2));
            for i in 0..map.n_coarse {
                for j in 0..2 {
                    worst = worst.max((tape.values(y)[i * 2 + j] - expect[i][j]).abs());
                }
            }
        }

        // Full model against the dense reference.
        {
            let arch = ArchitectureConfig {
                n_levels,
                conv_start_level: (seed as usize) % (n_levels + 1),
                channel_schedule: vec![],
                hidden_units: 5,
                dropout_p: 0.0,
                head: Head::SigmoidBinary,
            };
            let mut model =
                GnnModel::new(arch, hierarchy, LambdaMaxMode::Approximate, seed).unwrap();
            randomize(&mut model, seed + 31);
            let batch = 2;
            let xv = rng_values(seed * 7 + 1, batch * n, 1.0);
            let x = Tensor::matrix(batch, n, xv.clone()).unwrap();
            let (logits, _) = model.model_forward(&x).unwrap();
            for b in 0..batch {
                let expect = dense_model_forward(&model, &xv[b * n..(b + 1) * n]);
                for (c, &e) in expect.iter().enumerate() {
                    worst = worst.max((logits.values()[b * expect.len() + c] - e).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max deviation from dense references: {worst}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 1 min");
    println!(
        "criterion 2 (dense-oracle equivalence): PASS — 200 graphs, \
         max |deviation| {worst:.3e} ≤ 1e-10, {elapsed:?}"
    );
}

#[test]
fn criterion_3_gradient_correctness() {
    let start = Instant::now();
    let graph = Arc::new(random_connected_graph(12, 24, 321).unwrap());
    let hierarchy = Arc::new(build_hierarchy(graph, 2, 5).unwrap());
    let arch = ArchitectureConfig {
        n_levels: 2,
        conv_start_level: 0,
        channel_schedule: vec![],
        hidden_units: 6,
        dropout_p: 0.0,
        head: Head::SigmoidBinary,
    };
    let mut model = GnnModel::new(arch, hierarchy, LambdaMaxMode::Approximate, 7).unwrap();
    randomize(&mut model, 99);
    let x = Tensor::matrix(2, 12, rng_values(55, 24, 1.0)).unwrap();

    let mut worst: f64 = 0.0;
    let report = grad_check(
        |tape, xid| {
            let handles = model.forward_eval_from(tape, xid, 2)?;
            tape.select(handles.logits, 0, 0)
        },
        &x,
        1e-6,
    )
    .unwrap();
    worst = worst.max(report.max_rel_error);
    let mut groups = 1;

    let mut names = Vec::new();
    model.for_each_param(|n, t| names.push((n.to_string(), t.clone())));
    for (name, tensor) in names {
        let report = grad_check(
            |tape, pid| {
                let handles = model.forward_eval_bound(tape, &x, &name, pid)?;
                tape.select(handles.logits, 1, 0)
            },
            &tensor,
            1e-6,
        )
        .unwrap_or_else(|e| panic!("group {name}: {e}"));
        assert!(
            report.max_rel_error <= 1e-4,
            "group {name}: {}",
            report.max_rel_error
        );
        worst = worst.max(report.max_rel_error);
        groups += 1;
    }
    assert!(worst <= 1e-4);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 1 min");
    println!(
        "criterion 3 (gradient correctness): PASS — inputs + {} parameter groups, \
         max rel error {worst:.3e} ≤ 1e-4, {elapsed:?}",
        groups - 1
    );
}

#[test]
fn criterion_4_end_to_end_learning() {
    let start = Instant::now();

    // delta = 3: the planted task must be learned.
    let (g, ds, _) = synth_generate(&acceptance_synth_spec(3.0)).unwrap();
    let hierarchy = Arc::new(build_hierarchy(Arc::new(g), 3, ACCEPTANCE_SEED).unwrap());
    let mut model = GnnModel::new(
        acceptance_arch(),
        hierarchy,
        LambdaMaxMode::Approximate,
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let outcome = fit(&mut model, &ds, &acceptance_train_config(ACCEPTANCE_SEED)).unwrap();
    assert!(outcome.history.len() <= 50);
    let report = evaluate(&model, &ds, &outcome.split.test).unwrap();
    assert!(
        report.f1_macro >= 0.95,
        "held-out F1-macro {} < 0.95",
        report.f1_macro
    );

    // delta = 0 control: no signal to learn.
    let (g0, ds0, _) = synth_generate(&acceptance_synth_spec(0.0)).unwrap();
    let hierarchy0 = Arc::new(build_hierarchy(Arc::new(g0), 3, ACCEPTANCE_SEED).unwrap());
    let mut model0 = GnnModel::new(
        acceptance_arch(),
        hierarchy0,
        LambdaMaxMode::Approximate,
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let outcome0 = fit(&mut model0, &ds0, &acceptance_train_config(ACCEPTANCE_SEED)).unwrap();
    let report0 = evaluate(&model0, &ds0, &outcome0.split.test).unwrap();
    assert!(
        (report0.f1_macro - 0.5).abs() <= 0.1,
        "null-signal F1-macro {} outside 0.5 ± 0.1",
        report0.f1_macro
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, budget 2 min");
    println!(
        "criterion 4 (end-to-end learning): PASS — delta=3 F1 {:.4} ≥ 0.95 in {} epochs; \
         delta=0 F1 {:.4} within 0.5±0.1, {elapsed:?}",
        report.f1_macro,
        outcome.history.len(),
        report0.f1_macro
    );
}

#[test]
fn criterion_5_saliency_fidelity() {
    // (a) exact |w| recovery on an affine model.
    let n = 9;
    let hidden = 4;
    let graph = Arc::new(random_connected_graph(n, 2 * n, 77).unwrap());
    let hierarchy = Arc::new(build_hierarchy(graph, 1, 3).unwrap());
    let arch = ArchitectureConfig {
        n_levels: 0,
        conv_start_level: 0,
        channel_schedule: vec![],
        hidden_units: hidden,
        dropout_p: 0.0,
        head: Head::SigmoidBinary,
    };
    let mut model =
        GnnModel::new(arch, hierarchy, LambdaMaxMode::Approximate, 3).unwrap();
    let w1v = rng_values(41, n * hidden, 0.3);
    let w2v = rng_values(43, hidden, 1.0);
    *model.param_mut("mlp.w1").unwrap() = Tensor::matrix(n, hidden, w1v.clone()).unwrap();
    // Far-positive hidden pre-activations keep every relu linear.
    *model.param_mut("mlp.b1").unwrap() = Tensor::vector(vec![1000.0; hidden]);
    *model.param_mut("mlp.w2").unwrap() = Tensor::matrix(hidden, 1, w2v.clone()).unwrap();
    let bn = model.batch_norm();
    let expected: Vec<f64> = (0..n)
        .map(|i| {
            (0..hidden)
                .map(|h| {
                    let scale = bn.gamma.values()[h] / (bn.running_var[h] + bn.eps).sqrt();
                    w1v[i * hidden + h] * scale * w2v[h]
                })
                .sum::<f64>()
                .abs()
        })
        .collect();
    let x = Tensor::matrix(2, n, rng_values(47, 2 * n, 1.0)).unwrap();
    let ids = vec!["a".to_string(), "b".to_string()];
    let report = input_saliency(&model, &x, &ids, 1).unwrap();
    let mut worst_a: f64 = 0.0;
    for s in 0..2 {
        for i in 0..n {
            let rel = (report.raw[s][i] - expected[i]).abs() / expected[i].abs().max(1e-12);
            worst_a = worst_a.max(rel);
        }
    }
    assert!(worst_a <= 1e-12, "affine recovery rel error {worst_a}");

    // (b) planted-gene recovery on the trained synthetic model.
    let (g, ds, truth) = synth_generate(&acceptance_synth_spec(3.0)).unwrap();
    let hierarchy = Arc::new(build_hierarchy(Arc::new(g), 3, ACCEPTANCE_SEED).unwrap());
    let mut trained = GnnModel::new(
        acceptance_arch(),
        hierarchy.clone(),
        LambdaMaxMode::Approximate,
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let outcome = fit(&mut trained, &ds, &acceptance_train_config(ACCEPTANCE_SEED)).unwrap();
    let (x, _) = ds.gather(&outcome.split.test).unwrap();
    let ids: Vec<String> = outcome
        .split
        .test
        .iter()
        .map(|&s| ds.sample_ids[s].clone())
        .collect();
    let sal = input_saliency(&trained, &x, &ids, 1).unwrap();
    let ranked = rank_features(&sal, None).unwrap();
    let planted: HashSet<String> = truth.all_genes().into_iter().collect();
    let k = planted.len();
    let hits = ranked
        .iter()
        .take(2 * k)
        .filter(|r| match &r.feature_id {
            FeatureId::Gene(id) => planted.contains(id),
            _ => false,
        })
        .count();
    assert!(
        hits as f64 >= 0.70 * k as f64,
        "only {hits}/{k} planted genes in the top-{}",
        2 * k
    );

    // (c) supernode saliency raw shape B × N_L × F_L on the reference
    // architecture over a coarsened 14133-node graph.
    let n_big = 14133;
    let big_graph = Arc::new(random_connected_graph(n_big, 8 * n_big, 2026).unwrap());
    let big_hierarchy = Arc::new(build_hierarchy(big_graph, 7, ACCEPTANCE_SEED).unwrap());
    let reference = ArchitectureConfig {
        n_levels: 7,
        conv_start_level: 4,
        channel_schedule: vec![2, 4, 8],
        hidden_units: 256,
        dropout_p: 0.5,
        head: Head::SigmoidBinary,
    };
    let big_model = GnnModel::new(
        reference,
        big_hierarchy.clone(),
        LambdaMaxMode::Approximate,
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let batch = 3;
    let xb = Tensor::matrix(batch, n_big, rng_values(88, batch * n_big, 1.0)).unwrap();
    let sample_ids: Vec<String> = (0..batch).map(|s| format!("s{s}")).collect();
    let (raw, reduced) =
        supernode_saliency(&big_model, &xb, &sample_ids, 1, Reduction::Mean).unwrap();
    let n_l = big_hierarchy.n_nodes_at(7);
    assert_eq!(raw.shape(), &[batch, n_l, 8]);
    assert!(n_l >= 111);
    assert_eq!(reduced.feature_ids.len(), n_l);

    println!(
        "criterion 5 (saliency fidelity): PASS — (a) affine |w| recovery rel error {worst_a:.2e}; \
         (b) {hits}/{k} planted genes in top-{}; (c) raw shape {}×{}×8",
        2 * k,
        batch,
        n_l
    );
}

#[test]
fn criterion_6_parameter_count_claim() {
    let n = 14133;
    let graph = Arc::new(random_connected_graph(n, 8 * n, 2026).unwrap());
    let hierarchy = Arc::new(build_hierarchy(graph, 7, ACCEPTANCE_SEED).unwrap());
    let reference = ArchitectureConfig {
        n_levels: 7,
        conv_start_level: 4,
        channel_schedule: vec![2, 4, 8],
        hidden_units: 256,
        dropout_p: 0.5,
        head: Head::SigmoidBinary,
    };
    let model = GnnModel::new(
        reference,
        hierarchy,
        LambdaMaxMode::Approximate,
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let ours = model.param_count();
    let baseline = baseline_param_count(n, 256, 1);
    let ratio = ours as f64 / baseline as f64;
    assert!(
        ratio < 0.10,
        "parameter ratio {ratio:.4} not below 10% ({ours} vs {baseline})"
    );
    println!(
        "criterion 6 (parameter-count claim): PASS — hierarchical {ours} vs baseline {baseline} \
         parameters, ratio {ratio:.4} < 0.10"
    );
}

#[test]
fn criterion_7_ora_exactness() {
    // Brute-force enumeration over all C(N, n) draws.
    fn brute_force(n_total: usize, k_set: usize, n_draw: usize, k: usize) -> f64 {
        struct Tally {
            n_total: usize,
            k_set: usize,
            n_draw: usize,
            k: usize,
            hits: u64,
            total: u64,
        }
        fn count(t: &mut Tally, next: usize, in_set: usize, picked: usize) {
            if picked == t.n_draw {
                t.total += 1;
                if in_set >= t.k {
                    t.hits += 1;
                }
                return;
            }
            if t.n_total - next < t.n_draw - picked {
                return;
            }
            for item in next..t.n_total {
                let bump = usize::from(item < t.k_set);
                count(t, item + 1, in_set + bump, picked + 1);
            }
        }
        let mut tally = Tally {
            n_total,
            k_set,
            n_draw,
            k,
            hits: 0,
            total: 0,
        };
        count(&mut tally, 0, 0, 0);
        tally.hits as f64 / tally.total as f64
    }

    let mut cases = 0;
    let mut worst: f64 = 0.0;
    // Exhaustive over small universes, plus spot checks up to N = 20.
    for n_total in 2..=12usize {
        for k_set in 0..=n_total {
            for n_draw in 1..=n_total {
                for k in 0..=n_draw.min(k_set) {
                    let exact = hypergeometric_upper_tail(n_total, k_set, n_draw, k);
                    let brute = brute_force(n_total, k_set, n_draw, k);
                    worst = worst.max((exact - brute).abs());
                    cases += 1;
                }
            }
        }
    }
    for &(n_total, k_set, n_draw) in &[(15usize, 6usize, 7usize), (18, 9, 5), (20, 8, 6), (20, 15, 10)] {
        for k in 0..=n_draw.min(k_set) {
            let exact = hypergeometric_upper_tail(n_total, k_set, n_draw, k);
            let brute = brute_force(n_total, k_set, n_draw, k);
            worst = worst.max((exact - brute).abs());
            cases += 1;
        }
    }
    assert!(worst <= 1e-10, "max |exact − enumeration| = {worst}");

    // Worked example: N=10, K=4, n=5, k=4.
    let universe: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
    let cluster: Vec<String> = universe[..5].to_vec();
    let sets = GeneSetCollection {
        sets: vec![GeneSet {
            id: "S".into(),
            description: "worked".into(),
            genes: universe[..4].to_vec(),
        }],
    };
    let results = ora(&cluster, &sets, &universe).unwrap();
    assert!((results[0].enrichment_ratio - 2.0).abs() <= 1e-12);
    assert!((results[0].p_value - 6.0 / 252.0).abs() <= 1e-12);

    // BH step-up on 3-element vectors, hand-applied in the same arithmetic:
    // adjusted_i = min over j ≥ i of p_j·m/j, clipped to 1.
    assert_eq!(
        bh_fdr(&[0.01, 0.04, 0.9]).unwrap(),
        vec![0.01 * 3.0, 0.04 * 3.0 / 2.0, 0.9]
    );
    assert_eq!(bh_fdr(&[0.9, 0.9, 0.9]).unwrap(), vec![0.9, 0.9, 0.9]);
    assert_eq!(
        bh_fdr(&[0.6, 0.2, 0.01]).unwrap(),
        vec![0.6, 0.2 * 3.0 / 2.0, 0.01 * 3.0]
    );

    println!(
        "criterion 7 (ORA exactness): PASS — {cases} hypergeometric cases vs enumeration, \
         max |diff| {worst:.2e} ≤ 1e-10; worked example p = 6/252, ratio 2.0; BH step-up exact"
    );
}

// ---------------------------------------------------------------------------
// CLI-level criteria
// ---------------------------------------------------------------------------

fn supernode_bin() -> &'static str {
    env!("CARGO_BIN_EXE_supernode")
}

fn run_cli(args: &[&str]) {
    let output = Command::new(supernode_bin())
        .args(args)
        .output()
        .expect("spawn supernode");
    assert!(
        output.status.success(),
        "supernode {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_run_config(dir: &Path, synth_dir: &Path, train_dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "seed": 9,
        "graph": { "edge_list": synth_dir.join("edges.tsv") },
        "coarsen": { "n_levels": 3 },
        "data": {
            "expression": synth_dir.join("expression.tsv"),
            "labels": synth_dir.join("labels.tsv"),
            "synth": { "graph_size": 128, "module_size": 8, "n_samples_per_class": 60 }
        },
        "architecture": { "conv_start_level": 1, "hidden_units": 32, "dropout_p": 0.1 },
        "train": {
            "max_epochs": 8,
            "batch_size": 16,
            "checkpoint": train_dir.join("checkpoint.json")
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn file_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let tmp = tempfile::tempdir().unwrap();
    let run_pipeline = |tag: &str| -> std::path::PathBuf {
        let base = tmp.path().join(tag);
        std::fs::create_dir_all(&base).unwrap();
        let synth_dir = base.join("synth");
        let train_dir = base.join("train");
        let config = write_run_config(&base, &synth_dir, &train_dir);
        let cfg = config.to_str().unwrap();
        run_cli(&["synth", "--config", cfg, "--out", synth_dir.to_str().unwrap()]);
        run_cli(&["train", "--config", cfg, "--out", train_dir.to_str().unwrap()]);
        run_cli(&[
            "explain",
            "--config",
            cfg,
            "--out",
            base.join("explain").to_str().unwrap(),
        ]);
        base
    };
    let a = run_pipeline("a");
    let b = run_pipeline("b");

    for rel in [
        "synth/edges.tsv",
        "synth/expression.tsv",
        "train/hierarchy.json",
        "train/history.csv",
        "train/checkpoint.json",
        "explain/saliency_input.csv",
        "explain/saliency_supernode.csv",
        "explain/ranking_input.tsv",
        "explain/ranking_supernode.tsv",
    ] {
        assert_eq!(
            file_bytes(&a.join(rel)),
            file_bytes(&b.join(rel)),
            "{rel} differs between identical runs"
        );
    }

    // Checkpoint round-trip preserves predictions bitwise.
    let edge_path = a.join("synth/edges.tsv");
    let (raw, _) = supernode_core::graph::load_edge_list(&edge_path, 0.0).unwrap();
    let (graph, _) = supernode_core::graph::largest_component(&raw).unwrap();
    let graph = Arc::new(graph);
    let hierarchy_json = std::fs::read_to_string(a.join("train/hierarchy.json")).unwrap();
    let hierarchy =
        Arc::new(CoarseningHierarchy::from_json(&hierarchy_json, graph.clone()).unwrap());
    let checkpoint = std::fs::read_to_string(a.join("train/checkpoint.json")).unwrap();
    let m1 = GnnModel::from_checkpoint_json(&checkpoint, hierarchy.clone(), false).unwrap();
    let m2 = GnnModel::from_checkpoint_json(&checkpoint, hierarchy, false).unwrap();
    let x = Tensor::matrix(4, graph.n_nodes(), rng_values(5, 4 * graph.n_nodes(), 1.0)).unwrap();
    let (l1, e1) = m1.model_forward(&x).unwrap();
    let (l2, e2) = m2.model_forward(&x).unwrap();
    assert_eq!(l1.values(), l2.values());
    assert_eq!(e1.values(), e2.values());

    println!(
        "criterion 8 (determinism and persistence): PASS — 9 artifacts byte-identical across \
         runs; checkpoint round-trip predictions bitwise equal"
    );
}

#[test]
fn criterion_9_ablation_machinery() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path();
    let synth_dir = base.join("synth");
    let sweep_dir = base.join("sweep");
    let config = write_run_config(base, &synth_dir, &base.join("train"));
    let cfg = config.to_str().unwrap();
    run_cli(&["synth", "--config", cfg, "--out", synth_dir.to_str().unwrap()]);
    run_cli(&[
        "train",
        "--config",
        cfg,
        "--out",
        sweep_dir.to_str().unwrap(),
        "--sweep-conv-start",
    ]);

    let table = std::fs::read_to_string(sweep_dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "conv_start_level,n_conv_levels,best_val_f1_macro,test_f1_macro,param_count"
    );
    // conv_start_level sweeps 0..=L with L = 3 levels: 4 arms.
    assert_eq!(lines.len(), 5, "expected 4 sweep rows:\n{table}");
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        assert_eq!(cols[1].parse::<usize>().unwrap(), 3 - i);
        let val: f64 = cols[2].parse().unwrap();
        let test: f64 = cols[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&val) && (0.0..=1.0).contains(&test));
        assert!(cols[4].parse::<usize>().unwrap() > 0);
    }
    println!(
        "criterion 9 (ablation machinery): PASS — conv_start sweep 0..=3 produced the \
         layer-count/score table:\n{table}"
    );
}
