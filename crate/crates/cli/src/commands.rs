//! The seven pipeline commands.

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use supernode_core::autodiff::{grad_check, Tape, Tensor};
use supernode_core::coarsen::build_hierarchy;
use supernode_core::dataio::{
    random_connected_graph, synth_generate, write_edge_list, write_expression_tsv,
    write_labels_tsv,
};
use supernode_core::error::{Error, Result};
use supernode_core::gnn::{ArchitectureConfig, GnnModel, Head};
use supernode_core::graph::LambdaMaxMode;
use supernode_core::interpret::{
    input_saliency, ora_for_supernode, rank_features, supernode_saliency, write_ora_tsv,
    write_ranking_tsv, write_saliency_csv,
};
use supernode_core::seeds::{purpose_seed, Purpose};
use supernode_core::train::{
    evaluate, fit, write_confusion_csv, write_history_csv, EvalReport,
};

use crate::config::{write_resolved, RunConfig};
use crate::pipeline::{
    load_dataset, load_graph, load_model, load_or_build_hierarchy, partition_indices,
    prepare_out_dir, recompute_split, require_file, write_json, write_manifest,
};

fn finish(config: &RunConfig, out: &Path) -> Result<()> {
    write_resolved(config, out)?;
    write_manifest(out)?;
    Ok(())
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    prepare_out_dir(out)?;
    let spec = config
        .data
        .synth
        .to_spec(purpose_seed(config.seed, Purpose::Synth));
    let (graph, dataset, truth) = synth_generate(&spec)?;
    write_edge_list(&graph, out.join("edges.tsv"))?;
    write_expression_tsv(&dataset, out.join("expression.tsv"), config.data.orientation)?;
    write_labels_tsv(&dataset, out.join("labels.tsv"))?;
    write_json(out, "truth.json", &truth)?;
    eprintln!(
        "synth: {} nodes, {} edges, {} samples, {} planted genes",
        graph.n_nodes(),
        graph.n_edges(),
        dataset.n_samples(),
        truth.all_genes().len()
    );
    finish(config, out)
}

pub fn cmd_coarsen(config: &RunConfig, out: &Path) -> Result<()> {
    prepare_out_dir(out)?;
    let (graph, graph_report) = load_graph(config)?;
    let hierarchy = load_or_build_hierarchy(config, graph)?;
    write_json(out, "graph_report.json", &graph_report)?;
    std::fs::write(out.join("hierarchy.json"), hierarchy.to_json()?)?;
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("membership.tsv"))?);
        writeln!(f, "level\tsupernode\tgene_id")?;
        for (level, supernode, gene) in hierarchy.membership_rows()? {
            writeln!(f, "{level}\t{supernode}\t{gene}")?;
        }
    }
    let sizes: Vec<usize> = (0..=hierarchy.n_levels())
        .map(|l| hierarchy.n_nodes_at(l))
        .collect();
    eprintln!(
        "coarsen: {} levels, sizes {:?}, digest {:016x}",
        hierarchy.n_levels(),
        sizes,
        hierarchy.digest()
    );
    finish(config, out)
}

pub fn cmd_train(config: &RunConfig, out: &Path, sweep_conv_start: bool) -> Result<()> {
    prepare_out_dir(out)?;
    let (graph, graph_report) = load_graph(config)?;
    let hierarchy = Arc::new(load_or_build_hierarchy(config, graph.clone())?);
    let (dataset, alignment) = load_dataset(config, &graph)?;
    write_json(out, "graph_report.json", &graph_report)?;
    write_json(out, "alignment_report.json", &alignment)?;
    std::fs::write(out.join("hierarchy.json"), hierarchy.to_json()?)?;

    let train_config = config.train.to_core(config.seed);
    let lambda: LambdaMaxMode = config.graph.lambda_max.into();

    if sweep_conv_start {
        let base = config.architecture.to_core(hierarchy.n_levels());
        let mut rows = Vec::new();
        for conv_start in 0..=base.n_levels {
            let arch = ArchitectureConfig {
                conv_start_level: conv_start,
                channel_schedule: vec![],
                ..base.clone()
            };
            let mut model = GnnModel::new(arch, hierarchy.clone(), lambda, config.seed)?;
            let params = model.param_count();
            let outcome = fit(&mut model, &dataset, &train_config)?;
            let best_val = outcome
                .history
                .iter()
                .map(|r| r.val_f1_macro)
                .fold(f64::NEG_INFINITY, f64::max);
            let test = evaluate(&model, &dataset, &outcome.split.test)?;
            eprintln!(
                "sweep conv_start {conv_start}: val F1 {best_val:.4}, test F1 {:.4}",
                test.f1_macro
            );
            rows.push((
                conv_start,
                base.n_levels - conv_start,
                best_val,
                test.f1_macro,
                params,
            ));
        }
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("ablation.csv"))?);
        writeln!(
            f,
            "conv_start_level,n_conv_levels,best_val_f1_macro,test_f1_macro,param_count"
        )?;
        for (cs, nc, val, test, params) in rows {
            writeln!(f, "{cs},{nc},{val},{test},{params}")?;
        }
        return finish(config, out);
    }

    let arch = config.architecture.to_core(hierarchy.n_levels());
    let mut model = GnnModel::new(arch, hierarchy.clone(), lambda, config.seed)?;
    eprintln!(
        "train: {} parameters on {} genes, {} supernodes × {} channels",
        model.param_count(),
        model.n_inputs(),
        model.n_supernodes(),
        model.final_channels()
    );
    let outcome = fit(&mut model, &dataset, &train_config)?;
    write_history_csv(&outcome.history, out.join("history.csv"))?;
    std::fs::write(out.join("checkpoint.json"), model.to_checkpoint_json()?)?;

    let val = evaluate(&model, &dataset, &outcome.split.val)?;
    let test = evaluate(&model, &dataset, &outcome.split.test)?;
    write_confusion_csv(&val, out.join("confusion_val.csv"))?;
    write_confusion_csv(&test, out.join("confusion_test.csv"))?;
    write_json(
        out,
        "metrics.json",
        &serde_json::json!({
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.history.len(),
            "param_count": model.param_count(),
            "val": val,
            "test": test,
        }),
    )?;
    eprintln!(
        "train: stopped after {} epochs (best {}), val F1 {:.4}, test F1 {:.4}",
        outcome.history.len(),
        outcome.best_epoch,
        val.f1_macro,
        test.f1_macro
    );
    finish(config, out)
}

pub fn cmd_evaluate(config: &RunConfig, out: &Path, force: bool) -> Result<()> {
    prepare_out_dir(out)?;
    let (graph, _) = load_graph(config)?;
    let hierarchy = Arc::new(load_or_build_hierarchy(config, graph.clone())?);
    let (dataset, _) = load_dataset(config, &graph)?;
    let model = load_model(config, hierarchy, force)?;
    let split = recompute_split(config, &dataset)?;

    let mut metrics = serde_json::Map::new();
    for (name, indices) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        if indices.is_empty() {
            continue;
        }
        let report: EvalReport = evaluate(&model, &dataset, indices)?;
        write_confusion_csv(&report, out.join(format!("confusion_{name}.csv")))?;
        eprintln!(
            "evaluate[{name}]: n {} accuracy {:.4} F1-macro {:.4}",
            report.n_samples, report.accuracy, report.f1_macro
        );
        metrics.insert(name.to_string(), serde_json::to_value(&report)?);
    }
    write_json(out, "metrics.json", &serde_json::Value::Object(metrics))?;
    finish(config, out)
}

pub fn cmd_explain(config: &RunConfig, out: &Path, force: bool) -> Result<()> {
    prepare_out_dir(out)?;
    let (graph, _) = load_graph(config)?;
    let hierarchy = Arc::new(load_or_build_hierarchy(config, graph.clone())?);
    let (dataset, _) = load_dataset(config, &graph)?;
    let model = load_model(config, hierarchy, force)?;
    let split = recompute_split(config, &dataset)?;
    let indices = partition_indices(&split, &dataset, config.explain.partition);
    if indices.is_empty() {
        return Err(Error::Contract(
            "selected partition contains no samples".into(),
        ));
    }
    let (x, _) = dataset.gather(&indices)?;
    let sample_ids: Vec<String> = indices
        .iter()
        .map(|&s| dataset.sample_ids[s].clone())
        .collect();
    let class = config.explain.target_class;
    let top_k = if config.explain.top_k == 0 {
        None
    } else {
        Some(config.explain.top_k)
    };

    let input = input_saliency(&model, &x, &sample_ids, class)?;
    write_saliency_csv(&input, out.join("saliency_input.csv"))?;
    let input_ranked = rank_features(&input, None)?;
    write_ranking_tsv(&input_ranked, top_k, out.join("ranking_input.tsv"))?;

    let (_raw, supernode) =
        supernode_saliency(&model, &x, &sample_ids, class, config.explain.reduction)?;
    write_saliency_csv(&supernode, out.join("saliency_supernode.csv"))?;
    let supernode_ranked = rank_features(&supernode, None)?;
    write_ranking_tsv(&supernode_ranked, top_k, out.join("ranking_supernode.tsv"))?;

    eprintln!(
        "explain: class {class} over {} samples; top gene {}, top supernode {}",
        sample_ids.len(),
        input_ranked
            .first()
            .map(|r| r.feature_id.to_string())
            .unwrap_or_default(),
        supernode_ranked
            .first()
            .map(|r| r.feature_id.to_string())
            .unwrap_or_default()
    );
    finish(config, out)
}

/// Parse supernode indices from a ranking TSV written by `explain`.
fn supernodes_from_ranking(path: &Path, top_k: usize) -> Result<Vec<usize>> {
    require_file(path)?;
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("ranking rows need 3 columns, found {}", cols.len()),
            });
        }
        let supernode: usize = cols[1].parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("feature id `{}` is not a supernode index", cols[1]),
        })?;
        out.push(supernode);
        if out.len() == top_k {
            break;
        }
    }
    if out.is_empty() {
        return Err(Error::Contract(format!(
            "ranking file {} has no feature rows",
            path.display()
        )));
    }
    Ok(out)
}

pub fn cmd_enrich(config: &RunConfig, out: &Path) -> Result<()> {
    prepare_out_dir(out)?;
    let (graph, _) = load_graph(config)?;
    let hierarchy = load_or_build_hierarchy(config, graph)?;
    let gmt_path = config
        .enrich
        .gmt
        .as_ref()
        .ok_or_else(|| Error::Schema("enrich.gmt is required".into()))?;
    require_file(gmt_path)?;
    let sets = supernode_core::dataio::load_gmt(gmt_path)?;

    let level = config.enrich.level.unwrap_or(hierarchy.n_levels() - 1);
    let supernodes: Vec<usize> = if !config.enrich.supernodes.is_empty() {
        config.enrich.supernodes.clone()
    } else if let Some(ranking) = &config.enrich.ranking {
        supernodes_from_ranking(ranking, config.enrich.top_k)?
    } else {
        return Err(Error::Schema(
            "enrich needs either explicit supernodes or a ranking file".into(),
        ));
    };

    let mut summary = Vec::new();
    for &j in &supernodes {
        let (cluster, results) = ora_for_supernode(&hierarchy, level, j, &sets, None)?;
        write_ora_tsv(&results, out.join(format!("ora_supernode_{j}.tsv")))?;
        let significant = results.iter().filter(|r| r.fdr <= 0.05).count();
        eprintln!(
            "enrich: supernode {j} at level {level}: {} genes, {} sets tested, {} with FDR <= 0.05",
            cluster.len(),
            results.len(),
            significant
        );
        summary.push(serde_json::json!({
            "supernode": j,
            "level": level,
            "cluster_size": cluster.len(),
            "sets_tested": results.len(),
            "significant_at_0_05": significant,
        }));
    }
    write_json(out, "enrich_summary.json", &summary)?;
    finish(config, out)
}

pub fn cmd_selftest(config: &RunConfig, out: &Path) -> Result<()> {
    prepare_out_dir(out)?;
    let mut checks: Vec<serde_json::Value> = Vec::new();
    let mut all_pass = true;
    let push = |name: &str, max_rel_error: f64, skipped: usize, threshold: f64,
                    checks: &mut Vec<serde_json::Value>,
                    all_pass: &mut bool| {
        let pass = max_rel_error <= threshold;
        *all_pass &= pass;
        checks.push(serde_json::json!({
            "name": name,
            "max_rel_error": max_rel_error,
            "skipped_coordinates": skipped,
            "threshold": threshold,
            "pass": pass,
        }));
    };

    // Primitive battery on a small fixed graph.
    let graph = Arc::new(random_connected_graph(12, 24, 7)?);
    let lap = Arc::new(supernode_core::graph::LaplacianOperator::new(
        graph.clone(),
        LambdaMaxMode::Approximate,
    ));
    let hierarchy = Arc::new(build_hierarchy(graph, 2, 7)?);
    let map = hierarchy.level(0).assignment.clone();

    let mut seed_counter = 1000u64;
    let mut random_tensor = |shape: Vec<usize>| {
        seed_counter += 1;
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let h = supernode_core::seeds::hash64(seed_counter, i as u64);
                (h % 2_000_000) as f64 / 1_000_000.0 - 1.0
            })
            .collect();
        Tensor::new(shape, values).expect("shape matches value count")
    };

    let x = random_tensor(vec![12, 2]);
    let report = grad_check(
        |t: &mut Tape, x| {
            let y = t.sparse_apply(&lap, x)?;
            let sq = t.elementwise_mul(y, y)?;
            t.reduce_sum(sq)
        },
        &x,
        1e-6,
    )?;
    push("sparse_apply", report.max_rel_error, report.skipped.len(), 1e-5, &mut checks, &mut all_pass);

    let report = grad_check(
        |t: &mut Tape, x| {
            let y = t.scatter_pool(&map, x)?;
            let sq = t.elementwise_mul(y, y)?;
            t.reduce_sum(sq)
        },
        &x,
        1e-6,
    )?;
    push("scatter_pool", report.max_rel_error, report.skipped.len(), 1e-5, &mut checks, &mut all_pass);

    let w = random_tensor(vec![3, 4]);
    let xm = random_tensor(vec![4, 3]);
    let report = grad_check(
        |t: &mut Tape, p| {
            let c = t.constant(xm.clone());
            let y = t.matmul(p, c)?;
            let act = t.relu(y)?;
            t.reduce_sum(act)
        },
        &w,
        1e-6,
    )?;
    push("matmul_relu", report.max_rel_error, report.skipped.len(), 1e-5, &mut checks, &mut all_pass);

    let z = random_tensor(vec![4, 3]);
    let labels = vec![0usize, 2, 1, 0];
    let report = grad_check(
        |t: &mut Tape, z| t.softmax_cross_entropy(z, &labels, &[]),
        &z,
        1e-6,
    )?;
    push("softmax_cross_entropy", report.max_rel_error, report.skipped.len(), 1e-5, &mut checks, &mut all_pass);

    // Full model on a 12-node, 2-level configuration: inputs and every
    // parameter group.
    let arch = ArchitectureConfig {
        n_levels: 2,
        conv_start_level: 0,
        channel_schedule: vec![],
        hidden_units: 6,
        dropout_p: 0.0,
        head: Head::SigmoidBinary,
    };
    let model = GnnModel::new(arch, hierarchy, LambdaMaxMode::Approximate, config.seed)?;
    let x = random_tensor(vec![2, 12]);
    let report = grad_check(
        |t: &mut Tape, xid| {
            let handles = model.forward_eval_from(t, xid, 2)?;
            t.select(handles.logits, 0, 0)
        },
        &x,
        1e-6,
    )?;
    push("model_wrt_inputs", report.max_rel_error, report.skipped.len(), 1e-4, &mut checks, &mut all_pass);

    let mut names = Vec::new();
    model.for_each_param(|n, t| names.push((n.to_string(), t.clone())));
    for (name, tensor) in names {
        let report = grad_check(
            |t: &mut Tape, pid| {
                let handles = model.forward_eval_bound(t, &x, &name, pid)?;
                t.select(handles.logits, 1, 0)
            },
            &tensor,
            1e-6,
        )?;
        push(
            &format!("model_wrt_{name}"),
            report.max_rel_error,
            report.skipped.len(),
            1e-4,
            &mut checks,
            &mut all_pass,
        );
    }

    let doc = serde_json::json!({ "checks": checks, "all_pass": all_pass });
    write_json(out, "selftest.json", &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    finish(config, out)?;
    if !all_pass {
        return Err(Error::Numeric {
            op: "selftest".into(),
            message: "one or more gradient checks exceeded their threshold".into(),
        });
    }
    Ok(())
}
