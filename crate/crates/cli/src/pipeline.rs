//! Shared pipeline stages behind the CLI commands: graph and hierarchy
//! loading, dataset preprocessing, model loading, and output bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use supernode_core::coarsen::{build_hierarchy, fnv1a64, CoarseningHierarchy};
use supernode_core::dataio::{
    align_to_graph, filter_missing, load_expression, load_mapping, log_transform,
    AlignmentReport, ExpressionDataset,
};
use supernode_core::error::{Error, Result};
use supernode_core::gnn::GnnModel;
use supernode_core::graph::{largest_component, load_edge_list, GeneGraph};
use supernode_core::seeds::{purpose_seed, Purpose};
use supernode_core::train::{stratified_split, Split};

use crate::config::{Partition, RunConfig};

/// What happened while loading and filtering the graph.
#[derive(Debug, Serialize)]
pub struct GraphReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub dropped_nodes: Vec<String>,
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
    pub below_min_weight: usize,
}

/// Load the edge list, restrict to the largest component.
pub fn load_graph(config: &RunConfig) -> Result<(Arc<GeneGraph>, GraphReport)> {
    let path = config.graph.edge_list.as_ref().ok_or_else(|| {
        Error::Schema("graph.edge_list is required for this command".into())
    })?;
    require_file(path)?;
    let (raw, load_report) = load_edge_list(path, config.graph.min_weight)?;
    let (graph, dropped) = largest_component(&raw)?;
    Ok((
        Arc::new(graph.clone()),
        GraphReport {
            n_nodes: graph.n_nodes(),
            n_edges: graph.n_edges(),
            dropped_nodes: dropped,
            self_loops_dropped: load_report.self_loops_dropped,
            duplicates_collapsed: load_report.duplicates_collapsed,
            below_min_weight: load_report.below_min_weight,
        },
    ))
}

/// Load the hierarchy from `coarsen.hierarchy` when set, otherwise build it
/// deterministically from the graph and the derived coarsening seed.
pub fn load_or_build_hierarchy(
    config: &RunConfig,
    graph: Arc<GeneGraph>,
) -> Result<CoarseningHierarchy> {
    match &config.coarsen.hierarchy {
        Some(path) => {
            require_file(path)?;
            let json = std::fs::read_to_string(path)?;
            CoarseningHierarchy::from_json(&json, graph)
        }
        None => build_hierarchy(
            graph,
            config.coarsen.n_levels,
            purpose_seed(config.seed, Purpose::Coarsen),
        ),
    }
}

/// Load expression + labels and run the preprocessing pipeline:
/// missing-value filtering, optional log transform, graph alignment.
pub fn load_dataset(
    config: &RunConfig,
    graph: &GeneGraph,
) -> Result<(ExpressionDataset, AlignmentReport)> {
    let expression = config.data.expression.as_ref().ok_or_else(|| {
        Error::Schema("data.expression is required for this command".into())
    })?;
    let labels = config.data.labels.as_ref().ok_or_else(|| {
        Error::Schema("data.labels is required for this command".into())
    })?;
    require_file(expression)?;
    require_file(labels)?;
    let mapping = match &config.data.mapping {
        Some(path) => {
            require_file(path)?;
            Some(load_mapping(path)?)
        }
        None => None,
    };
    let ds = load_expression(expression, labels, config.data.orientation)?;
    let ds = filter_missing(&ds, config.data.missing_threshold)?;
    let ds = if config.data.log_transform {
        log_transform(&ds)?
    } else {
        ds
    };
    align_to_graph(&ds, graph, mapping.as_ref())
}

/// Load the trained model named by `train.checkpoint` against a hierarchy.
pub fn load_model(
    config: &RunConfig,
    hierarchy: Arc<CoarseningHierarchy>,
    force: bool,
) -> Result<GnnModel> {
    let path = config.train.checkpoint.as_ref().ok_or_else(|| {
        Error::Schema("train.checkpoint must name the checkpoint written by `train`".into())
    })?;
    require_file(path)?;
    let json = std::fs::read_to_string(path)?;
    GnnModel::from_checkpoint_json(&json, hierarchy, force)
}

/// Recompute the split exactly as `fit` derived it.
pub fn recompute_split(config: &RunConfig, ds: &ExpressionDataset) -> Result<Split> {
    stratified_split(
        &ds.labels,
        &ds.label_names,
        config.train.fractions,
        purpose_seed(config.seed, Purpose::Split),
    )
}

/// Sample indices of one partition.
pub fn partition_indices(split: &Split, ds: &ExpressionDataset, which: Partition) -> Vec<usize> {
    match which {
        Partition::Train => split.train.clone(),
        Partition::Val => split.val.clone(),
        Partition::Test => split.test.clone(),
        Partition::All => (0..ds.n_samples()).collect(),
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Schema(format!(
            "input file {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

/// Create the output directory, failing fast on a bad location.
pub fn prepare_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

/// Write `manifest.json`: a 64-bit content digest per output file, so runs
/// can be compared without timestamps.
pub fn write_manifest(out_dir: &Path) -> Result<PathBuf> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    for path in names {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if name == "manifest.json" {
            continue;
        }
        let bytes = std::fs::read(&path)?;
        files.insert(name, format!("{:016x}", fnv1a64(&bytes)));
    }
    let manifest = serde_json::json!({ "files": files });
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Serialize a value as pretty JSON under the output directory.
pub fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::write(out_dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}
