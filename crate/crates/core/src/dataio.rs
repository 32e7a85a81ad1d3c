//! Expression-matrix ingestion, preprocessing, graph alignment, and the
//! synthetic planted-module generator.
//!
//! The preprocessing pipeline runs missing-value filtering, the log2(x+1)
//! transform, and alignment of gene columns to graph node order. The
//! synthetic generator plants connected gene modules whose mean shifts
//! separate two classes, providing exact ground truth for end-to-end and
//! saliency tests.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::GeneGraph;
use crate::interpret::{GeneSet, GeneSetCollection};
use crate::seeds::hash64;

/// Samples × genes feature matrix with a missing mask and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDataset {
    pub sample_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    /// Row-major samples × genes values; missing entries hold 0.0 until
    /// imputation.
    values: Vec<f64>,
    missing: Vec<bool>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl ExpressionDataset {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn value(&self, sample: usize, gene: usize) -> f64 {
        self.values[sample * self.n_genes() + gene]
    }

    pub fn is_missing(&self, sample: usize, gene: usize) -> bool {
        self.missing[sample * self.n_genes() + gene]
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Feature rows for the given samples as a `B×G` tensor plus their labels.
    pub fn gather(&self, samples: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let g = self.n_genes();
        let mut out = Vec::with_capacity(samples.len() * g);
        let mut labels = Vec::with_capacity(samples.len());
        for &s in samples {
            if s >= self.n_samples() {
                return Err(Error::Contract(format!(
                    "sample index {s} out of range 0..{}",
                    self.n_samples()
                )));
            }
            out.extend_from_slice(&self.values[s * g..(s + 1) * g]);
            labels.push(self.labels[s]);
        }
        Ok((Tensor::matrix(samples.len(), g, out)?, labels))
    }
}

/// Layout of the expression TSV: which axis the file's rows represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    GenesAsRows,
    SamplesAsRows,
}

fn is_missing_cell(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Parse an expression matrix TSV plus its two-column label file.
///
/// The matrix has a header of column ids and one id per row; empty cells and
/// `NA` mark missing values. Every sample must appear in the label file.
/// Label names map to class indices in lexicographic order.
pub fn load_expression<P: AsRef<Path>>(
    matrix_path: P,
    labels_path: P,
    orientation: Orientation,
) -> Result<ExpressionDataset> {
    let file = std::fs::File::open(matrix_path.as_ref())?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "expression matrix is empty".into(),
    })?;
    let header = header?;
    let col_ids: Vec<String> = header.split('\t').skip(1).map(|s| s.to_string()).collect();
    if col_ids.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "header has no data columns".into(),
        });
    }
    check_unique(&col_ids, "column")?;

    let mut row_ids = Vec::new();
    let mut rows: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(col_ids.len());
        let mut mask = Vec::with_capacity(col_ids.len());
        for cell in cells {
            if is_missing_cell(cell) {
                values.push(0.0);
                mask.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("non-numeric cell `{cell}` in row `{id}`"),
                })?;
                values.push(v);
                mask.push(false);
            }
        }
        if values.len() != col_ids.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "row `{id}` has {} data cells, header has {}",
                    values.len(),
                    col_ids.len()
                ),
            });
        }
        row_ids.push(id);
        rows.push((values, mask));
    }
    check_unique(&row_ids, "row")?;

    let (sample_ids, gene_ids, values, missing) = match orientation {
        Orientation::SamplesAsRows => {
            let n_genes = col_ids.len();
            let mut values = Vec::with_capacity(rows.len() * n_genes);
            let mut missing = Vec::with_capacity(rows.len() * n_genes);
            for (v, m) in rows {
                values.extend(v);
                missing.extend(m);
            }
            (row_ids, col_ids, values, missing)
        }
        Orientation::GenesAsRows => {
            let n_samples = col_ids.len();
            let n_genes = row_ids.len();
            let mut values = vec![0.0; n_samples * n_genes];
            let mut missing = vec![false; n_samples * n_genes];
            for (gi, (v, m)) in rows.iter().enumerate() {
                for si in 0..n_samples {
                    values[si * n_genes + gi] = v[si];
                    missing[si * n_genes + gi] = m[si];
                }
            }
            (col_ids, row_ids, values, missing)
        }
    };

    let label_map = load_labels(labels_path.as_ref())?;
    let mut names: Vec<String> = label_map
        .values()
        .cloned()
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    names.sort();
    let name_index: HashMap<&String, usize> =
        names.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut labels = Vec::with_capacity(sample_ids.len());
    for sid in &sample_ids {
        let name = label_map.get(sid).ok_or_else(|| {
            Error::InvalidLabel(format!("sample `{sid}` has no entry in the label file"))
        })?;
        labels.push(name_index[name]);
    }

    Ok(ExpressionDataset {
        sample_ids,
        gene_ids,
        values,
        missing,
        labels,
        label_names: names,
    })
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Parse {
                line: 0,
                message: format!("duplicate {what} id `{id}`"),
            });
        }
    }
    Ok(())
}

fn load_labels(path: &Path) -> Result<HashMap<String, String>> {
    let file = std::fs::File::open(path)?;
    let mut map = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("label rows need 2 columns, found {}", cols.len()),
            });
        }
        if map
            .insert(cols[0].to_string(), cols[1].to_string())
            .is_some()
        {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("sample `{}` labeled twice", cols[0]),
            });
        }
    }
    Ok(map)
}

/// Drop genes whose missing fraction exceeds `threshold`, then samples
/// likewise, then impute surviving missing entries with the per-gene median
/// of observed values.
pub fn filter_missing(ds: &ExpressionDataset, threshold: f64) -> Result<ExpressionDataset> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Contract(format!(
            "missing threshold {threshold} not in [0, 1]"
        )));
    }
    let (ns, ng) = (ds.n_samples(), ds.n_genes());
    let keep_genes: Vec<usize> = (0..ng)
        .filter(|&g| {
            let miss = (0..ns).filter(|&s| ds.is_missing(s, g)).count();
            miss as f64 / ns as f64 <= threshold
        })
        .collect();
    if keep_genes.is_empty() {
        return Err(Error::EmptyDataset(
            "all genes exceeded the missing-value threshold".into(),
        ));
    }
    let keep_samples: Vec<usize> = (0..ns)
        .filter(|&s| {
            let miss = keep_genes.iter().filter(|&&g| ds.is_missing(s, g)).count();
            miss as f64 / keep_genes.len() as f64 <= threshold
        })
        .collect();
    if keep_samples.is_empty() {
        return Err(Error::EmptyDataset(
            "all samples exceeded the missing-value threshold".into(),
        ));
    }

    let ng2 = keep_genes.len();
    let mut values = vec![0.0; keep_samples.len() * ng2];
    let mut missing = vec![false; keep_samples.len() * ng2];
    for (si, &s) in keep_samples.iter().enumerate() {
        for (gi, &g) in keep_genes.iter().enumerate() {
            values[si * ng2 + gi] = ds.value(s, g);
            missing[si * ng2 + gi] = ds.is_missing(s, g);
        }
    }
    // Median imputation over observed values, per gene.
    for gi in 0..ng2 {
        let mut observed: Vec<f64> = (0..keep_samples.len())
            .filter(|&si| !missing[si * ng2 + gi])
            .map(|si| values[si * ng2 + gi])
            .collect();
        if observed.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "gene `{}` has no observed values left to impute from",
                ds.gene_ids[keep_genes[gi]]
            )));
        }
        observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if observed.len() % 2 == 1 {
            observed[observed.len() / 2]
        } else {
            (observed[observed.len() / 2 - 1] + observed[observed.len() / 2]) / 2.0
        };
        for si in 0..keep_samples.len() {
            if missing[si * ng2 + gi] {
                values[si * ng2 + gi] = median;
                missing[si * ng2 + gi] = false;
            }
        }
    }

    Ok(ExpressionDataset {
        sample_ids: keep_samples
            .iter()
            .map(|&s| ds.sample_ids[s].clone())
            .collect(),
        gene_ids: keep_genes.iter().map(|&g| ds.gene_ids[g].clone()).collect(),
        values,
        missing,
        labels: keep_samples.iter().map(|&s| ds.labels[s]).collect(),
        label_names: ds.label_names.clone(),
    })
}

/// Elementwise `x → log2(x + 1)`. Fails on negative observed values.
pub fn log_transform(ds: &ExpressionDataset) -> Result<ExpressionDataset> {
    let mut out = ds.clone();
    let ng = ds.n_genes();
    for (k, v) in out.values.iter_mut().enumerate() {
        if out.missing[k] {
            continue;
        }
        if *v < 0.0 {
            return Err(Error::Domain(format!(
                "negative value {v} at sample `{}`, gene `{}`",
                ds.sample_ids[k / ng],
                ds.gene_ids[k % ng]
            )));
        }
        *v = (*v + 1.0).log2();
    }
    Ok(out)
}

/// Identifier mapping file: two columns `old_id<TAB>node_id`, no header.
/// Each `old_id` may appear at most once.
pub fn load_mapping<P: AsRef<Path>>(path: P) -> Result<HashMap<String, String>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut map = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("mapping rows need 2 columns, found {}", cols.len()),
            });
        }
        if map
            .insert(cols[0].to_string(), cols[1].to_string())
            .is_some()
        {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!(
                    "old id `{}` mapped twice (mapping must be functional)",
                    cols[0]
                ),
            });
        }
    }
    Ok(map)
}

/// What [`align_to_graph`] changed.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct AlignmentReport {
    /// Graph nodes absent from the dataset, zero-filled.
    pub zero_filled: Vec<String>,
    /// Dataset genes absent from the graph, dropped.
    pub dropped: Vec<String>,
    /// Mapping collisions: which column won (higher mean expression).
    pub collisions: Vec<CollisionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CollisionRecord {
    pub node_id: String,
    pub kept_old_id: String,
    pub dropped_old_id: String,
}

/// Rename genes through the optional mapping, resolve collisions by keeping
/// the higher-mean column, then reorder columns to graph node order. Graph
/// nodes missing from the dataset become zero columns; dataset genes missing
/// from the graph are dropped.
pub fn align_to_graph(
    ds: &ExpressionDataset,
    graph: &GeneGraph,
    mapping: Option<&HashMap<String, String>>,
) -> Result<(ExpressionDataset, AlignmentReport)> {
    let ns = ds.n_samples();
    let mut report = AlignmentReport::default();

    // Post-mapping id per dataset column.
    let renamed: Vec<String> = ds
        .gene_ids
        .iter()
        .map(|id| match mapping {
            Some(m) => m.get(id).cloned().unwrap_or_else(|| id.clone()),
            None => id.clone(),
        })
        .collect();

    let mean_of = |g: usize| -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in 0..ns {
            if !ds.is_missing(s, g) {
                sum += ds.value(s, g);
                count += 1;
            }
        }
        if count == 0 {
            f64::NEG_INFINITY
        } else {
            sum / count as f64
        }
    };

    // Pick one source column per post-mapping id (higher mean wins).
    let mut chosen: HashMap<&str, usize> = HashMap::new();
    for (g, name) in renamed.iter().enumerate() {
        let id = name.as_str();
        match chosen.get(&id) {
            None => {
                chosen.insert(id, g);
            }
            Some(&other) => {
                let (keep, drop) = if mean_of(g) > mean_of(other) {
                    (g, other)
                } else {
                    (other, g)
                };
                chosen.insert(id, keep);
                report.collisions.push(CollisionRecord {
                    node_id: id.to_string(),
                    kept_old_id: ds.gene_ids[keep].clone(),
                    dropped_old_id: ds.gene_ids[drop].clone(),
                });
            }
        }
    }

    let node_ids = graph.node_ids();
    let node_set: HashSet<&str> = node_ids.iter().map(|s| s.as_str()).collect();
    let overlap = chosen.keys().filter(|id| node_set.contains(*id)).count();
    if overlap == 0 {
        return Err(Error::Alignment(
            "no dataset gene matches any graph node".into(),
        ));
    }
    for (g, id) in renamed.iter().enumerate() {
        if !node_set.contains(id.as_str()) && chosen.get(id.as_str()) == Some(&g) {
            report.dropped.push(id.clone());
        }
    }
    report.dropped.sort();

    let ng2 = node_ids.len();
    let mut values = vec![0.0; ns * ng2];
    let mut missing = vec![false; ns * ng2];
    for (col, node) in node_ids.iter().enumerate() {
        match chosen.get(node.as_str()) {
            Some(&src) => {
                for s in 0..ns {
                    values[s * ng2 + col] = ds.value(s, src);
                    missing[s * ng2 + col] = ds.is_missing(s, src);
                }
            }
            None => report.zero_filled.push(node.clone()),
        }
    }

    Ok((
        ExpressionDataset {
            sample_ids: ds.sample_ids.clone(),
            gene_ids: node_ids.to_vec(),
            values,
            missing,
            labels: ds.labels.clone(),
            label_names: ds.label_names.clone(),
        },
        report,
    ))
}

/// Load gene sets from a GMT file: `set_id<TAB>description<TAB>gene…`.
pub fn load_gmt<P: AsRef<Path>>(path: P) -> Result<GeneSetCollection> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut sets = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("GMT rows need at least 3 columns, found {}", cols.len()),
            });
        }
        sets.push(GeneSet {
            id: cols[0].to_string(),
            description: cols[1].to_string(),
            genes: cols[2..].iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(GeneSetCollection { sets })
}

/// Specification of a synthetic planted-module classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub graph_size: usize,
    pub n_planted_modules: usize,
    pub module_size: usize,
    /// Mean shift added to planted genes in class-1 samples.
    pub effect_size: f64,
    /// Standard deviation of the Gaussian noise on every entry.
    pub noise_sigma: f64,
    pub n_samples_per_class: usize,
    pub seed: u64,
}

/// Exact ground truth of a generated task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub modules: Vec<Vec<String>>,
}

impl PlantedTruth {
    pub fn all_genes(&self) -> Vec<String> {
        self.modules.iter().flatten().cloned().collect()
    }
}

/// Seeded random connected graph: a random spanning tree plus `extra_edges`
/// random edges, weights uniform in (0, 1].
pub fn random_connected_graph(n: usize, extra_edges: usize, seed: u64) -> Result<GeneGraph> {
    if n == 0 {
        return Err(Error::EmptyGraph("graph size 0 requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("g{i:04}")).collect();
    let mut present: HashSet<(usize, usize)> = HashSet::new();
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        present.insert((j, i));
        let w = 1.0 - rng.gen::<f64>();
        edges.push((j, i, w));
    }
    for _ in 0..extra_edges {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if present.insert(key) {
            let w = 1.0 - rng.gen::<f64>();
            edges.push((key.0, key.1, w));
        }
    }
    GeneGraph::from_edges(ids, &edges)
}

/// Generate the synthetic task: a seeded connected graph, connected planted
/// modules chosen by BFS, and Gaussian samples where class 1 carries a mean
/// shift on the planted genes.
pub fn synth_generate(
    spec: &SyntheticSpec,
) -> Result<(GeneGraph, ExpressionDataset, PlantedTruth)> {
    if spec.module_size == 0 || spec.n_planted_modules == 0 {
        return Err(Error::InfeasibleSpec(
            "module size and count must be positive".into(),
        ));
    }
    if spec.module_size * spec.n_planted_modules > spec.graph_size {
        return Err(Error::InfeasibleSpec(format!(
            "{} modules of {} genes exceed the {}-node graph",
            spec.n_planted_modules, spec.module_size, spec.graph_size
        )));
    }
    if spec.n_samples_per_class == 0 {
        return Err(Error::InfeasibleSpec(
            "need at least one sample per class".into(),
        ));
    }
    if spec.noise_sigma < 0.0 {
        return Err(Error::InfeasibleSpec(
            "noise sigma must be nonnegative".into(),
        ));
    }

    let graph =
        random_connected_graph(spec.graph_size, 2 * spec.graph_size, hash64(spec.seed, 0))?;

    // Connected modules: BFS from seeded starts over still-unused nodes.
    let mut module_rng = ChaCha8Rng::seed_from_u64(hash64(spec.seed, 1));
    let n = graph.n_nodes();
    let mut used = vec![false; n];
    let mut modules: Vec<Vec<usize>> = Vec::new();
    for _ in 0..spec.n_planted_modules {
        let mut module = Vec::new();
        let mut attempts = 0;
        while module.len() < spec.module_size {
            attempts += 1;
            if attempts > 4 * n {
                return Err(Error::InfeasibleSpec(format!(
                    "could not grow a connected module of {} unused genes",
                    spec.module_size
                )));
            }
            let start = module_rng.gen_range(0..n);
            if used[start] {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            let mut visited = HashSet::from([start]);
            module.clear();
            while let Some(u) = queue.pop_front() {
                module.push(u);
                if module.len() == spec.module_size {
                    break;
                }
                for (v, _) in graph.neighbors(u) {
                    if !used[v] && visited.insert(v) {
                        queue.push_back(v);
                    }
                }
            }
            if module.len() < spec.module_size {
                module.clear();
            }
        }
        for &g in &module {
            used[g] = true;
        }
        let mut sorted = module.clone();
        sorted.sort_unstable();
        modules.push(sorted);
    }

    let planted: HashSet<usize> = modules.iter().flatten().copied().collect();
    let per_class = spec.n_samples_per_class;
    let total = 2 * per_class;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(hash64(spec.seed, 2));
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
    let mut values = vec![0.0; total * n];
    let mut labels = vec![0usize; total];
    let mut sample_ids = Vec::with_capacity(total);
    for s in 0..total {
        let class = usize::from(s >= per_class);
        labels[s] = class;
        sample_ids.push(format!("s{s:04}"));
        for g in 0..n {
            let mut v = spec.noise_sigma * normal.sample(&mut noise_rng);
            if class == 1 && planted.contains(&g) {
                v += spec.effect_size;
            }
            values[s * n + g] = v;
        }
    }

    let truth = PlantedTruth {
        modules: modules
            .iter()
            .map(|m| m.iter().map(|&g| graph.node_id(g).to_string()).collect())
            .collect(),
    };
    let dataset = ExpressionDataset {
        sample_ids,
        gene_ids: graph.node_ids().to_vec(),
        values,
        missing: vec![false; total * n],
        labels,
        label_names: vec!["0".into(), "1".into()],
    };
    Ok((graph, dataset, truth))
}

/// Write an expression matrix TSV in the given orientation.
pub fn write_expression_tsv<P: AsRef<Path>>(
    ds: &ExpressionDataset,
    path: P,
    orientation: Orientation,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    match orientation {
        Orientation::SamplesAsRows => {
            write!(out, "sample")?;
            for gid in &ds.gene_ids {
                write!(out, "\t{gid}")?;
            }
            writeln!(out)?;
            for (s, sid) in ds.sample_ids.iter().enumerate() {
                write!(out, "{sid}")?;
                for g in 0..ds.n_genes() {
                    if ds.is_missing(s, g) {
                        write!(out, "\tNA")?;
                    } else {
                        write!(out, "\t{}", ds.value(s, g))?;
                    }
                }
                writeln!(out)?;
            }
        }
        Orientation::GenesAsRows => {
            write!(out, "gene")?;
            for sid in &ds.sample_ids {
                write!(out, "\t{sid}")?;
            }
            writeln!(out)?;
            for (g, gid) in ds.gene_ids.iter().enumerate() {
                write!(out, "{gid}")?;
                for s in 0..ds.n_samples() {
                    if ds.is_missing(s, g) {
                        write!(out, "\tNA")?;
                    } else {
                        write!(out, "\t{}", ds.value(s, g))?;
                    }
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

/// Write the two-column label TSV.
pub fn write_labels_tsv<P: AsRef<Path>>(ds: &ExpressionDataset, path: P) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for (s, sid) in ds.sample_ids.iter().enumerate() {
        writeln!(out, "{sid}\t{}", ds.label_names[ds.labels[s]])?;
    }
    Ok(())
}

/// Write a graph as a three-column edge-list TSV.
pub fn write_edge_list<P: AsRef<Path>>(graph: &GeneGraph, path: P) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "protein1\tprotein2\tcombined_score")?;
    for (i, j, w) in graph.edges() {
        writeln!(out, "{}\t{}\t{}", graph.node_id(i), graph.node_id(j), w)?;
    }
    Ok(())
}
