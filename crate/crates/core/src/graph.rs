//! Weighted undirected graphs and the scaled normalized Laplacian.
//!
//! Graphs are stored in CSR form with string node identifiers. They are
//! immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Weighted undirected graph over string-identified nodes.
///
/// Invariants enforced at construction: the adjacency is symmetric, weights
/// are strictly positive, there are no self-loops, and node ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneGraph {
    node_ids: Vec<String>,
    /// CSR offsets, length `n_nodes + 1`.
    offsets: Vec<usize>,
    /// Neighbor indices, sorted ascending within each node.
    neighbors: Vec<usize>,
    /// Edge weights parallel to `neighbors`.
    weights: Vec<f64>,
    n_edges: usize,
}

impl GeneGraph {
    /// Build a graph from node ids and undirected edges `(i, j, w)`.
    ///
    /// Each undirected edge appears once in `edges` (either orientation).
    /// Duplicate pairs, self-loops, non-positive weights, out-of-range
    /// indices, and duplicate ids are rejected.
    pub fn from_edges(node_ids: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if node_ids.is_empty() {
            return Err(Error::EmptyGraph("no nodes supplied".into()));
        }
        let n = node_ids.len();
        {
            let mut seen = HashMap::with_capacity(n);
            for (i, id) in node_ids.iter().enumerate() {
                if let Some(first) = seen.insert(id.as_str(), i) {
                    return Err(Error::Contract(format!(
                        "duplicate node id `{}` at positions {} and {}",
                        id, first, i
                    )));
                }
            }
        }

        let mut degree = vec![0usize; n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Contract(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::Contract(format!("self-loop on node {i}")));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Contract(format!(
                    "edge ({i}, {j}) has non-positive or non-finite weight {w}"
                )));
            }
            degree[i] += 1;
            degree[j] += 1;
        }

        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut neighbors = vec![0usize; offsets[n]];
        let mut weights = vec![0.0f64; offsets[n]];
        let mut cursor = offsets.clone();
        for &(i, j, w) in edges {
            neighbors[cursor[i]] = j;
            weights[cursor[i]] = w;
            cursor[i] += 1;
            neighbors[cursor[j]] = i;
            weights[cursor[j]] = w;
            cursor[j] += 1;
        }
        // Sort each adjacency run by neighbor index; detect duplicate pairs.
        for i in 0..n {
            let lo = offsets[i];
            let hi = offsets[i + 1];
            let mut run: Vec<(usize, f64)> = neighbors[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            run.sort_by_key(|&(v, _)| v);
            for k in 1..run.len() {
                if run[k].0 == run[k - 1].0 {
                    return Err(Error::Contract(format!(
                        "duplicate edge between nodes {} and {}",
                        i, run[k].0
                    )));
                }
            }
            for (k, (v, w)) in run.into_iter().enumerate() {
                neighbors[lo + k] = v;
                weights[lo + k] = w;
            }
        }

        Ok(GeneGraph {
            node_ids,
            offsets,
            neighbors,
            weights,
            n_edges: edges.len(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Undirected edge count (each edge counted once).
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.node_ids[i]
    }

    /// Index of a node id, if present.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        // Linear scan is fine for occasional lookups; bulk consumers build
        // their own map via `id_index_map`.
        self.node_ids.iter().position(|x| x == id)
    }

    /// Map from node id to index for bulk lookups.
    pub fn id_index_map(&self) -> HashMap<&str, usize> {
        self.node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Neighbors of node `i` with weights, sorted by neighbor index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.offsets[i];
        let hi = self.offsets[i + 1];
        self.neighbors[lo..hi]
            .iter()
            .copied()
            .zip(self.weights[lo..hi].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Weighted degree (sum of incident edge weights).
    pub fn weighted_degree(&self, i: usize) -> f64 {
        let lo = self.offsets[i];
        let hi = self.offsets[i + 1];
        self.weights[lo..hi].iter().sum()
    }

    /// Sum of all edge weights, each undirected edge counted once.
    pub fn total_edge_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / 2.0
    }

    /// Undirected edges as `(i, j, w)` with `i < j`, ordered by `(i, j)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for i in 0..self.n_nodes() {
            for (j, w) in self.neighbors(i) {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Connected components as lists of node indices, each sorted ascending.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let mut comp = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for (v, _) in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    /// Induced subgraph on `keep` (indices into this graph, sorted ascending).
    /// Node order in the result follows `keep`.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<GeneGraph> {
        let mut remap = HashMap::with_capacity(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            remap.insert(old, new);
        }
        let node_ids: Vec<String> = keep.iter().map(|&i| self.node_ids[i].clone()).collect();
        let mut edges = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (old_j, w) in self.neighbors(old_i) {
                if old_i < old_j {
                    if let Some(&new_j) = remap.get(&old_j) {
                        edges.push((new_i, new_j, w));
                    }
                }
            }
        }
        GeneGraph::from_edges(node_ids, &edges)
    }
}

/// Load a graph from a three-column TSV edge list.
///
/// Rows are `id_a<TAB>id_b<TAB>weight`. A header row is detected by a
/// non-numeric third column and skipped. Rows with weight below `min_weight`
/// are dropped, duplicate `(a,b)`/`(b,a)` rows collapse keeping the maximum
/// weight, and self-loop rows are dropped (counted in the returned report).
/// Node order is first-appearance order in the file.
pub fn load_edge_list<P: AsRef<Path>>(path: P, min_weight: f64) -> Result<(GeneGraph, LoadReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    // Keyed by (min_idx, max_idx); holds the running max weight.
    let mut edge_weight: HashMap<(usize, usize), f64> = HashMap::new();
    let mut report = LoadReport::default();

    let intern = |id: &str, ids: &mut Vec<String>, index: &mut HashMap<String, usize>| {
        if let Some(&i) = index.get(id) {
            i
        } else {
            let i = ids.len();
            ids.push(id.to_string());
            index.insert(id.to_string(), i);
            i
        }
    };

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = line_no + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let weight = match cols[2].trim().parse::<f64>() {
            Ok(w) => w,
            Err(_) if line_no == 1 => {
                // Header row: non-numeric third column on the first line.
                continue;
            }
            Err(_) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-numeric weight `{}`", cols[2]),
                });
            }
        };
        if !weight.is_finite() || weight <= 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("weight must be a positive finite number, got {weight}"),
            });
        }
        if weight < min_weight {
            report.below_min_weight += 1;
            continue;
        }
        if cols[0] == cols[1] {
            report.self_loops_dropped += 1;
            continue;
        }
        let a = intern(cols[0], &mut ids, &mut index);
        let b = intern(cols[1], &mut ids, &mut index);
        let key = (a.min(b), a.max(b));
        let unique_before = edge_weight.len();
        let slot = edge_weight.entry(key).or_insert(weight);
        if weight > *slot {
            *slot = weight;
        }
        if edge_weight.len() == unique_before {
            report.duplicates_collapsed += 1;
        }
        report.rows_kept += 1;
    }

    if ids.is_empty() {
        return Err(Error::EmptyGraph(
            "no edges remained after filtering".into(),
        ));
    }

    let mut edges: Vec<(usize, usize, f64)> = edge_weight
        .into_iter()
        .map(|((a, b), w)| (a, b, w))
        .collect();
    edges.sort_unstable_by_key(|&(a, b, _)| (a, b));

    let graph = GeneGraph::from_edges(ids, &edges)?;
    Ok((graph, report))
}

/// Counters reported by [`load_edge_list`].
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub below_min_weight: usize,
    pub duplicates_collapsed: usize,
    pub rows_kept: usize,
}

/// Restrict a graph to its largest connected component.
///
/// Ties between equally sized components break toward the one containing the
/// smallest node index. Returns the induced subgraph (node order preserved)
/// and the identifiers that were dropped.
pub fn largest_component(g: &GeneGraph) -> Result<(GeneGraph, Vec<String>)> {
    let components = g.connected_components();
    let best = components
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .map(|(i, _)| i)
        .expect("non-empty graph has at least one component");
    let keep = &components[best];
    if keep.len() == g.n_nodes() {
        return Ok((g.clone(), Vec::new()));
    }
    let mut in_keep = vec![false; g.n_nodes()];
    for &i in keep {
        in_keep[i] = true;
    }
    let dropped: Vec<String> = (0..g.n_nodes())
        .filter(|&i| !in_keep[i])
        .map(|i| g.node_ids[i].clone())
        .collect();
    let sub = g.induced_subgraph(keep)?;
    Ok((sub, dropped))
}

/// How the spectral bound for Laplacian rescaling is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMaxMode {
    /// Use the universal bound λ_max = 2 for the normalized Laplacian.
    Approximate,
    /// Estimate λ_max by power iteration (50 iterations, tolerance 1e-6).
    Estimated,
}

/// Application of the rescaled symmetric-normalized Laplacian
/// `L̃ = (2/λ_max)·L − I` with `L = I − D^{-1/2} A D^{-1/2}`.
///
/// Isolated nodes use the convention `d^{-1/2} = 0`, so their normalized
/// adjacency row is zero. The operator never materializes a dense matrix.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    graph: std::sync::Arc<GeneGraph>,
    inv_sqrt_degree: Vec<f64>,
    lambda_max: f64,
    mode: LambdaMaxMode,
}

impl LaplacianOperator {
    pub fn new(graph: std::sync::Arc<GeneGraph>, mode: LambdaMaxMode) -> Self {
        let inv_sqrt_degree: Vec<f64> = (0..graph.n_nodes())
            .map(|i| {
                let d = graph.weighted_degree(i);
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut op = LaplacianOperator {
            graph,
            inv_sqrt_degree,
            lambda_max: 2.0,
            mode,
        };
        if mode == LambdaMaxMode::Estimated {
            op.lambda_max = op.estimate_lambda_max(50, 1e-6);
        }
        op
    }

    pub fn graph(&self) -> &GeneGraph {
        &self.graph
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn mode(&self) -> LambdaMaxMode {
        self.mode
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    /// `y = L x` for the symmetric-normalized Laplacian, one column at a time
    /// over a row-major `n × f` buffer.
    pub fn apply_normalized(&self, x: &[f64], f: usize, y: &mut [f64]) {
        let n = self.graph.n_nodes();
        debug_assert_eq!(x.len(), n * f);
        debug_assert_eq!(y.len(), n * f);
        for i in 0..n {
            let row = &mut y[i * f..(i + 1) * f];
            row.copy_from_slice(&x[i * f..(i + 1) * f]);
            let si = self.inv_sqrt_degree[i];
            for (j, w) in self.graph.neighbors(i) {
                let coeff = si * w * self.inv_sqrt_degree[j];
                let xr = &x[j * f..(j + 1) * f];
                for c in 0..f {
                    row[c] -= coeff * xr[c];
                }
            }
        }
    }

    /// `y = L̃ x = (2/λ_max)·L x − x` over a row-major `n × f` buffer.
    pub fn apply_scaled(&self, x: &[f64], f: usize, y: &mut [f64]) {
        self.apply_normalized(x, f, y);
        let scale = 2.0 / self.lambda_max;
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi = scale * *yi - *xi;
        }
    }

    /// Convenience wrapper over [`apply_scaled`](Self::apply_scaled) with a
    /// shape check on the row count.
    pub fn scaled_apply_matrix(&self, x: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
        if rows != self.graph.n_nodes() {
            return Err(Error::Shape(format!(
                "laplacian expects {} rows, got {}",
                self.graph.n_nodes(),
                rows
            )));
        }
        if x.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer length {} does not match {rows}×{cols}",
                x.len()
            )));
        }
        let mut y = vec![0.0; x.len()];
        self.apply_scaled(x, cols, &mut y);
        Ok(y)
    }

    /// Largest eigenvalue of `L` by power iteration. Always in `(0, 2]` for
    /// the symmetric-normalized Laplacian; the result is clamped there to
    /// absorb rounding.
    fn estimate_lambda_max(&self, iterations: usize, tolerance: f64) -> f64 {
        let n = self.graph.n_nodes();
        if n == 1 {
            return 2.0;
        }
        // Deterministic start vector with components on all eigenvectors.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 % 7.0) * 0.1).collect();
        let norm = |u: &[f64]| u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut estimate = 2.0;
        let mut w = vec![0.0; n];
        for _ in 0..iterations {
            self.apply_normalized(&v, 1, &mut w);
            let lambda = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
            let nw = norm(&w);
            if nw == 0.0 {
                // L v = 0: graph is edgeless; spectrum is {0} ∪ {1}-free.
                estimate = 2.0;
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            std::mem::swap(&mut v, &mut w);
            if (lambda - estimate).abs() < tolerance {
                estimate = lambda;
                break;
            }
            estimate = lambda;
        }
        estimate.clamp(f64::MIN_POSITIVE, 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::sync::Arc;

    fn write_tsv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn graph_from(ids: &[&str], edges: &[(usize, usize, f64)]) -> GeneGraph {
        GeneGraph::from_edges(ids.iter().map(|s| s.to_string()).collect(), edges).unwrap()
    }

    /// Dense L̃ for small graphs, used as an oracle.
    fn dense_scaled_laplacian(g: &GeneGraph, lambda_max: f64) -> Vec<Vec<f64>> {
        let n = g.n_nodes();
        let mut adj = vec![vec![0.0; n]; n];
        for (i, j, w) in g.edges() {
            adj[i][j] = w;
            adj[j][i] = w;
        }
        let deg: Vec<f64> = (0..n).map(|i| adj[i].iter().sum()).collect();
        let inv_sqrt: Vec<f64> = deg
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut lt = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let l = if i == j { 1.0 } else { 0.0 } - inv_sqrt[i] * adj[i][j] * inv_sqrt[j];
                lt[i][j] = 2.0 / lambda_max * l - if i == j { 1.0 } else { 0.0 };
            }
        }
        lt
    }

    fn random_graph(n: usize, seed: u64) -> GeneGraph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let mut edges = Vec::new();
        for i in 1..n {
            let j = rng.gen_range(0..i);
            edges.push((j, i, rng.gen_range(0.1..1.0)));
        }
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j && !edges.iter().any(|&(a, b, _)| (a, b) == (i.min(j), i.max(j))) {
                edges.push((i.min(j), i.max(j), rng.gen_range(0.1..1.0)));
            }
        }
        GeneGraph::from_edges(ids, &edges).unwrap()
    }

    #[test]
    fn load_collapses_duplicates_keeping_max() {
        let f = write_tsv("a\tb\t500\nb\tc\t900\nb\ta\t400\n");
        let (g, _) = load_edge_list(f.path(), 0.0).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.n_edges(), 2);
        let a = g.index_of("a").unwrap();
        let b = g.index_of("b").unwrap();
        let w = g.neighbors(a).find(|&(j, _)| j == b).unwrap().1;
        assert_eq!(w, 500.0);
    }

    #[test]
    fn load_header_only_is_empty_graph() {
        let f = write_tsv("protein1\tprotein2\tcombined_score\n");
        match load_edge_list(f.path(), 0.0) {
            Err(Error::EmptyGraph(_)) => {}
            other => panic!("expected empty-graph error, got {other:?}"),
        }
    }

    #[test]
    fn load_self_loop_only_is_empty_graph() {
        let f = write_tsv("a\ta\t700\n");
        match load_edge_list(f.path(), 0.0) {
            Err(Error::EmptyGraph(_)) => {}
            other => panic!("expected empty-graph error, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_parse_error_with_line() {
        let f = write_tsv("a\tb\t500\na\tb\n");
        match load_edge_list(f.path(), 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tsv("a\tb\t500\nc\td\tzzz\n");
        match load_edge_list(f.path(), 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_applies_min_weight_and_counts_loops() {
        let f = write_tsv("h1\th2\tscore\na\tb\t150\nb\tc\t900\nd\td\t800\n");
        let (g, report) = load_edge_list(f.path(), 200.0).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(report.self_loops_dropped, 1);
        assert_eq!(report.below_min_weight, 1);
    }

    #[test]
    fn load_is_invariant_under_row_order() {
        let rows = ["a\tb\t500", "b\tc\t900", "c\td\t250", "b\ta\t400"];
        let f1 = write_tsv(&(rows.join("\n") + "\n"));
        let (g1, _) = load_edge_list(f1.path(), 0.0).unwrap();
        let mut perm = rows;
        perm.reverse();
        let f2 = write_tsv(&(perm.join("\n") + "\n"));
        let (g2, _) = load_edge_list(f2.path(), 0.0).unwrap();
        // Node order differs (first appearance), but the edge structure keyed
        // by id must be identical.
        let canon = |g: &GeneGraph| {
            let mut e: Vec<(String, String, u64)> = g
                .edges()
                .into_iter()
                .map(|(i, j, w)| {
                    let (a, b) = (g.node_id(i).to_string(), g.node_id(j).to_string());
                    let (a, b) = if a <= b { (a, b) } else { (b, a) };
                    (a, b, w.to_bits())
                })
                .collect();
            e.sort();
            e
        };
        assert_eq!(canon(&g1), canon(&g2));
    }

    #[test]
    fn largest_component_picks_bigger_and_reports_dropped() {
        // Components {0,1,2} and {3,4}.
        let g = graph_from(
            &["a", "b", "c", "d", "e"],
            &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)],
        );
        let (sub, dropped) = largest_component(&g).unwrap();
        assert_eq!(sub.n_nodes(), 3);
        assert_eq!(dropped, vec!["d".to_string(), "e".to_string()]);
        assert_eq!(sub.connected_components().len(), 1);
    }

    #[test]
    fn largest_component_identity_on_connected() {
        let g = graph_from(&["a", "b", "c"], &[(0, 1, 1.0), (1, 2, 2.0)]);
        let (sub, dropped) = largest_component(&g).unwrap();
        assert_eq!(sub, g);
        assert!(dropped.is_empty());
    }

    #[test]
    fn largest_component_drops_singletons_at_scale() {
        // 14148 nodes: one 14133-node path plus 15 isolated nodes.
        let ids: Vec<String> = (0..14148).map(|i| format!("p{i}")).collect();
        let edges: Vec<(usize, usize, f64)> = (1..14133).map(|i| (i - 1, i, 1.0)).collect();
        let g = GeneGraph::from_edges(ids, &edges).unwrap();
        let (sub, dropped) = largest_component(&g).unwrap();
        assert_eq!(sub.n_nodes(), 14133);
        assert_eq!(dropped.len(), 15);
        assert_eq!(sub.connected_components().len(), 1);
    }

    #[test]
    fn largest_component_tie_breaks_to_smallest_index() {
        // Two 2-node components; {0,3} vs {1,2}: tie by size, smallest min
        // index wins, so {0,3} stays.
        let g = graph_from(&["a", "b", "c", "d"], &[(0, 3, 1.0), (1, 2, 1.0)]);
        let (sub, dropped) = largest_component(&g).unwrap();
        assert_eq!(sub.node_ids(), &["a".to_string(), "d".to_string()]);
        assert_eq!(dropped, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn scaled_laplacian_two_node_case() {
        let g = Arc::new(graph_from(&["a", "b"], &[(0, 1, 1.0)]));
        let lap = LaplacianOperator::new(g, LambdaMaxMode::Approximate);
        let y = lap.scaled_apply_matrix(&[1.0, 0.0], 2, 1).unwrap();
        assert_eq!(y, vec![0.0, -1.0]);
    }

    #[test]
    fn scaled_laplacian_zero_matrix() {
        let g = Arc::new(random_graph(6, 3));
        let lap = LaplacianOperator::new(g, LambdaMaxMode::Approximate);
        let zeros = vec![0.0; 6 * 2];
        let y = lap.scaled_apply_matrix(&zeros, 6, 2).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_laplacian_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for seed in 0..20 {
            let g = Arc::new(random_graph(8, seed));
            let lap = LaplacianOperator::new(g.clone(), LambdaMaxMode::Approximate);
            let dense = dense_scaled_laplacian(&g, 2.0);
            let x: Vec<f64> = (0..8 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = lap.scaled_apply_matrix(&x, 8, 3).unwrap();
            for i in 0..8 {
                for c in 0..3 {
                    let expect: f64 = (0..8).map(|j| dense[i][j] * x[j * 3 + c]).sum();
                    assert!(
                        (y[i * 3 + c] - expect).abs() <= 1e-12,
                        "mismatch at ({i},{c}): {} vs {expect}",
                        y[i * 3 + c]
                    );
                }
            }
        }
    }

    #[test]
    fn normalized_laplacian_annihilates_sqrt_degree_vector() {
        let g = Arc::new(random_graph(10, 11));
        let lap = LaplacianOperator::new(g.clone(), LambdaMaxMode::Approximate);
        let x: Vec<f64> = (0..10).map(|i| g.weighted_degree(i).sqrt()).collect();
        let mut y = vec![0.0; 10];
        lap.apply_normalized(&x, 1, &mut y);
        assert!(y.iter().all(|&v| v.abs() <= 1e-10), "residual {y:?}");
    }

    #[test]
    fn estimated_lambda_max_in_range() {
        for seed in 0..10 {
            let g = Arc::new(random_graph(12, seed + 100));
            let lap = LaplacianOperator::new(g, LambdaMaxMode::Estimated);
            assert!(lap.lambda_max() > 0.0 && lap.lambda_max() <= 2.0);
        }
        // Path graph P2 has λ_max exactly 2.
        let g = Arc::new(graph_from(&["a", "b"], &[(0, 1, 1.0)]));
        let lap = LaplacianOperator::new(g, LambdaMaxMode::Estimated);
        assert!((lap.lambda_max() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn shape_errors_are_reported() {
        let g = Arc::new(graph_from(&["a", "b"], &[(0, 1, 1.0)]));
        let lap = LaplacianOperator::new(g, LambdaMaxMode::Approximate);
        assert!(matches!(
            lap.scaled_apply_matrix(&[1.0, 0.0, 0.0], 3, 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn from_edges_rejects_invalid_input() {
        assert!(matches!(
            GeneGraph::from_edges(vec!["a".into(), "a".into()], &[(0, 1, 1.0)]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            GeneGraph::from_edges(vec!["a".into(), "b".into()], &[(0, 0, 1.0)]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            GeneGraph::from_edges(vec!["a".into(), "b".into()], &[(0, 1, -1.0)]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            GeneGraph::from_edges(vec!["a".into(), "b".into()], &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(Error::Contract(_))
        ));
    }
}
