//! Saliency-based model explanation and over-representation analysis.
//!
//! Input saliency is the absolute gradient of a class score (the
//! pre-activation logit) with respect to the input genes; supernode saliency
//! takes the same gradient at the pre-flatten supernode embeddings and
//! reduces it over embedding dimensions. Supernode gene clusters are tested
//! for enrichment against curated gene sets with an exact hypergeometric
//! upper tail and Benjamini-Hochberg FDR control.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::coarsen::CoarseningHierarchy;
use crate::error::{Error, Result};
use crate::gnn::{GnnModel, Head};

/// Identifier of a saliency feature: a gene (input level) or a supernode
/// index (coarsest level). The ordering is used for deterministic tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureId {
    Gene(String),
    Supernode(usize),
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureId::Gene(id) => write!(f, "{id}"),
            FeatureId::Supernode(j) => write!(f, "{j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencyLevel {
    Input,
    Supernode,
}

/// How supernode saliencies collapse the embedding dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Mean,
    Max,
}

/// Per-sample absolute-gradient attributions plus normalized copies.
#[derive(Debug, Clone)]
pub struct SaliencyReport {
    pub level: SaliencyLevel,
    pub target_class: usize,
    pub sample_ids: Vec<String>,
    pub feature_ids: Vec<FeatureId>,
    /// samples × features absolute gradients.
    pub raw: Vec<Vec<f64>>,
    /// Per-sample standardization of `raw` (zero mean, unit population
    /// standard deviation); `None` for flagged zero-variance rows.
    pub normalized: Vec<Option<Vec<f64>>>,
    pub zero_variance_samples: Vec<usize>,
}

impl SaliencyReport {
    fn from_raw(
        level: SaliencyLevel,
        target_class: usize,
        sample_ids: Vec<String>,
        feature_ids: Vec<FeatureId>,
        raw: Vec<Vec<f64>>,
    ) -> Self {
        let mut normalized = Vec::with_capacity(raw.len());
        let mut zero_variance_samples = Vec::new();
        for (s, row) in raw.iter().enumerate() {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var == 0.0 {
                zero_variance_samples.push(s);
                normalized.push(None);
            } else {
                let std = var.sqrt();
                normalized.push(Some(row.iter().map(|v| (v - mean) / std).collect()));
            }
        }
        SaliencyReport {
            level,
            target_class,
            sample_ids,
            feature_ids,
            raw,
            normalized,
            zero_variance_samples,
        }
    }
}

fn check_class(model: &GnnModel, class: usize) -> Result<()> {
    let n = model.config().head.n_classes();
    if class >= n {
        return Err(Error::Contract(format!(
            "class {class} out of range for {n} classes"
        )));
    }
    Ok(())
}

/// Gradient node of the class score S_c. For the binary head, S_1 is the
/// logit and S_0 its negation; for the multiclass head, S_c is logit c.
fn class_score(
    tape: &mut Tape,
    logits: crate::autodiff::NodeId,
    head: Head,
    class: usize,
) -> Result<crate::autodiff::NodeId> {
    match head {
        Head::SigmoidBinary => {
            let logit = tape.select(logits, 0, 0)?;
            if class == 1 {
                Ok(logit)
            } else {
                let neg_one = tape.constant(Tensor::scalar(-1.0));
                tape.elementwise_mul(logit, neg_one)
            }
        }
        Head::SoftmaxMulticlass { .. } => tape.select(logits, 0, class),
    }
}

/// One backward pass per sample: absolute gradients of the class score with
/// respect to the input genes, in graph node order.
pub fn input_saliency(
    model: &GnnModel,
    x_batch: &Tensor,
    sample_ids: &[String],
    class: usize,
) -> Result<SaliencyReport> {
    check_class(model, class)?;
    let (batch, n_genes) = match x_batch.shape() {
        [b, n] => (*b, *n),
        s => return Err(Error::Shape(format!("expected B×N inputs, got {s:?}"))),
    };
    if sample_ids.len() != batch {
        return Err(Error::Contract(format!(
            "{} sample ids for {batch} rows",
            sample_ids.len()
        )));
    }
    let head = model.config().head;
    let mut raw = Vec::with_capacity(batch);
    for s in 0..batch {
        let row = &x_batch.values()[s * n_genes..(s + 1) * n_genes];
        let x = Tensor::matrix(1, n_genes, row.to_vec())?;
        let mut tape = Tape::new();
        let handles = model.forward_eval(&mut tape, &x, true)?;
        let score = class_score(&mut tape, handles.logits, head, class)?;
        tape.backward(score)?;
        let grad = tape
            .grad(handles.x)
            .expect("input gradient exists after backward");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                op: "input_saliency".into(),
                message: format!("non-finite gradient for sample {s}"),
            });
        }
        raw.push(grad.iter().map(|g| g.abs()).collect());
    }
    let feature_ids = model
        .hierarchy()
        .original_graph()
        .node_ids()
        .iter()
        .map(|id| FeatureId::Gene(id.clone()))
        .collect();
    Ok(SaliencyReport::from_raw(
        SaliencyLevel::Input,
        class,
        sample_ids.to_vec(),
        feature_ids,
        raw,
    ))
}

/// Gradients of the class score with respect to the pre-flatten supernode
/// embeddings: the raw `B × N_L × F_L` absolute gradients and the per-
/// supernode reduction (mean or max over embedding dimensions).
pub fn supernode_saliency(
    model: &GnnModel,
    x_batch: &Tensor,
    sample_ids: &[String],
    class: usize,
    reduction: Reduction,
) -> Result<(Tensor, SaliencyReport)> {
    check_class(model, class)?;
    let (batch, n_genes) = match x_batch.shape() {
        [b, n] => (*b, *n),
        s => return Err(Error::Shape(format!("expected B×N inputs, got {s:?}"))),
    };
    if sample_ids.len() != batch {
        return Err(Error::Contract(format!(
            "{} sample ids for {batch} rows",
            sample_ids.len()
        )));
    }
    let head = model.config().head;
    let n_l = model.n_supernodes();
    let f_l = model.final_channels();
    let mut raw3 = Vec::with_capacity(batch * n_l * f_l);
    let mut reduced = Vec::with_capacity(batch);
    for s in 0..batch {
        let row = &x_batch.values()[s * n_genes..(s + 1) * n_genes];
        let x = Tensor::matrix(1, n_genes, row.to_vec())?;
        let mut tape = Tape::new();
        let handles = model.forward_eval(&mut tape, &x, false)?;
        let score = class_score(&mut tape, handles.logits, head, class)?;
        tape.backward(score)?;
        let grad = tape
            .grad(handles.embeddings)
            .expect("embedding gradient exists after backward");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                op: "supernode_saliency".into(),
                message: format!("non-finite gradient for sample {s}"),
            });
        }
        let mut row_reduced = Vec::with_capacity(n_l);
        for j in 0..n_l {
            let cell = &grad[j * f_l..(j + 1) * f_l];
            let value = match reduction {
                Reduction::Mean => cell.iter().map(|g| g.abs()).sum::<f64>() / f_l as f64,
                Reduction::Max => cell.iter().map(|g| g.abs()).fold(0.0, f64::max),
            };
            row_reduced.push(value);
        }
        raw3.extend(grad.iter().map(|g| g.abs()));
        reduced.push(row_reduced);
    }
    let raw_tensor = Tensor::new(vec![batch, n_l, f_l], raw3)?;
    let feature_ids = (0..n_l).map(FeatureId::Supernode).collect();
    let report = SaliencyReport::from_raw(
        SaliencyLevel::Supernode,
        class,
        sample_ids.to_vec(),
        feature_ids,
        reduced,
    );
    Ok((raw_tensor, report))
}

/// A feature with its group-mean saliency, in ranking order.
#[derive(Debug, Clone)]
pub struct RankedFeature {
    pub rank: usize,
    pub feature_id: FeatureId,
    pub mean_saliency: f64,
}

/// Sort features by descending mean raw saliency over a sample group
/// (defaults to all samples); ties break by ascending feature id.
pub fn rank_features(
    report: &SaliencyReport,
    group: Option<&[usize]>,
) -> Result<Vec<RankedFeature>> {
    let all: Vec<usize> = (0..report.sample_ids.len()).collect();
    let group = group.unwrap_or(&all);
    if group.is_empty() {
        return Err(Error::Contract("ranking group is empty".into()));
    }
    for &s in group {
        if s >= report.raw.len() {
            return Err(Error::Contract(format!(
                "group sample {s} out of range 0..{}",
                report.raw.len()
            )));
        }
    }
    let n_features = report.feature_ids.len();
    let mut means = vec![0.0; n_features];
    for &s in group {
        for (j, v) in report.raw[s].iter().enumerate() {
            means[j] += v;
        }
    }
    for m in means.iter_mut() {
        *m /= group.len() as f64;
    }
    let mut order: Vec<usize> = (0..n_features).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .partial_cmp(&means[a])
            .unwrap()
            .then_with(|| report.feature_ids[a].cmp(&report.feature_ids[b]))
    });
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(rank, j)| RankedFeature {
            rank: rank + 1,
            feature_id: report.feature_ids[j].clone(),
            mean_saliency: means[j],
        })
        .collect())
}

/// One curated gene set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSet {
    pub id: String,
    pub description: String,
    pub genes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneSetCollection {
    pub sets: Vec<GeneSet>,
}

/// Enrichment of one gene set against a cluster.
#[derive(Debug, Clone, Serialize)]
pub struct OraResult {
    pub set_id: String,
    pub description: String,
    /// Overlap between cluster and set (k).
    pub overlap: usize,
    /// Cluster size (n).
    pub cluster_size: usize,
    /// Set size after intersecting with the universe (K).
    pub set_size: usize,
    /// Universe size (N).
    pub universe_size: usize,
    /// (k/n) / (K/N); 0 when the overlap is empty.
    pub enrichment_ratio: f64,
    /// Exact hypergeometric upper tail P(X ≥ k).
    pub p_value: f64,
    /// Benjamini-Hochberg adjusted p-value across all tested sets.
    pub fdr: f64,
}

/// Exact upper tail P(X ≥ k) for X ~ Hypergeometric(N, K, n) via
/// log-factorial accumulation.
pub fn hypergeometric_upper_tail(n_total: usize, k_set: usize, n_draw: usize, k: usize) -> f64 {
    let lo = n_draw.saturating_sub(n_total - k_set);
    if k <= lo {
        return 1.0;
    }
    let hi = n_draw.min(k_set);
    if k > hi {
        return 0.0;
    }
    let ln_fact: Vec<f64> = {
        let mut table = vec![0.0f64; n_total + 1];
        for i in 1..=n_total {
            table[i] = table[i - 1] + (i as f64).ln();
        }
        table
    };
    let ln_choose = |n: usize, r: usize| -> f64 { ln_fact[n] - ln_fact[r] - ln_fact[n - r] };
    let denom = ln_choose(n_total, n_draw);
    let mut p = 0.0;
    for i in k..=hi {
        p += (ln_choose(k_set, i) + ln_choose(n_total - k_set, n_draw - i) - denom).exp();
    }
    p.min(1.0)
}

/// Benjamini-Hochberg step-up adjustment, returned in the original order.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    for &p in p_values {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Contract(format!("p-value {p} outside (0, 1]")));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        let candidate = p_values[idx] * m as f64 / (pos + 1) as f64;
        running = running.min(candidate).min(1.0);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// Over-representation of each gene set in a cluster against a universe.
///
/// Sets are intersected with the universe before testing. Results carry
/// BH-adjusted FDRs and come back sorted by (FDR, p, set id).
pub fn ora(
    cluster: &[String],
    sets: &GeneSetCollection,
    universe: &[String],
) -> Result<Vec<OraResult>> {
    if universe.is_empty() {
        return Err(Error::Contract("ORA universe is empty".into()));
    }
    let universe_set: HashSet<&str> = universe.iter().map(|s| s.as_str()).collect();
    let offenders: Vec<&String> = cluster
        .iter()
        .filter(|g| !universe_set.contains(g.as_str()))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Contract(format!(
            "cluster genes outside the universe: {}",
            offenders
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let cluster_set: HashSet<&str> = cluster.iter().map(|s| s.as_str()).collect();
    let n_total = universe_set.len();
    let n_draw = cluster_set.len();

    let mut results = Vec::with_capacity(sets.sets.len());
    let mut p_values = Vec::with_capacity(sets.sets.len());
    for set in &sets.sets {
        let members: HashSet<&str> = set
            .genes
            .iter()
            .map(|s| s.as_str())
            .filter(|g| universe_set.contains(g))
            .collect();
        let k_set = members.len();
        let k = members.iter().filter(|g| cluster_set.contains(*g)).count();
        let enrichment_ratio = if k == 0 || n_draw == 0 || k_set == 0 {
            0.0
        } else {
            (k as f64 / n_draw as f64) / (k_set as f64 / n_total as f64)
        };
        let p = hypergeometric_upper_tail(n_total, k_set, n_draw, k);
        p_values.push(p);
        results.push(OraResult {
            set_id: set.id.clone(),
            description: set.description.clone(),
            overlap: k,
            cluster_size: n_draw,
            set_size: k_set,
            universe_size: n_total,
            enrichment_ratio,
            p_value: p,
            fdr: 1.0,
        });
    }
    let fdrs = bh_fdr(&p_values)?;
    for (r, fdr) in results.iter_mut().zip(fdrs) {
        r.fdr = fdr;
    }
    results.sort_by(|a, b| {
        a.fdr
            .partial_cmp(&b.fdr)
            .unwrap()
            .then(a.p_value.partial_cmp(&b.p_value).unwrap())
            .then_with(|| a.set_id.cmp(&b.set_id))
    });
    Ok(results)
}

/// Run ORA on the gene cluster of one supernode. The cluster is exactly
/// [`CoarseningHierarchy::expand_cluster`] at the given level; the universe
/// defaults to all original graph nodes.
pub fn ora_for_supernode(
    hierarchy: &CoarseningHierarchy,
    level: usize,
    supernode: usize,
    sets: &GeneSetCollection,
    universe: Option<&[String]>,
) -> Result<(Vec<String>, Vec<OraResult>)> {
    let cluster = hierarchy.expand_cluster(level, supernode)?;
    let default_universe;
    let universe = match universe {
        Some(u) => u,
        None => {
            default_universe = hierarchy.original_graph().node_ids().to_vec();
            &default_universe
        }
    };
    let results = ora(&cluster, sets, universe)?;
    Ok((cluster, results))
}

/// Write `sample_id,feature_id,raw,normalized` rows. Flagged zero-variance
/// samples leave the normalized column empty.
pub fn write_saliency_csv<P: AsRef<Path>>(report: &SaliencyReport, path: P) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "sample_id,feature_id,raw,normalized")?;
    for (s, sid) in report.sample_ids.iter().enumerate() {
        for (j, fid) in report.feature_ids.iter().enumerate() {
            let normalized = match &report.normalized[s] {
                Some(row) => row[j].to_string(),
                None => String::new(),
            };
            writeln!(out, "{sid},{fid},{},{normalized}", report.raw[s][j])?;
        }
    }
    Ok(())
}

/// Write `rank<TAB>feature_id<TAB>mean_saliency` rows, optionally truncated
/// to the top k.
pub fn write_ranking_tsv<P: AsRef<Path>>(
    ranked: &[RankedFeature],
    top_k: Option<usize>,
    path: P,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "rank\tfeature_id\tmean_saliency")?;
    let limit = top_k.unwrap_or(ranked.len());
    for r in ranked.iter().take(limit) {
        writeln!(out, "{}\t{}\t{}", r.rank, r.feature_id, r.mean_saliency)?;
    }
    Ok(())
}

/// Write `set_id<TAB>description<TAB>enrichment_ratio<TAB>p_value<TAB>fdr`.
pub fn write_ora_tsv<P: AsRef<Path>>(results: &[OraResult], path: P) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "set_id\tdescription\tenrichment_ratio\tp_value\tfdr")?;
    for r in results {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.set_id, r.description, r.enrichment_ratio, r.p_value, r.fdr
        )?;
    }
    Ok(())
}
