//! Multilevel graph coarsening by heavy-edge matching.
//!
//! Each level visits nodes in a seeded pseudo-random order and pairs every
//! unmatched node with its heaviest unmatched neighbor; pairs and leftover
//! singletons become the next level's nodes. Edge weights crossing two
//! clusters are summed; intra-cluster weight is discarded along with the
//! resulting self-loops.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GeneGraph;
use crate::seeds::hash64;

/// Total assignment of one level's nodes to the next level's clusters.
///
/// Equivalent to a binary matrix with exactly one 1 per row; cluster sizes
/// are 1 or 2 (pairwise matching) and cluster indices are contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMap {
    pub level: usize,
    pub cluster_of: Vec<usize>,
    pub n_fine: usize,
    pub n_coarse: usize,
}

impl AssignmentMap {
    /// Members of cluster `j`, in ascending fine index order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.cluster_of
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == j)
            .map(|(i, _)| i)
            .collect()
    }

    /// Check the structural invariants: totality, contiguous cluster ids,
    /// and cluster sizes in {1, 2}.
    pub fn validate(&self) -> Result<()> {
        if self.cluster_of.len() != self.n_fine {
            return Err(Error::Contract(format!(
                "assignment has {} entries for {} fine nodes",
                self.cluster_of.len(),
                self.n_fine
            )));
        }
        let mut sizes = vec![0usize; self.n_coarse];
        for &c in &self.cluster_of {
            if c >= self.n_coarse {
                return Err(Error::Contract(format!(
                    "cluster id {c} out of range 0..{}",
                    self.n_coarse
                )));
            }
            sizes[c] += 1;
        }
        for (j, &s) in sizes.iter().enumerate() {
            if s == 0 {
                return Err(Error::Contract(format!("cluster {j} is empty")));
            }
            if s > 2 {
                return Err(Error::Contract(format!("cluster {j} has size {s} > 2")));
            }
        }
        Ok(())
    }
}

/// One coarsening step: the assignment produced at this level and the coarse
/// graph it induced.
#[derive(Debug, Clone)]
pub struct Level {
    pub assignment: Arc<AssignmentMap>,
    pub coarse: Arc<GeneGraph>,
}

/// A stack of coarsening levels over an original graph.
#[derive(Debug, Clone)]
pub struct CoarseningHierarchy {
    original: Arc<GeneGraph>,
    levels: Vec<Level>,
    seed: u64,
}

/// Match nodes following an explicit visit order. Exposed at crate level so
/// tests can pin the order; public callers go through [`hem_level`].
pub(crate) fn hem_with_order(g: &GeneGraph, order: &[usize], level: usize) -> AssignmentMap {
    let n = g.n_nodes();
    debug_assert_eq!(order.len(), n);
    let mut cluster_of = vec![usize::MAX; n];
    let mut n_coarse = 0usize;
    for &u in order {
        if cluster_of[u] != usize::MAX {
            continue;
        }
        // Heaviest unmatched neighbor; ties break to the lowest index.
        // Neighbors iterate in ascending index order, so strict `>` keeps
        // the first (lowest) index among equal weights.
        let mut best: Option<(usize, f64)> = None;
        for (v, w) in g.neighbors(u) {
            if cluster_of[v] != usize::MAX {
                continue;
            }
            match best {
                Some((_, bw)) if w <= bw => {}
                _ => best = Some((v, w)),
            }
        }
        cluster_of[u] = n_coarse;
        if let Some((v, _)) = best {
            cluster_of[v] = n_coarse;
        }
        n_coarse += 1;
    }
    AssignmentMap {
        level,
        cluster_of,
        n_fine: n,
        n_coarse,
    }
}

/// Build the coarse graph induced by an assignment: crossing weights are
/// summed in ascending fine edge order, self-loops are dropped, and node ids
/// are synthesized as `L{level+1}S{cluster}`.
fn coarse_graph(g: &GeneGraph, map: &AssignmentMap) -> Result<GeneGraph> {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, j, w) in g.edges() {
        let (ci, cj) = (map.cluster_of[i], map.cluster_of[j]);
        if ci != cj {
            let key = (ci.min(cj), ci.max(cj));
            *acc.entry(key).or_insert(0.0) += w;
        }
    }
    let ids: Vec<String> = (0..map.n_coarse)
        .map(|j| format!("L{}S{}", map.level + 1, j))
        .collect();
    let edges: Vec<(usize, usize, f64)> = acc.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    GeneGraph::from_edges(ids, &edges)
}

/// One heavy-edge-matching level with a seeded random visit order.
pub fn hem_level(g: &GeneGraph, seed: u64, level: usize) -> Result<(AssignmentMap, GeneGraph)> {
    if g.n_nodes() == 0 {
        return Err(Error::EmptyGraph("cannot coarsen an empty graph".into()));
    }
    let mut order: Vec<usize> = (0..g.n_nodes()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let map = hem_with_order(g, &order, level);
    let coarse = coarse_graph(g, &map)?;
    Ok((map, coarse))
}

/// Apply [`hem_level`] `n_levels` times. Level `l` uses the derived seed
/// `hash64(seed, l)`, so one user seed yields independent visit orders.
///
/// Fails with [`Error::LevelExhaustion`] if the graph collapses to a single
/// node while levels remain.
pub fn build_hierarchy(
    g: Arc<GeneGraph>,
    n_levels: usize,
    seed: u64,
) -> Result<CoarseningHierarchy> {
    if n_levels == 0 {
        return Err(Error::Contract("n_levels must be at least 1".into()));
    }
    let mut levels = Vec::with_capacity(n_levels);
    let mut current: Arc<GeneGraph> = g.clone();
    for level in 0..n_levels {
        if current.n_nodes() == 1 {
            return Err(Error::LevelExhaustion {
                reached: level,
                requested: n_levels,
            });
        }
        let (map, coarse) = hem_level(&current, hash64(seed, level as u64), level)?;
        let coarse = Arc::new(coarse);
        current = coarse.clone();
        levels.push(Level {
            assignment: Arc::new(map),
            coarse,
        });
    }
    Ok(CoarseningHierarchy {
        original: g,
        levels,
        seed,
    })
}

impl CoarseningHierarchy {
    pub fn original_graph(&self) -> &Arc<GeneGraph> {
        &self.original
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Graph the level-`l` matching ran on: the original for `l = 0`,
    /// otherwise the previous level's coarse graph.
    pub fn fine_graph(&self, l: usize) -> &Arc<GeneGraph> {
        if l == 0 {
            &self.original
        } else {
            &self.levels[l - 1].coarse
        }
    }

    /// Node count entering level `l` (`l = n_levels` gives the final count).
    pub fn n_nodes_at(&self, l: usize) -> usize {
        if l == 0 {
            self.original.n_nodes()
        } else {
            self.levels[l - 1].assignment.n_coarse
        }
    }

    /// Compose assignments through `level`, mapping each original node to its
    /// cluster at level `level + 1`.
    pub fn composed_assignment(&self, level: usize) -> Result<Vec<usize>> {
        if level >= self.levels.len() {
            return Err(Error::IndexOutOfRange(format!(
                "level {level} out of range 0..{}",
                self.levels.len()
            )));
        }
        let mut composed: Vec<usize> = self.levels[0].assignment.cluster_of.clone();
        for l in 1..=level {
            let next = &self.levels[l].assignment.cluster_of;
            for c in composed.iter_mut() {
                *c = next[*c];
            }
        }
        Ok(composed)
    }

    /// Original node identifiers whose composed assignment reaches
    /// `supernode` at the given level.
    pub fn expand_cluster(&self, level: usize, supernode: usize) -> Result<Vec<String>> {
        let composed = self.composed_assignment(level)?;
        let n_coarse = self.levels[level].assignment.n_coarse;
        if supernode >= n_coarse {
            return Err(Error::IndexOutOfRange(format!(
                "supernode {supernode} out of range 0..{n_coarse} at level {level}"
            )));
        }
        Ok(composed
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == supernode)
            .map(|(i, _)| self.original.node_id(i).to_string())
            .collect())
    }

    /// Serializable document (graphs reduced to shape + edge lists).
    pub fn to_document(&self) -> HierarchyDocument {
        HierarchyDocument {
            format_version: HIERARCHY_FORMAT_VERSION,
            seed: self.seed,
            levels: self
                .levels
                .iter()
                .map(|lvl| LevelDocument {
                    n_fine: lvl.assignment.n_fine,
                    n_coarse: lvl.assignment.n_coarse,
                    cluster_of: lvl.assignment.cluster_of.clone(),
                    coarse_edges: lvl.coarse.edges(),
                })
                .collect(),
        }
    }

    /// Canonical JSON serialization.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    /// Rebuild a hierarchy from its document and the original graph it was
    /// computed on. Validates the level chain against the graph.
    pub fn from_document(doc: HierarchyDocument, original: Arc<GeneGraph>) -> Result<Self> {
        if doc.format_version != HIERARCHY_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "hierarchy format_version {} unsupported (expected {})",
                doc.format_version, HIERARCHY_FORMAT_VERSION
            )));
        }
        let mut levels = Vec::with_capacity(doc.levels.len());
        let mut expected_fine = original.n_nodes();
        for (l, lvl) in doc.levels.into_iter().enumerate() {
            if lvl.n_fine != expected_fine {
                return Err(Error::Schema(format!(
                    "level {l} expects {} fine nodes, hierarchy chain has {}",
                    lvl.n_fine, expected_fine
                )));
            }
            let map = AssignmentMap {
                level: l,
                cluster_of: lvl.cluster_of,
                n_fine: lvl.n_fine,
                n_coarse: lvl.n_coarse,
            };
            map.validate()?;
            let ids: Vec<String> = (0..map.n_coarse).map(|j| format!("L{}S{}", l + 1, j)).collect();
            let coarse = GeneGraph::from_edges(ids, &lvl.coarse_edges)?;
            expected_fine = map.n_coarse;
            levels.push(Level {
                assignment: Arc::new(map),
                coarse: Arc::new(coarse),
            });
        }
        Ok(CoarseningHierarchy {
            original,
            levels,
            seed: doc.seed,
        })
    }

    pub fn from_json(json: &str, original: Arc<GeneGraph>) -> Result<Self> {
        let doc: HierarchyDocument = serde_json::from_str(json)?;
        Self::from_document(doc, original)
    }

    /// 64-bit content digest of the canonical serialization (FNV-1a).
    pub fn digest(&self) -> u64 {
        let json = self.to_json().expect("hierarchy serialization is total");
        fnv1a64(json.as_bytes())
    }

    /// Cluster membership rows `(level, supernode, gene_id)` for TSV export.
    pub fn membership_rows(&self) -> Result<Vec<(usize, usize, String)>> {
        let mut rows = Vec::new();
        for level in 0..self.levels.len() {
            let composed = self.composed_assignment(level)?;
            let mut by_cluster: Vec<Vec<usize>> =
                vec![Vec::new(); self.levels[level].assignment.n_coarse];
            for (i, &c) in composed.iter().enumerate() {
                by_cluster[c].push(i);
            }
            for (j, members) in by_cluster.iter().enumerate() {
                for &i in members {
                    rows.push((level, j, self.original.node_id(i).to_string()));
                }
            }
        }
        Ok(rows)
    }
}

pub const HIERARCHY_FORMAT_VERSION: u32 = 1;

/// On-disk form of a hierarchy.
#[derive(Debug, Serialize, Deserialize)]
pub struct HierarchyDocument {
    pub format_version: u32,
    pub seed: u64,
    pub levels: Vec<LevelDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelDocument {
    pub n_fine: usize,
    pub n_coarse: usize,
    pub cluster_of: Vec<usize>,
    pub coarse_edges: Vec<(usize, usize, f64)>,
}

/// FNV-1a over bytes; used for artifact content digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
