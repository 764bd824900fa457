//! Turns neighborhood structure into dataset edits: relabel unanimous-
//! neighbor mislabels, drop isolated or foreign-cluster points, and flag
//! in-cluster stragglers as edge cases for targeted augmentation.
//!
//! All rules are rank/label tests over the k-NN graph, so they are
//! invariant to uniform scaling of the embedding coordinates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::dataset::{Dataset, LabeledSample, Provenance};
use crate::math;
use crate::projection::NeighborGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CleanseConfig {
    pub k: usize,
    /// Isolation multiplier: drop when d1 > mean + drop_alpha * std.
    pub drop_alpha: f64,
    /// Fraction of neighbors that must be foreign before the cluster clause
    /// fires (strictly more than `foreign_majority * k`).
    pub foreign_majority: f64,
    /// Kept points whose nearest same-class distance ranks above this
    /// quantile become edge cases.
    pub edge_quantile: f64,
}

impl Default for CleanseConfig {
    fn default() -> Self {
        CleanseConfig {
            k: 5,
            drop_alpha: 2.0,
            foreign_majority: 0.5,
            edge_quantile: 0.90,
        }
    }
}

impl CleanseConfig {
    fn validate(&self, graph: &NeighborGraph, labels: &[usize]) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if graph.k() != self.k {
            return Err(Error::InvalidParam(format!(
                "graph was built with k = {}, config says {}",
                graph.k(),
                self.k
            )));
        }
        if !(self.drop_alpha > 0.0) {
            return Err(Error::invalid("drop_alpha must be positive"));
        }
        if !(self.edge_quantile > 0.0 && self.edge_quantile < 1.0) {
            return Err(Error::invalid("edge_quantile must lie in (0, 1)"));
        }
        if labels.len() != graph.len() {
            return Err(Error::invalid("labels must align with graph nodes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Relabel {
    pub id: u64,
    pub old_label: usize,
    pub new_label: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CleanseStats {
    pub relabels: usize,
    pub drops_isolated: usize,
    pub drops_foreign: usize,
    pub edge_cases: usize,
}

/// The three pairwise-disjoint edit sets plus per-rule counts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CleansePlan {
    pub relabels: Vec<Relabel>,
    pub drops: BTreeSet<u64>,
    pub edge_cases: BTreeSet<u64>,
    pub stats: CleanseStats,
}

fn label_of(graph: &NeighborGraph, labels: &[usize]) -> BTreeMap<u64, usize> {
    graph
        .ids()
        .iter()
        .zip(labels)
        .map(|(&id, &l)| (id, l))
        .collect()
}

/// Sample i is proposed for relabel to L' iff all k neighbors carry the
/// identical label L' and L' differs from label(i).
pub fn relabel_rule(
    graph: &NeighborGraph,
    labels: &[usize],
    cfg: &CleanseConfig,
) -> Result<Vec<Relabel>> {
    cfg.validate(graph, labels)?;
    let by_id = label_of(graph, labels);
    let mut out = Vec::new();
    for (i, &id) in graph.ids().iter().enumerate() {
        let mut nbr_labels = graph.neighbors(i).iter().map(|n| by_id[&n.id]);
        let first = nbr_labels.next().expect("k >= 2");
        if nbr_labels.all(|l| l == first) && first != labels[i] {
            out.push(Relabel {
                id,
                old_label: labels[i],
                new_label: first,
            });
        }
    }
    Ok(out)
}

/// Isolation and foreign-cluster drop sets (relabel takes precedence and is
/// computed internally).
fn drop_sets(
    graph: &NeighborGraph,
    labels: &[usize],
    cfg: &CleanseConfig,
) -> Result<(BTreeSet<u64>, usize, usize)> {
    let relabeled: BTreeSet<u64> = relabel_rule(graph, labels, cfg)?
        .into_iter()
        .map(|r| r.id)
        .collect();
    let by_id = label_of(graph, labels);
    let d1: Vec<f64> = (0..graph.len()).map(|i| graph.neighbors(i)[0].dist).collect();
    let (mu, sigma) = math::mean_pop_std(&d1);
    let isolation_cut = mu + cfg.drop_alpha * sigma;
    let mut drops = BTreeSet::new();
    let mut isolated = 0;
    let mut foreign = 0;
    for (i, &id) in graph.ids().iter().enumerate() {
        if relabeled.contains(&id) {
            continue;
        }
        if d1[i] > isolation_cut {
            drops.insert(id);
            isolated += 1;
            continue;
        }
        let foreign_count = graph
            .neighbors(i)
            .iter()
            .filter(|n| by_id[&n.id] != labels[i])
            .count();
        if foreign_count as f64 > cfg.foreign_majority * cfg.k as f64 {
            drops.insert(id);
            foreign += 1;
        }
    }
    Ok((drops, isolated, foreign))
}

/// Drop i iff (a) its nearest-neighbor distance exceeds mean + alpha * std
/// over all points, or (b) more than `foreign_majority` of its k neighbors
/// carry a different label — unless the relabel rule already fired for i.
pub fn drop_rule(
    graph: &NeighborGraph,
    labels: &[usize],
    cfg: &CleanseConfig,
) -> Result<BTreeSet<u64>> {
    let (drops, _, _) = drop_sets(graph, labels, cfg)?;
    Ok(drops)
}

/// Kept points (neither dropped nor relabeled) that sit inside their own
/// class neighborhood (at least half the neighbors share the label) but
/// whose nearest same-class distance ranks in the top ceil((1 - q) * n) of
/// all kept points, ties broken by id.
pub fn edge_case_rule(
    graph: &NeighborGraph,
    labels: &[usize],
    cfg: &CleanseConfig,
) -> Result<BTreeSet<u64>> {
    let relabeled: BTreeSet<u64> = relabel_rule(graph, labels, cfg)?
        .into_iter()
        .map(|r| r.id)
        .collect();
    let dropped = drop_rule(graph, labels, cfg)?;
    let by_id = label_of(graph, labels);
    // Pool: kept points with a same-class neighbor among their k.
    let mut pool: Vec<(f64, u64, usize)> = Vec::new();
    for (i, &id) in graph.ids().iter().enumerate() {
        if relabeled.contains(&id) || dropped.contains(&id) {
            continue;
        }
        let d_same = graph
            .neighbors(i)
            .iter()
            .find(|n| by_id[&n.id] == labels[i])
            .map(|n| n.dist);
        if let Some(d) = d_same {
            pool.push((d, id, i));
        }
    }
    if pool.is_empty() {
        return Ok(BTreeSet::new());
    }
    pool.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
    // ceil((1 - q) * n) flagged, computed as n - floor(q * n) with a nudge
    // so exact multiples are not lost to floating-point noise.
    let n = pool.len();
    let flag_count = n - math::floor(cfg.edge_quantile * n as f64 + 1e-9) as usize;
    let mut edges = BTreeSet::new();
    for &(_, id, i) in pool.iter().skip(n - flag_count) {
        let same_count = graph
            .neighbors(i)
            .iter()
            .filter(|nb| by_id[&nb.id] == labels[i])
            .count();
        if 2 * same_count >= cfg.k {
            edges.insert(id);
        }
    }
    Ok(edges)
}

/// All three rules evaluated together; the sets are pairwise disjoint by
/// construction.
pub fn build_plan(
    graph: &NeighborGraph,
    labels: &[usize],
    cfg: &CleanseConfig,
) -> Result<CleansePlan> {
    let relabels = relabel_rule(graph, labels, cfg)?;
    let (drops, isolated, foreign) = drop_sets(graph, labels, cfg)?;
    let edge_cases = edge_case_rule(graph, labels, cfg)?;
    let stats = CleanseStats {
        relabels: relabels.len(),
        drops_isolated: isolated,
        drops_foreign: foreign,
        edge_cases: edge_cases.len(),
    };
    Ok(CleansePlan {
        relabels,
        drops,
        edge_cases,
        stats,
    })
}

/// Applies a plan: relabeled samples get the new label and
/// provenance = relabeled, dropped ids are removed, edge ids pass through
/// untouched (they are consumed by the augmentation stage). Image bytes are
/// never modified.
pub fn apply_plan(ds: &Dataset, plan: &CleansePlan) -> Result<Dataset> {
    let known: BTreeSet<u64> = ds.samples().iter().map(|s| s.id).collect();
    let mut relabel_of: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &plan.relabels {
        if r.new_label == r.old_label {
            return Err(Error::invalid("relabel must change the label"));
        }
        relabel_of.insert(r.id, r.new_label);
    }
    for id in relabel_of
        .keys()
        .chain(plan.drops.iter())
        .chain(plan.edge_cases.iter())
    {
        if !known.contains(id) {
            return Err(Error::InvalidParam(format!("plan id {id} is not in the dataset")));
        }
    }
    if plan.drops.iter().any(|id| relabel_of.contains_key(id))
        || plan.edge_cases.iter().any(|id| relabel_of.contains_key(id))
        || plan.drops.intersection(&plan.edge_cases).next().is_some()
    {
        return Err(Error::invalid("plan sets must be pairwise disjoint"));
    }
    let samples: Vec<LabeledSample> = ds
        .samples()
        .iter()
        .filter(|s| !plan.drops.contains(&s.id))
        .map(|s| match relabel_of.get(&s.id) {
            Some(&new_label) => LabeledSample {
                label: new_label,
                provenance: Provenance::Relabeled,
                ..s.clone()
            },
            None => s.clone(),
        })
        .collect();
    Dataset::new(ds.classes().to_vec(), samples, ds.role())
}
