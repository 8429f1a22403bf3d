//! Edge-set comparison between graphs over the same variables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub intersection: usize,
    pub edges_first: usize,
    pub edges_second: usize,
    /// |E1 ∩ E2| / |E1 ∪ E2|; 1.0 when both edge sets are empty.
    pub jaccard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphAccuracy {
    /// Learned edges absent (in that direction) from the truth, over learned edges.
    pub false_edge_rate: f64,
    /// True edges absent (in that direction) from the learned graph, over true edges.
    pub missing_edge_rate: f64,
    /// Structural Hamming distance.
    pub shd: usize,
}

/// Adjacency-level precision/recall, ignoring orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

type EdgeSet = BTreeSet<(String, String)>;

fn edge_sets(g1: &CausalGraph, g2: &CausalGraph) -> Result<(EdgeSet, EdgeSet)> {
    if !g1.same_nodes(g2) || g1.len() != g2.len() {
        return Err(Error::NodeSetMismatch);
    }
    Ok((g1.edge_name_set(), g2.edge_name_set()))
}

pub fn compare_graphs(g1: &CausalGraph, g2: &CausalGraph) -> Result<OverlapReport> {
    let (e1, e2) = edge_sets(g1, g2)?;
    let inter = e1.intersection(&e2).count();
    let union = e1.union(&e2).count();
    Ok(OverlapReport {
        intersection: inter,
        edges_first: e1.len(),
        edges_second: e2.len(),
        jaccard: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn skeleton(e: &EdgeSet) -> BTreeSet<(String, String)> {
    e.iter()
        .map(|(a, b)| {
            if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            }
        })
        .collect()
}

pub fn eval_against_truth(learned: &CausalGraph, truth: &CausalGraph) -> Result<GraphAccuracy> {
    let (el, et) = edge_sets(learned, truth)?;
    let (sl, st) = (skeleton(&el), skeleton(&et));
    // One unit per unordered pair whose adjacency or orientation differs.
    let mut shd = sl.symmetric_difference(&st).count();
    shd += sl
        .intersection(&st)
        .filter(|(a, b)| {
            let pair = (a.clone(), b.clone());
            el.contains(&pair) != et.contains(&pair)
        })
        .count();
    Ok(GraphAccuracy {
        false_edge_rate: ratio(el.difference(&et).count(), el.len()),
        missing_edge_rate: ratio(et.difference(&el).count(), et.len()),
        shd,
    })
}

pub fn skeleton_scores(learned: &CausalGraph, truth: &CausalGraph) -> Result<SkeletonScores> {
    let (el, et) = edge_sets(learned, truth)?;
    let (sl, st) = (skeleton(&el), skeleton(&et));
    let tp = sl.intersection(&st).count();
    let precision = if sl.is_empty() {
        1.0
    } else {
        tp as f64 / sl.len() as f64
    };
    let recall = if st.is_empty() {
        1.0
    } else {
        tp as f64 / st.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SkeletonScores { precision, recall, f1 })
}
