//! Score-based causal graph learning and graph comparison.

pub mod bge;
pub mod compare;
pub mod search;

pub use bge::{bge_local_score, bge_score, BgeHyper, BgeScorer};
pub use compare::{compare_graphs, eval_against_truth, skeleton_scores, GraphAccuracy, OverlapReport, SkeletonScores};
pub use search::{learn_graph, search, SearchConfig, SearchResult};
