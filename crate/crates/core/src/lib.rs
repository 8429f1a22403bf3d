//! Causal trade-off analysis for ML pipelines.
//!
//! Pipeline runs are recorded as rows of a run table whose columns are either
//! interventional ratios (how strongly a method was applied, in `[0, 1]`) or
//! observed metrics. From such a table this crate learns a causal DAG with a
//! BGe-scored greedy search, estimates average treatment effects by
//! cross-fitted double machine learning, and explains which nodes cause a
//! trade-off between two metrics. A linear/tanh structural causal model
//! simulator supplies ground truth for all of it.

// `!(x > 0.0)` style checks are used on purpose: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod discovery;
pub mod error;
pub mod fairmetrics;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod scm;
pub mod select;
pub mod study;
pub mod tradeoff;

pub use data::{load_run_table, load_run_table_with, ObservationMatrix};
pub use error::{Error, Result};
pub use graph::{CausalGraph, GraphDoc};
pub use study::{Objective, SignSpec, Study, Tier, VariableKind, VariableSpec};

/// Treatment/outcome pair with the two arms of a two-point effect.
#[derive(Debug, Clone, PartialEq)]
pub struct AteQuery {
    pub treatment: String,
    pub outcome: String,
    pub x1: f64,
    pub x2: f64,
}

impl AteQuery {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>, x1: f64, x2: f64) -> Result<Self> {
        let q = Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            x1,
            x2,
        };
        if q.treatment == q.outcome {
            return Err(Error::Config(format!(
                "treatment and outcome are both `{}`",
                q.treatment
            )));
        }
        if !x1.is_finite() || !x2.is_finite() {
            return Err(Error::Config("ATE arms must be finite".into()));
        }
        Ok(q)
    }

    pub fn swapped(&self) -> Self {
        Self {
            x1: self.x2,
            x2: self.x1,
            ..self.clone()
        }
    }
}
