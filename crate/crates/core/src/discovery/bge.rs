//! Bayesian Gaussian equivalent (BGe) score under a normal-Wishart prior.
//!
//! Data are standardized per column before scoring and the prior mean is
//! zero. For a column subset S of size s, with N rows and M variables,
//!
//! ```text
//! log ml(S) = −(N·s/2)·log π + (s/2)·log(α_μ/(N+α_μ))
//!           + log Γ_s((N+α_w−M+s)/2) − log Γ_s((α_w−M+s)/2)
//!           + ((α_w−M+s)/2)·log det T_S − ((N+α_w−M+s)/2)·log det R_S
//! ```
//!
//! with `T = t·I` and `R = T + scatter + N·α_μ/(N+α_μ)·(ν−x̄)(ν−x̄)ᵀ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::data::{standardize, ObservationMatrix};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;

/// Prior hyperparameters. Unset fields take their defaults for the data
/// dimension M: `alpha_w = M + 2`, `t = α_μ(α_w − M − 1)/(α_μ + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgeHyper {
    pub alpha_mu: f64,
    pub alpha_w: Option<f64>,
    pub prior_scale_t: Option<f64>,
}

impl Default for BgeHyper {
    fn default() -> Self {
        Self {
            alpha_mu: 1.0,
            alpha_w: None,
            prior_scale_t: None,
        }
    }
}

impl BgeHyper {
    /// `(alpha_mu, alpha_w, t)` resolved for `m` variables.
    pub fn resolve(&self, m: usize) -> Result<(f64, f64, f64)> {
        let mf = m as f64;
        let alpha_mu = self.alpha_mu;
        if !(alpha_mu > 0.0) {
            return Err(Error::Config(format!("alpha_mu must be positive, got {alpha_mu}")));
        }
        let alpha_w = self.alpha_w.unwrap_or(mf + 2.0);
        if !(alpha_w > mf - 1.0) {
            return Err(Error::Config(format!(
                "alpha_w must exceed M − 1 = {}, got {alpha_w}",
                mf - 1.0
            )));
        }
        let t = self
            .prior_scale_t
            .unwrap_or(alpha_mu * (alpha_w - mf - 1.0) / (alpha_mu + 1.0));
        if !(t > 0.0) {
            return Err(Error::Config(format!("prior scale t must be positive, got {t}")));
        }
        Ok((alpha_mu, alpha_w, t))
    }
}

fn ln_multi_gamma(s: usize, a: f64) -> f64 {
    let sf = s as f64;
    sf * (sf - 1.0) / 4.0 * PI.ln() + (1..=s).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Precomputed posterior scale matrix for one data set.
#[derive(Debug, Clone)]
pub struct BgeScorer {
    n: usize,
    m: usize,
    alpha_mu: f64,
    alpha_w: f64,
    log_t: f64,
    r: DMatrix<f64>,
}

impl BgeScorer {
    pub fn new(data: &ObservationMatrix, hyper: &BgeHyper) -> Result<Self> {
        Self::from_matrix(data.data(), hyper)
    }

    /// Scores columns of a raw N × M matrix (standardized internally).
    pub fn from_matrix(raw: &DMatrix<f64>, hyper: &BgeHyper) -> Result<Self> {
        let (n, m) = raw.shape();
        if n <= m {
            return Err(Error::Config(format!("BGe scoring needs N > M, got N={n}, M={m}")));
        }
        let (alpha_mu, alpha_w, t) = hyper.resolve(m)?;
        let x = standardize(raw);
        let nf = n as f64;
        let xbar = DVector::from_iterator(m, x.column_iter().map(|c| c.sum() / nf));
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-xbar[j]);
        }
        let scatter = centered.transpose() * &centered;
        let nu_minus = -&xbar;
        let mut r = scatter + (&nu_minus * nu_minus.transpose()) * (nf * alpha_mu / (nf + alpha_mu));
        for j in 0..m {
            r[(j, j)] += t;
        }
        Ok(Self {
            n,
            m,
            alpha_mu,
            alpha_w,
            log_t: t.ln(),
            r,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.m
    }

    /// Log marginal likelihood of the columns in `subset`; zero for ∅.
    pub fn log_ml(&self, subset: &[usize]) -> Result<f64> {
        let s = subset.len();
        if s == 0 {
            return Ok(0.0);
        }
        let (nf, mf, sf) = (self.n as f64, self.m as f64, s as f64);
        let a_prior = (self.alpha_w - mf + sf) / 2.0;
        let a_post = (nf + self.alpha_w - mf + sf) / 2.0;
        let r_s = DMatrix::from_fn(s, s, |a, b| self.r[(subset[a], subset[b])]);
        let chol = r_s
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("posterior scale over {subset:?} is not positive definite")))?;
        let log_det_r = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det_r.is_finite() {
            return Err(Error::Numerical("non-finite log determinant".into()));
        }
        let log_det_t = sf * self.log_t;
        Ok(-(nf * sf / 2.0) * PI.ln()
            + (sf / 2.0) * (self.alpha_mu / (nf + self.alpha_mu)).ln()
            + ln_multi_gamma(s, a_post)
            - ln_multi_gamma(s, a_prior)
            + a_prior * log_det_t
            - a_post * log_det_r)
    }

    /// `log ml({node} ∪ parents) − log ml(parents)`.
    pub fn local(&self, node: usize, parents: &[usize]) -> Result<f64> {
        if parents.contains(&node) {
            return Err(Error::Config("node cannot be its own parent".into()));
        }
        let mut family = parents.to_vec();
        family.push(node);
        family.sort_unstable();
        let mut pa = parents.to_vec();
        pa.sort_unstable();
        Ok(self.log_ml(&family)? - self.log_ml(&pa)?)
    }
}

/// Local BGe score of `node` given `parents`, by name.
pub fn bge_local_score(data: &ObservationMatrix, node: &str, parents: &[&str], hyper: &BgeHyper) -> Result<f64> {
    let scorer = BgeScorer::new(data, hyper)?;
    let node = data.column_index(node)?;
    let parents = parents
        .iter()
        .map(|p| data.column_index(p))
        .collect::<Result<Vec<_>>>()?;
    if parents.contains(&node) {
        return Err(Error::Config("node cannot be its own parent".into()));
    }
    scorer.local(node, &parents)
}

/// Decomposable BGe score of a whole graph over the data's variables.
pub fn bge_score(data: &ObservationMatrix, g: &CausalGraph, hyper: &BgeHyper) -> Result<f64> {
    let scorer = BgeScorer::new(data, hyper)?;
    graph_score(&scorer, data, g)
}

pub(crate) fn graph_score(scorer: &BgeScorer, data: &ObservationMatrix, g: &CausalGraph) -> Result<f64> {
    if g.len() != data.n_cols() || data.names().any(|n| g.index_of(n).is_err()) {
        return Err(Error::NodeSetMismatch);
    }
    let mut total = 0.0;
    for (col, name) in data.names().enumerate() {
        let gi = g.index_of(name)?;
        let parents = g
            .parent_indices(gi)
            .iter()
            .map(|&p| data.column_index(g.name(p)))
            .collect::<Result<Vec<_>>>()?;
        total += scorer.local(col, &parents)?;
    }
    Ok(total)
}
