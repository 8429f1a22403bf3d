//! Average treatment effects by cross-fitted double machine learning under
//! the partially linear model `Y = θ·T + g(Z) + ε`, with the treatment's
//! parents in the causal graph as the adjustment set `Z`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::linalg::{ols, KnnModel, RidgeModel};
use crate::AteQuery;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Nuisance {
    LinearRidge { lambda: f64 },
    KNearest { k: usize },
}

impl Default for Nuisance {
    fn default() -> Self {
        Nuisance::LinearRidge { lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    pub folds: usize,
    pub nuisance: Nuisance,
    /// Polynomial degree used by [`conditional_mean`].
    pub cond_mean_degree: usize,
    pub seed: u64,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            nuisance: Nuisance::default(),
            cond_mean_degree: 3,
            seed: 0,
        }
    }
}

impl DmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be ≥ 2, got {}", self.folds)));
        }
        match self.nuisance {
            Nuisance::LinearRidge { lambda } if !(lambda > 0.0) => {
                Err(Error::Config(format!("ridge lambda must be positive, got {lambda}")))
            }
            Nuisance::KNearest { k: 0 } => Err(Error::Config("k must be ≥ 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub theta: f64,
    pub std_error: f64,
    pub n: usize,
    pub adjustment_set: Vec<String>,
}

/// Backdoor set for `treatment → outcome`: the treatment's parents.
pub fn adjustment_set(g: &CausalGraph, treatment: &str, outcome: &str) -> Result<Vec<String>> {
    g.index_of(outcome)?;
    if treatment == outcome {
        return Err(Error::Config("treatment equals outcome".into()));
    }
    let parents = g.parents(treatment)?;
    if parents.iter().any(|p| p == outcome) {
        return Err(Error::InvalidAdjustment {
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
        });
    }
    Ok(parents)
}

fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (rank, &row) in perm.iter().enumerate() {
        fold[row] = rank % folds;
    }
    fold
}

fn fit_predict(nuisance: Nuisance, x: &DMatrix<f64>, y: &DVector<f64>, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(match nuisance {
        Nuisance::LinearRidge { lambda } => RidgeModel::fit(x, y, lambda)?.predict(x_new),
        Nuisance::KNearest { k } => KnnModel::fit(x, y, k).predict(x_new),
    })
}

/// Out-of-fold residuals of `target` regressed on `z`.
fn cross_fit_residuals(
    z: &DMatrix<f64>,
    target: &DVector<f64>,
    fold: &[usize],
    cfg: &DmlConfig,
) -> Result<DVector<f64>> {
    let n = target.len();
    if z.ncols() == 0 {
        // A constant nuisance cannot overfit; its full-sample fit is the mean.
        let mean = target.mean();
        return Ok(target.add_scalar(-mean));
    }
    let mut resid = DVector::zeros(n);
    for k in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == k).collect();
        if test.is_empty() {
            continue;
        }
        let x_train = z.select_rows(train.iter());
        let y_train = target.select_rows(train.iter());
        let x_test = z.select_rows(test.iter());
        let pred = fit_predict(cfg.nuisance, &x_train, &y_train, &x_test)?;
        for (j, &i) in test.iter().enumerate() {
            resid[i] = target[i] - pred[j];
        }
    }
    Ok(resid)
}

/// Cross-fitted residual-on-residual estimate of the effect of `treatment`
/// on `outcome`, adjusting for `adjust`.
pub fn dml_effect(
    data: &ObservationMatrix,
    treatment: &str,
    outcome: &str,
    adjust: &[String],
    cfg: &DmlConfig,
) -> Result<EffectEstimate> {
    cfg.validate()?;
    if treatment == outcome {
        return Err(Error::Config("treatment equals outcome".into()));
    }
    if adjust.iter().any(|a| a == treatment || a == outcome) {
        return Err(Error::Config(format!(
            "adjustment set {adjust:?} contains the treatment or outcome"
        )));
    }
    let n = data.n_rows();
    if n < 10 * cfg.folds {
        return Err(Error::Config(format!(
            "need at least {} rows for {}-fold cross-fitting, got {n}",
            10 * cfg.folds,
            cfg.folds
        )));
    }
    let t = data.column(treatment)?;
    let y = data.column(outcome)?;
    let adjust: Vec<String> = adjust.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let z = data.columns(&adjust)?;
    let fold = fold_assignment(n, cfg.folds, cfg.seed);

    let r_t = cross_fit_residuals(&z, &t, &fold, cfg)?;
    let r_y = cross_fit_residuals(&z, &y, &fold, cfg)?;
    let stt = r_t.norm_squared();
    if stt < 1e-12 {
        return Err(Error::DegenerateTreatment(treatment.to_string()));
    }
    let theta = r_t.dot(&r_y) / stt;
    let nf = n as f64;
    let mean_rt2 = stt / nf;
    let psi: Vec<f64> = r_t
        .iter()
        .zip(r_y.iter())
        .map(|(rt, ry)| rt * (ry - theta * rt) / mean_rt2)
        .collect();
    let psi_mean = psi.iter().sum::<f64>() / nf;
    let sd = (psi.iter().map(|p| (p - psi_mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !theta.is_finite() {
        return Err(Error::Numerical("effect estimate is not finite".into()));
    }
    Ok(EffectEstimate {
        theta,
        std_error: sd / nf.sqrt(),
        n,
        adjustment_set: adjust,
    })
}

/// Effect estimate for `q` with the graph-derived adjustment set.
pub fn effect_for(data: &ObservationMatrix, g: &CausalGraph, q: &AteQuery, cfg: &DmlConfig) -> Result<EffectEstimate> {
    let adjust = adjustment_set(g, &q.treatment, &q.outcome)?;
    dml_effect(data, &q.treatment, &q.outcome, &adjust, cfg)
}

/// Two-point ATE `θ·(x1 − x2)`.
pub fn ate(data: &ObservationMatrix, g: &CausalGraph, q: &AteQuery, cfg: &DmlConfig) -> Result<f64> {
    Ok(effect_for(data, g, q, cfg)?.theta * (q.x1 - q.x2))
}

/// Tolerated distance outside the observed range of the conditioning variable.
pub const EXTRAPOLATION_SLACK: f64 = 0.05;

/// `E[var | given = value]` from a least-squares polynomial fit of degree
/// `cfg.cond_mean_degree`.
pub fn conditional_mean(data: &ObservationMatrix, var: &str, given: &str, value: f64, cfg: &DmlConfig) -> Result<f64> {
    let g = data.column(given)?;
    let v = data.column(var)?;
    let (lo, hi) = (g.min(), g.max());
    if !value.is_finite() || value < lo - EXTRAPOLATION_SLACK || value > hi + EXTRAPOLATION_SLACK {
        return Err(Error::Extrapolation {
            given: given.to_string(),
            value,
            low: lo,
            high: hi,
        });
    }
    let degree = cfg.cond_mean_degree;
    let mut distinct: Vec<f64> = g.iter().copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::Rank(format!(
            "`{given}` has {} distinct values; degree {degree} needs {}",
            distinct.len(),
            degree + 1
        )));
    }
    // Map the observed range onto [−1, 1] to keep the Vandermonde design well conditioned.
    let center = (hi + lo) / 2.0;
    let half = ((hi - lo) / 2.0).max(f64::MIN_POSITIVE);
    let design = DMatrix::from_fn(g.len(), degree + 1, |i, p| ((g[i] - center) / half).powi(p as i32));
    let fit = ols(&design, &v)?;
    let u = (value - center) / half;
    Ok((0..=degree).map(|p| fit.coefficients[p] * u.powi(p as i32)).sum())
}
