//! Choosing method ratios that optimize a weighted multi-metric objective.
//!
//! Each objective metric gets a least-squares response surface over the
//! ratios of the methods that cause it in the graph (linear terms plus
//! pairwise interactions). Candidate plans on a ratio grid are scored by the
//! weighted, normalized, sign-oriented change they predict relative to the
//! all-zero baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::linalg::{ols, sample_sd};
use crate::study::{Objective as Direction, SignSpec, Study, VariableKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub metric: String,
    pub weight: f64,
    pub sign: SignSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide each change by the metric's sample standard deviation.
    #[default]
    SampleSd,
    /// Use raw changes.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    terms: Vec<ObjectiveTerm>,
    normalization: Normalization,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveDoc {
    terms: Vec<TermDoc>,
    #[serde(default)]
    normalization: Normalization,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    metric: String,
    weight: f64,
}

impl Objective {
    pub fn new(terms: Vec<ObjectiveTerm>, normalization: Normalization) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("objective needs at least one term".into()));
        }
        for t in &terms {
            if !t.weight.is_finite() || t.weight < 0.0 {
                return Err(Error::Config(format!(
                    "weight for `{}` must be finite and non-negative, got {}",
                    t.metric, t.weight
                )));
            }
        }
        if terms.iter().all(|t| t.weight == 0.0) {
            return Err(Error::Config("objective weights are all zero".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(t) = terms.iter().find(|t| !seen.insert(t.metric.as_str())) {
            return Err(Error::Config(format!(
                "metric `{}` appears twice in the objective",
                t.metric
            )));
        }
        Ok(Self { terms, normalization })
    }

    /// Parses `{"terms": [{"metric", "weight"}]}`, taking signs from the study.
    pub fn from_json(text: &str, study: &Study) -> Result<Self> {
        let doc: ObjectiveDoc = serde_json::from_str(text).map_err(|e| Error::json("<objective>", e))?;
        Self::from_doc(doc, study)
    }

    pub fn load(path: impl AsRef<Path>, study: &Study) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ObjectiveDoc = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_doc(doc, study)
    }

    fn from_doc(doc: ObjectiveDoc, study: &Study) -> Result<Self> {
        let terms = doc
            .terms
            .into_iter()
            .map(|t| {
                let spec = study.get(&t.metric)?;
                Ok(ObjectiveTerm {
                    sign: spec.sign,
                    metric: t.metric,
                    weight: t.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms, doc.normalization)
    }

    pub fn terms(&self) -> &[ObjectiveTerm] {
        &self.terms
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
}

/// Fitted `metric ≈ β0 + Σ βi·Ti + Σ βij·Ti·Tj`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub metric: String,
    pub methods: Vec<String>,
    /// Names aligned with `coefficients`: `intercept`, each method, then `A*B` pairs.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
}

fn features(ratios: &[f64]) -> Vec<f64> {
    let k = ratios.len();
    let mut row = Vec::with_capacity(1 + k + k * k.saturating_sub(1) / 2);
    row.push(1.0);
    row.extend_from_slice(ratios);
    for i in 0..k {
        for j in i + 1..k {
            row.push(ratios[i] * ratios[j]);
        }
    }
    row
}

impl ResponseSurface {
    /// Evaluates at ratios given in `self.methods` order.
    pub fn evaluate(&self, ratios: &[f64]) -> f64 {
        assert_eq!(ratios.len(), self.methods.len(), "ratio count");
        features(ratios)
            .iter()
            .zip(&self.coefficients)
            .map(|(f, b)| f * b)
            .sum()
    }

    /// Evaluates at a named assignment; methods not in the surface are ignored
    /// and methods missing from the assignment are taken as 0.
    pub fn evaluate_named(&self, assignment: &BTreeMap<String, f64>) -> f64 {
        let r: Vec<f64> = self
            .methods
            .iter()
            .map(|m| assignment.get(m).copied().unwrap_or(0.0))
            .collect();
        self.evaluate(&r)
    }

    pub fn coefficient(&self, term: &str) -> Option<(f64, f64)> {
        let i = self.terms.iter().position(|t| t == term)?;
        Some((self.coefficients[i], self.std_errors[i]))
    }
}

pub fn fit_response(data: &ObservationMatrix, methods: &[String], metric: &str) -> Result<ResponseSurface> {
    for m in methods {
        if !data.spec(m)?.is_interventional() {
            return Err(Error::Config(format!("`{m}` is not an interventional method")));
        }
    }
    if data.spec(metric)?.kind != VariableKind::Observational {
        return Err(Error::Config(format!("`{metric}` is not an observational metric")));
    }
    let x = data.columns(methods)?;
    let y = data.column(metric)?;
    let n = data.n_rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| features(&x.row(r).iter().copied().collect::<Vec<_>>()))
        .collect();
    let p = rows[0].len();
    let design = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
    let fit = ols(&design, &DVector::from_column_slice(y.as_slice()))?;

    let mut terms = vec!["intercept".to_string()];
    terms.extend(methods.iter().cloned());
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            terms.push(format!("{}*{}", methods[i], methods[j]));
        }
    }
    Ok(ResponseSurface {
        metric: metric.to_string(),
        methods: methods.to_vec(),
        terms,
        coefficients: fit.coefficients.iter().copied().collect(),
        std_errors: fit.std_errors.iter().copied().collect(),
    })
}

/// Change in "goodness" when a metric moves from `base` by `delta`.
pub fn oriented_improvement(sign: &SignSpec, base: f64, delta: f64) -> f64 {
    match sign.objective {
        Direction::Maximize => delta,
        Direction::Minimize => -delta,
        Direction::Target(t) => (base - t).abs() - (base + delta - t).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    /// Every candidate method with its ratio; inactive methods are 0.
    pub assignments: BTreeMap<String, f64>,
    pub predicted_changes: BTreeMap<String, f64>,
    pub objective_value: f64,
}

impl SelectionPlan {
    pub fn active(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.assignments.iter().filter(|(_, &r)| r != 0.0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

/// Fitted surfaces plus the normalization needed to score assignments.
#[derive(Debug, Clone)]
pub struct Selector {
    objective: Objective,
    methods: Vec<String>,
    surfaces: Vec<ResponseSurface>,
    scales: Vec<f64>,
    baselines: Vec<f64>,
}

impl Selector {
    /// Fits one surface per objective metric over the candidate methods that
    /// are its ancestors in `g`.
    pub fn fit(data: &ObservationMatrix, g: &CausalGraph, objective: &Objective, methods: &[String]) -> Result<Self> {
        if methods.is_empty() {
            return Err(Error::Config("no candidate methods given".into()));
        }
        let mut methods = methods.to_vec();
        methods.sort();
        methods.dedup();
        let mut surfaces = Vec::new();
        let mut scales = Vec::new();
        for term in objective.terms() {
            let mut causes = Vec::new();
            for m in &methods {
                if g.is_cause(m, &term.metric)? {
                    causes.push(m.clone());
                }
            }
            let surface = fit_response(data, &causes, &term.metric)?;
            let scale = match objective.normalization() {
                Normalization::SampleSd => {
                    let sd = sample_sd(data.column(&term.metric)?.as_slice());
                    if sd > 0.0 {
                        sd
                    } else {
                        1.0
                    }
                }
                Normalization::None => 1.0,
            };
            surfaces.push(surface);
            scales.push(scale);
        }
        let zero = BTreeMap::new();
        let baselines = surfaces.iter().map(|s| s.evaluate_named(&zero)).collect();
        Ok(Self {
            objective: objective.clone(),
            methods,
            surfaces,
            scales,
            baselines,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn surfaces(&self) -> &[ResponseSurface] {
        &self.surfaces
    }

    /// Predicted change per objective metric relative to the all-zero plan.
    pub fn predicted_changes(&self, assignment: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        self.surfaces
            .iter()
            .zip(&self.baselines)
            .map(|(s, b)| (s.metric.clone(), s.evaluate_named(assignment) - b))
            .collect()
    }

    pub fn score(&self, assignment: &BTreeMap<String, f64>) -> f64 {
        self.objective
            .terms()
            .iter()
            .zip(&self.surfaces)
            .zip(self.scales.iter().zip(&self.baselines))
            .map(|((term, s), (scale, base))| {
                let delta = s.evaluate_named(assignment) - base;
                term.weight * oriented_improvement(&term.sign, *base, delta) / scale
            })
            .sum()
    }

    fn plan(&self, ratios: &BTreeMap<String, f64>, score: f64) -> SelectionPlan {
        let assignments = self
            .methods
            .iter()
            .map(|m| (m.clone(), ratios.get(m).copied().unwrap_or(0.0)))
            .collect();
        SelectionPlan {
            assignments,
            predicted_changes: self.predicted_changes(ratios),
            objective_value: score,
        }
    }

    /// Every candidate assignment in tie-break order: the all-zero plan, then
    /// subsets by size and lexicographically, each over its nonzero grid points.
    pub fn candidates(&self, grid_step: f64, max_active: usize) -> Result<Vec<BTreeMap<String, f64>>> {
        if !(grid_step > 0.0 && grid_step <= 0.5) {
            return Err(Error::Config(format!("grid step must be in (0, 0.5], got {grid_step}")));
        }
        if max_active == 0 {
            return Err(Error::Config("max active methods must be ≥ 1".into()));
        }
        let levels = grid_levels(grid_step);
        let mut out = vec![BTreeMap::new()];
        for size in 1..=max_active.min(self.methods.len()) {
            for subset in combinations(self.methods.len(), size) {
                let mut idx = vec![0usize; size];
                loop {
                    out.push(
                        subset
                            .iter()
                            .zip(&idx)
                            .map(|(&m, &l)| (self.methods[m].clone(), levels[l]))
                            .collect(),
                    );
                    // Odometer over nonzero levels, last coordinate fastest.
                    let mut pos = size;
                    while pos > 0 {
                        pos -= 1;
                        idx[pos] += 1;
                        if idx[pos] < levels.len() {
                            break;
                        }
                        idx[pos] = 0;
                        if pos == 0 {
                            pos = usize::MAX;
                            break;
                        }
                    }
                    if pos == usize::MAX {
                        break;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exhaustive grid search. A later candidate replaces the incumbent only if
    /// it scores strictly higher, so ties keep the earlier one.
    pub fn select(&self, grid_step: f64, max_active: usize) -> Result<SelectionPlan> {
        let mut best: Option<(BTreeMap<String, f64>, f64)> = None;
        for c in self.candidates(grid_step, max_active)? {
            let s = self.score(&c);
            if best.as_ref().is_none_or(|(_, b)| s > b + 1e-12) {
                best = Some((c, s));
            }
        }
        let (ratios, score) = best.expect("all-zero candidate always present");
        Ok(self.plan(&ratios, score))
    }
}

/// Nonzero multiples of `step` in (0, 1].
pub fn grid_levels(step: f64) -> Vec<f64> {
    let k = (1.0 / step + 1e-9).floor() as usize;
    (1..=k).map(|i| ((i as f64 * step) * 1e12).round() / 1e12).collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn select_methods(
    data: &ObservationMatrix,
    g: &CausalGraph,
    objective: &Objective,
    methods: &[String],
    grid_step: f64,
    max_active: usize,
) -> Result<SelectionPlan> {
    Selector::fit(data, g, objective, methods)?.select(grid_step, max_active)
}
