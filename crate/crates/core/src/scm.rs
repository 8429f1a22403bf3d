//! Structural causal model simulator with interventional sampling and
//! ground-truth effect oracles.
//!
//! Interventional nodes are Uniform[0, 1] roots. Every observational node is
//! `f(Σ wⱼ·parentⱼ) + N(0, σ²)` where `f` is the identity or `s·tanh(·)`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, GraphDoc};
use crate::study::{SignSpec, VariableKind, VariableSpec};
use crate::AteQuery;

/// Scale applied to the tanh squash in nonlinear mode.
pub const TANH_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh { scale: f64 },
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh { scale } => scale * z.tanh(),
        }
    }
}

/// Structural equation of one observational node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub node: String,
    /// `(parent, weight)` pairs.
    pub weights: Vec<(String, f64)>,
    pub activation: Activation,
    pub noise_sigma: f64,
}

impl Mechanism {
    pub fn linear(node: impl Into<String>, weights: &[(&str, f64)], noise_sigma: f64) -> Self {
        Self {
            node: node.into(),
            weights: weights.iter().map(|&(p, w)| (p.to_string(), w)).collect(),
            activation: Activation::Identity,
            noise_sigma,
        }
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    parents: Vec<(usize, f64)>,
    activation: Activation,
    sigma: f64,
}

#[derive(Debug, Clone)]
pub struct Scm {
    variables: Vec<VariableSpec>,
    graph: CausalGraph,
    mechanisms: Vec<Mechanism>,
    compiled: Vec<Option<Compiled>>,
    order: Vec<usize>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmDoc {
    variables: Vec<VariableSpec>,
    graph: GraphDoc,
    mechanisms: Vec<Mechanism>,
    seed: u64,
}

impl Scm {
    /// Assembles an SCM; the graph is induced by the mechanisms' parent lists.
    pub fn new(variables: Vec<VariableSpec>, mechanisms: Vec<Mechanism>, seed: u64) -> Result<Self> {
        let mut edges = Vec::new();
        for m in &mechanisms {
            for (p, w) in &m.weights {
                if !w.is_finite() {
                    return Err(Error::Config(format!("weight {p} -> {} is not finite", m.node)));
                }
                edges.push((p.clone(), m.node.clone()));
            }
            if !(m.noise_sigma > 0.0) || !m.noise_sigma.is_finite() {
                return Err(Error::Config(format!("noise sigma of `{}` must be positive", m.node)));
            }
            if let Activation::Tanh { scale } = m.activation {
                if !scale.is_finite() {
                    return Err(Error::Config(format!("tanh scale of `{}` is not finite", m.node)));
                }
            }
        }
        let graph = CausalGraph::build(&variables, &edges)?;
        let mut compiled: Vec<Option<Compiled>> = vec![None; variables.len()];
        for m in &mechanisms {
            let i = graph.index_of(&m.node)?;
            if graph.kind(i) == VariableKind::Interventional {
                return Err(Error::Config(format!(
                    "interventional node `{}` cannot have a mechanism",
                    m.node
                )));
            }
            if compiled[i].is_some() {
                return Err(Error::Config(format!("`{}` has two mechanisms", m.node)));
            }
            let parents = m
                .weights
                .iter()
                .map(|(p, w)| Ok((graph.index_of(p)?, *w)))
                .collect::<Result<Vec<_>>>()?;
            compiled[i] = Some(Compiled {
                parents,
                activation: m.activation,
                sigma: m.noise_sigma,
            });
        }
        if let Some(i) =
            (0..variables.len()).find(|&i| graph.kind(i) == VariableKind::Observational && compiled[i].is_none())
        {
            return Err(Error::Config(format!(
                "observational node `{}` has no mechanism",
                graph.name(i)
            )));
        }
        let order = graph.topological_indices()?;
        Ok(Self {
            variables,
            graph,
            mechanisms,
            compiled,
            order,
            seed,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_linear(&self) -> bool {
        self.mechanisms.iter().all(|m| m.activation == Activation::Identity)
    }

    pub fn to_json(&self) -> String {
        let doc = ScmDoc {
            variables: self.variables.clone(),
            graph: self.graph.to_doc(),
            mechanisms: self.mechanisms.clone(),
            seed: self.seed,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("scm serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScmDoc = serde_json::from_str(text).map_err(|e| Error::json("<scm>", e))?;
        let scm = Self::new(doc.variables, doc.mechanisms, doc.seed)?;
        if scm.graph.to_doc().edges != CausalGraph::from_doc(&doc.graph, Some(&scm.variables))?.to_doc().edges {
            return Err(Error::Config("graph does not match mechanism parent lists".into()));
        }
        Ok(scm)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Draws `n` rows in topological order, clamping nodes listed in `clamp`.
    /// Every node consumes its random draw even when clamped, so two calls
    /// with the same seed share noise (common random numbers).
    fn simulate(&self, n: usize, seed: u64, clamp: &[Option<f64>], mut visit: impl FnMut(&[f64])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = vec![0.0; self.variables.len()];
        for _ in 0..n {
            for &i in &self.order {
                let value = match &self.compiled[i] {
                    None => rng.random::<f64>(),
                    Some(c) => {
                        let eps: f64 = rng.sample(StandardNormal);
                        let z: f64 = c.parents.iter().map(|&(p, w)| w * row[p]).sum();
                        c.activation.apply(z) + c.sigma * eps
                    }
                };
                row[i] = clamp[i].unwrap_or(value);
            }
            visit(&row);
        }
    }

    fn clamp_vector(&self, assignments: &BTreeMap<String, f64>) -> Result<Vec<Option<f64>>> {
        let mut clamp = vec![None; self.variables.len()];
        for (name, &v) in assignments {
            clamp[self.graph.index_of(name)?] = Some(v);
        }
        Ok(clamp)
    }

    fn to_matrix(&self, n: usize, seed: u64, clamp: &[Option<f64>]) -> Result<ObservationMatrix> {
        let m = self.variables.len();
        let mut values = Vec::with_capacity(n * m);
        self.simulate(n, seed, clamp, |row| values.extend_from_slice(row));
        ObservationMatrix::new(self.variables.clone(), DMatrix::from_row_slice(n, m, &values))
    }

    /// Observational sample of `n` i.i.d. runs.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ObservationMatrix> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        self.to_matrix(n, seed, &vec![None; self.variables.len()])
    }

    /// Sample under `do(assignments)`: clamped nodes are constant and their
    /// mechanisms are cut; every other mechanism runs unchanged.
    pub fn do_sample(&self, assignments: &BTreeMap<String, f64>, n: usize, seed: u64) -> Result<ObservationMatrix> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let clamp = self.clamp_vector(assignments)?;
        self.to_matrix(n, seed, &clamp)
    }

    /// Column means under `do(assignments)` without materializing the rows.
    pub fn do_means(&self, assignments: &BTreeMap<String, f64>, n: usize, seed: u64) -> Result<Vec<f64>> {
        let clamp = self.clamp_vector(assignments)?;
        let mut sums = vec![0.0; self.variables.len()];
        self.simulate(n, seed, &clamp, |row| {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        });
        Ok(sums.into_iter().map(|s| s / n as f64).collect())
    }

    /// Total causal effect of a unit change in `treatment` on every node of a
    /// linear SCM: the sum over directed paths of the products of edge weights.
    pub fn path_coefficients(&self, treatment: &str) -> Result<Vec<f64>> {
        let t = self.graph.index_of(treatment)?;
        let mut effect = vec![0.0; self.variables.len()];
        effect[t] = 1.0;
        for &i in &self.order {
            if i == t {
                continue;
            }
            if let Some(c) = &self.compiled[i] {
                effect[i] = c.parents.iter().map(|&(p, w)| w * effect[p]).sum();
            }
        }
        Ok(effect)
    }

    /// Monte-Carlo `E[Y | do(X=x1)] − E[Y | do(X=x2)]` with common random
    /// numbers across arms; returns the estimate and its standard error.
    pub fn monte_carlo_ate(&self, q: &AteQuery, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
        let t = self.graph.index_of(&q.treatment)?;
        let y = self.graph.index_of(&q.outcome)?;
        if n_mc < 2 {
            return Err(Error::Config("Monte-Carlo needs at least 2 draws".into()));
        }
        let arm = |x: f64| {
            let mut clamp = vec![None; self.variables.len()];
            clamp[t] = Some(x);
            let mut out = Vec::with_capacity(n_mc);
            self.simulate(n_mc, seed, &clamp, |row| out.push(row[y]));
            out
        };
        let a = arm(q.x1);
        let b = arm(q.x2);
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        let mean = diffs.iter().sum::<f64>() / n_mc as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n_mc - 1) as f64;
        Ok((mean, (var / n_mc as f64).sqrt()))
    }

    /// Ground-truth ATE: exact path-coefficient sum for linear SCMs,
    /// Monte-Carlo with `n_mc` draws per arm otherwise.
    pub fn true_ate(&self, q: &AteQuery, n_mc: usize) -> Result<f64> {
        if q.treatment == q.outcome {
            return Err(Error::Config("treatment equals outcome".into()));
        }
        let y = self.graph.index_of(&q.outcome)?;
        if q.x1 == q.x2 {
            self.graph.index_of(&q.treatment)?;
            return Ok(0.0);
        }
        if self.is_linear() {
            let effect = self.path_coefficients(&q.treatment)?;
            return Ok(effect[y] * (q.x1 - q.x2));
        }
        Ok(self.monte_carlo_ate(q, n_mc, mc_seed(self.seed))?.0)
    }
}

fn mc_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub const DEFAULT_MC_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub n_nodes: usize,
    pub n_interventional: usize,
    pub expected_in_degree: f64,
    pub weight_range: (f64, f64),
    pub noise_sigma: f64,
    pub nonlinear: bool,
    pub seed: u64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            n_nodes: 8,
            n_interventional: 3,
            expected_in_degree: 2.0,
            weight_range: (0.5, 2.0),
            noise_sigma: 0.5,
            nonlinear: false,
            seed: 0,
        }
    }
}

/// Random SCM. Interventional nodes are named `T1..`, observational `X1..`.
/// A random causal order puts interventional nodes first; each forward pair
/// gets an edge with probability `expected_in_degree / (n_nodes − 1)`.
pub fn random_scm(cfg: &ScmConfig) -> Result<Scm> {
    if cfg.n_interventional < 1 || cfg.n_interventional >= cfg.n_nodes {
        return Err(Error::Config(format!(
            "need 1 ≤ n_interventional < n_nodes, got {} of {}",
            cfg.n_interventional, cfg.n_nodes
        )));
    }
    if !(cfg.expected_in_degree >= 0.0) {
        return Err(Error::Config("expected_in_degree must be non-negative".into()));
    }
    let (lo, hi) = cfg.weight_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
        return Err(Error::Config(format!("invalid weight range ({lo}, {hi})")));
    }
    if !(cfg.noise_sigma > 0.0) {
        return Err(Error::Config("noise_sigma must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_obs = cfg.n_nodes - cfg.n_interventional;
    let mut variables: Vec<VariableSpec> = (1..=cfg.n_interventional)
        .map(|i| VariableSpec::interventional(format!("T{i}")))
        .collect();
    variables.extend((1..=n_obs).map(|i| VariableSpec::observational(format!("X{i}"), SignSpec::maximize())));

    let mut t_order: Vec<usize> = (0..cfg.n_interventional).collect();
    let mut x_order: Vec<usize> = (cfg.n_interventional..cfg.n_nodes).collect();
    t_order.shuffle(&mut rng);
    x_order.shuffle(&mut rng);
    let perm: Vec<usize> = t_order.into_iter().chain(x_order).collect();

    let p_edge = (cfg.expected_in_degree / (cfg.n_nodes - 1) as f64).min(1.0);
    let activation = if cfg.nonlinear {
        Activation::Tanh { scale: TANH_SCALE }
    } else {
        Activation::Identity
    };
    let mut weights: HashMap<usize, Vec<(String, f64)>> = HashMap::new();
    for a in 0..cfg.n_nodes {
        for b in (a + 1)..cfg.n_nodes {
            let (from, to) = (perm[a], perm[b]);
            if to < cfg.n_interventional {
                continue;
            }
            if rng.random::<f64>() < p_edge {
                let magnitude = lo + (hi - lo) * rng.random::<f64>();
                let w = if rng.random::<bool>() { magnitude } else { -magnitude };
                weights.entry(to).or_default().push((variables[from].name.clone(), w));
            }
        }
    }
    let mechanisms = (cfg.n_interventional..cfg.n_nodes)
        .map(|i| {
            let mut ws = weights.remove(&i).unwrap_or_default();
            ws.sort_by(|a, b| a.0.cmp(&b.0));
            Mechanism {
                node: variables[i].name.clone(),
                weights: ws,
                activation,
                noise_sigma: cfg.noise_sigma,
            }
        })
        .collect();
    Scm::new(variables, mechanisms, cfg.seed)
}
