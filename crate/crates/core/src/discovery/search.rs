//! Greedy hill-climbing over DAGs with add/delete/reverse moves, a tabu
//! phase to escape local optima, and random restarts, maximizing the BGe score.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bge::{BgeHyper, BgeScorer};
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::study::{Tier, VariableKind, VariableSpec};

/// Sorted `(parent, child)` index pairs.
type EdgeList = Vec<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub restarts: usize,
    pub max_in_degree: Option<usize>,
    /// Only allow edges that stay within a tier or go Hyper/Data → Train → Test.
    pub tier_constraints: bool,
    /// Non-improving moves tolerated in a row before the tabu phase stops; 0 disables it.
    pub tabu_patience: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_in_degree: Some(4),
            tier_constraints: false,
            tabu_patience: 15,
            seed: 0,
        }
    }
}

const RANDOM_INIT_EDGE_PROB: f64 = 0.1;
const MIN_IMPROVEMENT: f64 = 1e-9;
const TABU_MEMORY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

struct Constraints<'a> {
    kinds: Vec<VariableKind>,
    tiers: Vec<Option<Tier>>,
    cfg: &'a SearchConfig,
}

impl Constraints<'_> {
    fn allows(&self, from: usize, to: usize) -> bool {
        if from == to || self.kinds[to] == VariableKind::Interventional {
            return false;
        }
        if self.cfg.tier_constraints {
            if let (Some(a), Some(b)) = (self.tiers[from], self.tiers[to]) {
                return a.rank() <= b.rank();
            }
        }
        true
    }

    fn room(&self, indegree: usize) -> bool {
        self.cfg.max_in_degree.is_none_or(|d| indegree < d)
    }
}

/// Mutable DAG state with a per-family score cache.
struct State<'s> {
    scorer: &'s BgeScorer,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    local: Vec<f64>,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl<'s> State<'s> {
    fn new(scorer: &'s BgeScorer, m: usize) -> Result<Self> {
        let mut s = Self {
            scorer,
            parents: vec![Vec::new(); m],
            children: vec![Vec::new(); m],
            local: vec![0.0; m],
            cache: HashMap::new(),
        };
        for i in 0..m {
            s.local[i] = s.family_score(i, &[])?;
        }
        Ok(s)
    }

    fn family_score(&mut self, node: usize, parents: &[usize]) -> Result<f64> {
        let mut key = parents.to_vec();
        key.sort_unstable();
        if let Some(&v) = self.cache.get(&(node, key.clone())) {
            return Ok(v);
        }
        let v = self.scorer.local(node, &key)?;
        self.cache.insert((node, key), v);
        Ok(v)
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.children[a].contains(&b)
    }

    /// Directed path `from ⇝ to`, optionally ignoring the single edge `skip`.
    fn reaches(&self, from: usize, to: usize, skip: Option<(usize, usize)>) -> bool {
        let mut seen = vec![false; self.parents.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for &c in &self.children[v] {
                if Some((v, c)) == skip {
                    continue;
                }
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    fn add(&mut self, a: usize, b: usize) {
        self.children[a].push(b);
        self.parents[b].push(a);
        self.parents[b].sort_unstable();
        self.children[a].sort_unstable();
    }

    fn remove(&mut self, a: usize, b: usize) {
        self.children[a].retain(|&c| c != b);
        self.parents[b].retain(|&p| p != a);
    }

    fn without(&self, node: usize, p: usize) -> Vec<usize> {
        self.parents[node].iter().copied().filter(|&q| q != p).collect()
    }

    fn with(&self, node: usize, p: usize) -> Vec<usize> {
        let mut v = self.parents[node].clone();
        v.push(p);
        v
    }

    fn delta(&mut self, mv: Move) -> Result<f64> {
        Ok(match mv {
            Move::Add(a, b) => {
                let pa = self.with(b, a);
                self.family_score(b, &pa)? - self.local[b]
            }
            Move::Delete(a, b) => {
                let pa = self.without(b, a);
                self.family_score(b, &pa)? - self.local[b]
            }
            Move::Reverse(a, b) => {
                let pb = self.without(b, a);
                let pa = self.with(a, b);
                self.family_score(b, &pb)? - self.local[b] + self.family_score(a, &pa)? - self.local[a]
            }
        })
    }

    fn apply(&mut self, mv: Move) -> Result<()> {
        match mv {
            Move::Add(a, b) => self.add(a, b),
            Move::Delete(a, b) => self.remove(a, b),
            Move::Reverse(a, b) => {
                self.remove(a, b);
                self.add(b, a);
            }
        }
        for node in match mv {
            Move::Add(_, b) | Move::Delete(_, b) => vec![b],
            Move::Reverse(a, b) => vec![a, b],
        } {
            let pa = self.parents[node].clone();
            self.local[node] = self.family_score(node, &pa)?;
        }
        Ok(())
    }

    fn reset_to(&mut self, edges: &[(usize, usize)]) -> Result<()> {
        for v in self.parents.iter_mut().chain(self.children.iter_mut()) {
            v.clear();
        }
        for &(a, b) in edges {
            self.add(a, b);
        }
        for i in 0..self.parents.len() {
            let pa = self.parents[i].clone();
            self.local[i] = self.family_score(i, &pa)?;
        }
        Ok(())
    }

    fn total(&self) -> f64 {
        self.local.iter().sum()
    }

    fn edges(&self) -> EdgeList {
        let mut e: Vec<_> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&b| (a, b)))
            .collect();
        e.sort_unstable();
        e
    }
}

fn legal_moves(state: &State, c: &Constraints) -> Vec<Move> {
    let m = state.parents.len();
    let mut moves = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            if state.has_edge(a, b) {
                moves.push(Move::Delete(a, b));
                if c.allows(b, a) && c.room(state.parents[a].len()) && !state.reaches(a, b, Some((a, b))) {
                    moves.push(Move::Reverse(a, b));
                }
            } else if !state.has_edge(b, a)
                && c.allows(a, b)
                && c.room(state.parents[b].len())
                && !state.reaches(b, a, None)
            {
                moves.push(Move::Add(a, b));
            }
        }
    }
    moves
}

fn hill_climb(state: &mut State, c: &Constraints) -> Result<()> {
    loop {
        let mut best: Option<(f64, Move)> = None;
        for mv in legal_moves(state, c) {
            let d = state.delta(mv)?;
            // Strict comparison keeps the first (lexicographically smallest) move on ties.
            if d > MIN_IMPROVEMENT && best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, mv));
            }
        }
        match best {
            Some((_, mv)) => state.apply(mv)?,
            None => return Ok(()),
        }
    }
}

fn moved_edges(state: &State, mv: Move) -> EdgeList {
    let mut e = state.edges();
    match mv {
        Move::Add(a, b) => e.push((a, b)),
        Move::Delete(a, b) => e.retain(|&x| x != (a, b)),
        Move::Reverse(a, b) => {
            e.retain(|&x| x != (a, b));
            e.push((b, a));
        }
    }
    e.sort_unstable();
    e
}

/// Takes the best move not leading to a recently visited graph, even when it
/// lowers the score, until `patience` moves pass without a new best. Leaves
/// `state` at the best graph seen.
fn tabu_search(state: &mut State, c: &Constraints, patience: usize) -> Result<()> {
    let mut best = (state.total(), state.edges());
    let mut recent: VecDeque<EdgeList> = VecDeque::new();
    let mut visited: HashSet<EdgeList> = HashSet::new();
    recent.push_back(best.1.clone());
    visited.insert(best.1.clone());
    let mut stale = 0;
    while stale < patience {
        let mut pick: Option<(f64, Move, EdgeList)> = None;
        for mv in legal_moves(state, c) {
            let d = state.delta(mv)?;
            if pick.as_ref().is_some_and(|(bd, _, _)| d <= *bd) {
                continue;
            }
            let next = moved_edges(state, mv);
            if !visited.contains(&next) {
                pick = Some((d, mv, next));
            }
        }
        let Some((_, mv, next)) = pick else { break };
        state.apply(mv)?;
        recent.push_back(next.clone());
        visited.insert(next);
        if recent.len() > TABU_MEMORY {
            let old = recent.pop_front().expect("non-empty");
            visited.remove(&old);
        }
        if state.total() > best.0 + MIN_IMPROVEMENT {
            best = (state.total(), state.edges());
            stale = 0;
        } else {
            stale += 1;
        }
    }
    state.reset_to(&best.1)
}

fn random_init(state: &mut State, c: &Constraints, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = state.parents.len();
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    for x in 0..m {
        for y in (x + 1)..m {
            let (a, b) = (perm[x], perm[y]);
            if rng.random::<f64>() < RANDOM_INIT_EDGE_PROB && c.allows(a, b) && c.room(state.parents[b].len()) {
                state.add(a, b);
            }
        }
    }
    for i in 0..m {
        let pa = state.parents[i].clone();
        state.local[i] = state.family_score(i, &pa)?;
    }
    Ok(())
}

/// Best DAG found across restarts together with its BGe score.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub graph: CausalGraph,
    pub score: f64,
    pub restart: usize,
}

/// Learns a DAG over `specs` (in data column order) from `data`.
pub fn learn_graph(
    data: &ObservationMatrix,
    specs: &[VariableSpec],
    hyper: &BgeHyper,
    cfg: &SearchConfig,
) -> Result<CausalGraph> {
    Ok(search(data, specs, hyper, cfg)?.graph)
}

pub fn search(
    data: &ObservationMatrix,
    specs: &[VariableSpec],
    hyper: &BgeHyper,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    if cfg.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    if specs.len() != data.n_cols() || specs.iter().zip(data.names()).any(|(s, n)| s.name != n) {
        return Err(Error::Schema("variable specs do not match the data columns".into()));
    }
    let scorer = BgeScorer::new(data, hyper)?;
    let c = Constraints {
        kinds: specs.iter().map(|s| s.kind).collect(),
        tiers: specs.iter().map(|s| s.tier).collect(),
        cfg,
    };
    let m = specs.len();

    let runs: Vec<Result<(f64, EdgeList)>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut state = State::new(&scorer, m)?;
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64);
                random_init(&mut state, &c, &mut rng)?;
            }
            hill_climb(&mut state, &c)?;
            if cfg.tabu_patience > 0 {
                tabu_search(&mut state, &c, cfg.tabu_patience)?;
            }
            Ok((state.total(), state.edges()))
        })
        .collect();

    let mut best: Option<(usize, f64, EdgeList)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let (score, edges) = run?;
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((r, score, edges));
        }
    }
    let (restart, score, edges) = best.expect("at least one restart");
    let base = CausalGraph::build::<&str>(specs, &[])?;
    Ok(SearchResult {
        graph: base.with_index_edges(edges)?,
        score,
        restart,
    })
}
