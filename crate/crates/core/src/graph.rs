//! Causal DAG over named study variables.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::study::{VariableKind, VariableSpec};

/// A validated DAG. Interventional nodes never have parents.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    kinds: Vec<VariableKind>,
    index: HashMap<String, usize>,
    parents: Vec<BTreeSet<usize>>,
    children: Vec<BTreeSet<usize>>,
}

/// JSON form: `{ "nodes": [...], "edges": [[from, to], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl CausalGraph {
    /// Builds a graph over `specs`, deduplicating edges.
    pub fn build<S: AsRef<str>>(specs: &[VariableSpec], edges: &[(S, S)]) -> Result<Self> {
        let names: Vec<String> = specs.iter().map(|v| v.name.clone()).collect();
        let kinds: Vec<VariableKind> = specs.iter().map(|v| v.kind).collect();
        let mut graph = Self::empty(names, kinds)?;
        let mut pairs = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            pairs.push((graph.index_of(from.as_ref())?, graph.index_of(to.as_ref())?));
        }
        graph.insert_edges(pairs)?;
        Ok(graph)
    }

    pub(crate) fn empty(nodes: Vec<String>, kinds: Vec<VariableKind>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let m = nodes.len();
        Ok(Self {
            nodes,
            kinds,
            index,
            parents: vec![BTreeSet::new(); m],
            children: vec![BTreeSet::new(); m],
        })
    }

    /// Same node set and kinds as `self`, with a different edge set given by index.
    pub(crate) fn with_index_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(self.nodes.clone(), self.kinds.clone())?;
        g.insert_edges(edges.into_iter().collect())?;
        Ok(g)
    }

    fn insert_edges(&mut self, pairs: Vec<(usize, usize)>) -> Result<()> {
        for (from, to) in pairs {
            if self.kinds[to] == VariableKind::Interventional {
                return Err(Error::Exogeneity {
                    from: self.nodes[from].clone(),
                    to: self.nodes[to].clone(),
                });
            }
            if from == to {
                return Err(Error::Cycle(self.nodes[from].clone()));
            }
            self.parents[to].insert(from);
            self.children[from].insert(to);
        }
        self.topological_indices()?;
        Ok(())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, i: usize) -> VariableKind {
        self.kinds[i]
    }

    pub fn kinds(&self) -> &[VariableKind] {
        &self.kinds
    }

    pub fn name(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn parent_indices(&self, i: usize) -> &BTreeSet<usize> {
        &self.parents[i]
    }

    pub fn child_indices(&self, i: usize) -> &BTreeSet<usize> {
        &self.children[i]
    }

    /// Parent names of `node`, sorted by name.
    pub fn parents(&self, node: &str) -> Result<Vec<String>> {
        let i = self.index_of(node)?;
        Ok(self.sorted_names(self.parents[i].iter().copied()))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(BTreeSet::len).sum()
    }

    /// Edges as index pairs in lexicographic order.
    pub fn edge_indices(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(from, cs)| cs.iter().map(move |&to| (from, to)))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Edges as name pairs, sorted by (from, to) name.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<_> = self
            .edge_indices()
            .into_iter()
            .map(|(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect();
        edges.sort();
        edges
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].contains(&to)
    }

    /// True iff a directed path of length at least one leads from `x` to `y`.
    pub fn is_cause(&self, x: &str, y: &str) -> Result<bool> {
        let (x, y) = (self.index_of(x)?, self.index_of(y)?);
        Ok(self.descendants(x).contains(&y))
    }

    /// Nodes reachable from `i` by a path of length at least one.
    pub fn descendants(&self, i: usize) -> BTreeSet<usize> {
        reach(i, &self.children)
    }

    /// Nodes with a path of length at least one into `i`.
    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        reach(i, &self.parents)
    }

    /// `{z : z ⇝ x and z ⇝ y} \ {x, y}`, sorted by name.
    pub fn common_ancestors(&self, x: &str, y: &str) -> Result<Vec<String>> {
        let (xi, yi) = (self.index_of(x)?, self.index_of(y)?);
        let ax = self.ancestors(xi);
        let ay = self.ancestors(yi);
        Ok(self.sorted_names(ax.intersection(&ay).copied().filter(|&z| z != xi && z != yi)))
    }

    fn sorted_names(&self, idx: impl Iterator<Item = usize>) -> Vec<String> {
        let mut names: Vec<String> = idx.map(|i| self.nodes[i].clone()).collect();
        names.sort();
        names
    }

    /// Kahn order with ties broken by node index.
    pub fn topological_indices(&self) -> Result<Vec<usize>> {
        let m = self.nodes.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut ready: BTreeSet<usize> = (0..m).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(m);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < m {
            let stuck = (0..m).find(|&i| indeg[i] > 0).expect("some node left");
            return Err(Error::Cycle(self.nodes[stuck].clone()));
        }
        Ok(order)
    }

    pub fn topological_order(&self) -> Vec<String> {
        self.topological_indices()
            .expect("validated graph is acyclic")
            .into_iter()
            .map(|i| self.nodes[i].clone())
            .collect()
    }

    pub fn same_nodes(&self, other: &CausalGraph) -> bool {
        let a: BTreeSet<&String> = self.nodes.iter().collect();
        let b: BTreeSet<&String> = other.nodes.iter().collect();
        a == b
    }

    /// Edge set keyed by names, for comparisons across graphs whose node order differs.
    pub fn edge_name_set(&self) -> BTreeSet<(String, String)> {
        self.edges().into_iter().collect()
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            nodes: self.nodes.clone(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("graph serializes");
        s.push('\n');
        s
    }

    /// Rebuilds a graph from its JSON form. With `specs`, the node set must
    /// match the study and nodes take the study's order and kinds; without,
    /// every node is treated as observational.
    pub fn from_doc(doc: &GraphDoc, specs: Option<&[VariableSpec]>) -> Result<Self> {
        let edges: Vec<(&str, &str)> = doc.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        match specs {
            Some(specs) => {
                let doc_nodes: BTreeSet<&str> = doc.nodes.iter().map(String::as_str).collect();
                let spec_nodes: BTreeSet<&str> = specs.iter().map(|v| v.name.as_str()).collect();
                if doc_nodes != spec_nodes || doc_nodes.len() != doc.nodes.len() {
                    return Err(Error::NodeSetMismatch);
                }
                Self::build(specs, &edges)
            }
            None => {
                let specs: Vec<VariableSpec> = doc
                    .nodes
                    .iter()
                    .map(|n| VariableSpec::observational(n.clone(), Default::default()))
                    .collect();
                Self::build(&specs, &edges)
            }
        }
    }

    pub fn load(path: impl AsRef<Path>, specs: Option<&[VariableSpec]>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: GraphDoc = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_doc(&doc, specs)
    }

    /// DOT export: interventional nodes as boxes, observational as ellipses.
    pub fn to_dot(&self) -> String {
        self.to_dot_annotated(&BTreeMap::new())
    }

    /// DOT export with extra per-node attribute strings (e.g. `color=red`).
    pub fn to_dot_annotated(&self, extra: &BTreeMap<String, String>) -> String {
        let mut out = String::from("digraph causal {\n");
        for (i, name) in self.nodes.iter().enumerate() {
            let shape = match self.kinds[i] {
                VariableKind::Interventional => "box",
                VariableKind::Observational => "ellipse",
            };
            let _ = write!(out, "  {} [shape={shape}", quote(name));
            if let Some(attrs) = extra.get(name) {
                let _ = write!(out, ", {attrs}");
            }
            out.push_str("];\n");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "  {} -> {};", quote(&a), quote(&b));
        }
        out.push_str("}\n");
        out
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn reach(start: usize, adj: &[BTreeSet<usize>]) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = adj[start].iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        if seen.insert(v) {
            queue.extend(adj[v].iter().copied());
        }
    }
    seen
}
