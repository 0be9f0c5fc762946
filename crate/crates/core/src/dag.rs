//! Directed acyclic graphs over abstract integer node ids.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dag {
    nodes: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn new(
        nodes: impl IntoIterator<Item = usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut g = Self {
            nodes: nodes.into_iter().collect(),
            edges: BTreeSet::new(),
        };
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn empty(nodes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    /// Every edge oriented along `order`.
    pub fn complete(order: &[usize]) -> Self {
        let mut g = Self::empty(order.iter().copied());
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                g.edges.insert((order[i], order[j]));
            }
        }
        g
    }

    /// Adds `a -> b`, rejecting unknown nodes, self-loops and cycles.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        for v in [a, b] {
            if !self.nodes.contains(&v) {
                return Err(Error::UnknownNode(v));
            }
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop at {a}")));
        }
        if self.edges.contains(&(a, b)) {
            return Ok(());
        }
        if self.reaches(b, a) {
            return Err(Error::InvalidGraph(format!("edge {a}->{b} closes a cycle")));
        }
        self.edges.insert((a, b));
        Ok(())
    }

    pub fn add_node(&mut self, v: usize) {
        self.nodes.insert(v);
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = BTreeSet::from([from]);
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for c in self.children(u) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        false
    }

    pub fn nodes(&self) -> &BTreeSet<usize> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn parents(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(_, b)| b == v)
            .map(|&(a, _)| a)
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .range((v, 0)..=(v, usize::MAX))
            .map(|&(_, b)| b)
    }

    /// Whether every path between `a` and `b` is blocked by `s`.
    pub fn d_separated(
        &self,
        a: &BTreeSet<usize>,
        b: &BTreeSet<usize>,
        s: &BTreeSet<usize>,
    ) -> Result<bool> {
        for v in a.iter().chain(b).chain(s) {
            if !self.nodes.contains(v) {
                return Err(Error::UnknownNode(*v));
            }
        }
        if !a.is_disjoint(b) || !a.is_disjoint(s) || !b.is_disjoint(s) {
            return Err(Error::OverlappingSets);
        }
        if a.is_empty() || b.is_empty() {
            return Ok(true);
        }
        let index: BTreeMap<usize, usize> =
            self.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = index.len();
        let mut parents = vec![Vec::new(); n];
        for &(u, v) in &self.edges {
            parents[index[&v]].push(index[&u]);
        }
        // Ancestral closure of a, b and s.
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = a.iter().chain(b).chain(s).map(|v| index[v]).collect();
        for &i in &stack {
            anc[i] = true;
        }
        while let Some(u) = stack.pop() {
            for &q in &parents[u] {
                if !anc[q] {
                    anc[q] = true;
                    stack.push(q);
                }
            }
        }
        // Moral graph of the ancestral subgraph.
        let mut adj = vec![Vec::new(); n];
        for v in 0..n {
            if !anc[v] {
                continue;
            }
            let pa = &parents[v];
            for (i, &x) in pa.iter().enumerate() {
                adj[v].push(x);
                adj[x].push(v);
                for &y in &pa[i + 1..] {
                    adj[x].push(y);
                    adj[y].push(x);
                }
            }
        }
        let blocked: Vec<bool> = (0..n)
            .map(|i| s.iter().any(|v| index[v] == i))
            .collect();
        let target: Vec<bool> = (0..n)
            .map(|i| b.iter().any(|v| index[v] == i))
            .collect();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = a.iter().map(|v| index[v]).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(u) = queue.pop_front() {
            if target[u] {
                return Ok(false);
            }
            for &w in &adj[u] {
                if anc[w] && !blocked[w] && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok(true)
    }

    /// Convenience form of [`Dag::d_separated`] for single nodes.
    pub fn d_separated_pair(&self, i: usize, j: usize, s: &BTreeSet<usize>) -> Result<bool> {
        self.d_separated(&BTreeSet::from([i]), &BTreeSet::from([j]), s)
    }

    /// Undirected edges as `(min, max)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    /// Triples `(i, k, j)` with `i -> k <- j`, `i < j` and `i`, `j` non-adjacent.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for &k in &self.nodes {
            let pa: Vec<usize> = self.parents(k).collect();
            for (x, &i) in pa.iter().enumerate() {
                for &j in &pa[x + 1..] {
                    if !self.adjacent(i, j) {
                        out.insert((i.min(j), k, i.max(j)));
                    }
                }
            }
        }
        out
    }

    pub fn markov_equivalent(&self, other: &Dag) -> Result<bool> {
        if self.nodes != other.nodes {
            return Err(Error::NodeSetMismatch);
        }
        Ok(self.skeleton() == other.skeleton() && self.v_structures() == other.v_structures())
    }

    /// DOT rendering with node labels supplied by `label`.
    pub fn to_dot(&self, name: &str, label: &dyn Fn(usize) -> String) -> String {
        let mut s = format!("digraph \"{}\" {{\n", escape(name));
        s.push_str(&format!("  label=\"{}\";\n", escape(name)));
        for &v in &self.nodes {
            s.push_str(&format!("  n{v} [label=\"{}\"];\n", escape(&label(v))));
        }
        for &(a, b) in &self.edges {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        s.push_str("}\n");
        s
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// A conditional independence statement `<a, b | s>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CiStatement {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub s: BTreeSet<usize>,
}

impl CiStatement {
    pub fn pair(i: usize, j: usize, s: impl IntoIterator<Item = usize>) -> Self {
        Self {
            a: BTreeSet::from([i]),
            b: BTreeSet::from([j]),
            s: s.into_iter().collect(),
        }
    }
}

/// Minimal I-MAP of a set of statements: `order[i] -> order[j]` is absent
/// exactly when the pairwise statement conditioning on all other
/// predecessors of `order[j]` is in `ci` (in either orientation).
pub fn minimal_imap(ci: &BTreeSet<CiStatement>, order: &[usize]) -> Dag {
    minimal_imap_with(order, |i, j, s| {
        ci.contains(&CiStatement::pair(i, j, s.iter().copied()))
            || ci.contains(&CiStatement::pair(j, i, s.iter().copied()))
    })
}

/// Minimal I-MAP with membership decided by `holds(i, j, s)`, meaning
/// `i` and `j` independent given `s`.
pub fn minimal_imap_with(order: &[usize], holds: impl Fn(usize, usize, &[usize]) -> bool) -> Dag {
    let mut g = Dag::empty(order.iter().copied());
    for j in 0..order.len() {
        for i in 0..j {
            let rest: Vec<usize> = order[..j]
                .iter()
                .copied()
                .filter(|&v| v != order[i])
                .collect();
            if !holds(order[j], order[i], &rest) {
                g.edges.insert((order[i], order[j]));
            }
        }
    }
    g
}

/// A DAG with intervention nodes `w_t` pointing at intervened variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IDag {
    pub base: Dag,
    /// Target index to node id.
    pub w_nodes: BTreeMap<usize, usize>,
    /// `(target index, head node)` pairs.
    pub w_edges: BTreeSet<(usize, usize)>,
}

impl IDag {
    /// The full graph with w nodes included.
    pub fn as_dag(&self) -> Dag {
        let mut g = self.base.clone();
        for &id in self.w_nodes.values() {
            g.nodes.insert(id);
        }
        for &(t, j) in &self.w_edges {
            g.edges.insert((self.w_nodes[&t], j));
        }
        g
    }

    pub fn to_dot(
        &self,
        name: &str,
        label: &dyn Fn(usize) -> String,
        target_name: &dyn Fn(usize) -> String,
    ) -> String {
        let mut s = format!("digraph \"{}\" {{\n", escape(name));
        s.push_str(&format!("  label=\"{}\";\n", escape(name)));
        for &v in self.base.nodes() {
            s.push_str(&format!("  n{v} [label=\"{}\"];\n", escape(&label(v))));
        }
        for (&t, &id) in &self.w_nodes {
            s.push_str(&format!(
                "  n{id} [shape=box, label=\"w_{}\"];\n",
                escape(&target_name(t))
            ));
        }
        for &(a, b) in self.base.edges() {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        for &(t, j) in &self.w_edges {
            s.push_str(&format!("  n{} -> n{j};\n", self.w_nodes[&t]));
        }
        s.push_str("}\n");
        s
    }
}

/// Adds one w node per target with edges to the given heads. W node ids
/// start after the largest node id of `g`.
pub fn augment_idag(g: &Dag, placements: &BTreeMap<usize, BTreeSet<usize>>) -> Result<IDag> {
    let base_id = g.nodes.iter().next_back().map_or(0, |m| m + 1);
    augment_idag_at(g, placements, base_id)
}

/// As [`augment_idag`] with an explicit first w node id.
pub fn augment_idag_at(
    g: &Dag,
    placements: &BTreeMap<usize, BTreeSet<usize>>,
    first_w_id: usize,
) -> Result<IDag> {
    let mut w_nodes = BTreeMap::new();
    let mut w_edges = BTreeSet::new();
    for (i, (&t, heads)) in placements.iter().enumerate() {
        let id = first_w_id + i;
        if g.nodes.contains(&id) {
            return Err(Error::InvalidGraph(format!("w node id {id} collides")));
        }
        w_nodes.insert(t, id);
        for &j in heads {
            if !g.nodes.contains(&j) {
                return Err(Error::UnknownNode(j));
            }
            w_edges.insert((t, j));
        }
    }
    Ok(IDag {
        base: g.clone(),
        w_nodes,
        w_edges,
    })
}
