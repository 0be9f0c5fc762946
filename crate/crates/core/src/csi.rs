//! Context-specific independence relations, minimal contexts, context
//! graphs and equivalence of CStrees.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::model::{CStree, Context, StagedModel, VariableSpec};

/// `X_a ⫫ X_b | X_s` in the context `context`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CsiRelation {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub s: BTreeSet<usize>,
    pub context: Context,
}

impl CsiRelation {
    pub fn new(
        a: impl IntoIterator<Item = usize>,
        b: impl IntoIterator<Item = usize>,
        s: impl IntoIterator<Item = usize>,
        context: Context,
    ) -> Result<Self> {
        let r = Self {
            a: a.into_iter().collect(),
            b: b.into_iter().collect(),
            s: s.into_iter().collect(),
            context,
        };
        if r.a.is_empty() || r.b.is_empty() {
            return Err(Error::InvalidArgument("relation sides must be nonempty".into()));
        }
        let c: BTreeSet<usize> = r.context.vars().collect();
        let all = [&r.a, &r.b, &r.s, &c];
        for i in 0..4 {
            for j in i + 1..4 {
                if !all[i].is_disjoint(all[j]) {
                    return Err(Error::InvalidArgument("relation sets overlap".into()));
                }
            }
        }
        Ok(r.canonical())
    }

    /// Orients the pair so that the smaller side comes first.
    pub fn canonical(mut self) -> Self {
        if self.b < self.a {
            std::mem::swap(&mut self.a, &mut self.b);
        }
        self
    }

    pub fn display(&self, vars: &[VariableSpec]) -> String {
        let names = |s: &BTreeSet<usize>| {
            s.iter()
                .map(|&v| vars[v].name().to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = format!("{} _||_ {}", names(&self.a), names(&self.b));
        if !self.s.is_empty() || !self.context.is_empty() {
            out.push_str(" |");
            if !self.s.is_empty() {
                out.push(' ');
                out.push_str(&names(&self.s));
            }
            if !self.context.is_empty() {
                if !self.s.is_empty() {
                    out.push(';');
                }
                out.push(' ');
                out.push_str(&self.context.display(vars));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureStatus {
    /// Relations as given, no closure applied.
    Generators,
    /// Closed under all seven axioms.
    Complete,
    /// Closure stopped at the resource bound.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsiSet {
    cardinalities: Vec<usize>,
    relations: BTreeSet<CsiRelation>,
    status: ClosureStatus,
}

impl CsiSet {
    pub fn new(cardinalities: Vec<usize>) -> Self {
        Self {
            cardinalities,
            relations: BTreeSet::new(),
            status: ClosureStatus::Generators,
        }
    }

    pub fn insert(&mut self, r: CsiRelation) {
        self.relations.insert(r.canonical());
    }

    pub fn contains(&self, r: &CsiRelation) -> bool {
        self.relations.contains(&r.clone().canonical())
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CsiRelation> {
        self.relations.iter()
    }

    pub fn status(&self) -> ClosureStatus {
        self.status
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }
}

/// One relation per non-singleton stage: the level's variable is
/// independent of the preceding variables outside the stage context.
pub fn stage_relations(tree: &CStree) -> CsiSet {
    let mut set = CsiSet::new(tree.variables().iter().map(|v| v.cardinality()).collect());
    let ord = tree.ordering();
    for k in 1..=tree.p() {
        let v = tree.level_variable(k);
        for ctx in tree.stages(k) {
            let b: BTreeSet<usize> = (0..k - 1)
                .map(|pos| ord.var_at(pos))
                .filter(|&u| !ctx.contains_var(u))
                .collect();
            if !b.is_empty() {
                set.insert(CsiRelation {
                    a: BTreeSet::from([v]),
                    b,
                    s: BTreeSet::new(),
                    context: ctx.clone(),
                });
            }
        }
    }
    set
}

const MAX_CLOSURE_VARS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Rel {
    a: u32,
    b: u32,
    s: u32,
    c: u32,
    cv: [u8; MAX_CLOSURE_VARS],
}

impl Rel {
    fn with(self, a: u32, b: u32, s: u32) -> Rel {
        Rel { a, b, s, ..self }
    }
}

/// Nonempty subsets of `mask`.
fn subsets(mask: u32) -> impl Iterator<Item = u32> {
    let mut sub = mask;
    let mut done = mask == 0;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = sub;
        if sub == 0 {
            return None;
        }
        sub = (sub - 1) & mask;
        if sub == 0 {
            done = true;
        }
        Some(out)
    })
}

/// All assignments of the variables in `mask`.
fn assignments(mask: u32, cards: &[usize]) -> Vec<[u8; MAX_CLOSURE_VARS]> {
    let mut out = vec![[0u8; MAX_CLOSURE_VARS]];
    for (v, &d) in cards.iter().enumerate() {
        if mask >> v & 1 == 1 {
            out = out
                .into_iter()
                .flat_map(|base| {
                    (0..d).map(move |x| {
                        let mut b = base;
                        b[v] = x as u8;
                        b
                    })
                })
                .collect();
        }
    }
    out
}

/// Closes a relation set under symmetry, decomposition, weak union,
/// contraction, intersection, specialization and absorption. Stops with an
/// [`ClosureStatus::Incomplete`] result once more than `bound` oriented
/// relations are held.
pub fn axiom_closure(js: &CsiSet, bound: usize) -> Result<CsiSet> {
    let cards = js.cardinalities.clone();
    let p = cards.len();
    if p > MAX_CLOSURE_VARS || cards.iter().any(|&d| d > 255) {
        return Err(Error::Unsupported(format!(
            "closure supports at most {MAX_CLOSURE_VARS} variables with at most 255 outcomes"
        )));
    }
    let mask_of = |s: &BTreeSet<usize>| s.iter().fold(0u32, |m, &v| m | 1 << v);
    let mut set: HashSet<Rel> = HashSet::new();
    let mut work: Vec<Rel> = Vec::new();
    let mut complete = true;
    let add = |r: Rel, set: &mut HashSet<Rel>, work: &mut Vec<Rel>| -> bool {
        if r.a == 0 || r.b == 0 {
            return true;
        }
        if set.insert(r) {
            work.push(r);
        }
        set.len() <= bound
    };
    for r in js.iter() {
        let mut cv = [0u8; MAX_CLOSURE_VARS];
        for (v, x) in r.context.iter() {
            if v >= p || x >= cards[v] {
                return Err(Error::InvalidContext(format!("{v}={x} out of range")));
            }
            cv[v] = x as u8;
        }
        let rel = Rel {
            a: mask_of(&r.a),
            b: mask_of(&r.b),
            s: mask_of(&r.s),
            c: mask_of(&r.context.vars().collect()),
            cv,
        };
        add(rel, &mut set, &mut work);
    }
    let full = if p == 32 { u32::MAX } else { (1u32 << p) - 1 };
    'outer: while let Some(r) = work.pop() {
        let mut out: Vec<Rel> = Vec::new();
        out.push(r.with(r.b, r.a, r.s));
        for d in subsets(r.b).filter(|&d| d != r.b) {
            out.push(r.with(r.a, d, r.s));
            out.push(r.with(r.a, r.b & !d, r.s | d));
        }
        // Contraction, r as the first premise.
        for d in subsets(r.s) {
            if set.contains(&r.with(r.a, d, r.s & !d)) {
                out.push(r.with(r.a, r.b | d, r.s & !d));
            }
        }
        // Contraction, r as the second premise.
        let free = full & !(r.a | r.b | r.s | r.c);
        for b in subsets(free) {
            if set.contains(&r.with(r.a, b, r.s | r.b)) {
                out.push(r.with(r.a, b | r.b, r.s));
            }
        }
        // Intersection, either premise.
        for y in subsets(r.s) {
            let d = r.s & !y;
            if set.contains(&r.with(r.a, y, r.b | d)) {
                out.push(r.with(r.a, r.b | y, d));
            }
        }
        // Specialization.
        for t in subsets(r.s) {
            for vals in assignments(t, &cards) {
                let mut cv = r.cv;
                for v in 0..p {
                    if t >> v & 1 == 1 {
                        cv[v] = vals[v];
                    }
                }
                out.push(Rel {
                    s: r.s & !t,
                    c: r.c | t,
                    cv,
                    ..r
                });
            }
        }
        // Absorption.
        for t in subsets(r.c) {
            let all = assignments(t, &cards).into_iter().all(|vals| {
                let mut cv = r.cv;
                for v in 0..p {
                    if t >> v & 1 == 1 {
                        cv[v] = vals[v];
                    }
                }
                set.contains(&Rel { cv, ..r })
            });
            if all {
                let mut cv = r.cv;
                for (v, x) in cv.iter_mut().enumerate().take(p) {
                    if t >> v & 1 == 1 {
                        *x = 0;
                    }
                }
                out.push(Rel {
                    s: r.s | t,
                    c: r.c & !t,
                    cv,
                    ..r
                });
            }
        }
        for o in out {
            if !add(o, &mut set, &mut work) {
                complete = false;
                break 'outer;
            }
        }
    }
    let bits = |m: u32| (0..p).filter(move |v| m >> v & 1 == 1);
    let mut result = CsiSet::new(cards.clone());
    for r in set {
        let ctx = Context::from_pairs(bits(r.c).map(|v| (v, r.cv[v] as usize))).expect("distinct");
        result.insert(CsiRelation {
            a: bits(r.a).collect(),
            b: bits(r.b).collect(),
            s: bits(r.s).collect(),
            context: ctx,
        });
    }
    result.status = if complete {
        ClosureStatus::Complete
    } else {
        ClosureStatus::Incomplete
    };
    Ok(result)
}

/// For one level and one earlier position `q`, which faces of the space of
/// the other earlier positions consist only of prefixes whose stage does
/// not depend on position `q`.
struct FaceTable {
    /// Positions other than `q`, ascending.
    positions: Vec<usize>,
    /// Radix `d + 1` per position; digit `d` marks a free position.
    radices: Vec<usize>,
    contained: Vec<bool>,
}

impl FaceTable {
    fn build(tree: &CStree, level: usize, q: usize) -> Self {
        let space = tree.prefix_space();
        let m = level - 1;
        let labels = tree.level_labels(level);
        let positions: Vec<usize> = (0..m).filter(|&r| r != q).collect();
        let radices: Vec<usize> = positions.iter().map(|&r| space.dims()[r] + 1).collect();
        let size: usize = radices.iter().product();
        let mut contained = vec![false; size];
        let mut digits = vec![0usize; positions.len()];
        let mut prefix = vec![0usize; m];
        for code in 0..size {
            // digits of `code`, most significant first
            let mut c = code;
            for i in (0..digits.len()).rev() {
                digits[i] = c % radices[i];
                c /= radices[i];
            }
            let free = (0..digits.len()).find(|&i| digits[i] == radices[i] - 1);
            contained[code] = match free {
                None => {
                    for (i, &r) in positions.iter().enumerate() {
                        prefix[r] = digits[i];
                    }
                    let mut same = true;
                    let mut first = None;
                    for x in 0..space.dims()[q] {
                        prefix[q] = x;
                        let l = labels[space.encode(&prefix)];
                        match first {
                            None => first = Some(l),
                            Some(f) if f != l => {
                                same = false;
                                break;
                            }
                            _ => {}
                        }
                    }
                    same
                }
                Some(i) => {
                    let stride: usize = radices[i + 1..].iter().product();
                    let base = code - digits[i] * stride;
                    (0..radices[i] - 1).all(|x| contained[base + x * stride])
                }
            };
        }
        Self {
            positions,
            radices,
            contained,
        }
    }

    fn code_of(&self, fixed: &BTreeMap<usize, usize>) -> usize {
        self.positions
            .iter()
            .zip(&self.radices)
            .fold(0, |acc, (r, &rad)| {
                acc * rad + fixed.get(r).copied().unwrap_or(rad - 1)
            })
    }

    fn contains(&self, fixed: &BTreeMap<usize, usize>) -> bool {
        self.contained[self.code_of(fixed)]
    }

    /// Maximal contained faces as position -> value maps.
    fn maximal_faces(&self) -> Vec<BTreeMap<usize, usize>> {
        let mut out = Vec::new();
        let n = self.positions.len();
        let mut digits = vec![0usize; n];
        for code in 0..self.contained.len() {
            if !self.contained[code] {
                continue;
            }
            let mut c = code;
            for i in (0..n).rev() {
                digits[i] = c % self.radices[i];
                c /= self.radices[i];
            }
            let maximal = (0..n).all(|i| {
                let free = self.radices[i] - 1;
                if digits[i] == free {
                    return true;
                }
                let stride: usize = self.radices[i + 1..].iter().product();
                !self.contained[code + (free - digits[i]) * stride]
            });
            if maximal {
                out.push(
                    (0..n)
                        .filter(|&i| digits[i] != self.radices[i] - 1)
                        .map(|i| (self.positions[i], digits[i]))
                        .collect(),
                );
            }
        }
        out
    }
}

/// Face tables of a tree, built lazily per (level, earlier position).
struct Faces<'a> {
    tree: &'a CStree,
    tables: BTreeMap<(usize, usize), FaceTable>,
}

impl<'a> Faces<'a> {
    fn new(tree: &'a CStree) -> Self {
        Self {
            tree,
            tables: BTreeMap::new(),
        }
    }

    fn table(&mut self, level: usize, q: usize) -> &FaceTable {
        let tree = self.tree;
        self.tables
            .entry((level, q))
            .or_insert_with(|| FaceTable::build(tree, level, q))
    }

    /// Whether the level's variable is independent of the variable at
    /// position `q` given the remaining predecessors, throughout `ctx`.
    fn independent_in(&mut self, level: usize, q: usize, ctx: &Context) -> bool {
        let ord = self.tree.ordering().clone();
        let mut fixed = BTreeMap::new();
        for (v, x) in ctx.iter() {
            let pos = ord.position(v);
            if pos >= level - 1 || pos == q {
                return false;
            }
            fixed.insert(pos, x);
        }
        self.table(level, q).contains(&fixed)
    }
}

fn sort_contexts(mut v: Vec<Context>) -> Vec<Context> {
    v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    v.dedup();
    v
}

fn minimal_contexts_with(faces: &mut Faces<'_>) -> Vec<Context> {
    let tree = faces.tree;
    let ord = tree.ordering().clone();
    let mut found = BTreeSet::new();
    for level in 2..=tree.p() {
        if tree.stages(level).is_empty() {
            continue;
        }
        for q in 0..level - 1 {
            for face in faces.table(level, q).maximal_faces() {
                found.insert(
                    Context::from_pairs(face.into_iter().map(|(pos, x)| (ord.var_at(pos), x)))
                        .expect("distinct"),
                );
            }
        }
    }
    if found.is_empty() {
        return vec![Context::empty()];
    }
    sort_contexts(found.into_iter().collect())
}

/// The minimal contexts of a tree, shortest first. A tree with no
/// independence relations has the single minimal context `∅`.
pub fn minimal_contexts(tree: &CStree) -> Vec<Context> {
    minimal_contexts_with(&mut Faces::new(tree))
}

/// Context graphs indexed by context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextGraphSet {
    pub contexts: Vec<Context>,
    pub graphs: BTreeMap<Context, Dag>,
    /// Induced causal order of the remaining variables, per context.
    pub orders: BTreeMap<Context, Vec<usize>>,
}

impl ContextGraphSet {
    pub fn graph(&self, ctx: &Context) -> Option<&Dag> {
        self.graphs.get(ctx)
    }

    /// Minimal contexts followed by edge lists.
    pub fn report(&self, vars: &[VariableSpec]) -> String {
        let mut s = format!("minimal contexts: {}\n", self.contexts.len());
        for c in &self.contexts {
            s.push_str(&format!("context {}\n", c.display(vars)));
            let g = &self.graphs[c];
            if g.edges().is_empty() {
                s.push_str("  (no edges)\n");
            }
            for &(a, b) in g.edges() {
                s.push_str(&format!("  {} -> {}\n", vars[a].name(), vars[b].name()));
            }
        }
        s
    }

    /// One DOT digraph per context.
    pub fn to_dot(&self, vars: &[VariableSpec]) -> String {
        self.contexts
            .iter()
            .map(|c| {
                self.graphs[c].to_dot(&format!("context {}", c.display(vars)), &|v| {
                    vars[v].name().to_string()
                })
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn context_graph(
    faces: &mut Faces<'_>,
    ctx: &Context,
    minimal: &[Context],
    done: &BTreeMap<Context, Dag>,
) -> (Vec<usize>, Dag) {
    let tree = faces.tree;
    let ord = tree.ordering().clone();
    let order: Vec<usize> = ord
        .as_slice()
        .iter()
        .copied()
        .filter(|&v| !ctx.contains_var(v))
        .collect();
    let subs: Vec<&Context> = minimal
        .iter()
        .filter(|c| c.len() < ctx.len() && c.is_subcontext_of(ctx))
        .collect();
    let mut g = Dag::empty(order.iter().copied());
    for (jk, &k) in order.iter().enumerate() {
        let level = ord.position(k) + 1;
        for &i in &order[..jk] {
            let mut absent = faces.independent_in(level, ord.position(i), ctx);
            if !absent {
                let cond: BTreeSet<usize> =
                    order[..jk].iter().copied().filter(|&u| u != i).collect();
                for c in &subs {
                    let mut cond = cond.clone();
                    cond.extend(ctx.vars().filter(|&u| !c.contains_var(u)));
                    if let Some(h) = done.get(*c) {
                        if h.d_separated_pair(i, k, &cond).unwrap_or(false) {
                            absent = true;
                            break;
                        }
                    }
                }
            }
            if !absent {
                g.add_edge(i, k).expect("edges follow the order");
            }
        }
    }
    (order, g)
}

fn graphs_for(faces: &mut Faces<'_>, contexts: &[Context], minimal: &[Context]) -> ContextGraphSet {
    let contexts = sort_contexts(contexts.to_vec());
    let mut graphs = BTreeMap::new();
    let mut orders = BTreeMap::new();
    for c in &contexts {
        let (order, g) = context_graph(faces, c, minimal, &graphs);
        graphs.insert(c.clone(), g);
        orders.insert(c.clone(), order);
    }
    ContextGraphSet {
        contexts,
        graphs,
        orders,
    }
}

/// The context graph of every minimal context.
pub fn context_graphs(tree: &CStree) -> ContextGraphSet {
    let mut faces = Faces::new(tree);
    let minimal = minimal_contexts_with(&mut faces);
    graphs_for(&mut faces, &minimal, &minimal)
}

/// Context graphs of the minimal contexts together with the empty context,
/// whose graph is the minimal I-MAP of the relations holding without any
/// context.
pub fn context_graphs_with_empty(tree: &CStree) -> ContextGraphSet {
    let mut faces = Faces::new(tree);
    let minimal = minimal_contexts_with(&mut faces);
    let mut all = minimal.clone();
    if !all.contains(&Context::empty()) {
        all.push(Context::empty());
    }
    graphs_for(&mut faces, &all, &minimal)
}

/// Whether two trees over the same variables are statistically equivalent:
/// equal minimal contexts, and per context equal skeletons and
/// v-structures.
pub fn cstree_equivalent(t1: &CStree, t2: &CStree) -> Result<bool> {
    if !t1.same_variables(t2) {
        return Err(Error::VariableMismatch(
            "trees are defined over different variables".into(),
        ));
    }
    let g1 = context_graphs(t1);
    let g2 = context_graphs(t2);
    Ok(graph_sets_equivalent(&g1, &g2))
}

pub(crate) fn graph_sets_equivalent(g1: &ContextGraphSet, g2: &ContextGraphSet) -> bool {
    if g1.contexts != g2.contexts {
        return false;
    }
    g1.contexts.iter().all(|c| {
        let (a, b) = (&g1.graphs[c], &g2.graphs[c]);
        a.skeleton() == b.skeleton() && a.v_structures() == b.v_structures()
    })
}
