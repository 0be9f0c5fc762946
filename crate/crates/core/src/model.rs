//! Variables, orderings, contexts and stagings.
//!
//! Prefixes of length `m` are mixed-radix integers over the first `m`
//! variables of the causal ordering, most significant digit first, so that
//! integer order is lexicographic order. Level `k` (1-based) houses the
//! prefixes of length `k - 1` and carries the distribution of the `k`-th
//! variable in the ordering. Stages covering a single prefix are implicit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableSpec {
    name: String,
    cardinality: usize,
    labels: Option<Vec<String>>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Result<Self> {
        let name = name.into();
        if cardinality < 2 {
            return Err(Error::InvalidVariable(format!(
                "{name}: cardinality must be at least 2, got {cardinality}"
            )));
        }
        Ok(Self {
            name,
            cardinality,
            labels: None,
        })
    }

    pub fn with_labels(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::InvalidVariable(format!("{name}: labels are not distinct")));
        }
        let mut v = Self::new(name, labels.len())?;
        v.labels = Some(labels);
        Ok(v)
    }

    /// Binary variables named `X1..Xp`.
    pub fn binary(p: usize) -> Vec<Self> {
        (1..=p)
            .map(|i| Self::new(format!("X{i}"), 2).expect("cardinality 2"))
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Printable label of outcome `i`.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Outcome index for a label, falling back to numeric indices when the
    /// variable carries no labels.
    pub fn outcome_of(&self, label: &str) -> Option<usize> {
        match &self.labels {
            Some(l) => l.iter().position(|x| x == label),
            None => label.parse::<usize>().ok().filter(|&i| i < self.cardinality),
        }
    }
}

/// A causal ordering: `perm[pos]` is the variable at position `pos`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ordering {
    perm: Vec<usize>,
    pos: Vec<usize>,
}

impl Ordering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let p = perm.len();
        let mut pos = vec![usize::MAX; p];
        for (i, &v) in perm.iter().enumerate() {
            if v >= p || pos[v] != usize::MAX {
                return Err(Error::InvalidOrdering(format!("{perm:?} is not a permutation")));
            }
            pos[v] = i;
        }
        Ok(Self { perm, pos })
    }

    pub fn identity(p: usize) -> Self {
        Self::new((0..p).collect()).expect("identity")
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn var_at(&self, pos: usize) -> usize {
        self.perm[pos]
    }

    pub fn position(&self, var: usize) -> usize {
        self.pos[var]
    }
}

/// A partial assignment of outcomes to variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    assignments: BTreeMap<usize, usize>,
}

impl Context {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (var, val) in pairs {
            if assignments.insert(var, val).is_some() {
                return Err(Error::InvalidContext(format!("variable {var} assigned twice")));
            }
        }
        Ok(Self { assignments })
    }

    pub fn single(var: usize, val: usize) -> Self {
        let mut c = Self::empty();
        c.assignments.insert(var, val);
        c
    }

    pub fn get(&self, var: usize) -> Option<usize> {
        self.assignments.get(&var).copied()
    }

    pub fn insert(&mut self, var: usize, val: usize) -> Option<usize> {
        self.assignments.insert(var, val)
    }

    pub fn remove(&mut self, var: usize) -> Option<usize> {
        self.assignments.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn contains_var(&self, var: usize) -> bool {
        self.assignments.contains_key(&var)
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments.iter().map(|(&k, &v)| (k, v))
    }

    /// `self` assigns a subset of the variables of `other`, with equal values.
    pub fn is_subcontext_of(&self, other: &Context) -> bool {
        self.iter().all(|(k, v)| other.get(k) == Some(v))
    }

    /// No variable is assigned different values by the two contexts.
    pub fn is_consistent_with(&self, other: &Context) -> bool {
        self.iter().all(|(k, v)| other.get(k).is_none_or(|w| w == v))
    }

    pub fn without(&self, var: usize) -> Context {
        let mut c = self.clone();
        c.remove(var);
        c
    }

    pub fn restricted_to(&self, keep: impl Fn(usize) -> bool) -> Context {
        Context {
            assignments: self
                .assignments
                .iter()
                .filter(|(&k, _)| keep(k))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }

    pub fn validate(&self, vars: &[VariableSpec]) -> Result<()> {
        for (k, v) in self.iter() {
            let spec = vars
                .get(k)
                .ok_or_else(|| Error::InvalidContext(format!("unknown variable index {k}")))?;
            if v >= spec.cardinality() {
                return Err(Error::InvalidContext(format!(
                    "outcome {v} out of range for {}",
                    spec.name()
                )));
            }
        }
        Ok(())
    }

    /// Human-readable rendering such as `X1=0, X3=1`.
    pub fn display(&self, vars: &[VariableSpec]) -> String {
        if self.is_empty() {
            return "<empty>".to_string();
        }
        self.iter()
            .map(|(k, v)| format!("{}={}", vars[k].name(), vars[k].label(v)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Variable name to outcome label.
    pub fn to_labels(&self, vars: &[VariableSpec]) -> BTreeMap<String, String> {
        self.iter()
            .map(|(k, v)| (vars[k].name().to_string(), vars[k].label(v)))
            .collect()
    }

    /// Inverse of [`Context::to_labels`]; outcomes may also be given by index.
    pub fn from_labels(vars: &[VariableSpec], labels: &BTreeMap<String, String>) -> Result<Self> {
        let mut ctx = Context::empty();
        for (name, label) in labels {
            let var = vars
                .iter()
                .position(|v| v.name() == name)
                .ok_or_else(|| Error::InvalidVariable(format!("unknown variable {name}")))?;
            let x = vars[var].outcome_of(label).ok_or_else(|| {
                Error::InvalidContext(format!("unknown outcome {label} of {name}"))
            })?;
            ctx.insert(var, x);
        }
        Ok(ctx)
    }
}

/// A stage: all prefixes at `level` agreeing with `context`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stage {
    pub level: usize,
    pub context: Context,
}

/// Mixed-radix prefix arithmetic for one ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSpace {
    dims: Vec<usize>,
}

impl PrefixSpace {
    pub fn new(vars: &[VariableSpec], ordering: &Ordering) -> Self {
        Self {
            dims: ordering
                .as_slice()
                .iter()
                .map(|&v| vars[v].cardinality())
                .collect(),
        }
    }

    /// Cardinality at each position of the ordering.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of prefixes of length `m`.
    pub fn count(&self, m: usize) -> usize {
        self.dims[..m].iter().product()
    }

    pub fn decode(&self, m: usize, mut idx: usize) -> Vec<usize> {
        let mut digits = vec![0; m];
        for i in (0..m).rev() {
            digits[i] = idx % self.dims[i];
            idx /= self.dims[i];
        }
        digits
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&d, &r)| acc * r + d)
    }

    /// Digit at position `pos` of a prefix of length `m`.
    pub fn digit(&self, m: usize, idx: usize, pos: usize) -> usize {
        let stride: usize = self.dims[pos + 1..m].iter().product();
        (idx / stride) % self.dims[pos]
    }

    /// Indices of all prefixes of length `m` whose digits match `fixed`
    /// (position, value) pairs; ascending.
    pub fn members(&self, m: usize, fixed: &[(usize, usize)]) -> Vec<usize> {
        let mut digits = vec![0usize; m];
        let mut is_fixed = vec![false; m];
        for &(p, v) in fixed {
            digits[p] = v;
            is_fixed[p] = true;
        }
        let free: Vec<usize> = (0..m).filter(|&p| !is_fixed[p]).collect();
        let total: usize = free.iter().map(|&p| self.dims[p]).product();
        let mut out = Vec::with_capacity(total);
        for _ in 0..total {
            out.push(self.encode(&digits));
            for &p in free.iter().rev() {
                digits[p] += 1;
                if digits[p] < self.dims[p] {
                    break;
                }
                digits[p] = 0;
            }
        }
        out
    }
}

/// A staging given by explicit member lists, the input form for validation.
///
/// `levels[k - 1]` lists the stages of level `k` as prefix indices. With
/// `implicit_singletons`, uncovered prefixes are stages of their own;
/// otherwise every prefix must be listed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staging {
    pub levels: Vec<Vec<Vec<usize>>>,
    pub implicit_singletons: bool,
}

/// Checks that a staging partitions every level into subcubes.
pub fn validate_cstree(
    staging: &Staging,
    vars: &[VariableSpec],
    ordering: &Ordering,
) -> std::result::Result<(), Violation> {
    staging_contexts(staging, vars, ordering).map(|_| ())
}

/// Validates and returns the context of every non-singleton stage.
fn staging_contexts(
    staging: &Staging,
    vars: &[VariableSpec],
    ordering: &Ordering,
) -> std::result::Result<Vec<Vec<Context>>, Violation> {
    let p = vars.len();
    if staging.levels.len() != p {
        return Err(Violation::LevelCount {
            expected: p,
            found: staging.levels.len(),
        });
    }
    let space = PrefixSpace::new(vars, ordering);
    let mut out = Vec::with_capacity(p);
    for (li, stages) in staging.levels.iter().enumerate() {
        let level = li + 1;
        let m = level - 1;
        let n = space.count(m);
        let mut owner = vec![false; n];
        let mut contexts = Vec::new();
        for (si, members) in stages.iter().enumerate() {
            if members.is_empty() {
                return Err(Violation::EmptyStage { level, stage: si });
            }
            for &x in members {
                if x >= n {
                    return Err(Violation::PrefixOutOfRange { level, prefix: x });
                }
                if owner[x] {
                    return Err(Violation::Overlap { level, prefix: x });
                }
                owner[x] = true;
            }
            let ctx = subcube_context(&space, m, members, ordering)
                .ok_or(Violation::NonSubcube { level, stage: si })?;
            if members.len() > 1 {
                contexts.push(ctx);
            }
        }
        if !staging.implicit_singletons {
            if let Some(x) = owner.iter().position(|&o| !o) {
                return Err(Violation::Gap { level, prefix: x });
            }
        }
        contexts.sort();
        out.push(contexts);
    }
    Ok(out)
}

/// The context whose prefixes are exactly `members`, if any.
fn subcube_context(
    space: &PrefixSpace,
    m: usize,
    members: &[usize],
    ordering: &Ordering,
) -> Option<Context> {
    let first = space.decode(m, members[0]);
    let mut agree = vec![true; m];
    for &x in &members[1..] {
        let d = space.decode(m, x);
        for pos in 0..m {
            if d[pos] != first[pos] {
                agree[pos] = false;
            }
        }
    }
    let size: usize = (0..m).filter(|&p| !agree[p]).map(|p| space.dims[p]).product();
    let distinct: BTreeSet<usize> = members.iter().copied().collect();
    if distinct.len() != members.len() || size != members.len() {
        return None;
    }
    Some(Context {
        assignments: (0..m)
            .filter(|&p| agree[p])
            .map(|p| (ordering.var_at(p), first[p]))
            .collect(),
    })
}

/// Common interface of staged trees for scoring and comparison.
pub trait StagedModel {
    fn variables(&self) -> &[VariableSpec];
    fn ordering(&self) -> &Ordering;
    /// Stage id of every prefix at level `k`; ids are numbered by first
    /// occurrence in prefix order.
    fn level_labels(&self, k: usize) -> Vec<usize>;

    fn stage_count(&self, k: usize) -> usize {
        self.level_labels(k).into_iter().max().map_or(0, |m| m + 1)
    }

    fn total_stages(&self) -> usize {
        (1..=self.variables().len()).map(|k| self.stage_count(k)).sum()
    }
}

/// Relabels a stage assignment so that ids appear in first-occurrence order.
pub(crate) fn canonical_labels(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            let next = map.len();
            *map.entry(r).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CStree {
    variables: Vec<VariableSpec>,
    ordering: Ordering,
    stages: Vec<Vec<Context>>,
    space: PrefixSpace,
}

impl CStree {
    /// Builds a tree from the contexts of its non-singleton stages,
    /// `stages[k - 1]` for level `k`. Contexts fixing every preceding
    /// variable are singletons and are dropped.
    pub fn new(
        variables: Vec<VariableSpec>,
        ordering: Ordering,
        stages: Vec<Vec<Context>>,
    ) -> Result<Self> {
        let p = variables.len();
        if ordering.len() != p {
            return Err(Error::InvalidOrdering(format!(
                "ordering has {} entries for {p} variables",
                ordering.len()
            )));
        }
        if stages.len() != p {
            return Err(Violation::LevelCount {
                expected: p,
                found: stages.len(),
            }
            .into());
        }
        let space = PrefixSpace::new(&variables, &ordering);
        let mut clean = Vec::with_capacity(p);
        for (li, level_stages) in stages.into_iter().enumerate() {
            let level = li + 1;
            let m = level - 1;
            let mut owner = vec![false; space.count(m)];
            let mut kept = Vec::new();
            for (si, ctx) in level_stages.into_iter().enumerate() {
                ctx.validate(&variables)?;
                for var in ctx.vars() {
                    if ordering.position(var) >= m {
                        return Err(Violation::ContextOutOfPrefix {
                            level,
                            stage: si,
                            var,
                        }
                        .into());
                    }
                }
                let fixed: Vec<(usize, usize)> =
                    ctx.iter().map(|(v, x)| (ordering.position(v), x)).collect();
                for x in space.members(m, &fixed) {
                    if owner[x] {
                        return Err(Violation::Overlap { level, prefix: x }.into());
                    }
                    owner[x] = true;
                }
                if ctx.len() < m {
                    kept.push(ctx);
                }
            }
            kept.sort();
            clean.push(kept);
        }
        Ok(Self {
            variables,
            ordering,
            stages: clean,
            space,
        })
    }

    pub fn from_staging(
        variables: Vec<VariableSpec>,
        ordering: Ordering,
        staging: &Staging,
    ) -> Result<Self> {
        let contexts = staging_contexts(staging, &variables, &ordering)?;
        Self::new(variables, ordering, contexts)
    }

    /// Every prefix in its own stage.
    pub fn full_dependence(variables: Vec<VariableSpec>, ordering: Ordering) -> Result<Self> {
        let p = variables.len();
        Self::new(variables, ordering, vec![Vec::new(); p])
    }

    /// The staging of a DAG model: level `k` has one stage per outcome of
    /// the parents of its variable. `parents[v]` must precede `v`.
    pub fn from_parents(
        variables: Vec<VariableSpec>,
        ordering: Ordering,
        parents: &[Vec<usize>],
    ) -> Result<Self> {
        let p = variables.len();
        if parents.len() != p {
            return Err(Error::InvalidArgument(format!(
                "expected parent sets for {p} variables"
            )));
        }
        let mut stages = Vec::with_capacity(p);
        for pos in 0..p {
            let v = ordering.var_at(pos);
            let pa: BTreeSet<usize> = parents[v].iter().copied().collect();
            for &u in &pa {
                if u >= p || ordering.position(u) >= pos {
                    return Err(Error::InvalidArgument(format!(
                        "parent {u} of {v} does not precede it"
                    )));
                }
            }
            let pa: Vec<usize> = pa.into_iter().collect();
            let mut level = Vec::new();
            if pa.len() < pos {
                for_each_assignment(&pa, &variables, |ctx| level.push(ctx));
            }
            stages.push(level);
        }
        Self::new(variables, ordering, stages)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn p(&self) -> usize {
        self.variables.len()
    }

    pub fn prefix_space(&self) -> &PrefixSpace {
        &self.space
    }

    /// Variable whose distribution level `k` carries.
    pub fn level_variable(&self, k: usize) -> usize {
        self.ordering.var_at(k - 1)
    }

    /// Contexts of the non-singleton stages of level `k`.
    pub fn stages(&self, k: usize) -> &[Context] {
        &self.stages[k - 1]
    }

    /// Contexts of the non-singleton stages, by level.
    pub fn stage_contexts(&self) -> &[Vec<Context>] {
        &self.stages
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.p() {
            return Err(Error::LevelOutOfRange {
                level: k,
                p: self.p(),
            });
        }
        Ok(())
    }

    /// All prefixes of length `k`, lexicographic in the ordering.
    pub fn enumerate_prefixes(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        if k > self.p() {
            return Err(Error::LevelOutOfRange {
                level: k,
                p: self.p(),
            });
        }
        Ok((0..self.space.count(k))
            .map(|i| self.space.decode(k, i))
            .collect())
    }

    /// Prefixes of level `k` matched by `ctx`.
    pub fn context_members(&self, k: usize, ctx: &Context) -> Vec<usize> {
        let fixed: Vec<(usize, usize)> = ctx
            .iter()
            .map(|(v, x)| (self.ordering.position(v), x))
            .collect();
        self.space.members(k - 1, &fixed)
    }

    /// Context of the singleton stage holding a prefix.
    pub fn prefix_context(&self, digits: &[usize]) -> Context {
        Context {
            assignments: digits
                .iter()
                .enumerate()
                .map(|(pos, &x)| (self.ordering.var_at(pos), x))
                .collect(),
        }
    }

    /// The stage containing a prefix of length `k - 1`.
    pub fn stage_of(&self, prefix: &[usize]) -> Result<Stage> {
        let level = prefix.len() + 1;
        self.check_level(level)?;
        for (pos, &x) in prefix.iter().enumerate() {
            if x >= self.space.dims[pos] {
                return Err(Error::InvalidContext(format!(
                    "outcome {x} out of range at position {pos}"
                )));
            }
        }
        let full = self.prefix_context(prefix);
        let context = self.stages[level - 1]
            .iter()
            .find(|c| c.is_subcontext_of(&full))
            .cloned()
            .unwrap_or(full);
        Ok(Stage { level, context })
    }

    /// Every stage of level `k`, singletons included, ordered by first member.
    pub fn all_stages(&self, k: usize) -> Vec<Stage> {
        let labels = self.level_labels(k);
        let mut seen = vec![false; labels.len()];
        let mut out = Vec::new();
        for (idx, &l) in labels.iter().enumerate() {
            if l >= seen.len() || seen[l] {
                continue;
            }
            seen[l] = true;
            let digits = self.space.decode(k - 1, idx);
            out.push(self.stage_of(&digits).expect("valid prefix"));
        }
        out
    }

    /// Builds the subtree obtained by keeping only branches consistent with
    /// `ctx` and contracting the levels of the fixed variables.
    pub fn context_specific_subtree(&self, ctx: &Context) -> Result<ContextSubtree> {
        ctx.validate(&self.variables)?;
        let mut levels = Vec::new();
        for pos in 0..self.p() {
            let v = self.ordering.var_at(pos);
            if ctx.contains_var(v) {
                continue;
            }
            let k = pos + 1;
            let fixed: Vec<(usize, usize)> = ctx
                .iter()
                .map(|(u, x)| (self.ordering.position(u), x))
                .filter(|&(p, _)| p < pos)
                .collect();
            let nodes = self.space.members(pos, &fixed);
            let labels = self.level_labels(k);
            let stages = nodes.iter().map(|&x| labels[x]).collect();
            levels.push(SubtreeLevel {
                variable: v,
                original_level: k,
                nodes,
                stages,
            });
        }
        Ok(ContextSubtree {
            context: ctx.clone(),
            variables: levels.iter().map(|l| l.variable).collect(),
            levels,
            cardinalities: self.variables.iter().map(|v| v.cardinality()).collect(),
        })
    }

    pub fn to_general(&self) -> GeneralStagedTree {
        let levels = (1..=self.p())
            .map(|k| {
                self.stages(k)
                    .iter()
                    .map(|c| self.context_members(k, c))
                    .collect()
            })
            .collect();
        GeneralStagedTree::new(self.variables.clone(), self.ordering.clone(), levels)
            .expect("a valid tree is a valid staged tree")
    }

    /// Same variables (names and cardinalities) as `other`.
    pub fn same_variables(&self, other: &CStree) -> bool {
        self.variables.len() == other.variables.len()
            && self
                .variables
                .iter()
                .zip(&other.variables)
                .all(|(a, b)| a.name() == b.name() && a.cardinality() == b.cardinality())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeJson::from_tree(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TreeJson = serde_json::from_str(s)?;
        doc.into_tree()
    }
}

impl StagedModel for CStree {
    fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    fn level_labels(&self, k: usize) -> Vec<usize> {
        let n = self.space.count(k - 1);
        let mut raw: Vec<usize> = (0..n).map(|i| usize::MAX - i).collect();
        for (si, ctx) in self.stages[k - 1].iter().enumerate() {
            for x in self.context_members(k, ctx) {
                raw[x] = si;
            }
        }
        canonical_labels(&raw)
    }
}

/// Calls `f` with every full assignment of `vars`, lexicographically.
pub(crate) fn for_each_assignment(
    vars: &[usize],
    specs: &[VariableSpec],
    mut f: impl FnMut(Context),
) {
    let mut digits = vec![0usize; vars.len()];
    loop {
        f(Context::from_pairs(vars.iter().copied().zip(digits.iter().copied())).expect("distinct"));
        let mut i = vars.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < specs[vars[i]].cardinality() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// One level of a context-specific subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtreeLevel {
    pub variable: usize,
    /// Level of the same variable in the original tree.
    pub original_level: usize,
    /// Original prefix index of every node, in subtree order.
    pub nodes: Vec<usize>,
    /// Original stage label (see [`StagedModel::level_labels`]) of every node.
    pub stages: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSubtree {
    pub context: Context,
    /// Remaining variables in the induced order.
    pub variables: Vec<usize>,
    pub levels: Vec<SubtreeLevel>,
    cardinalities: Vec<usize>,
}

impl ContextSubtree {
    /// Number of vertices at each depth, root and leaves included.
    pub fn vertex_counts(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.levels.iter().map(|l| l.nodes.len()).collect();
        let leaves = match self.levels.last() {
            Some(l) => l.nodes.len() * self.cardinalities[l.variable],
            None => 1,
        };
        out.push(leaves);
        out
    }
}

/// A staged tree with arbitrary (not necessarily subcube) stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralStagedTree {
    variables: Vec<VariableSpec>,
    ordering: Ordering,
    levels: Vec<Vec<Vec<usize>>>,
    space: PrefixSpace,
}

impl GeneralStagedTree {
    /// `levels[k - 1]` lists the non-singleton stages of level `k` as
    /// prefix indices; uncovered prefixes are singletons.
    pub fn new(
        variables: Vec<VariableSpec>,
        ordering: Ordering,
        levels: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let p = variables.len();
        if ordering.len() != p {
            return Err(Error::InvalidOrdering("ordering length mismatch".into()));
        }
        if levels.len() != p {
            return Err(Violation::LevelCount {
                expected: p,
                found: levels.len(),
            }
            .into());
        }
        let space = PrefixSpace::new(&variables, &ordering);
        let mut clean = Vec::with_capacity(p);
        for (li, stages) in levels.into_iter().enumerate() {
            let level = li + 1;
            let n = space.count(level - 1);
            let mut owner = vec![false; n];
            let mut kept = Vec::new();
            for (si, mut members) in stages.into_iter().enumerate() {
                if members.is_empty() {
                    return Err(Violation::EmptyStage { level, stage: si }.into());
                }
                members.sort_unstable();
                for &x in &members {
                    if x >= n {
                        return Err(Violation::PrefixOutOfRange { level, prefix: x }.into());
                    }
                    if owner[x] {
                        return Err(Violation::Overlap { level, prefix: x }.into());
                    }
                    owner[x] = true;
                }
                if members.len() > 1 {
                    kept.push(members);
                }
            }
            kept.sort();
            clean.push(kept);
        }
        Ok(Self {
            variables,
            ordering,
            levels: clean,
            space,
        })
    }

    pub fn full_dependence(variables: Vec<VariableSpec>, ordering: Ordering) -> Result<Self> {
        let p = variables.len();
        Self::new(variables, ordering, vec![Vec::new(); p])
    }

    /// Builds a staged tree from a label per prefix at every level.
    pub fn from_labels(
        variables: Vec<VariableSpec>,
        ordering: Ordering,
        labels: &[Vec<usize>],
    ) -> Result<Self> {
        let levels = labels
            .iter()
            .map(|lab| {
                let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (i, &l) in lab.iter().enumerate() {
                    groups.entry(l).or_default().push(i);
                }
                groups.into_values().collect()
            })
            .collect();
        Self::new(variables, ordering, levels)
    }

    pub fn prefix_space(&self) -> &PrefixSpace {
        &self.space
    }

    /// Non-singleton stages of level `k` as sorted prefix lists.
    pub fn stages(&self, k: usize) -> &[Vec<usize>] {
        &self.levels[k - 1]
    }

    /// Converts to a CStree when every stage is a subcube.
    pub fn to_cstree(&self) -> Result<CStree> {
        CStree::from_staging(
            self.variables.clone(),
            self.ordering.clone(),
            &Staging {
                levels: self.levels.clone(),
                implicit_singletons: true,
            },
        )
    }
}

impl StagedModel for GeneralStagedTree {
    fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    fn level_labels(&self, k: usize) -> Vec<usize> {
        let n = self.space.count(k - 1);
        let mut raw: Vec<usize> = (0..n).map(|i| usize::MAX - i).collect();
        for (si, members) in self.levels[k - 1].iter().enumerate() {
            for &x in members {
                raw[x] = si;
            }
        }
        canonical_labels(&raw)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VarJson {
    name: String,
    cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LabelJson {
    Text(String),
    Index(u64),
}

#[derive(Debug, Serialize, Deserialize)]
struct StageJson {
    level: usize,
    context: BTreeMap<String, LabelJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeJson {
    variables: Vec<VarJson>,
    order: Vec<String>,
    stages: Vec<StageJson>,
}

impl TreeJson {
    fn from_tree(t: &CStree) -> Self {
        let vars = &t.variables;
        Self {
            variables: vars
                .iter()
                .map(|v| VarJson {
                    name: v.name().to_string(),
                    cardinality: v.cardinality(),
                    labels: v.labels().map(|l| l.to_vec()),
                })
                .collect(),
            order: t
                .ordering
                .as_slice()
                .iter()
                .map(|&v| vars[v].name().to_string())
                .collect(),
            stages: t
                .stages
                .iter()
                .enumerate()
                .flat_map(|(li, ctxs)| {
                    ctxs.iter().map(move |c| StageJson {
                        level: li + 1,
                        context: c
                            .iter()
                            .map(|(k, x)| {
                                (vars[k].name().to_string(), LabelJson::Text(vars[k].label(x)))
                            })
                            .collect(),
                    })
                })
                .collect(),
        }
    }

    fn into_tree(self) -> Result<CStree> {
        let mut vars = Vec::with_capacity(self.variables.len());
        for v in self.variables {
            let spec = match v.labels {
                Some(l) => {
                    if l.len() != v.cardinality {
                        return Err(Error::InvalidVariable(format!(
                            "{}: {} labels for cardinality {}",
                            v.name,
                            l.len(),
                            v.cardinality
                        )));
                    }
                    VariableSpec::with_labels(v.name, l)?
                }
                None => VariableSpec::new(v.name, v.cardinality)?,
            };
            vars.push(spec);
        }
        let index_of = |name: &str| -> Result<usize> {
            vars.iter()
                .position(|v| v.name() == name)
                .ok_or_else(|| Error::InvalidVariable(format!("unknown variable {name}")))
        };
        let names: BTreeSet<&str> = vars.iter().map(|v| v.name()).collect();
        if names.len() != vars.len() {
            return Err(Error::InvalidVariable("duplicate variable names".into()));
        }
        let perm = self
            .order
            .iter()
            .map(|n| index_of(n))
            .collect::<Result<Vec<_>>>()?;
        let ordering = Ordering::new(perm)?;
        let p = vars.len();
        let mut stages = vec![Vec::new(); p];
        for s in self.stages {
            if s.level == 0 || s.level > p {
                return Err(Error::LevelOutOfRange { level: s.level, p });
            }
            let mut ctx = Context::empty();
            for (name, label) in s.context {
                let var = index_of(&name)?;
                let text = match label {
                    LabelJson::Text(t) => t,
                    LabelJson::Index(i) => i.to_string(),
                };
                let x = vars[var].outcome_of(&text).ok_or_else(|| {
                    Error::InvalidContext(format!("unknown outcome {text} of {name}"))
                })?;
                ctx.insert(var, x);
            }
            stages[s.level - 1].push(ctx);
        }
        CStree::new(vars, ordering, stages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(p: usize) -> Vec<VariableSpec> {
        VariableSpec::binary(p)
    }

    #[test]
    fn prefixes_are_lexicographic() {
        let t = CStree::full_dependence(bin(2), Ordering::identity(2)).unwrap();
        assert_eq!(t.enumerate_prefixes(1).unwrap(), vec![vec![0], vec![1]]);
        assert_eq!(t.enumerate_prefixes(2).unwrap().len(), 4);
        let vars = vec![
            VariableSpec::new("A", 2).unwrap(),
            VariableSpec::new("B", 3).unwrap(),
        ];
        let t = CStree::full_dependence(vars, Ordering::identity(2)).unwrap();
        let pre = t.enumerate_prefixes(2).unwrap();
        assert_eq!(pre.len(), 6);
        assert_eq!(pre[4], vec![1, 1]);
        assert!(t.enumerate_prefixes(3).is_err());
    }

    #[test]
    fn non_subcube_is_rejected() {
        let staging = Staging {
            levels: vec![vec![], vec![], vec![vec![0, 3]]],
            implicit_singletons: true,
        };
        let err = validate_cstree(&staging, &bin(3), &Ordering::identity(3)).unwrap_err();
        assert_eq!(err, Violation::NonSubcube { level: 3, stage: 0 });
    }

    #[test]
    fn gaps_and_overlaps() {
        let explicit = Staging {
            levels: vec![vec![vec![0]], vec![vec![0, 1]]],
            implicit_singletons: false,
        };
        assert!(validate_cstree(&explicit, &bin(2), &Ordering::identity(2)).is_ok());
        let gap = Staging {
            levels: vec![vec![vec![0]], vec![vec![0]]],
            implicit_singletons: false,
        };
        assert_eq!(
            validate_cstree(&gap, &bin(2), &Ordering::identity(2)),
            Err(Violation::Gap { level: 2, prefix: 1 })
        );
        let overlap = Staging {
            levels: vec![vec![], vec![vec![0, 1], vec![1]]],
            implicit_singletons: true,
        };
        assert_eq!(
            validate_cstree(&overlap, &bin(2), &Ordering::identity(2)),
            Err(Violation::Overlap { level: 2, prefix: 1 })
        );
    }

    #[test]
    fn stage_lookup() {
        let t = CStree::new(
            bin(3),
            Ordering::identity(3),
            vec![vec![], vec![], vec![Context::single(0, 0)]],
        )
        .unwrap();
        let s = t.stage_of(&[0, 1]).unwrap();
        assert_eq!(s.context, Context::single(0, 0));
        let s = t.stage_of(&[1, 1]).unwrap();
        assert_eq!(s.context.len(), 2);
        assert_eq!(t.stage_count(3), 3);
        assert_eq!(t.all_stages(3).len(), 3);
    }

    #[test]
    fn subtree_of_full_dependence() {
        let t = CStree::full_dependence(bin(3), Ordering::identity(3)).unwrap();
        let sub = t.context_specific_subtree(&Context::single(0, 0)).unwrap();
        assert_eq!(sub.variables, vec![1, 2]);
        assert_eq!(sub.vertex_counts(), vec![1, 2, 4]);
        assert_eq!(sub.levels[1].nodes, vec![0, 1]);
        let id = t.context_specific_subtree(&Context::empty()).unwrap();
        assert_eq!(id.variables, vec![0, 1, 2]);
        assert_eq!(id.vertex_counts(), vec![1, 2, 4, 8]);
    }

    #[test]
    fn dag_staging_validates() {
        let t = CStree::from_parents(bin(3), Ordering::identity(3), &[vec![], vec![0], vec![1]])
            .unwrap();
        assert_eq!(t.stages(3).len(), 2);
        assert_eq!(t.total_stages(), 5);
    }

    #[test]
    fn json_round_trip() {
        let t = CStree::new(
            bin(3),
            Ordering::new(vec![2, 0, 1]).unwrap(),
            vec![vec![], vec![], vec![Context::single(2, 1)]],
        )
        .unwrap();
        let s = t.to_json();
        let back = CStree::from_json(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), s);
    }
}
