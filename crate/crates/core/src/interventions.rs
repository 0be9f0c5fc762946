//! Intervention targets, interventional CStrees and their I-DAGs, scores
//! and target search.
//!
//! An interventional model is the base staging plus a slot-sharing
//! relation across copies: a stage keeps one parameter slot for every copy
//! that does not target it, and each targeting copy owns a slot of its own.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::{context_graphs_with_empty, minimal_contexts};
use crate::dag::{augment_idag_at, IDag};
use crate::error::{Error, Result};
use crate::estimation::{stage_loglik, ContingencyTable, Score};
use crate::learning::scores_tie;
use crate::model::{CStree, Context, Stage, StagedModel, VariableSpec};

/// A set of tree vertices, each a prefix (outcomes along the ordering).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionTarget {
    pub name: String,
    pub nodes: BTreeSet<Vec<usize>>,
}

impl InterventionTarget {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            nodes: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_stage(tree: &CStree, s: &Stage) -> Result<()> {
    if s.level == 0 || s.level > tree.p() {
        return Err(Error::LevelOutOfRange {
            level: s.level,
            p: tree.p(),
        });
    }
    s.context.validate(tree.variables())?;
    let members = tree.context_members(s.level, &s.context);
    let ok = match members.first() {
        Some(&m) => {
            let digits = tree.prefix_space().decode(s.level - 1, m);
            tree.stage_of(&digits)? == *s
        }
        None => false,
    };
    if !ok {
        return Err(Error::InvalidTarget(format!(
            "level {} context {} is not a stage of the tree",
            s.level,
            s.context.display(tree.variables())
        )));
    }
    Ok(())
}

/// All children of all members of the given stages.
pub fn target_from_stages(
    tree: &CStree,
    stages: &BTreeSet<Stage>,
    name: impl Into<String>,
) -> Result<InterventionTarget> {
    let space = tree.prefix_space();
    let mut nodes = BTreeSet::new();
    for s in stages {
        check_stage(tree, s)?;
        let d = space.dims()[s.level - 1];
        for m in tree.context_members(s.level, &s.context) {
            let parent = space.decode(s.level - 1, m);
            for x in 0..d {
                let mut child = parent.clone();
                child.push(x);
                nodes.insert(child);
            }
        }
    }
    Ok(InterventionTarget {
        name: name.into(),
        nodes,
    })
}

/// The stage set a target was built from; fails when the target is not
/// the set of children of whole stages.
pub fn stages_of_target(tree: &CStree, target: &InterventionTarget) -> Result<BTreeSet<Stage>> {
    let space = tree.prefix_space();
    let mut stages = BTreeSet::new();
    for node in &target.nodes {
        if node.is_empty() || node.len() > tree.p() {
            return Err(Error::InvalidTarget(format!("node {node:?} is not a non-root vertex")));
        }
        for (pos, &x) in node.iter().enumerate() {
            if x >= space.dims()[pos] {
                return Err(Error::InvalidTarget(format!("node {node:?} out of range")));
            }
        }
        stages.insert(tree.stage_of(&node[..node.len() - 1])?);
    }
    let rebuilt = target_from_stages(tree, &stages, target.name.clone())?;
    if rebuilt.nodes != target.nodes {
        return Err(Error::InvalidTarget(format!(
            "target {} is not the set of children of whole stages",
            target.name
        )));
    }
    Ok(stages)
}

/// Why a target fails to be complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncompleteWitness {
    /// Offending target node.
    pub node: Vec<usize>,
    /// 1: no minimal context inside the parent prefix; 2: a prefix sharing
    /// a minimal subcontext has children outside the target.
    pub condition: u8,
    /// For condition 2, the minimal context and the uncovered prefix.
    pub context: Option<Context>,
    pub missing_parent: Option<Vec<usize>>,
}

/// Checks completeness with respect to the tree's minimal contexts.
pub fn is_complete(
    tree: &CStree,
    target: &InterventionTarget,
) -> std::result::Result<(), IncompleteWitness> {
    is_complete_with(tree, target, &minimal_contexts(tree))
}

fn is_complete_with(
    tree: &CStree,
    target: &InterventionTarget,
    minimal: &[Context],
) -> std::result::Result<(), IncompleteWitness> {
    let space = tree.prefix_space();
    let ord = tree.ordering();
    // Prefixes whose children are all targeted.
    let mut parents: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for node in &target.nodes {
        *parents.entry(node[..node.len() - 1].to_vec()).or_insert(0) += 1;
    }
    let full = |parent: &[usize]| {
        parents.get(parent).copied() == Some(space.dims()[parent.len()])
    };
    let mut checked = BTreeSet::new();
    for node in &target.nodes {
        let parent = &node[..node.len() - 1];
        if !checked.insert(parent.to_vec()) {
            continue;
        }
        let pctx = tree.prefix_context(parent);
        let subs: Vec<&Context> = minimal
            .iter()
            .filter(|c| c.is_subcontext_of(&pctx))
            .collect();
        if subs.is_empty() {
            return Err(IncompleteWitness {
                node: node.clone(),
                condition: 1,
                context: None,
                missing_parent: None,
            });
        }
        for c in subs {
            let fixed: Vec<(usize, usize)> = c.iter().map(|(v, x)| (ord.position(v), x)).collect();
            for m in space.members(parent.len(), &fixed) {
                let y = space.decode(parent.len(), m);
                if !full(&y) {
                    return Err(IncompleteWitness {
                        node: node.clone(),
                        condition: 2,
                        context: Some(c.clone()),
                        missing_parent: Some(y),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Targets of an interventional model, the observational one first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    targets: Vec<InterventionTarget>,
    stage_map: Vec<BTreeSet<Stage>>,
}

pub const OBSERVATIONAL: &str = "observational";

impl TargetSet {
    /// Only the empty target.
    pub fn observational() -> Self {
        Self {
            targets: vec![InterventionTarget::empty(OBSERVATIONAL)],
            stage_map: vec![BTreeSet::new()],
        }
    }

    /// The empty target followed by one target per named stage set.
    pub fn from_stage_sets(tree: &CStree, sets: Vec<(String, BTreeSet<Stage>)>) -> Result<Self> {
        let mut out = Self::observational();
        for (name, stages) in sets {
            let t = target_from_stages(tree, &stages, name)?;
            out.targets.push(t);
            out.stage_map.push(stages);
        }
        out.check_names()?;
        Ok(out)
    }

    /// Builds from node sets. The empty target is prepended unless the
    /// first target is already empty.
    pub fn from_targets(tree: &CStree, targets: Vec<InterventionTarget>) -> Result<Self> {
        let mut out = Self {
            targets: Vec::new(),
            stage_map: Vec::new(),
        };
        if targets.first().is_none_or(|t| !t.is_empty()) {
            out = Self::observational();
        }
        for t in targets {
            let s = stages_of_target(tree, &t)?;
            out.targets.push(t);
            out.stage_map.push(s);
        }
        out.check_names()?;
        Ok(out)
    }

    fn check_names(&self) -> Result<()> {
        let names: BTreeSet<&str> = self.targets.iter().map(|t| t.name.as_str()).collect();
        if names.len() != self.targets.len() {
            return Err(Error::InvalidTarget("duplicate target names".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[InterventionTarget] {
        &self.targets
    }

    pub fn target(&self, i: usize) -> &InterventionTarget {
        &self.targets[i]
    }

    /// The stage set of target `i`.
    pub fn stages(&self, i: usize) -> &BTreeSet<Stage> {
        &self.stage_map[i]
    }

    pub fn names(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.name.clone()).collect()
    }
}

/// A CStree together with targets, represented by per-level parameter
/// slots: `slot(k, copy, prefix)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionalCStree {
    base: CStree,
    targets: TargetSet,
    /// `slots[k - 1][copy][prefix]`.
    slots: Vec<Vec<Vec<usize>>>,
    slot_counts: Vec<usize>,
}

pub fn build_interventional_tree(tree: &CStree, targets: &TargetSet) -> Result<InterventionalCStree> {
    for i in 0..targets.len() {
        for s in targets.stages(i) {
            check_stage(tree, s)?;
        }
    }
    let mut slots = Vec::with_capacity(tree.p());
    let mut slot_counts = Vec::with_capacity(tree.p());
    for k in 1..=tree.p() {
        let labels = tree.level_labels(k);
        let stages = tree.all_stages(k);
        let mut ids: BTreeMap<(usize, Option<usize>), usize> = BTreeMap::new();
        let mut level = Vec::with_capacity(targets.len());
        for copy in 0..targets.len() {
            let row: Vec<usize> = labels
                .iter()
                .map(|&s| {
                    let key = if targets.stages(copy).contains(&stages[s]) {
                        (s, Some(copy))
                    } else {
                        (s, None)
                    };
                    let next = ids.len();
                    *ids.entry(key).or_insert(next)
                })
                .collect();
            level.push(row);
        }
        slot_counts.push(ids.len());
        slots.push(level);
    }
    Ok(InterventionalCStree {
        base: tree.clone(),
        targets: targets.clone(),
        slots,
        slot_counts,
    })
}

impl InterventionalCStree {
    pub fn base(&self) -> &CStree {
        &self.base
    }

    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    /// Parameter slot used by `copy` at a prefix index of level `k`.
    pub fn slot(&self, k: usize, copy: usize, prefix: usize) -> usize {
        self.slots[k - 1][copy][prefix]
    }

    pub fn slot_count(&self, k: usize) -> usize {
        self.slot_counts[k - 1]
    }

    /// `Σ_k (d_k - 1) · #slots(k)`.
    pub fn free_parameters(&self) -> usize {
        let vars = self.base.variables();
        (1..=self.base.p())
            .map(|k| (vars[self.base.level_variable(k)].cardinality() - 1) * self.slot_count(k))
            .sum()
    }

    /// Whether copy `copy` shares the observational parameters at a prefix.
    pub fn shares_with_observational(&self, k: usize, copy: usize, prefix: usize) -> bool {
        self.slot(k, copy, prefix) == self.slot(k, 0, prefix)
    }
}

/// I-DAGs indexed by the minimal contexts and the empty context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextIDagSet {
    pub contexts: Vec<Context>,
    /// Minimal contexts of the base tree.
    pub minimal: Vec<Context>,
    pub graphs: BTreeMap<Context, IDag>,
    pub target_names: Vec<String>,
}

impl ContextIDagSet {
    pub fn graph(&self, ctx: &Context) -> Option<&IDag> {
        self.graphs.get(ctx)
    }

    /// Heads of `w_t` in context `ctx`.
    pub fn w_heads(&self, ctx: &Context, t: usize) -> BTreeSet<usize> {
        self.graphs[ctx]
            .w_edges
            .iter()
            .filter(|&&(u, _)| u == t)
            .map(|&(_, j)| j)
            .collect()
    }

    pub fn report(&self, vars: &[VariableSpec]) -> String {
        let mut s = String::new();
        for c in &self.contexts {
            s.push_str(&format!("context {}\n", c.display(vars)));
            let g = &self.graphs[c];
            for &(a, b) in g.base.edges() {
                s.push_str(&format!("  {} -> {}\n", vars[a].name(), vars[b].name()));
            }
            for &(t, j) in &g.w_edges {
                s.push_str(&format!("  w_{} -> {}\n", self.target_names[t], vars[j].name()));
            }
        }
        s
    }

    pub fn to_dot(&self, vars: &[VariableSpec]) -> String {
        self.contexts
            .iter()
            .map(|c| {
                self.graphs[c].to_dot(
                    &format!("context {}", c.display(vars)),
                    &|v| vars[v].name().to_string(),
                    &|t| self.target_names[t].clone(),
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Context graphs of the base tree with a node `w_t` per nonempty target
/// and an edge `w_t -> j` whenever some targeted node consistent with the
/// context carries the outcome of `j`. W node ids are `p + t - 1`.
pub fn context_idags(itree: &InterventionalCStree) -> ContextIDagSet {
    let tree = &itree.base;
    let p = tree.p();
    let ord = tree.ordering();
    let base = context_graphs_with_empty(tree);
    let minimal = minimal_contexts(tree);
    let mut graphs = BTreeMap::new();
    for c in &base.contexts {
        let mut placements: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for t in 1..itree.targets.len() {
            let heads = placements.entry(t).or_default();
            for node in &itree.targets.target(t).nodes {
                let j = ord.var_at(node.len() - 1);
                if c.contains_var(j) {
                    continue;
                }
                let consistent = c.iter().all(|(v, x)| {
                    let pos = ord.position(v);
                    pos >= node.len() || node[pos] == x
                });
                if consistent {
                    heads.insert(j);
                }
            }
        }
        let g = augment_idag_at(&base.graphs[c], &placements, p).expect("w ids are fresh");
        graphs.insert(c.clone(), g);
    }
    ContextIDagSet {
        contexts: base.contexts,
        minimal,
        graphs,
        target_names: itree.targets.names(),
    }
}

/// A signature-preserving bijection between target indices, `phi[i]` for
/// target `i` of the first set, or `None` if the w-edge patterns differ.
pub fn compatible(g1: &ContextIDagSet, g2: &ContextIDagSet) -> Option<Vec<usize>> {
    if g1.target_names.len() != g2.target_names.len() || g1.contexts != g2.contexts {
        return None;
    }
    let signature = |g: &ContextIDagSet, t: usize| -> Vec<BTreeSet<usize>> {
        g.contexts.iter().map(|c| g.w_heads(c, t)).collect()
    };
    let k = g1.target_names.len();
    let mut phi = vec![0usize; k];
    let mut used = vec![false; k];
    used[0] = true;
    for (t, slot) in phi.iter_mut().enumerate().skip(1) {
        let sig = signature(g1, t);
        let m = (1..k).find(|&u| !used[u] && signature(g2, u) == sig)?;
        used[m] = true;
        *slot = m;
    }
    Some(phi)
}

/// Triples `(t, k, j)` with `w_t -> k <- j` and `j` not a head of `w_t`.
fn w_v_structures(g: &IDag) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for &(t, k) in &g.w_edges {
        for j in g.base.parents(k) {
            if !g.w_edges.contains(&(t, j)) {
                out.insert((t, k, j));
            }
        }
    }
    out
}

fn require_complete(tree: &CStree, targets: &TargetSet) -> Result<()> {
    let minimal = minimal_contexts(tree);
    for t in targets.targets() {
        if let Err(w) = is_complete_with(tree, t, &minimal) {
            return Err(Error::IncompleteTarget {
                target: t.name.clone(),
                level: w.node.len(),
                prefix: w.node,
            });
        }
    }
    Ok(())
}

/// Same skeleton and v-structures per minimal context, compatible
/// targets, and matching w v-structures in every context including `∅`.
pub fn interventional_equivalent(
    it1: &InterventionalCStree,
    it2: &InterventionalCStree,
) -> Result<bool> {
    if !it1.base.same_variables(&it2.base) {
        return Err(Error::VariableMismatch(
            "trees are defined over different variables".into(),
        ));
    }
    require_complete(&it1.base, &it1.targets)?;
    require_complete(&it2.base, &it2.targets)?;
    let g1 = context_idags(it1);
    let g2 = context_idags(it2);
    Ok(idag_sets_equivalent(&g1, &g2))
}

pub(crate) fn idag_sets_equivalent(g1: &ContextIDagSet, g2: &ContextIDagSet) -> bool {
    if g1.minimal != g2.minimal {
        return false;
    }
    let Some(phi) = compatible(g1, g2) else {
        return false;
    };
    for c in &g1.contexts {
        let (a, b) = (&g1.graphs[c], &g2.graphs[c]);
        if g1.minimal.contains(c)
            && (a.base.skeleton() != b.base.skeleton()
                || a.base.v_structures() != b.base.v_structures())
        {
            return false;
        }
        let mapped: BTreeSet<(usize, usize, usize)> = w_v_structures(a)
            .into_iter()
            .map(|(t, k, j)| (phi[t], k, j))
            .collect();
        if mapped != w_v_structures(b) {
            return false;
        }
    }
    true
}

/// Whether `A` and `w_t` are d-separated by `S` and the other w nodes in
/// the I-DAG of `ctx`, i.e. whether `f(x_A | x_S, ctx)` is invariant under
/// target `t`.
pub fn imarkov_invariance_queries(
    idags: &ContextIDagSet,
    t: usize,
    a: &BTreeSet<usize>,
    s: &BTreeSet<usize>,
    ctx: &Context,
) -> Result<bool> {
    let g = idags.graph(ctx).ok_or_else(|| {
        Error::InvalidContext("context is not indexed by the I-DAG family".into())
    })?;
    if t == 0 || t >= idags.target_names.len() {
        return Err(Error::InvalidTarget(format!("no intervention target with index {t}")));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty variable set".into()));
    }
    if !a.is_disjoint(s) {
        return Err(Error::OverlappingSets);
    }
    for v in a.iter().chain(s) {
        if ctx.contains_var(*v) {
            return Err(Error::InvalidArgument(format!(
                "variable {v} is fixed by the context"
            )));
        }
    }
    let full = g.as_dag();
    let w = g.w_nodes[&t];
    let mut cond = s.clone();
    cond.extend(g.w_nodes.values().copied().filter(|&u| u != w));
    full.d_separated(a, &BTreeSet::from([w]), &cond)
}

fn check_tables(tree: &CStree, tables: &[&ContingencyTable]) -> Result<()> {
    let cards: Vec<usize> = tree.variables().iter().map(|v| v.cardinality()).collect();
    for t in tables {
        if t.cards() != cards {
            return Err(Error::VariableMismatch(format!(
                "table shape {:?} does not match variables {cards:?}",
                t.cards()
            )));
        }
    }
    Ok(())
}

fn ibic_impl(itree: &InterventionalCStree, tables: &[ContingencyTable], strict: bool) -> Result<Score> {
    let tree = &itree.base;
    if tables.len() != itree.targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tables for {} targets",
            tables.len(),
            itree.targets.len()
        )));
    }
    check_tables(tree, &tables.iter().collect::<Vec<_>>())?;
    let ord = tree.ordering();
    let margs: Vec<Vec<Vec<u64>>> = tables.iter().map(|t| t.ordered_marginals(ord)).collect();
    let mut ll = 0.0;
    for k in 1..=tree.p() {
        let d = tree.variables()[ord.var_at(k - 1)].cardinality();
        let mut counts = vec![vec![0u64; d]; itree.slot_count(k)];
        for (copy, marg) in margs.iter().enumerate() {
            for (prefix, &slot) in itree.slots[k - 1][copy].iter().enumerate() {
                for x in 0..d {
                    counts[slot][x] += marg[k][prefix * d + x];
                }
            }
        }
        for (slot, c) in counts.iter().enumerate() {
            if strict && c.iter().all(|&x| x == 0) {
                let (copy, prefix) = (0..tables.len())
                    .find_map(|cp| {
                        itree.slots[k - 1][cp]
                            .iter()
                            .position(|&s| s == slot)
                            .map(|x| (cp, x))
                    })
                    .expect("every slot is used");
                let digits = tree.prefix_space().decode(k - 1, prefix);
                let stage = tree.stage_of(&digits)?;
                return Err(Error::UndefinedStage {
                    level: k,
                    context: format!(
                        "{} (copy {})",
                        stage.context.display(tree.variables()),
                        itree.targets.target(copy).name
                    ),
                });
            }
            ll += stage_loglik(c);
        }
    }
    let n = tables.iter().map(|t| t.n()).sum();
    Ok(Score::new(ll, itree.free_parameters(), n))
}

/// BIC of an interventional model, one table per target in target order.
/// Slots pool the counts of every copy using them; the penalty uses the
/// total sample size.
pub fn interventional_bic(itree: &InterventionalCStree, tables: &[ContingencyTable]) -> Result<Score> {
    ibic_impl(itree, tables, true)
}

/// As [`interventional_bic`], with unobserved slots contributing zero.
pub fn interventional_bic_lenient(
    itree: &InterventionalCStree,
    tables: &[ContingencyTable],
) -> Result<Score> {
    ibic_impl(itree, tables, false)
}

pub const DEFAULT_BUDGET: u128 = 32_768;

/// One scored model of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tree_index: usize,
    pub targets: TargetSet,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_bic: f64,
    /// Every candidate within the tie tolerance of the best, in
    /// enumeration order.
    pub ties: Vec<Candidate>,
    pub evaluated: u128,
}

struct TreeSearch {
    stages: Vec<Stage>,
    /// Per intervention arm, the complete stage subsets as bitmasks.
    complete: Vec<u64>,
    /// `contrib[stage][copy mask] = (loglik, slots)`.
    contrib: Vec<Vec<(f64, usize)>>,
    dims: Vec<usize>,
}

fn prepare_tree(
    tree: &CStree,
    tables: &[&ContingencyTable],
    budget: u128,
) -> Result<TreeSearch> {
    let stages: Vec<Stage> = (1..=tree.p()).flat_map(|k| tree.all_stages(k)).collect();
    let s = stages.len();
    let needed = if s >= 127 { u128::MAX } else { 1u128 << s };
    if needed > budget || s > 63 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let minimal = minimal_contexts(tree);
    let mut complete = Vec::new();
    for mask in 0..(1u64 << s) {
        let set: BTreeSet<Stage> = (0..s)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| stages[i].clone())
            .collect();
        let t = target_from_stages(tree, &set, "")?;
        if is_complete_with(tree, &t, &minimal).is_ok() {
            complete.push(mask);
        }
    }
    let ord = tree.ordering();
    let margs: Vec<Vec<Vec<u64>>> = tables.iter().map(|t| t.ordered_marginals(ord)).collect();
    let arms = tables.len() - 1;
    let mut contrib = Vec::with_capacity(s);
    let mut dims = Vec::with_capacity(s);
    for st in &stages {
        let k = st.level;
        let d = tree.variables()[ord.var_at(k - 1)].cardinality();
        dims.push(d);
        let members = tree.context_members(k, &st.context);
        let per_copy: Vec<Vec<u64>> = margs
            .iter()
            .map(|m| {
                let mut c = vec![0u64; d];
                for &x in &members {
                    for o in 0..d {
                        c[o] += m[k][x * d + o];
                    }
                }
                c
            })
            .collect();
        let row = (0..1usize << arms)
            .map(|cm| {
                let mut shared = per_copy[0].clone();
                let mut ll = 0.0;
                let mut slots = 1;
                for a in 0..arms {
                    if cm >> a & 1 == 1 {
                        ll += stage_loglik(&per_copy[a + 1]);
                        slots += 1;
                    } else {
                        for o in 0..d {
                            shared[o] += per_copy[a + 1][o];
                        }
                    }
                }
                (ll + stage_loglik(&shared), slots)
            })
            .collect();
        contrib.push(row);
    }
    Ok(TreeSearch {
        stages,
        complete,
        contrib,
        dims,
    })
}

/// `(bic, loglik, free parameters, choice)` of one scored combination.
type Scored = (f64, f64, usize, Vec<u64>);

/// Scores every tree of an equivalence class with every combination of
/// complete targets, one target per interventional table, and returns the
/// best models. Tables are aligned with the tree variables; arms are named
/// by `arms[i].0`.
pub fn search_targets_over_class(
    trees: &[CStree],
    observational: &ContingencyTable,
    arms: &[(String, ContingencyTable)],
    budget: u128,
) -> Result<SearchResult> {
    if trees.is_empty() {
        return Err(Error::InvalidArgument("empty equivalence class".into()));
    }
    if arms.len() > 16 {
        return Err(Error::Unsupported("at most 16 interventional arms".into()));
    }
    let mut tables: Vec<&ContingencyTable> = vec![observational];
    tables.extend(arms.iter().map(|(_, t)| t));
    for t in trees {
        if !t.same_variables(&trees[0]) {
            return Err(Error::VariableMismatch("trees use different variables".into()));
        }
        check_tables(t, &tables)?;
    }
    let n_total: u64 = tables.iter().map(|t| t.n()).sum();
    let ln_n = if n_total > 0 { (n_total as f64).ln() } else { 0.0 };
    let prepared: Vec<TreeSearch> = trees
        .par_iter()
        .map(|t| prepare_tree(t, &tables, budget))
        .collect::<Result<_>>()?;
    let mut total: u128 = 0;
    for p in &prepared {
        let c = (p.complete.len() as u128).saturating_pow(arms.len() as u32);
        total = total.saturating_add(c);
    }
    if total > budget {
        return Err(Error::BudgetExceeded {
            needed: total,
            budget,
        });
    }
    // Per tree: every scored combination as (bic, loglik, params, choice).
    let scored: Vec<Vec<Scored>> = prepared
        .par_iter()
        .map(|p| {
            let mut out = Vec::new();
            let mut choice = vec![0usize; arms.len()];
            loop {
                let masks: Vec<u64> = choice.iter().map(|&c| p.complete[c]).collect();
                let mut ll = 0.0;
                let mut params = 0;
                for (i, row) in p.contrib.iter().enumerate() {
                    let cm = masks
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| *m >> i & 1 == 1)
                        .fold(0usize, |acc, (a, _)| acc | 1 << a);
                    let (l, slots) = row[cm];
                    ll += l;
                    params += slots * (p.dims[i] - 1);
                }
                out.push((ll - params as f64 / 2.0 * ln_n, ll, params, masks));
                // Odometer over arms.
                let mut a = 0;
                loop {
                    if a == choice.len() {
                        return out;
                    }
                    choice[a] += 1;
                    if choice[a] < p.complete.len() {
                        break;
                    }
                    choice[a] = 0;
                    a += 1;
                }
            }
        })
        .collect();
    let best = scored
        .iter()
        .flatten()
        .map(|c| c.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ties = Vec::new();
    let mut evaluated = 0u128;
    for (ti, cands) in scored.iter().enumerate() {
        evaluated += cands.len() as u128;
        for (b, ll, params, masks) in cands {
            if !scores_tie(*b, best) {
                continue;
            }
            let p = &prepared[ti];
            let sets = arms
                .iter()
                .zip(masks)
                .map(|((name, _), &m)| {
                    let set = (0..p.stages.len())
                        .filter(|&i| m >> i & 1 == 1)
                        .map(|i| p.stages[i].clone())
                        .collect();
                    (name.clone(), set)
                })
                .collect();
            ties.push(Candidate {
                tree_index: ti,
                targets: TargetSet::from_stage_sets(&trees[ti], sets)?,
                score: Score {
                    loglik: *ll,
                    free_params: *params,
                    bic: *b,
                    n: n_total,
                },
            });
        }
    }
    Ok(SearchResult {
        best_bic: best,
        ties,
        evaluated,
    })
}

/// Serialized stage: level and context labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRef {
    pub level: usize,
    pub context: BTreeMap<String, String>,
}

/// Serialized intervention target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub name: String,
    pub stages: Vec<StageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSetJson {
    pub targets: Vec<TargetRef>,
}

impl TargetSetJson {
    /// The nonempty targets of a set.
    pub fn from_set(tree: &CStree, ts: &TargetSet) -> Self {
        let vars = tree.variables();
        Self {
            targets: (1..ts.len())
                .map(|i| TargetRef {
                    name: ts.target(i).name.clone(),
                    stages: ts
                        .stages(i)
                        .iter()
                        .map(|s| StageRef {
                            level: s.level,
                            context: s.context.to_labels(vars),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_set(&self, tree: &CStree) -> Result<TargetSet> {
        let vars = tree.variables();
        let sets = self
            .targets
            .iter()
            .map(|t| {
                let stages = t
                    .stages
                    .iter()
                    .map(|s| {
                        Ok(Stage {
                            level: s.level,
                            context: Context::from_labels(vars, &s.context)?,
                        })
                    })
                    .collect::<Result<BTreeSet<Stage>>>()?;
                Ok((t.name.clone(), stages))
            })
            .collect::<Result<Vec<_>>>()?;
        TargetSet::from_stage_sets(tree, sets)
    }
}
