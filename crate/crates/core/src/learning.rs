//! Random model generation, forward sampling, greedy BIC learners and
//! simulation metrics.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{bic_lenient, mle_lenient, stage_loglik, ContingencyTable, ParameterMap, Score};
use crate::model::{
    CStree, Context, GeneralStagedTree, Ordering, PrefixSpace, StagedModel, VariableSpec,
};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingMode {
    Fixed,
    AllPermutations,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnConfig {
    pub ordering_mode: OrderingMode,
    /// Only levels up to this one are merged; later levels stay saturated.
    pub max_levels: Option<usize>,
    /// Largest number of variables for which all orderings are searched.
    pub max_permutation_vars: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            ordering_mode: OrderingMode::Fixed,
            max_levels: None,
            max_permutation_vars: 8,
        }
    }
}

const MAX_CUBE_POSITIONS: usize = 24;

/// A subcube of the prefixes of one level: fixed positions and values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Cube {
    fixed: u32,
    vals: [u8; MAX_CUBE_POSITIONS],
}

impl Cube {
    fn point(digits: &[usize]) -> Self {
        let mut vals = [0u8; MAX_CUBE_POSITIONS];
        for (i, &d) in digits.iter().enumerate() {
            vals[i] = d as u8;
        }
        Self {
            fixed: if digits.is_empty() {
                0
            } else {
                u32::MAX >> (32 - digits.len())
            },
            vals,
        }
    }

    /// Smallest cube containing both.
    fn join(&self, other: &Cube) -> Cube {
        let mut fixed = self.fixed & other.fixed;
        let mut vals = [0u8; MAX_CUBE_POSITIONS];
        for (i, v) in vals.iter_mut().enumerate() {
            if fixed >> i & 1 == 1 {
                if self.vals[i] == other.vals[i] {
                    *v = self.vals[i];
                } else {
                    fixed &= !(1 << i);
                }
            }
        }
        Cube { fixed, vals }
    }

    fn intersects(&self, other: &Cube) -> bool {
        let both = self.fixed & other.fixed;
        (0..MAX_CUBE_POSITIONS).all(|i| both >> i & 1 == 0 || self.vals[i] == other.vals[i])
    }

    fn contains(&self, other: &Cube) -> bool {
        self.fixed & other.fixed == self.fixed && self.intersects(other)
    }

    fn context(&self, m: usize, ordering: &Ordering) -> Context {
        Context::from_pairs(
            (0..m)
                .filter(|&i| self.fixed >> i & 1 == 1)
                .map(|i| (ordering.var_at(i), self.vals[i] as usize)),
        )
        .expect("distinct")
    }
}

/// Smallest union of stages that is a cube and contains stages `i` and `j`;
/// returns the cube and the indices of the absorbed stages.
fn minimal_merge(cubes: &[Cube], i: usize, j: usize) -> (Cube, Vec<usize>) {
    let mut merged = cubes[i].join(&cubes[j]);
    loop {
        let mut grown = false;
        for c in cubes {
            if merged.intersects(c) && !merged.contains(c) {
                merged = merged.join(c);
                grown = true;
            }
        }
        if !grown {
            break;
        }
    }
    let absorbed = (0..cubes.len()).filter(|&s| merged.contains(&cubes[s])).collect();
    (merged, absorbed)
}

fn binary_model(p: usize) -> (Vec<VariableSpec>, Ordering) {
    (VariableSpec::binary(p), Ordering::identity(p))
}

fn pick_pair<R: Rng>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Random binary staged tree: per level `k` in `2..p`, `2^(k-1)` Bernoulli
/// trials, each success merging two uniformly chosen stages.
pub fn random_staged_tree(p: usize, merge_prob: f64, seed: u64) -> Result<GeneralStagedTree> {
    check_prob(merge_prob)?;
    let (vars, ord) = binary_model(p);
    let mut rng = rng_from_seed(seed);
    let mut levels = vec![Vec::new(); p];
    for k in 2..p {
        let n = 1usize << (k - 1);
        let mut stages: Vec<Vec<usize>> = (0..n).map(|x| vec![x]).collect();
        for _ in 0..n {
            if rng.random_bool(merge_prob) && stages.len() > 1 {
                let (i, j) = pick_pair(stages.len(), &mut rng);
                let taken = stages[j].clone();
                stages[i].extend(taken);
                stages.remove(j);
            }
        }
        levels[k - 1] = stages;
    }
    GeneralStagedTree::new(vars, ord, levels)
}

fn check_prob(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "merge probability {q} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Number of merge trials at level `k` for random CStrees.
pub fn cstree_trials(k: usize, q: f64) -> usize {
    let base = (1u64 << (k - 1)) as f64;
    (base / (1.0 + 4.0 * k as f64 * (q - q * q))).floor() as usize
}

/// Random binary CStree: like [`random_staged_tree`] over levels `2..=p`
/// with fewer trials, each merge enlarged to the smallest valid subcube.
pub fn random_cstree(p: usize, merge_prob: f64, seed: u64) -> Result<CStree> {
    check_prob(merge_prob)?;
    if p > MAX_CUBE_POSITIONS {
        return Err(Error::Unsupported(format!("at most {MAX_CUBE_POSITIONS} variables")));
    }
    let (vars, ord) = binary_model(p);
    let space = PrefixSpace::new(&vars, &ord);
    let mut rng = rng_from_seed(seed);
    let mut stages = vec![Vec::new(); p];
    for k in 2..=p {
        let m = k - 1;
        let mut cubes: Vec<Cube> = (0..space.count(m))
            .map(|x| Cube::point(&space.decode(m, x)))
            .collect();
        for _ in 0..cstree_trials(k, merge_prob) {
            if rng.random_bool(merge_prob) && cubes.len() > 1 {
                let (i, j) = pick_pair(cubes.len(), &mut rng);
                let (merged, absorbed) = minimal_merge(&cubes, i, j);
                let keep: Vec<Cube> = cubes
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| !absorbed.contains(s))
                    .map(|(_, c)| *c)
                    .collect();
                cubes = keep;
                cubes.push(merged);
            }
        }
        stages[k - 1] = cubes.iter().map(|c| c.context(m, &ord)).collect();
    }
    CStree::new(vars, ord, stages)
}

/// Cumulative draw from a distribution.
fn draw<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// `n` forward-sampled rows (natural variable order).
pub fn sample_rows<M: StagedModel + ?Sized>(
    model: &M,
    params: &ParameterMap,
    n: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = rng_from_seed(seed);
    let vars = model.variables();
    let ord = model.ordering();
    let p = vars.len();
    (0..n)
        .map(|_| {
            let mut row = vec![0usize; p];
            let mut idx = 0usize;
            for k in 1..=p {
                let v = ord.var_at(k - 1);
                let x = draw(params.prob(k, idx), &mut rng);
                row[v] = x;
                idx = idx * vars[v].cardinality() + x;
            }
            row
        })
        .collect()
}

/// `n` forward-sampled observations as a table.
pub fn sample<M: StagedModel + ?Sized>(
    model: &M,
    params: &ParameterMap,
    n: usize,
    seed: u64,
) -> ContingencyTable {
    rows_to_table(model.variables(), &sample_rows(model, params, n, seed))
}

pub fn rows_to_table(vars: &[VariableSpec], rows: &[Vec<usize>]) -> ContingencyTable {
    let mut t = ContingencyTable::for_variables(vars);
    for r in rows {
        t.add(r, 1).expect("rows within range");
    }
    t
}

struct LevelStage {
    cube: Cube,
    members: Vec<usize>,
    counts: Vec<u64>,
    ll: f64,
    /// Smallest member prefix, used for tie-breaking.
    id: usize,
}

/// Greedy merging over all levels; returns per-level member lists and the
/// BIC after every accepted merge.
/// Non-singleton stages per level, as prefix indices.
type StageLists = Vec<Vec<Vec<usize>>>;

fn greedy(
    u: &ContingencyTable,
    vars: &[VariableSpec],
    ord: &Ordering,
    cfg: &LearnConfig,
    subcube: bool,
) -> Result<(StageLists, Vec<f64>)> {
    let p = vars.len();
    let cards: Vec<usize> = vars.iter().map(|v| v.cardinality()).collect();
    if cards != u.cards() {
        return Err(Error::VariableMismatch("table shape does not match variables".into()));
    }
    if subcube && (p > MAX_CUBE_POSITIONS || cards.iter().any(|&d| d > 255)) {
        return Err(Error::Unsupported(format!(
            "learning supports at most {MAX_CUBE_POSITIONS} variables with at most 255 outcomes"
        )));
    }
    let space = PrefixSpace::new(vars, ord);
    let marg = u.ordered_marginals(ord);
    let ln_n = if u.n() > 0 { (u.n() as f64).ln() } else { 0.0 };
    let saturated = GeneralStagedTree::full_dependence(vars.to_vec(), ord.clone())?;
    let mut current = bic_lenient(&saturated, u)?.bic;
    let mut trace = vec![current];
    let mut levels = vec![Vec::new(); p];
    let last = cfg.max_levels.unwrap_or(p).min(p);
    for k in 2..=last {
        let m = k - 1;
        let d = cards[ord.var_at(m)];
        let penalty = (d - 1) as f64 / 2.0 * ln_n;
        let mut stages: Vec<LevelStage> = (0..space.count(m))
            .map(|x| {
                let counts = marg[k][x * d..(x + 1) * d].to_vec();
                LevelStage {
                    cube: Cube::point(&space.decode(m, x)),
                    members: vec![x],
                    ll: stage_loglik(&counts),
                    counts,
                    id: x,
                }
            })
            .collect();
        loop {
            let cubes: Vec<Cube> = stages.iter().map(|s| s.cube).collect();
            let mut best: Option<(f64, Vec<usize>, Cube)> = None;
            for i in 0..stages.len() {
                for j in i + 1..stages.len() {
                    let (cube, absorbed) = if subcube {
                        minimal_merge(&cubes, i, j)
                    } else {
                        (cubes[i], vec![i, j])
                    };
                    let mut counts = vec![0u64; d];
                    let mut ll_parts = 0.0;
                    for &s in &absorbed {
                        for (c, &x) in counts.iter_mut().zip(&stages[s].counts) {
                            *c += x;
                        }
                        ll_parts += stages[s].ll;
                    }
                    let delta = stage_loglik(&counts) - ll_parts
                        + penalty * (absorbed.len() - 1) as f64;
                    if delta > 1e-12 && best.as_ref().is_none_or(|b| delta > b.0) {
                        best = Some((delta, absorbed, cube));
                    }
                }
            }
            let Some((delta, absorbed, cube)) = best else {
                break;
            };
            let mut merged = LevelStage {
                cube,
                members: Vec::new(),
                counts: vec![0; d],
                ll: 0.0,
                id: usize::MAX,
            };
            for &s in &absorbed {
                merged.members.extend(&stages[s].members);
                for x in 0..d {
                    merged.counts[x] += stages[s].counts[x];
                }
                merged.id = merged.id.min(stages[s].id);
            }
            merged.ll = stage_loglik(&merged.counts);
            merged.members.sort_unstable();
            let mut next: Vec<LevelStage> = stages
                .into_iter()
                .enumerate()
                .filter(|(s, _)| !absorbed.contains(s))
                .map(|(_, st)| st)
                .collect();
            next.push(merged);
            next.sort_by_key(|s| s.id);
            stages = next;
            current += delta;
            trace.push(current);
        }
        levels[k - 1] = stages.into_iter().map(|s| s.members).collect();
    }
    Ok((levels, trace))
}

/// Backward hill climbing over CStree merges along a fixed ordering.
pub fn bhc_cs(
    u: &ContingencyTable,
    vars: &[VariableSpec],
    ordering: &Ordering,
    cfg: &LearnConfig,
) -> Result<CStree> {
    Ok(bhc_cs_traced(u, vars, ordering, cfg)?.0)
}

/// As [`bhc_cs`], also returning the BIC after every accepted merge.
pub fn bhc_cs_traced(
    u: &ContingencyTable,
    vars: &[VariableSpec],
    ordering: &Ordering,
    cfg: &LearnConfig,
) -> Result<(CStree, Vec<f64>)> {
    let (levels, trace) = greedy(u, vars, ordering, cfg, true)?;
    let general = GeneralStagedTree::new(vars.to_vec(), ordering.clone(), levels)?;
    Ok((general.to_cstree()?, trace))
}

/// Backward hill climbing over unrestricted pairwise stage merges.
pub fn bhc_s(
    u: &ContingencyTable,
    vars: &[VariableSpec],
    ordering: &Ordering,
    cfg: &LearnConfig,
) -> Result<GeneralStagedTree> {
    let (levels, _) = greedy(u, vars, ordering, cfg, false)?;
    GeneralStagedTree::new(vars.to_vec(), ordering.clone(), levels)
}

/// All permutations of `0..p` in lexicographic order.
pub fn permutations(p: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..p).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..p).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..p).rev().find(|&j| cur[j] > cur[i - 1]).expect("exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Two scores tie when they agree to this relative precision.
pub(crate) fn scores_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Runs [`bhc_cs`] for every ordering and keeps the best BIC; ties go to
/// the lexicographically smallest ordering.
pub fn bhc_cs_perm(
    u: &ContingencyTable,
    vars: &[VariableSpec],
    cfg: &LearnConfig,
) -> Result<(CStree, Score)> {
    let p = vars.len();
    if p > cfg.max_permutation_vars {
        let fact = |n: usize| (1..=n as u128).product::<u128>();
        return Err(Error::BudgetExceeded {
            needed: fact(p),
            budget: fact(cfg.max_permutation_vars),
        });
    }
    let results: Vec<Result<(CStree, Score)>> = permutations(p)
        .into_par_iter()
        .map(|perm| {
            let ord = Ordering::new(perm)?;
            let t = bhc_cs(u, vars, &ord, cfg)?;
            let s = bic_lenient(&t, u)?;
            Ok((t, s))
        })
        .collect();
    let mut best: Option<(CStree, Score)> = None;
    for r in results {
        let (t, s) = r?;
        let better = match &best {
            None => true,
            Some((_, b)) => s.bic > b.bic && !scores_tie(s.bic, b.bic),
        };
        if better {
            best = Some((t, s));
        }
    }
    best.ok_or_else(|| Error::Internal("no ordering evaluated".into()))
}

/// Partition distance: per level, the number of prefix pairs that share a
/// stage in exactly one of the two trees.
pub fn shd<A: StagedModel + ?Sized, B: StagedModel + ?Sized>(t1: &A, t2: &B) -> Result<usize> {
    if t1.ordering() != t2.ordering() {
        return Err(Error::InvalidArgument("trees use different orderings".into()));
    }
    let same_vars = t1.variables().len() == t2.variables().len()
        && t1
            .variables()
            .iter()
            .zip(t2.variables())
            .all(|(a, b)| a.cardinality() == b.cardinality());
    if !same_vars {
        return Err(Error::VariableMismatch("trees use different variables".into()));
    }
    let pairs = |n: usize| n * n.saturating_sub(1) / 2;
    let mut total = 0;
    for k in 1..=t1.variables().len() {
        let (a, b) = (t1.level_labels(k), t2.level_labels(k));
        let mut na = std::collections::HashMap::new();
        let mut nb = std::collections::HashMap::new();
        let mut nab = std::collections::HashMap::new();
        for (&x, &y) in a.iter().zip(&b) {
            *na.entry(x).or_insert(0usize) += 1;
            *nb.entry(y).or_insert(0usize) += 1;
            *nab.entry((x, y)).or_insert(0usize) += 1;
        }
        let sa: usize = na.values().map(|&n| pairs(n)).sum();
        let sb: usize = nb.values().map(|&n| pairs(n)).sum();
        let sab: usize = nab.values().map(|&n| pairs(n)).sum();
        total += sa + sb - 2 * sab;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Accuracy {
    pub fraction: f64,
    pub correct: usize,
    pub total: usize,
    /// Predictions whose conditional had no mass; counted as wrong.
    pub zero_mass: usize,
}

fn row_prob<M: StagedModel + ?Sized>(model: &M, params: &ParameterMap, row: &[usize]) -> f64 {
    let vars = model.variables();
    let ord = model.ordering();
    let mut idx = 0usize;
    let mut pr = 1.0;
    for k in 1..=vars.len() {
        let v = ord.var_at(k - 1);
        pr *= params.prob(k, idx)[row[v]];
        idx = idx * vars[v].cardinality() + row[v];
    }
    pr
}

/// Fraction of held-out values recovered by the argmax of each variable's
/// conditional given all others (ties to the smallest outcome).
pub fn predictive_accuracy<M: StagedModel + ?Sized>(
    model: &M,
    params: &ParameterMap,
    rows: &[Vec<usize>],
) -> Accuracy {
    let vars = model.variables();
    let mut correct = 0;
    let mut total = 0;
    let mut zero_mass = 0;
    for row in rows {
        let mut r = row.clone();
        for (i, spec) in vars.iter().enumerate() {
            total += 1;
            let mut best = (f64::NEG_INFINITY, 0usize);
            let mut mass = 0.0;
            for x in 0..spec.cardinality() {
                r[i] = x;
                let pr = row_prob(model, params, &r);
                mass += pr;
                if pr > best.0 {
                    best = (pr, x);
                }
            }
            r[i] = row[i];
            if mass <= 0.0 {
                zero_mass += 1;
            } else if best.1 == row[i] {
                correct += 1;
            }
        }
    }
    Accuracy {
        fraction: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        zero_mass,
    }
}

/// Settings of the CStree recovery simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub p: usize,
    pub merge_prob: f64,
    pub n: usize,
    pub trials: usize,
    pub validation: usize,
    /// Dirichlet concentration of the random stage parameters.
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub trial: usize,
    pub n: usize,
    pub stages_true: usize,
    pub shd: usize,
    pub accuracy: f64,
    pub runtime_ms: u128,
}

/// Seeds derived from a base seed so that trials are independent.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut r = rng_from_seed(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    r.random()
}

/// Random CStree, random parameters, sample, relearn along the true
/// ordering and measure distance and held-out accuracy.
pub fn simulate(cfg: &SimulationConfig) -> Result<Vec<SimulationRecord>> {
    let mut out = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let s = derive_seed(cfg.seed, trial as u64);
        let truth = random_cstree(cfg.p, cfg.merge_prob, s)?;
        let mut rng = rng_from_seed(s.wrapping_add(1));
        let params = ParameterMap::random(&truth, cfg.alpha, &mut rng);
        let data = sample(&truth, &params, cfg.n, s.wrapping_add(2));
        let holdout = sample_rows(&truth, &params, cfg.validation, s.wrapping_add(3));
        let start = Instant::now();
        let learned = bhc_cs(&data, truth.variables(), truth.ordering(), &LearnConfig::default())?;
        let runtime_ms = start.elapsed().as_millis();
        let fitted = mle_lenient(&learned, &data)?;
        out.push(SimulationRecord {
            trial,
            n: cfg.n,
            stages_true: truth.total_stages(),
            shd: shd(&truth, &learned)?,
            accuracy: predictive_accuracy(&learned, &fitted, &holdout).fraction,
            runtime_ms,
        });
    }
    Ok(out)
}

/// Held-out accuracy of both learners on data from one random staged tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnerComparison {
    pub stages_true: usize,
    pub accuracy_cs: f64,
    pub accuracy_s: f64,
}

/// Data from a random (general) staged tree, fitted by both learners.
pub fn compare_learners(
    p: usize,
    merge_prob: f64,
    n: usize,
    validation: usize,
    alpha: f64,
    seed: u64,
) -> Result<LearnerComparison> {
    let truth = random_staged_tree(p, merge_prob, seed)?;
    let mut rng = rng_from_seed(seed.wrapping_add(1));
    let params = ParameterMap::random(&truth, alpha, &mut rng);
    let data = sample(&truth, &params, n, seed.wrapping_add(2));
    let holdout = sample_rows(&truth, &params, validation, seed.wrapping_add(3));
    let cfg = LearnConfig::default();
    let cs = bhc_cs(&data, truth.variables(), truth.ordering(), &cfg)?;
    let s = bhc_s(&data, truth.variables(), truth.ordering(), &cfg)?;
    let acc_cs = predictive_accuracy(&cs, &mle_lenient(&cs, &data)?, &holdout).fraction;
    let acc_s = predictive_accuracy(&s, &mle_lenient(&s, &data)?, &holdout).fraction;
    Ok(LearnerComparison {
        stages_true: truth.total_stages(),
        accuracy_cs: acc_cs,
        accuracy_s: acc_s,
    })
}
