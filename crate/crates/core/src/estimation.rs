//! Contingency tables, closed-form maximum likelihood and BIC.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{Context, Ordering, StagedModel, VariableSpec};

/// Dense count tensor over the joint outcome space, row-major in the
/// natural variable order (first variable most significant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    cards: Vec<usize>,
    counts: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(cards: Vec<usize>) -> Self {
        let size = cards.iter().product();
        Self {
            cards,
            counts: vec![0; size],
            n: 0,
        }
    }

    pub fn for_variables(vars: &[VariableSpec]) -> Self {
        Self::new(vars.iter().map(|v| v.cardinality()).collect())
    }

    pub fn from_counts(cards: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        let size: usize = cards.iter().product();
        if counts.len() != size {
            return Err(Error::Data(format!(
                "expected {size} cells, got {}",
                counts.len()
            )));
        }
        let n = counts.iter().sum();
        Ok(Self { cards, counts, n })
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn index(&self, assignment: &[usize]) -> usize {
        assignment
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&x, &d)| acc * d + x)
    }

    pub fn assignment(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        for i in (0..self.cards.len()).rev() {
            out[i] = idx % self.cards[i];
            idx /= self.cards[i];
        }
        out
    }

    pub fn add(&mut self, assignment: &[usize], count: u64) -> Result<()> {
        if assignment.len() != self.cards.len()
            || assignment.iter().zip(&self.cards).any(|(&x, &d)| x >= d)
        {
            return Err(Error::Data(format!("assignment {assignment:?} out of range")));
        }
        let i = self.index(assignment);
        self.counts[i] += count;
        self.n += count;
        Ok(())
    }

    pub fn get(&self, assignment: &[usize]) -> u64 {
        self.counts[self.index(assignment)]
    }

    /// Sum of the counts of all cells agreeing with `ctx`.
    pub fn marginal_count(&self, ctx: &Context) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| {
                let a = self.assignment(i);
                ctx.iter().all(|(v, x)| a[v] == x)
            })
            .map(|(_, &c)| c)
            .sum()
    }

    /// Cell-wise sum of two tables over the same space.
    pub fn pooled(&self, other: &ContingencyTable) -> Result<ContingencyTable> {
        if self.cards != other.cards {
            return Err(Error::Data("tables have different shapes".into()));
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Self::from_counts(self.cards.clone(), counts)
    }

    /// Natural index to ordered (mixed radix along `ordering`) index.
    pub(crate) fn ordered_index_map(&self, ordering: &Ordering) -> Vec<usize> {
        (0..self.counts.len())
            .map(|i| {
                let a = self.assignment(i);
                ordering
                    .as_slice()
                    .iter()
                    .fold(0, |acc, &v| acc * self.cards[v] + a[v])
            })
            .collect()
    }

    /// Marginal counts over prefixes of every length `0..=p` along
    /// `ordering`; entry `m` is indexed by prefix index of length `m`.
    pub fn ordered_marginals(&self, ordering: &Ordering) -> Vec<Vec<u64>> {
        let p = self.cards.len();
        let map = self.ordered_index_map(ordering);
        let mut full = vec![0u64; self.counts.len()];
        for (i, &c) in self.counts.iter().enumerate() {
            full[map[i]] = c;
        }
        let mut out = vec![Vec::new(); p + 1];
        out[p] = full;
        for m in (0..p).rev() {
            let d = self.cards[ordering.var_at(m)];
            out[m] = out[m + 1].chunks(d).map(|c| c.iter().sum()).collect();
        }
        out
    }
}

/// Free function form of [`ContingencyTable::marginal_count`].
pub fn marginal_count(u: &ContingencyTable, ctx: &Context) -> u64 {
    u.marginal_count(ctx)
}

/// Conditional distributions of one level, one vector per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    /// Stage id of every prefix.
    pub labels: Vec<usize>,
    /// Distribution of the level's variable per stage id.
    pub probs: Vec<Vec<f64>>,
}

/// Stage parameters of a staged tree, `levels[k - 1]` for level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMap {
    pub levels: Vec<LevelParams>,
}

impl ParameterMap {
    pub fn level(&self, k: usize) -> &LevelParams {
        &self.levels[k - 1]
    }

    /// Distribution of the level-`k` variable at a prefix index.
    pub fn prob(&self, k: usize, prefix: usize) -> &[f64] {
        let l = &self.levels[k - 1];
        &l.probs[l.labels[prefix]]
    }

    pub fn uniform<M: StagedModel + ?Sized>(model: &M) -> Self {
        Self::from_fn(model, |d, _| vec![1.0 / d as f64; d])
    }

    /// Independent Dirichlet(`alpha`) draws per stage.
    pub fn random<M: StagedModel + ?Sized, R: Rng>(model: &M, alpha: f64, rng: &mut R) -> Self {
        let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
        Self::from_fn(model, |d, _| {
            let mut v: Vec<f64> = (0..d).map(|_| gamma.sample(rng).max(1e-300)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        })
    }

    /// Builds parameters with `f(cardinality, (level, stage id))`.
    pub fn from_fn<M: StagedModel + ?Sized>(
        model: &M,
        mut f: impl FnMut(usize, (usize, usize)) -> Vec<f64>,
    ) -> Self {
        let vars = model.variables();
        let levels = (1..=vars.len())
            .map(|k| {
                let labels = model.level_labels(k);
                let n_stages = labels.iter().max().map_or(0, |m| m + 1);
                let d = vars[model.ordering().var_at(k - 1)].cardinality();
                LevelParams {
                    labels,
                    probs: (0..n_stages).map(|s| f(d, (k, s))).collect(),
                }
            })
            .collect();
        Self { levels }
    }

    /// Checks that every vector is a distribution.
    pub fn validate(&self) -> Result<()> {
        for (li, l) in self.levels.iter().enumerate() {
            for v in &l.probs {
                let s: f64 = v.iter().sum();
                if v.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "level {} has a vector that is not a distribution",
                        li + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Joint probability of every cell, indexed in the natural order.
    pub fn joint<M: StagedModel + ?Sized>(&self, model: &M) -> Vec<f64> {
        let vars = model.variables();
        let ord = model.ordering();
        let cards: Vec<usize> = vars.iter().map(|v| v.cardinality()).collect();
        let table = ContingencyTable::new(cards);
        let ordered = self.joint_ordered(model);
        table
            .ordered_index_map(ord)
            .into_iter()
            .map(|o| ordered[o])
            .collect()
    }

    /// Joint probability indexed by ordered full prefix.
    pub(crate) fn joint_ordered<M: StagedModel + ?Sized>(&self, model: &M) -> Vec<f64> {
        let vars = model.variables();
        let ord = model.ordering();
        let mut cur = vec![1.0f64];
        for k in 1..=vars.len() {
            let d = vars[ord.var_at(k - 1)].cardinality();
            let mut next = Vec::with_capacity(cur.len() * d);
            for (idx, &pr) in cur.iter().enumerate() {
                let dist = self.prob(k, idx);
                next.extend(dist.iter().map(|&q| pr * q));
            }
            cur = next;
        }
        cur
    }
}

/// Log-likelihood, BIC and parameter count of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub loglik: f64,
    pub free_params: usize,
    pub bic: f64,
    pub n: u64,
}

impl Score {
    pub fn new(loglik: f64, free_params: usize, n: u64) -> Self {
        let penalty = if n == 0 {
            0.0
        } else {
            free_params as f64 / 2.0 * (n as f64).ln()
        };
        Self {
            loglik,
            free_params,
            bic: loglik - penalty,
            n,
        }
    }
}

/// `Σ c ln(c / total)` with `0 ln 0 = 0`.
pub(crate) fn stage_loglik(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / t).ln())
        .sum()
}

/// Per-stage outcome counts of level `k` from the marginal over prefixes of
/// length `k`.
pub(crate) fn stage_counts(labels: &[usize], marginal_k: &[u64], d: usize) -> Vec<Vec<u64>> {
    let n_stages = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![vec![0u64; d]; n_stages];
    for (idx, &s) in labels.iter().enumerate() {
        for x in 0..d {
            out[s][x] += marginal_k[idx * d + x];
        }
    }
    out
}

fn check_shape<M: StagedModel + ?Sized>(model: &M, u: &ContingencyTable) -> Result<()> {
    let cards: Vec<usize> = model.variables().iter().map(|v| v.cardinality()).collect();
    if cards != u.cards() {
        return Err(Error::VariableMismatch(format!(
            "table shape {:?} does not match variables {cards:?}",
            u.cards()
        )));
    }
    Ok(())
}

fn describe_stage<M: StagedModel + ?Sized>(model: &M, k: usize, labels: &[usize], s: usize) -> String {
    let vars = model.variables();
    let ord = model.ordering();
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == s).collect();
    let space = crate::model::PrefixSpace::new(vars, ord);
    let first = space.decode(k - 1, members[0]);
    let mut fixed = vec![true; k - 1];
    for &m in &members[1..] {
        let d = space.decode(k - 1, m);
        for pos in 0..k - 1 {
            if d[pos] != first[pos] {
                fixed[pos] = false;
            }
        }
    }
    let ctx = Context::from_pairs(
        (0..k - 1)
            .filter(|&p| fixed[p])
            .map(|p| (ord.var_at(p), first[p])),
    )
    .expect("distinct");
    ctx.display(vars)
}

fn fit<M: StagedModel + ?Sized>(
    model: &M,
    u: &ContingencyTable,
    strict: bool,
) -> Result<ParameterMap> {
    check_shape(model, u)?;
    let vars = model.variables();
    let ord = model.ordering();
    let marg = u.ordered_marginals(ord);
    let mut levels = Vec::with_capacity(vars.len());
    for k in 1..=vars.len() {
        let d = vars[ord.var_at(k - 1)].cardinality();
        let labels = model.level_labels(k);
        let counts = stage_counts(&labels, &marg[k], d);
        let mut probs = Vec::with_capacity(counts.len());
        for (s, c) in counts.iter().enumerate() {
            let total: u64 = c.iter().sum();
            if total == 0 {
                if strict {
                    return Err(Error::UndefinedStage {
                        level: k,
                        context: describe_stage(model, k, &labels, s),
                    });
                }
                probs.push(vec![1.0 / d as f64; d]);
            } else {
                probs.push(c.iter().map(|&x| x as f64 / total as f64).collect());
            }
        }
        levels.push(LevelParams { labels, probs });
    }
    Ok(ParameterMap { levels })
}

/// Closed-form maximum likelihood estimate: each stage's distribution is
/// the pooled empirical conditional over its member prefixes. Returns the
/// parameters and the fitted joint (natural cell order).
pub fn mle<M: StagedModel + ?Sized>(
    model: &M,
    u: &ContingencyTable,
) -> Result<(ParameterMap, Vec<f64>)> {
    let params = fit(model, u, true)?;
    let joint = params.joint(model);
    Ok((params, joint))
}

/// As [`mle`], but stages with no observations get uniform parameters.
pub fn mle_lenient<M: StagedModel + ?Sized>(model: &M, u: &ContingencyTable) -> Result<ParameterMap> {
    fit(model, u, false)
}

/// `Σ_x u_x ln p(x)`; `-inf` when a cell with positive count has zero
/// probability.
pub fn log_likelihood<M: StagedModel + ?Sized>(
    model: &M,
    params: &ParameterMap,
    u: &ContingencyTable,
) -> Result<f64> {
    check_shape(model, u)?;
    let joint = params.joint(model);
    let mut ll = 0.0;
    for (&c, &p) in u.counts().iter().zip(&joint) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += c as f64 * p.ln();
    }
    Ok(ll)
}

/// `Σ_k (d_k - 1) · #stages(k)`, singletons included.
pub fn free_parameters<M: StagedModel + ?Sized>(model: &M) -> usize {
    let vars = model.variables();
    let ord = model.ordering();
    (1..=vars.len())
        .map(|k| (vars[ord.var_at(k - 1)].cardinality() - 1) * model.stage_count(k))
        .sum()
}

fn score_impl<M: StagedModel + ?Sized>(
    model: &M,
    u: &ContingencyTable,
    strict: bool,
) -> Result<Score> {
    check_shape(model, u)?;
    let vars = model.variables();
    let ord = model.ordering();
    let marg = u.ordered_marginals(ord);
    let mut ll = 0.0;
    for k in 1..=vars.len() {
        let d = vars[ord.var_at(k - 1)].cardinality();
        let labels = model.level_labels(k);
        for (s, c) in stage_counts(&labels, &marg[k], d).iter().enumerate() {
            if strict && c.iter().all(|&x| x == 0) {
                return Err(Error::UndefinedStage {
                    level: k,
                    context: describe_stage(model, k, &labels, s),
                });
            }
            ll += stage_loglik(c);
        }
    }
    Ok(Score::new(ll, free_parameters(model), u.n()))
}

/// BIC at the MLE, `loglik - d/2 · ln n`.
pub fn bic<M: StagedModel + ?Sized>(model: &M, u: &ContingencyTable) -> Result<Score> {
    score_impl(model, u, true)
}

/// As [`bic`], with unobserved stages contributing zero log-likelihood.
pub fn bic_lenient<M: StagedModel + ?Sized>(model: &M, u: &ContingencyTable) -> Result<Score> {
    score_impl(model, u, false)
}
