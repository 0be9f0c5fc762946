//! Command-line interface.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};

use crate::csi::{context_graphs, cstree_equivalent};
use crate::enumeration::{bell, count_compatible_staged_trees, count_cstrees, count_dags, cubical_bell};
use crate::error::{Error, Result};
use crate::estimation::{bic_lenient, ContingencyTable, ParameterMap, Score};
use crate::interventions::{
    build_interventional_tree, context_idags, interventional_bic_lenient, interventional_equivalent,
    search_targets_over_class, ContextIDagSet, TargetSet, TargetSetJson, DEFAULT_BUDGET,
};
use crate::io::{
    discretize_csv, ingest_csv, ingest_csv_with_spec, read_file, tree_to_dot, write_file, Dataset,
};
use crate::learning::{
    bhc_cs, bhc_cs_perm, derive_seed, rng_from_seed, sample_rows, simulate, LearnConfig,
    OrderingMode, SimulationConfig,
};
use crate::model::{CStree, Ordering, StagedModel, VariableSpec};

#[derive(Debug, Parser)]
#[command(name = "cstree", version, about = "Context-specific staged tree models")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountWhat {
    Cstrees,
    Staged,
    Bell,
    CubicalBell,
    Dags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a tree from data by backward hill climbing.
    Learn {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated causal ordering; defaults to column order.
        #[arg(long, conflicts_with = "all_orders")]
        order: Option<String>,
        /// Search over every ordering.
        #[arg(long)]
        all_orders: bool,
        /// Largest variable count for the all-orderings search.
        #[arg(long, default_value_t = 8)]
        max_perm_vars: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BIC of a tree on data.
    Score {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Statistical equivalence of two trees, optionally with targets.
    Equiv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, requires = "targets_b")]
        targets_a: Option<PathBuf>,
        #[arg(long, requires = "targets_a")]
        targets_b: Option<PathBuf>,
    },
    /// Search intervention targets over an equivalence class.
    Intervene {
        /// Members of the equivalence class (repeat or comma-separate).
        #[arg(long, value_delimiter = ',', required = true)]
        tree: Vec<PathBuf>,
        #[arg(long)]
        obs: PathBuf,
        /// Interventional data sets, one per target.
        #[arg(long = "int", value_delimiter = ',', required = true)]
        int: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-sample data from a tree with random stage parameters.
    Sample {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dirichlet concentration of the random parameters.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn random CStrees back from samples and report metrics.
    Simulate {
        #[arg(long)]
        p: usize,
        /// Merge probability.
        #[arg(long)]
        q: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        validation: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-trial metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact counts.
    Count {
        #[arg(long, value_enum)]
        what: CountWhat,
        #[arg(long)]
        p: usize,
    },
    /// DOT rendering of a tree, or of its context graphs.
    ExportDot {
        #[arg(long)]
        tree: PathBuf,
        /// Render the context graphs instead of the tree.
        #[arg(long)]
        graphs: bool,
        /// Targets for I-DAG rendering (implies context graphs).
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal contexts and context graphs.
    Contexts {
        #[arg(long)]
        tree: PathBuf,
    },
    /// Bootstrap BIC of competing models.
    Bootstrap {
        #[arg(long, value_delimiter = ',', required = true)]
        tree: Vec<PathBuf>,
        /// One targets file per tree; requires interventional data.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<PathBuf>,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long = "int", value_delimiter = ',')]
        int: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Quantile-discretize numeric columns.
    Discretize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Result of a command: human text and its JSON counterpart.
struct Output {
    text: String,
    json: Value,
}

fn load_tree(path: &Path) -> Result<CStree> {
    CStree::from_json(&read_file(path)?)
}

fn load_targets(path: &Path, tree: &CStree) -> Result<TargetSet> {
    let t: TargetSetJson = serde_json::from_str(&read_file(path)?)?;
    t.to_set(tree)
}

fn score_json(s: &Score) -> Value {
    json!({ "loglik": s.loglik, "free_params": s.free_params, "bic": s.bic, "n": s.n })
}

fn tree_value(t: &CStree) -> Value {
    serde_json::from_str(&t.to_json()).expect("tree JSON is valid")
}

fn parse_order(spec: &str, vars: &[VariableSpec]) -> Result<Ordering> {
    let perm = spec
        .split(',')
        .map(|n| {
            let n = n.trim();
            vars.iter()
                .position(|v| v.name() == n)
                .ok_or_else(|| Error::InvalidOrdering(format!("unknown variable {n}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if perm.len() != vars.len() {
        return Err(Error::InvalidOrdering(format!(
            "ordering names {} of {} variables",
            perm.len(),
            vars.len()
        )));
    }
    Ordering::new(perm)
}

fn graphs_json(tree: &CStree) -> Value {
    let vars = tree.variables();
    let g = context_graphs(tree);
    Value::Array(
        g.contexts
            .iter()
            .map(|c| {
                let edges: Vec<Value> = g.graphs[c]
                    .edges()
                    .iter()
                    .map(|&(a, b)| json!([vars[a].name(), vars[b].name()]))
                    .collect();
                json!({ "context": c.to_labels(vars), "edges": edges })
            })
            .collect(),
    )
}

fn idags_json(g: &ContextIDagSet, vars: &[VariableSpec]) -> Value {
    Value::Array(
        g.contexts
            .iter()
            .map(|c| {
                let ig = &g.graphs[c];
                let edges: Vec<Value> = ig
                    .base
                    .edges()
                    .iter()
                    .map(|&(a, b)| json!([vars[a].name(), vars[b].name()]))
                    .collect();
                let w: Vec<Value> = ig
                    .w_edges
                    .iter()
                    .map(|&(t, j)| json!([format!("w_{}", g.target_names[t]), vars[j].name()]))
                    .collect();
                json!({ "context": c.to_labels(vars), "edges": edges, "w_edges": w })
            })
            .collect(),
    )
}

fn write_or_print(out: &Option<PathBuf>, contents: &str, text: &mut String) -> Result<()> {
    match out {
        Some(p) => {
            write_file(p, contents)?;
            text.push_str(&format!("wrote {}\n", p.display()));
        }
        None => text.push_str(contents),
    }
    Ok(())
}

fn cmd_learn(
    data: &Path,
    order: Option<&str>,
    all_orders: bool,
    max_perm_vars: usize,
    out: &Option<PathBuf>,
) -> Result<Output> {
    let ds = ingest_csv(data)?;
    let u = ds.to_table();
    let cfg = LearnConfig {
        ordering_mode: if all_orders {
            OrderingMode::AllPermutations
        } else {
            OrderingMode::Fixed
        },
        max_permutation_vars: max_perm_vars,
        ..LearnConfig::default()
    };
    let (tree, score) = match cfg.ordering_mode {
        OrderingMode::AllPermutations => bhc_cs_perm(&u, &ds.variables, &cfg)?,
        OrderingMode::Fixed => {
            let ord = match order {
                Some(s) => parse_order(s, &ds.variables)?,
                None => Ordering::identity(ds.variables.len()),
            };
            let t = bhc_cs(&u, &ds.variables, &ord, &cfg)?;
            let s = bic_lenient(&t, &u)?;
            (t, s)
        }
    };
    let tree_json = tree.to_json();
    let mut text = format!(
        "bic {:.6}\nloglik {:.6}\nfree parameters {}\nstages {}\n",
        score.bic,
        score.loglik,
        score.free_params,
        tree.total_stages()
    );
    write_or_print(out, &format!("{tree_json}\n"), &mut text)?;
    Ok(Output {
        text,
        json: json!({ "tree": tree_value(&tree), "score": score_json(&score) }),
    })
}

fn cmd_score(tree: &Path, data: &Path) -> Result<Output> {
    let t = load_tree(tree)?;
    let ds = ingest_csv_with_spec(data, t.variables())?;
    let s = bic_lenient(&t, &ds.to_table())?;
    Ok(Output {
        text: format!(
            "bic {:.6}\nloglik {:.6}\nfree parameters {}\nn {}\n",
            s.bic, s.loglik, s.free_params, s.n
        ),
        json: score_json(&s),
    })
}

fn cmd_equiv(a: &Path, b: &Path, ta: Option<&Path>, tb: Option<&Path>) -> Result<Output> {
    let t1 = load_tree(a)?;
    let t2 = load_tree(b)?;
    let eq = match (ta, tb) {
        (Some(ta), Some(tb)) => {
            let i1 = build_interventional_tree(&t1, &load_targets(ta, &t1)?)?;
            let i2 = build_interventional_tree(&t2, &load_targets(tb, &t2)?)?;
            interventional_equivalent(&i1, &i2)?
        }
        _ => cstree_equivalent(&t1, &t2)?,
    };
    let word = if eq { "equivalent" } else { "not equivalent" };
    Ok(Output {
        text: format!("{word}\n"),
        json: json!({ "equivalent": eq }),
    })
}

fn load_tables(paths: &[PathBuf], vars: &[VariableSpec]) -> Result<Vec<ContingencyTable>> {
    paths
        .iter()
        .map(|p| Ok(ingest_csv_with_spec(p, vars)?.to_table()))
        .collect()
}

fn arm_name(p: &Path, i: usize) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("I{}", i + 1))
}

fn cmd_intervene(
    trees: &[PathBuf],
    obs: &Path,
    int: &[PathBuf],
    budget: u128,
    out: &Option<PathBuf>,
) -> Result<Output> {
    let class: Vec<CStree> = trees.iter().map(|p| load_tree(p)).collect::<Result<_>>()?;
    for (i, t) in class.iter().enumerate().skip(1) {
        if !cstree_equivalent(&class[0], t)? {
            return Err(Error::InvalidArgument(format!(
                "{} is not equivalent to {}",
                trees[i].display(),
                trees[0].display()
            )));
        }
    }
    let vars = class[0].variables();
    let obs_t = ingest_csv_with_spec(obs, vars)?.to_table();
    let mut names = Vec::new();
    for (i, p) in int.iter().enumerate() {
        let mut n = arm_name(p, i);
        while names.contains(&n) || n == crate::interventions::OBSERVATIONAL {
            n.push('_');
        }
        names.push(n);
    }
    let arms: Vec<(String, ContingencyTable)> = names
        .into_iter()
        .zip(load_tables(int, vars)?)
        .collect();
    let res = search_targets_over_class(&class, &obs_t, &arms, budget)?;
    let mut text = format!(
        "best bic {:.6}\nevaluated {}\noptimal models {}\n",
        res.best_bic,
        res.evaluated,
        res.ties.len()
    );
    let mut ties = Vec::new();
    for c in &res.ties {
        let tree = &class[c.tree_index];
        let it = build_interventional_tree(tree, &c.targets)?;
        let g = context_idags(&it);
        text.push_str(&format!("model tree {}\n", trees[c.tree_index].display()));
        for i in 1..c.targets.len() {
            let stages: Vec<String> = c
                .targets
                .stages(i)
                .iter()
                .map(|s| format!("level {} [{}]", s.level, s.context.display(vars)))
                .collect();
            text.push_str(&format!(
                "  target {}: {}\n",
                c.targets.target(i).name,
                if stages.is_empty() {
                    "none".to_string()
                } else {
                    stages.join("; ")
                }
            ));
        }
        for line in g.report(vars).lines() {
            text.push_str(&format!("  {line}\n"));
        }
        ties.push(json!({
            "tree": trees[c.tree_index].display().to_string(),
            "targets": serde_json::to_value(TargetSetJson::from_set(tree, &c.targets))?,
            "score": score_json(&c.score),
            "idags": idags_json(&g, vars),
        }));
    }
    let value = json!({
        "best_bic": res.best_bic,
        "evaluated": res.evaluated.to_string(),
        "ties": ties,
    });
    if let Some(p) = out {
        write_file(p, &format!("{}\n", serde_json::to_string_pretty(&value)?))?;
    }
    Ok(Output { text, json: value })
}

fn cmd_sample(tree: &Path, n: usize, seed: u64, alpha: f64, out: &Option<PathBuf>) -> Result<Output> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let t = load_tree(tree)?;
    let mut rng = rng_from_seed(seed);
    let params = ParameterMap::random(&t, alpha, &mut rng);
    let rows = sample_rows(&t, &params, n, derive_seed(seed, 1));
    let ds = Dataset {
        variables: t.variables().to_vec(),
        weights: vec![1; rows.len()],
        rows,
        source: None,
        discretized: false,
    };
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    let csv_text = String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))?;
    let mut text = String::new();
    write_or_print(out, &csv_text, &mut text)?;
    Ok(Output {
        text,
        json: json!({ "n": n, "seed": seed, "csv": if out.is_some() { Value::Null } else { Value::String(csv_text) } }),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    p: usize,
    q: f64,
    n: usize,
    trials: usize,
    validation: usize,
    alpha: f64,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<Output> {
    if !(2..=16).contains(&p) {
        return Err(Error::InvalidArgument("p must lie in 2..=16".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let recs = simulate(&SimulationConfig {
        p,
        merge_prob: q,
        n,
        trials,
        validation,
        alpha,
        seed,
    })?;
    if let Some(path) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &recs {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        write_file(path, &String::from_utf8_lossy(&bytes))?;
    }
    let k = recs.len().max(1) as f64;
    let mean_shd = recs.iter().map(|r| r.shd as f64).sum::<f64>() / k;
    let mean_acc = recs.iter().map(|r| r.accuracy).sum::<f64>() / k;
    let exact = recs.iter().filter(|r| r.shd == 0).count();
    let trials_json: Vec<Value> = recs
        .iter()
        .map(|r| {
            json!({ "trial": r.trial, "stages_true": r.stages_true, "shd": r.shd, "accuracy": r.accuracy })
        })
        .collect();
    Ok(Output {
        text: format!(
            "trials {}\nmean shd {:.3}\nexact recoveries {}\nmean accuracy {:.4}\n",
            recs.len(),
            mean_shd,
            exact,
            mean_acc
        ),
        json: json!({
            "trials": trials_json,
            "mean_shd": mean_shd,
            "exact": exact,
            "mean_accuracy": mean_acc,
        }),
    })
}

fn cmd_count(what: CountWhat, p: usize) -> Result<Output> {
    let (value, tabulated) = match what {
        CountWhat::Cstrees => (count_cstrees(p)?, false),
        CountWhat::Staged => (count_compatible_staged_trees(p)?, false),
        CountWhat::Bell => {
            if p > 4096 {
                return Err(Error::Unsupported("argument too large".into()));
            }
            (bell(p), false)
        }
        CountWhat::CubicalBell => {
            let c = cubical_bell(p)?;
            (c.value, c.tabulated)
        }
        CountWhat::Dags => {
            if p > 512 {
                return Err(Error::Unsupported("argument too large".into()));
            }
            (count_dags(p), false)
        }
    };
    Ok(Output {
        text: format!("{value}\n"),
        json: json!({ "value": value.to_string(), "tabulated": tabulated }),
    })
}

fn cmd_export_dot(tree: &Path, graphs: bool, targets: Option<&Path>, out: &Option<PathBuf>) -> Result<Output> {
    let t = load_tree(tree)?;
    let dot = match targets {
        Some(tp) => {
            let it = build_interventional_tree(&t, &load_targets(tp, &t)?)?;
            context_idags(&it).to_dot(t.variables())
        }
        None if graphs => context_graphs(&t).to_dot(t.variables()),
        None => tree_to_dot(&t),
    };
    let mut text = String::new();
    write_or_print(out, &dot, &mut text)?;
    Ok(Output {
        text,
        json: json!({ "dot": dot }),
    })
}

fn cmd_contexts(tree: &Path) -> Result<Output> {
    let t = load_tree(tree)?;
    let g = context_graphs(&t);
    Ok(Output {
        text: g.report(t.variables()),
        json: json!({ "contexts": graphs_json(&t) }),
    })
}

/// Resamples rows of a table with replacement.
fn resample<R: Rng>(u: &ContingencyTable, rng: &mut R) -> ContingencyTable {
    let n = u.n();
    let cells: Vec<(usize, u64)> = u
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let mut cum = Vec::with_capacity(cells.len());
    let mut acc = 0u64;
    for &(_, c) in &cells {
        acc += c;
        cum.push(acc);
    }
    let mut counts = vec![0u64; u.counts().len()];
    for _ in 0..n {
        let r = rng.random_range(0..n);
        let j = cum.partition_point(|&c| c <= r);
        counts[cells[j].0] += 1;
    }
    ContingencyTable::from_counts(u.cards().to_vec(), counts).expect("same shape")
}

fn cmd_bootstrap(
    trees: &[PathBuf],
    targets: &[PathBuf],
    obs: &Path,
    int: &[PathBuf],
    replicates: usize,
    seed: u64,
) -> Result<Output> {
    if !targets.is_empty() && targets.len() != trees.len() {
        return Err(Error::InvalidArgument("one targets file per tree is required".into()));
    }
    let models: Vec<CStree> = trees.iter().map(|p| load_tree(p)).collect::<Result<_>>()?;
    let vars = models[0].variables().to_vec();
    for m in &models {
        if m.variables() != vars.as_slice() {
            return Err(Error::VariableMismatch("trees use different variables".into()));
        }
    }
    let mut tables = vec![ingest_csv_with_spec(obs, &vars)?.to_table()];
    tables.extend(load_tables(int, &vars)?);
    let itrees = models
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let ts = match targets.get(i) {
                Some(p) => load_targets(p, t)?,
                None => TargetSet::observational(),
            };
            if ts.len() != tables.len() {
                return Err(Error::InvalidArgument(format!(
                    "model {} has {} targets but {} data sets were given",
                    trees[i].display(),
                    ts.len(),
                    tables.len()
                )));
            }
            build_interventional_tree(t, &ts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng_from_seed(seed);
    let mut sums = vec![(0.0f64, 0.0f64); itrees.len()];
    for _ in 0..replicates {
        let boot: Vec<ContingencyTable> = tables.iter().map(|t| resample(t, &mut rng)).collect();
        for (i, it) in itrees.iter().enumerate() {
            let b = interventional_bic_lenient(it, &boot)?.bic;
            sums[i].0 += b;
            sums[i].1 += b * b;
        }
    }
    let r = replicates.max(1) as f64;
    let mut text = String::new();
    let mut rows = Vec::new();
    for (i, (s, s2)) in sums.iter().enumerate() {
        let mean = s / r;
        let sd = (s2 / r - mean * mean).max(0.0).sqrt();
        text.push_str(&format!("{} mean bic {:.6} sd {:.6}\n", trees[i].display(), mean, sd));
        rows.push(json!({ "tree": trees[i].display().to_string(), "mean_bic": mean, "sd_bic": sd }));
    }
    Ok(Output {
        text,
        json: json!({ "replicates": replicates, "models": rows }),
    })
}

fn cmd_discretize(data: &Path, bins: usize, out: &Path) -> Result<Output> {
    let input = std::fs::File::open(data).map_err(|e| Error::io(data, e))?;
    let mut buf = Vec::new();
    let cols = discretize_csv(input, &mut buf, bins)?;
    write_file(out, &String::from_utf8_lossy(&buf))?;
    let set: BTreeSet<&String> = cols.iter().collect();
    Ok(Output {
        text: format!("discretized {} columns into {}\n", set.len(), out.display()),
        json: json!({ "columns": cols, "out": out.display().to_string() }),
    })
}

fn dispatch(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Learn {
            data,
            order,
            all_orders,
            max_perm_vars,
            out,
        } => cmd_learn(data, order.as_deref(), *all_orders, *max_perm_vars, out),
        Command::Score { tree, data } => cmd_score(tree, data),
        Command::Equiv {
            a,
            b,
            targets_a,
            targets_b,
        } => cmd_equiv(a, b, targets_a.as_deref(), targets_b.as_deref()),
        Command::Intervene {
            tree,
            obs,
            int,
            budget,
            out,
        } => cmd_intervene(tree, obs, int, *budget, out),
        Command::Sample {
            tree,
            n,
            seed,
            alpha,
            out,
        } => cmd_sample(tree, *n, *seed, *alpha, out),
        Command::Simulate {
            p,
            q,
            n,
            trials,
            validation,
            alpha,
            seed,
            out,
        } => cmd_simulate(*p, *q, *n, *trials, *validation, *alpha, *seed, out),
        Command::Count { what, p } => cmd_count(*what, *p),
        Command::ExportDot {
            tree,
            graphs,
            targets,
            out,
        } => cmd_export_dot(tree, *graphs, targets.as_deref(), out),
        Command::Contexts { tree } => cmd_contexts(tree),
        Command::Bootstrap {
            tree,
            targets,
            obs,
            int,
            replicates,
            seed,
        } => cmd_bootstrap(tree, targets, obs, int, *replicates, *seed),
        Command::Discretize { data, bins, out } => cmd_discretize(data, *bins, out),
    }
}

/// Caps the global thread pool from `CSTREE_THREADS`, once per process.
fn configure_threads() {
    if let Some(n) = std::env::var("CSTREE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses arguments, runs the command and writes its output. Returns the
/// process exit code: 0 on success, 1 on user error, 2 on internal error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return 0;
                }
                _ => 1,
            };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(o) => {
            let res = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&o.json).expect("serializable"))
            } else {
                write!(out, "{}", o.text)
            };
            match res {
                Ok(()) => 0,
                Err(_) => 2,
            }
        }
        Err(e) => {
            let code = if e.is_user_error() { 1 } else { 2 };
            if cli.json {
                let kind = format!("{e:?}");
                let kind = kind.split(['(', ' ', '{']).next().unwrap_or("Error").to_string();
                let _ = writeln!(
                    err,
                    "{}",
                    json!({ "error": { "code": code, "kind": kind, "message": e.to_string() } })
                );
            } else {
                let _ = writeln!(err, "error: {e}");
            }
            code
        }
    }
}
