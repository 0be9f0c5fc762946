//! CSV ingestion, discretization and DOT rendering of trees.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::dag::escape;
use crate::error::{Error, Result};
use crate::estimation::ContingencyTable;
use crate::model::{CStree, StagedModel, VariableSpec};

/// Name of the optional frequency column in aggregated CSV files.
pub const COUNT_COLUMN: &str = "count";

/// Categorical observations with their variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub variables: Vec<VariableSpec>,
    /// Outcome indices, one row per observation.
    pub rows: Vec<Vec<usize>>,
    /// Row multiplicities; all ones for raw files.
    pub weights: Vec<u64>,
    pub source: Option<PathBuf>,
    pub discretized: bool,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

struct RawCsv {
    header: Vec<String>,
    records: Vec<Vec<String>>,
}

fn read_raw<R: Read>(reader: R) -> Result<RawCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Data("missing header".into()));
    }
    let names: BTreeSet<&String> = header.iter().collect();
    if names.len() != header.len() {
        return Err(Error::Data("duplicate column names".into()));
    }
    let mut records = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Data(format!("ragged row: {e}")),
            _ => Error::Csv(e),
        })?;
        records.push(r.iter().map(str::to_string).collect());
    }
    if records.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(RawCsv { header, records })
}

impl Dataset {
    /// Reads a CSV with header, inferring each variable's labels as the
    /// sorted distinct values of its column. A `count` column, if present,
    /// gives row multiplicities.
    pub fn from_reader<R: Read>(reader: R, source: Option<PathBuf>) -> Result<Self> {
        let raw = read_raw(reader)?;
        let count_col = raw.header.iter().position(|h| h == COUNT_COLUMN);
        let mut variables = Vec::new();
        for (c, name) in raw.header.iter().enumerate() {
            if Some(c) == count_col {
                continue;
            }
            let labels: BTreeSet<&str> = raw.records.iter().map(|r| r[c].as_str()).collect();
            if labels.len() < 2 {
                return Err(Error::Data(format!("column {name} has a single value")));
            }
            variables.push(VariableSpec::with_labels(
                name.clone(),
                labels.into_iter().map(str::to_string).collect(),
            )?);
        }
        Self::build(raw, &variables, count_col, source)
    }

    /// Reads a CSV against fixed variables, matching columns by name;
    /// unknown values are errors.
    pub fn from_reader_with_spec<R: Read>(
        reader: R,
        variables: &[VariableSpec],
        source: Option<PathBuf>,
    ) -> Result<Self> {
        let raw = read_raw(reader)?;
        let count_col = raw.header.iter().position(|h| h == COUNT_COLUMN);
        Self::build(raw, variables, count_col, source)
    }

    fn build(
        raw: RawCsv,
        variables: &[VariableSpec],
        count_col: Option<usize>,
        source: Option<PathBuf>,
    ) -> Result<Self> {
        let cols: Vec<usize> = variables
            .iter()
            .map(|v| {
                raw.header.iter().position(|h| h == v.name()).ok_or_else(|| {
                    Error::Data(format!("column {} missing from data", v.name()))
                })
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(raw.records.len());
        let mut weights = Vec::with_capacity(raw.records.len());
        for (i, rec) in raw.records.iter().enumerate() {
            let row = variables
                .iter()
                .zip(&cols)
                .map(|(v, &c)| {
                    v.outcome_of(&rec[c]).ok_or_else(|| {
                        Error::Data(format!(
                            "row {}: unknown value {:?} for {}",
                            i + 1,
                            rec[c],
                            v.name()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let w = match count_col {
                Some(c) => rec[c].parse::<u64>().map_err(|_| {
                    Error::Data(format!("row {}: invalid count {:?}", i + 1, rec[c]))
                })?,
                None => 1,
            };
            rows.push(row);
            weights.push(w);
        }
        Ok(Self {
            variables: variables.to_vec(),
            rows,
            weights,
            source,
            discretized: false,
        })
    }

    pub fn to_table(&self) -> ContingencyTable {
        let mut t = ContingencyTable::for_variables(&self.variables);
        for (r, &w) in self.rows.iter().zip(&self.weights) {
            t.add(r, w).expect("rows are within range");
        }
        t
    }

    /// Writes the rows back as labels (with a `count` column when any
    /// weight differs from one).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let weighted = self.weights.iter().any(|&w| w != 1);
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.variables.iter().map(|v| v.name().to_string()).collect();
        if weighted {
            header.push(COUNT_COLUMN.to_string());
        }
        w.write_record(&header)?;
        for (row, &c) in self.rows.iter().zip(&self.weights) {
            let mut rec: Vec<String> = row
                .iter()
                .zip(&self.variables)
                .map(|(&x, v)| v.label(x))
                .collect();
            if weighted {
                rec.push(c.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    Dataset::from_reader(open(path)?, Some(path.to_path_buf()))
}

pub fn ingest_csv_with_spec(path: &Path, variables: &[VariableSpec]) -> Result<Dataset> {
    Dataset::from_reader_with_spec(open(path)?, variables, Some(path.to_path_buf()))
}

/// Bin of every value: values at or below the `j/bins` empirical quantile
/// (lower order statistic) fall in bin `j - 1` or lower.
pub fn quantile_discretize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::InvalidArgument("at least two bins are required".into()));
    }
    if values.is_empty() {
        return Err(Error::Data("empty column".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("column contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let edges: Vec<f64> = (1..bins)
        .map(|j| sorted[(j * n).div_ceil(bins).max(1) - 1])
        .collect();
    let out: Vec<usize> = values
        .iter()
        .map(|&v| edges.iter().filter(|&&e| v > e).count())
        .collect();
    if out.iter().all(|&b| b == out[0]) {
        return Err(Error::Data("column falls into a single bin".into()));
    }
    Ok(out)
}

/// Labels of discretized outcomes: `low`/`high` for two bins, `q1..qB`
/// otherwise.
pub fn bin_labels(bins: usize) -> Vec<String> {
    if bins == 2 {
        vec!["low".into(), "high".into()]
    } else {
        (1..=bins).map(|j| format!("q{j}")).collect()
    }
}

/// Discretizes every numeric column of a CSV file; other columns are
/// copied unchanged. Returns the names of the converted columns.
pub fn discretize_csv<R: Read, W: Write>(reader: R, writer: W, bins: usize) -> Result<Vec<String>> {
    let raw = read_raw(reader)?;
    let labels = bin_labels(bins);
    let mut out = raw.records.clone();
    let mut converted = Vec::new();
    for (c, name) in raw.header.iter().enumerate() {
        if name == COUNT_COLUMN {
            continue;
        }
        let parsed: Option<Vec<f64>> = raw.records.iter().map(|r| r[c].parse().ok()).collect();
        let Some(values) = parsed else { continue };
        let b = quantile_discretize(&values, bins)
            .map_err(|e| Error::Data(format!("column {name}: {e}")))?;
        for (row, bin) in out.iter_mut().zip(b) {
            row[c] = labels[bin].clone();
        }
        converted.push(name.clone());
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&raw.header)?;
    for r in &out {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(converted)
}

const PALETTE: [&str; 16] = [
    "gold", "orange", "violet", "cyan", "tomato", "palegreen", "skyblue", "pink", "khaki",
    "plum", "aquamarine", "salmon", "lightblue", "yellowgreen", "orchid", "wheat",
];

/// DOT rendering of a tree: one node per prefix, non-singleton stages
/// filled with a palette color chosen by level and stage rank.
pub fn tree_to_dot(tree: &CStree) -> String {
    let vars = tree.variables();
    let space = tree.prefix_space();
    let p = tree.p();
    let mut s = String::from("digraph \"cstree\" {\n  rankdir=LR;\n  node [shape=circle, label=\"\", style=filled, fillcolor=white];\n");
    let mut color_base = 0;
    for k in 1..=p + 1 {
        let m = k - 1;
        let (labels, sizes) = if k <= p {
            let l = tree.level_labels(k);
            let mut sizes = vec![0usize; l.iter().max().map_or(0, |x| x + 1)];
            for &x in &l {
                sizes[x] += 1;
            }
            (l, sizes)
        } else {
            (Vec::new(), Vec::new())
        };
        // Rank of each non-singleton stage within the level.
        let mut rank = vec![None; sizes.len()];
        let mut next = 0;
        for (id, &sz) in sizes.iter().enumerate() {
            if sz > 1 {
                rank[id] = Some(next);
                next += 1;
            }
        }
        for idx in 0..space.count(m) {
            let fill = if k <= p {
                rank[labels[idx]].map(|r| PALETTE[(color_base + r) % PALETTE.len()])
            } else {
                None
            };
            match fill {
                Some(c) => s.push_str(&format!("  n{m}_{idx} [fillcolor={c}];\n")),
                None => s.push_str(&format!("  n{m}_{idx};\n")),
            }
            if m > 0 {
                let digits = space.decode(m, idx);
                let parent = space.encode(&digits[..m - 1]);
                let var = tree.ordering().var_at(m - 1);
                s.push_str(&format!(
                    "  n{}_{parent} -> n{m}_{idx} [label=\"{}\"];\n",
                    m - 1,
                    escape(&vars[var].label(digits[m - 1]))
                ));
            }
        }
        color_base += next;
    }
    s.push_str("}\n");
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
