//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cstree::csi::{axiom_closure, stage_relations, ClosureStatus, CsiRelation, CsiSet};
use cstree::estimation::ContingencyTable;
use cstree::interventions::TargetSetJson;
use cstree::{CStree, Context, Dag, Ordering, TargetSet, VariableSpec};
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn fixture_tree(name: &str) -> CStree {
    let s = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    CStree::from_json(&s).expect("fixture parses")
}

pub fn fixture_targets(name: &str, tree: &CStree) -> TargetSet {
    let s = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    let t: TargetSetJson = serde_json::from_str(&s).expect("targets parse");
    t.to_set(tree).expect("targets fit the tree")
}

pub fn ctx(pairs: &[(usize, usize)]) -> Context {
    Context::from_pairs(pairs.iter().copied()).unwrap()
}

// ---------------------------------------------------------------------
// Set partitions and face partitions by generate-and-filter.

/// Every set partition of `0..n` as a list of blocks (restricted growth
/// strings).
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Whether a set of binary vertices (bit `i` = coordinate `i`) is a face.
pub fn is_face(block: &[usize], dim: usize) -> bool {
    let and = block.iter().fold(usize::MAX, |a, &v| a & v) & ((1 << dim) - 1);
    let or = block.iter().fold(0, |a, &v| a | v);
    let free = and ^ or;
    block.len() == 1 << free.count_ones()
}

pub type FacePartition = Vec<Vec<(usize, usize)>>;

/// Partitions of the vertices of the `dim`-cube into faces, each block as
/// the list of its fixed `(coordinate, value)` pairs.
pub fn face_partitions(dim: usize) -> Vec<FacePartition> {
    set_partitions(1 << dim)
        .into_iter()
        .filter(|p| p.iter().all(|b| is_face(b, dim)))
        .map(|p| {
            p.iter()
                .map(|b| {
                    let and = b.iter().fold(usize::MAX, |a, &v| a & v);
                    let or = b.iter().fold(0, |a, &v| a | v);
                    (0..dim)
                        .filter(|&i| (and >> i & 1) == (or >> i & 1))
                        .map(|i| (i, and >> i & 1))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// All permutations of `0..p`.
pub fn perms(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in perms(p - 1) {
        for i in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(i, p - 1);
            out.push(v);
        }
    }
    out.sort();
    out
}

/// Every binary CStree on `p <= 3` variables, over every ordering.
pub fn all_binary_cstrees(p: usize) -> Vec<CStree> {
    let per_level: Vec<Vec<FacePartition>> = (0..p).map(face_partitions).collect();
    let mut out = Vec::new();
    for perm in perms(p) {
        let ord = Ordering::new(perm.clone()).unwrap();
        let mut choice = vec![0usize; p];
        loop {
            let stages: Vec<Vec<Context>> = (0..p)
                .map(|lvl| {
                    per_level[lvl][choice[lvl]]
                        .iter()
                        .map(|face| {
                            // Coordinate `i` of the level cube is position `lvl - 1 - i`
                            // (most significant digit first).
                            Context::from_pairs(
                                face.iter().map(|&(i, x)| (perm[lvl - 1 - i], x)),
                            )
                            .unwrap()
                        })
                        .collect()
                })
                .collect();
            out.push(CStree::new(VariableSpec::binary(p), ord.clone(), stages).unwrap());
            // odometer over per-level choices
            let mut l = 0;
            while l < p {
                choice[l] += 1;
                if choice[l] < per_level[l].len() {
                    break;
                }
                choice[l] = 0;
                l += 1;
            }
            if l == p {
                break;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------
// d-separation by path enumeration.

/// Whether every undirected simple path between `a` and `b` is blocked by
/// `s`: a non-collider in `s`, or a collider with no descendant in `s`.
pub fn path_dsep(g: &Dag, a: usize, b: usize, s: &BTreeSet<usize>) -> bool {
    let nodes: Vec<usize> = g.nodes().iter().copied().collect();
    let desc = |v: usize| -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([v]);
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for c in g.children(x) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    };
    fn walk(
        g: &Dag,
        path: &mut Vec<usize>,
        target: usize,
        nodes: &[usize],
        blocked: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == target {
            return !blocked(path);
        }
        for &n in nodes {
            if g.adjacent(last, n) && !path.contains(&n) {
                path.push(n);
                let open = walk(g, path, target, nodes, blocked);
                path.pop();
                if open {
                    return true;
                }
            }
        }
        false
    }
    let blocked = |path: &[usize]| -> bool {
        for w in path.windows(3) {
            let (x, m, y) = (w[0], w[1], w[2]);
            let collider = g.has_edge(x, m) && g.has_edge(y, m);
            if collider {
                if desc(m).is_disjoint(s) {
                    return true;
                }
            } else if s.contains(&m) {
                return true;
            }
        }
        false
    };
    !walk(g, &mut vec![a], b, &nodes, &blocked)
}

/// All DAGs on nodes `0..p` by orienting or dropping each pair.
pub fn all_dags(p: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match c % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            c /= 3;
        }
        if let Ok(g) = Dag::new(0..p, edges) {
            out.push(g);
        }
    }
    out
}

/// Every separation statement `(i, j, S)` with `i < j` that holds.
pub fn dsep_relation(g: &Dag) -> BTreeSet<(usize, usize, Vec<usize>)> {
    let nodes: Vec<usize> = g.nodes().iter().copied().collect();
    let mut out = BTreeSet::new();
    for (x, &i) in nodes.iter().enumerate() {
        for &j in &nodes[x + 1..] {
            let rest: Vec<usize> = nodes.iter().copied().filter(|&v| v != i && v != j).collect();
            for mask in 0..1u32 << rest.len() {
                let s: Vec<usize> = (0..rest.len())
                    .filter(|&b| mask >> b & 1 == 1)
                    .map(|b| rest[b])
                    .collect();
                let set: BTreeSet<usize> = s.iter().copied().collect();
                if path_dsep(g, i, j, &set) {
                    out.insert((i, j, s));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------
// Closure-based minimal contexts and context graphs.

pub fn closure_of(tree: &CStree) -> CsiSet {
    let cl = axiom_closure(&stage_relations(tree), 5_000_000).unwrap();
    assert_eq!(cl.status(), ClosureStatus::Complete);
    cl
}

/// Contexts of closure relations that admit no absorption: no nonempty
/// part `T` of the context can move into the conditioning set.
pub fn closure_minimal_contexts(cl: &CsiSet) -> BTreeSet<Context> {
    let mut out = BTreeSet::new();
    for r in cl.iter() {
        let cvars: Vec<usize> = r.context.vars().collect();
        let absorbable = (1..1u32 << cvars.len()).any(|mask| {
            let t: Vec<usize> = (0..cvars.len())
                .filter(|&b| mask >> b & 1 == 1)
                .map(|b| cvars[b])
                .collect();
            let mut c = r.context.clone();
            let mut s = r.s.clone();
            for &v in &t {
                c.remove(v);
                s.insert(v);
            }
            let moved = CsiRelation::new(r.a.clone(), r.b.clone(), s, c).unwrap();
            cl.contains(&moved)
        });
        if !absorbable {
            out.insert(r.context.clone());
        }
    }
    if out.is_empty() {
        out.insert(Context::empty());
    }
    out
}

/// Context graph from closure membership: `i -> k` is absent iff
/// `k ⫫ i | pred(k) \ {i}` holds in the context.
pub fn closure_graph(tree: &CStree, cl: &CsiSet, c: &Context) -> Dag {
    let order: Vec<usize> = tree
        .ordering()
        .as_slice()
        .iter()
        .copied()
        .filter(|&v| !c.contains_var(v))
        .collect();
    let mut edges = Vec::new();
    for (jk, &k) in order.iter().enumerate() {
        for &i in &order[..jk] {
            let rest: Vec<usize> = order[..jk].iter().copied().filter(|&u| u != i).collect();
            let r = CsiRelation::new([k], [i], rest, c.clone()).unwrap();
            if !cl.contains(&r) {
                edges.push((i, k));
            }
        }
    }
    Dag::new(order.iter().copied(), edges).unwrap()
}

// ---------------------------------------------------------------------
// Numeric helpers.

/// Joint distribution over natural cell order from random stage parameters.
pub fn random_joint<R: Rng>(tree: &CStree, rng: &mut R) -> Vec<f64> {
    let params = cstree::ParameterMap::random(tree, 1.0, rng);
    params.joint(tree)
}

/// Whether `X_a ⫫ X_b | X_s, X_C = x_C` holds numerically in a joint
/// (natural cell order, binary or general cardinalities).
pub fn numeric_ci(
    joint: &[f64],
    cards: &[usize],
    a: usize,
    b: usize,
    s: &[usize],
    c: &Context,
    tol: f64,
) -> bool {
    let p = cards.len();
    let mut marg: BTreeMap<(usize, usize, Vec<usize>), f64> = BTreeMap::new();
    let mut idx = vec![0usize; p];
    for (cell, &pr) in joint.iter().enumerate() {
        let mut r = cell;
        for v in (0..p).rev() {
            idx[v] = r % cards[v];
            r /= cards[v];
        }
        if !c.iter().all(|(v, x)| idx[v] == x) {
            continue;
        }
        let key = (idx[a], idx[b], s.iter().map(|&v| idx[v]).collect());
        *marg.entry(key).or_insert(0.0) += pr;
    }
    type Cells = Vec<((usize, usize), f64)>;
    let mut by_s: BTreeMap<Vec<usize>, Cells> = BTreeMap::new();
    for ((x, y, sv), pr) in marg {
        by_s.entry(sv).or_default().push(((x, y), pr));
    }
    for cells in by_s.values() {
        let total: f64 = cells.iter().map(|c| c.1).sum();
        if total <= 0.0 {
            continue;
        }
        let mut pa = vec![0.0; cards[a]];
        let mut pb = vec![0.0; cards[b]];
        for &((x, y), pr) in cells {
            pa[x] += pr;
            pb[y] += pr;
        }
        for &((x, y), pr) in cells {
            if (pr * total - pa[x] * pb[y]).abs() > tol * total * total {
                return false;
            }
        }
    }
    true
}

/// Table with every cell count drawn from `1..=max`.
pub fn random_positive_table<R: Rng>(cards: &[usize], max: u64, rng: &mut R) -> ContingencyTable {
    let size: usize = cards.iter().product();
    let counts = (0..size).map(|_| rng.random_range(1..=max)).collect();
    ContingencyTable::from_counts(cards.to_vec(), counts).unwrap()
}
