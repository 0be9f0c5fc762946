//! Exact counts of stagings and trees.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Bell number via the Bell triangle.
pub fn bell(n: usize) -> BigUint {
    let mut row = vec![BigUint::one()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(row.last().expect("nonempty").clone());
        for x in &row {
            let v = next.last().expect("nonempty") + x;
            next.push(v);
        }
        row = next;
    }
    row[0].clone()
}

/// A cubical Bell number and whether it was read from a table rather than
/// computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubicalBell {
    pub value: BigUint,
    pub tabulated: bool,
}

/// Published value for the 5-cube, beyond brute-force reach.
const CUBICAL_BELL_6: u64 = 71_319_425_714;

/// Number of partitions of the vertices of the `(m-1)`-cube into faces,
/// by exact cover. `m = 6` is served from a table.
pub fn cubical_bell(m: usize) -> Result<CubicalBell> {
    match m {
        0 => Err(Error::Unsupported("cubical Bell numbers start at m = 1".into())),
        1..=5 => Ok(CubicalBell {
            value: BigUint::from(count_face_partitions(m - 1)),
            tabulated: false,
        }),
        6 => Ok(CubicalBell {
            value: BigUint::from(CUBICAL_BELL_6),
            tabulated: true,
        }),
        _ => Err(Error::Unsupported(format!(
            "cubical Bell number for m = {m} is not available"
        ))),
    }
}

/// Vertex bitmasks of every face of the `dim`-cube.
pub fn cube_faces(dim: usize) -> Vec<u64> {
    let n_vertices = 1usize << dim;
    let mut faces = Vec::new();
    // A face fixes some coordinates (mask) to values (vals within mask).
    for free in 0..n_vertices {
        let fixed = (n_vertices - 1) & !free;
        let mut vals = fixed;
        loop {
            let mut bits = 0u64;
            for v in 0..n_vertices {
                if v & fixed == vals {
                    bits |= 1 << v;
                }
            }
            faces.push(bits);
            if vals == 0 {
                break;
            }
            vals = (vals - 1) & fixed;
        }
    }
    faces
}

/// Exact cover count: branch on the lowest uncovered vertex.
fn count_face_partitions(dim: usize) -> u64 {
    if dim > 5 {
        panic!("face partitions of the {dim}-cube are out of reach");
    }
    let faces = cube_faces(dim);
    let n = 1usize << dim;
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    // Faces grouped by their lowest vertex.
    let mut by_low: Vec<Vec<u64>> = vec![Vec::new(); n];
    for &f in &faces {
        by_low[f.trailing_zeros() as usize].push(f);
    }
    fn rec(covered: u64, full: u64, by_low: &[Vec<u64>]) -> u64 {
        if covered == full {
            return 1;
        }
        let low = (!covered).trailing_zeros() as usize;
        by_low[low]
            .iter()
            .filter(|&&f| f & covered == 0)
            .map(|&f| rec(covered | f, full, by_low))
            .sum()
    }
    rec(0, full, &by_low)
}

fn factorial(p: usize) -> BigUint {
    (1..=p).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Number of CStrees on `p` binary variables, `p! Π_{k=1}^{p} B^c_k`.
pub fn count_cstrees(p: usize) -> Result<BigUint> {
    if p > 6 {
        return Err(Error::Unsupported(format!(
            "CStree counts need cubical Bell numbers up to m = {p}; only m <= 6 are available"
        )));
    }
    let mut out = factorial(p);
    for k in 1..=p {
        out *= cubical_bell(k)?.value;
    }
    Ok(out)
}

/// Number of compatibly labeled staged trees on `p` binary variables,
/// `p! Π_{k=1}^{p-1} B_{2^k}`.
pub fn count_compatible_staged_trees(p: usize) -> Result<BigUint> {
    if p >= 20 {
        return Err(Error::Unsupported(format!("p = {p} is too large")));
    }
    let mut out = factorial(p);
    for k in 1..p {
        out *= bell(1 << k);
    }
    Ok(out)
}

/// Number of labeled DAGs on `p` nodes (Robinson's recurrence).
pub fn count_dags(p: usize) -> BigUint {
    let binom = |n: usize, k: usize| -> BigUint {
        (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
    };
    let mut a: Vec<BigUint> = vec![BigUint::one()];
    for n in 1..=p {
        let mut pos = BigUint::zero();
        let mut neg = BigUint::zero();
        for k in 1..=n {
            let term = binom(n, k) * (BigUint::one() << (k * (n - k))) * &a[n - k];
            if k % 2 == 1 {
                pos += term;
            } else {
                neg += term;
            }
        }
        a.push(pos - neg);
    }
    a[p].clone()
}
