//! Exact linear algebra over arbitrary-precision rationals and integers.
//!
//! Everything in this crate that touches geometry goes through these
//! routines; no floating point is used anywhere.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};

pub type Int = BigInt;
pub type Rat = BigRational;

pub fn int(v: i64) -> Int {
    Int::from(v)
}

pub fn rat(v: i64) -> Rat {
    Rat::from_integer(Int::from(v))
}

pub fn dot_int(a: &[Int], b: &[Int]) -> Int {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dot_rat(a: &[Rat], b: &[Rat]) -> Rat {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn int_to_rat_vec(v: &[Int]) -> Vec<Rat> {
    v.iter().map(|x| Rat::from_integer(x.clone())).collect()
}

/// Divide out the gcd and normalise so the first nonzero entry is positive
/// when `sign_normalise` is set. The zero vector is returned unchanged.
pub fn primitive(v: &[Int], sign_normalise: bool) -> Vec<Int> {
    let mut g = Int::zero();
    for x in v {
        g = g.gcd(x);
    }
    if g.is_zero() {
        return v.to_vec();
    }
    let mut out: Vec<Int> = v.iter().map(|x| x / &g).collect();
    if sign_normalise {
        if let Some(first) = out.iter().find(|x| !x.is_zero()) {
            if first.is_negative() {
                for x in &mut out {
                    *x = -x.clone();
                }
            }
        }
    }
    out
}

/// Clear denominators of a rational vector into a primitive integer vector.
pub fn clear_denominators(v: &[Rat]) -> Vec<Int> {
    let mut lcm = Int::one();
    for x in v {
        lcm = lcm.lcm(x.denom());
    }
    let ints: Vec<Int> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
    primitive(&ints, false)
}

/// Row echelon reduction in place; returns the pivot columns.
fn echelonise(m: &mut [Vec<Rat>]) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].clone();
        for x in &mut m[r] {
            *x = &*x / &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for c2 in 0..cols {
                    let sub = &m[r][c2] * &f;
                    m[i][c2] = &m[i][c2] - &sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

pub fn rank_rat(m: &[Vec<Rat>]) -> usize {
    let mut work: Vec<Vec<Rat>> = m.to_vec();
    echelonise(&mut work).len()
}

pub fn rank_int(m: &[Vec<Int>]) -> usize {
    let work: Vec<Vec<Rat>> = m.iter().map(|r| int_to_rat_vec(r)).collect();
    rank_rat(&work)
}

/// Basis of the right kernel `{x : m x = 0}`.
pub fn kernel_rat(m: &[Vec<Rat>], cols: usize) -> Vec<Vec<Rat>> {
    let mut work: Vec<Vec<Rat>> = m.to_vec();
    let pivots = echelonise(&mut work);
    let pivot_set: std::collections::BTreeSet<usize> = pivots.iter().copied().collect();
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![Rat::zero(); cols];
        v[free] = Rat::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -work[row][free].clone();
        }
        basis.push(v);
    }
    basis
}

pub fn kernel_int(m: &[Vec<Int>], cols: usize) -> Vec<Vec<Int>> {
    let work: Vec<Vec<Rat>> = m.iter().map(|r| int_to_rat_vec(r)).collect();
    kernel_rat(&work, cols)
        .iter()
        .map(|v| clear_denominators(v))
        .collect()
}

/// One solution of `m x = b`, or `None` when the system is inconsistent.
pub fn solve_rat(m: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut work: Vec<Vec<Rat>> = m
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let pivots = echelonise(&mut work);
    for (row, w) in work.iter().enumerate() {
        let lead_ok = row < pivots.len();
        if !lead_ok && !w[cols].is_zero() {
            return None;
        }
    }
    if pivots.last().is_some_and(|&p| p == cols) {
        return None;
    }
    let mut x = vec![Rat::zero(); cols];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = work[row][cols].clone();
    }
    Some(x)
}

pub fn det_rat(m: &[Vec<Rat>]) -> Rat {
    let n = m.len();
    let mut work: Vec<Vec<Rat>> = m.to_vec();
    let mut det = Rat::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !work[i][c].is_zero()) else {
            return Rat::zero();
        };
        if p != c {
            work.swap(c, p);
            det = -det;
        }
        det *= work[c][c].clone();
        let inv = work[c][c].clone();
        for i in c + 1..n {
            if work[i][c].is_zero() {
                continue;
            }
            let f = &work[i][c] / &inv;
            for c2 in c..n {
                let sub = &work[c][c2] * &f;
                work[i][c2] = &work[i][c2] - &sub;
            }
        }
    }
    det
}

/// Gcd of all `k x k` minors of an integer matrix with `k` rows.
/// Equals 1 exactly when the rows extend to a lattice basis.
pub fn minor_gcd(rows: &[Vec<Int>]) -> Int {
    let k = rows.len();
    if k == 0 {
        return Int::one();
    }
    let d = rows[0].len();
    assert!(k <= d, "more rows than columns in minor_gcd");
    let mut g = Int::zero();
    let mut cols: Vec<usize> = (0..k).collect();
    loop {
        let sub: Vec<Vec<Rat>> = rows
            .iter()
            .map(|r| cols.iter().map(|&c| Rat::from_integer(r[c].clone())).collect())
            .collect();
        let det = det_rat(&sub);
        debug_assert!(det.is_integer());
        g = g.gcd(det.numer());
        if g.is_one() {
            return g;
        }
        // next k-combination of 0..d
        let mut i = k;
        loop {
            if i == 0 {
                return g;
            }
            i -= 1;
            if cols[i] != i + d - k {
                cols[i] += 1;
                for j in i + 1..k {
                    cols[j] = cols[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Basis of the saturation of the row lattice: integer vectors spanning
/// `span_Q(rows) ∩ Z^d`. Computed by clearing denominators of a rational
/// row-space basis and then saturating via the kernel of the complement.
pub fn saturated_lattice_basis(rows: &[Vec<Int>], d: usize) -> Vec<Vec<Int>> {
    let rat_rows: Vec<Vec<Rat>> = rows.iter().map(|r| int_to_rat_vec(r)).collect();
    // span(rows) = kernel of the kernel: vectors orthogonal to every kernel
    // generator of the transpose span.
    let orth = kernel_rat(&rat_rows, d);
    if orth.is_empty() {
        // full space
        return (0..d)
            .map(|i| {
                let mut v = vec![Int::zero(); d];
                v[i] = Int::one();
                v
            })
            .collect();
    }
    let orth_int: Vec<Vec<Int>> = orth.iter().map(|v| clear_denominators(v)).collect();
    kernel_int(&orth_int, d)
}

/// Coordinates of `v` in the lattice `basis` (rows), if `v` lies in its span.
pub fn coords_in_basis(basis: &[Vec<Int>], v: &[Int]) -> Option<Vec<Rat>> {
    let d = v.len();
    let m: Vec<Vec<Rat>> = (0..d)
        .map(|i| basis.iter().map(|b| Rat::from_integer(b[i].clone())).collect())
        .collect();
    let b: Vec<Rat> = int_to_rat_vec(v);
    solve_rat(&m, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn im(rows: &[&[i64]]) -> Vec<Vec<Int>> {
        rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
    }

    #[test]
    fn rank_and_kernel() {
        let m = im(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]]);
        assert_eq!(rank_int(&m), 2);
        let k = kernel_int(&m, 3);
        assert_eq!(k.len(), 1);
        assert!(dot_int(&m[0], &k[0]).is_zero());
        assert!(dot_int(&m[2], &k[0]).is_zero());
    }

    #[test]
    fn solve_simple() {
        let m: Vec<Vec<Rat>> = vec![vec![rat(1), rat(1)], vec![rat(1), rat(-1)]];
        let x = solve_rat(&m, &[rat(3), rat(1)]).unwrap();
        assert_eq!(x, vec![rat(2), rat(1)]);
        assert!(solve_rat(&[vec![rat(0), rat(0)]], &[rat(1)]).is_none());
    }

    #[test]
    fn minor_gcd_detects_index() {
        assert!(minor_gcd(&im(&[&[1, 0], &[0, 1]])).is_one());
        assert_eq!(minor_gcd(&im(&[&[1, 0], &[1, 2]])), int(2));
    }

    #[test]
    fn saturation() {
        // span of (2,0,2) saturates to (1,0,1)
        let b = saturated_lattice_basis(&im(&[&[2, 0, 2]]), 3);
        assert_eq!(b.len(), 1);
        assert_eq!(primitive(&b[0], true), vec![int(1), int(0), int(1)]);
    }
}
