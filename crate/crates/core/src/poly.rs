//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Variables are small integer ids; each stratum of a cone stack maps its
//! coordinate labels onto a contiguous id range. Every length variable has
//! degree one, so total degree is the grading used throughout.

use crate::linalg::Rat;
use num::{One, Zero};
use std::collections::BTreeMap;

/// Exponent vector, sorted by variable id, zero exponents omitted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(u32, u32)>);

impl Monomial {
    pub fn unit() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn var(id: u32) -> Monomial {
        Monomial(vec![(id, 1)])
    }

    pub fn from_pairs(mut pairs: Vec<(u32, u32)>) -> Monomial {
        pairs.retain(|&(_, e)| e > 0);
        pairs.sort_unstable_by_key(|&(v, _)| v);
        Monomial(pairs)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut merged: BTreeMap<u32, u32> = self.0.iter().copied().collect();
        for &(v, e) in &other.0 {
            *merged.entry(v).or_insert(0) += e;
        }
        Monomial(merged.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rat>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::unit(), c);
        }
        Poly { terms }
    }

    pub fn var(id: u32) -> Poly {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::var(id), Rat::one());
        Poly { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Rat)>) -> Poly {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: &Rat) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn constant_term(&self) -> Rat {
        self.terms.get(&Monomial::unit()).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// `Some(d)` when all terms share total degree `d`; zero counts as
    /// homogeneous of every degree, reported as `Some(0)`.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|m| m.degree());
        let Some(first) = it.next() else {
            return Some(0);
        };
        it.all(|d| d == first).then_some(first)
    }

    pub fn graded_part(&self, k: u32) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == k)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn truncate_above(&self, max_degree: u32) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() <= max_degree)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Substitute each variable by a polynomial; ids missing from the map
    /// stay themselves.
    pub fn substitute(&self, map: &BTreeMap<u32, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut term = Poly::constant(c.clone());
            for &(v, e) in m.pairs() {
                let base = map.get(&v).cloned().unwrap_or_else(|| Poly::var(v));
                term = term.mul(&base.pow(e));
            }
            out = out.add(&term);
        }
        out
    }

    /// Rename variables through a partial map; `None` sets the variable to 0.
    pub fn rename(&self, map: &dyn Fn(u32) -> Option<u32>) -> Poly {
        let mut out = Poly::zero();
        'terms: for (m, c) in &self.terms {
            let mut pairs = Vec::with_capacity(m.pairs().len());
            for &(v, e) in m.pairs() {
                match map(v) {
                    Some(w) => pairs.push((w, e)),
                    None => continue 'terms,
                }
            }
            out.add_term(Monomial::from_pairs(pairs), c.clone());
        }
        out
    }

    pub fn eval(&self, point: &[Rat]) -> Rat {
        let mut out = Rat::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for &(v, e) in m.pairs() {
                for _ in 0..e {
                    t *= point[v as usize].clone();
                }
            }
            out += t;
        }
        out
    }

    /// Truncated exponential sum_{k<=max} p^k / k!; requires zero constant
    /// term (checked by the caller).
    pub fn exp_truncated(&self, max_degree: u32) -> Poly {
        let mut out = Poly::one();
        let mut power = Poly::one();
        let mut kfact = Rat::one();
        for k in 1..=max_degree {
            power = power.mul(self).truncate_above(max_degree);
            kfact *= Rat::from_integer(k.into());
            out = out.add(&power.scale(&kfact.recip()));
        }
        out.truncate_above(max_degree)
    }

    pub fn display(&self, label: &dyn Fn(u32) -> String) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut parts: Vec<(u32, String)> = Vec::new();
        for (m, c) in &self.terms {
            let mut s = String::new();
            let one = c.is_one();
            let minus_one = (-c.clone()).is_one();
            if minus_one && !m.pairs().is_empty() {
                s.push('-');
            } else if !one || m.pairs().is_empty() {
                s.push_str(&c.to_string());
                if !m.pairs().is_empty() {
                    s.push('*');
                }
            }
            let vars: Vec<String> = m
                .pairs()
                .iter()
                .map(|&(v, e)| {
                    if e == 1 {
                        label(v)
                    } else {
                        format!("{}^{}", label(v), e)
                    }
                })
                .collect();
            s.push_str(&vars.join("*"));
            parts.push((m.degree(), s));
        }
        parts.sort();
        parts.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;

    #[test]
    fn arithmetic() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let p = x.add(&y).mul(&x.sub(&y));
        let expected = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(p, expected);
        assert!(x.sub(&x).is_zero());
    }

    #[test]
    fn grading() {
        let x = Poly::var(0);
        let p = x.mul(&x).add(&x).add(&Poly::one());
        assert_eq!(p.graded_part(1), x);
        assert_eq!(p.homogeneous_degree(), None);
        assert_eq!(x.mul(&Poly::var(1)).homogeneous_degree(), Some(2));
    }

    #[test]
    fn substitution() {
        // x -> x + y turns x^2 into x^2 + 2xy + y^2
        let x = Poly::var(0);
        let y = Poly::var(1);
        let mut map = BTreeMap::new();
        map.insert(0, x.add(&y));
        let p = x.mul(&x).substitute(&map);
        let expected = x
            .mul(&x)
            .add(&x.mul(&y).scale(&rat(2)))
            .add(&y.mul(&y));
        assert_eq!(p, expected);
    }

    #[test]
    fn exp_truncated_matches_series() {
        let x = Poly::var(0);
        let e = x.exp_truncated(3);
        assert_eq!(e.graded_part(0), Poly::one());
        assert_eq!(e.graded_part(1), x);
        assert_eq!(e.graded_part(2), x.mul(&x).scale(&(rat(1) / rat(2))));
        assert_eq!(e.graded_part(3), x.pow(3).scale(&(rat(1) / rat(6))));
    }
}
