//! Exact rational polyhedral cones, cone complexes and subdivisions.
//!
//! Cones carry both generator and inequality descriptions, kept in sync by
//! an exact double description pass. All predicates (containment, faces,
//! covering) are decided in exact arithmetic.

use crate::linalg::{
    clear_denominators, dot_int, dot_rat, kernel_int, minor_gcd, primitive, rank_int,
    saturated_lattice_basis, solve_rat, Int, Rat,
};
use num::{One, Signed, Zero};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq, Clone)]
pub enum ConeError {
    #[error("ray lies outside the support of the complex")]
    RayOutsideSupport,
    #[error("cone is not strongly convex")]
    NotStronglyConvex,
    #[error("complex is not simplicial")]
    NotSimplicial,
    #[error("not a ray of the refined complex")]
    NotARay,
    #[error("subcomplex is not face-closed in the ambient complex")]
    NotFaceClosed,
    #[error("linear map does not send the source support into the target support")]
    MapLeavesSupport,
    #[error("subdivisions have different targets")]
    TargetMismatch,
    #[error("generator and inequality descriptions disagree")]
    DescriptionMismatch,
    #[error("invalid input: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConeError>;

/// Extreme rays and lineality of `{x : ineqs · x >= 0, eqs · x = 0}` via
/// the double description method with exact (algebraic-rank) adjacency.
pub fn hrep_extreme_rays(
    dim: usize,
    ineqs: &[Vec<Int>],
    eqs: &[Vec<Int>],
) -> (Vec<Vec<Int>>, Vec<Vec<Int>>) {
    // restrict to the equation subspace first
    let basis: Vec<Vec<Int>> = if eqs.is_empty() {
        (0..dim)
            .map(|i| {
                let mut v = vec![Int::zero(); dim];
                v[i] = Int::one();
                v
            })
            .collect()
    } else {
        kernel_int(eqs, dim)
    };
    let red_dim = basis.len();
    if red_dim == 0 {
        return (Vec::new(), Vec::new());
    }
    let red_ineqs: Vec<Vec<Int>> = ineqs
        .iter()
        .map(|a| basis.iter().map(|b| dot_int(a, b)).collect())
        .collect();

    let (red_rays, red_lin) = dd_pointwise(red_dim, &red_ineqs);

    let lift = |v: &Vec<Int>| -> Vec<Int> {
        let mut out = vec![Int::zero(); dim];
        for (c, b) in v.iter().zip(&basis) {
            for (o, x) in out.iter_mut().zip(b) {
                *o += c * x;
            }
        }
        primitive(&out, false)
    };
    (
        red_rays.iter().map(lift).collect(),
        red_lin.iter().map(|v| primitive(&lift(v), true)).collect(),
    )
}

/// Double description core in a space without equations.
fn dd_pointwise(dim: usize, ineqs: &[Vec<Int>]) -> (Vec<Vec<Int>>, Vec<Vec<Int>>) {
    let mut rays: Vec<Vec<Int>> = Vec::new();
    let mut lin: Vec<Vec<Int>> = (0..dim)
        .map(|i| {
            let mut v = vec![Int::zero(); dim];
            v[i] = Int::one();
            v
        })
        .collect();
    let mut processed: Vec<Vec<Int>> = Vec::new();

    for a in ineqs {
        if a.iter().all(|x| x.is_zero()) {
            continue;
        }
        if let Some(pos) = lin.iter().position(|b| !dot_int(a, b).is_zero()) {
            // fold one lineality direction into a ray satisfying a >= 0
            let mut b0 = lin.remove(pos);
            if dot_int(a, &b0).is_negative() {
                for x in &mut b0 {
                    *x = -x.clone();
                }
            }
            let ab0 = dot_int(a, &b0);
            for b in &mut lin {
                let ab = dot_int(a, b);
                let adj: Vec<Int> = b
                    .iter()
                    .zip(&b0)
                    .map(|(x, y)| x * &ab0 - &ab * y)
                    .collect();
                *b = primitive(&adj, true);
            }
            for r in &mut rays {
                let ar = dot_int(a, r);
                let adj: Vec<Int> = r
                    .iter()
                    .zip(&b0)
                    .map(|(x, y)| x * &ab0 - &ar * y)
                    .collect();
                *r = primitive(&adj, false);
            }
            rays.push(primitive(&b0, false));
            dedupe_vecs(&mut rays);
            processed.push(a.clone());
        } else {
            let vals: Vec<Int> = rays.iter().map(|r| dot_int(a, r)).collect();
            if vals.iter().all(|v| !v.is_negative()) {
                processed.push(a.clone());
                continue;
            }
            let mut next: Vec<Vec<Int>> = Vec::new();
            for (r, v) in rays.iter().zip(&vals) {
                if !v.is_negative() {
                    next.push(r.clone());
                }
            }
            let lin_dim = lin.len();
            for (i, (rp, vp)) in rays.iter().zip(&vals).enumerate() {
                if !vp.is_positive() {
                    continue;
                }
                for (rn, vn) in rays.iter().zip(&vals).skip(i + 1) {
                    if !vn.is_negative() {
                        continue;
                    }
                    if !dd_adjacent(rp, rn, &processed, dim, lin_dim) {
                        continue;
                    }
                    let combo: Vec<Int> = rn
                        .iter()
                        .zip(rp)
                        .map(|(n, p)| n * vp - p * vn)
                        .collect();
                    next.push(primitive(&combo, false));
                }
            }
            // symmetric pass: negative-major ordering
            for (i, (rn, vn)) in rays.iter().zip(&vals).enumerate() {
                if !vn.is_negative() {
                    continue;
                }
                for (rp, vp) in rays.iter().zip(&vals).skip(i + 1) {
                    if !vp.is_positive() {
                        continue;
                    }
                    if !dd_adjacent(rp, rn, &processed, dim, lin_dim) {
                        continue;
                    }
                    let combo: Vec<Int> = rn
                        .iter()
                        .zip(rp)
                        .map(|(n, p)| n * vp - p * vn)
                        .collect();
                    next.push(primitive(&combo, false));
                }
            }
            dedupe_vecs(&mut next);
            rays = next;
            processed.push(a.clone());
        }
    }

    // exact extremeness filter against the full inequality set
    let nonzero: Vec<&Vec<Int>> = ineqs.iter().filter(|a| !a.iter().all(|x| x.is_zero())).collect();
    let lin_dim = lin.len();
    rays.retain(|r| {
        if r.iter().all(|x| x.is_zero()) {
            return false;
        }
        let tight: Vec<Vec<Int>> = nonzero
            .iter()
            .filter(|a| dot_int(a, r).is_zero())
            .map(|a| (*a).clone())
            .collect();
        dim - rank_int(&tight) == lin_dim + 1
    });
    rays.sort();
    (rays, lin)
}

fn dd_adjacent(r1: &[Int], r2: &[Int], processed: &[Vec<Int>], dim: usize, lin_dim: usize) -> bool {
    let tight: Vec<Vec<Int>> = processed
        .iter()
        .filter(|a| dot_int(a, r1).is_zero() && dot_int(a, r2).is_zero())
        .cloned()
        .collect();
    dim - rank_int(&tight) == lin_dim + 2
}

fn dedupe_vecs(v: &mut Vec<Vec<Int>>) {
    v.sort();
    v.dedup();
}

/// A strongly convex rational polyhedral cone with both descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cone {
    dim: usize,
    rays: Vec<Vec<Int>>,
    ineqs: Vec<Vec<Int>>,
    eqs: Vec<Vec<Int>>,
}

impl Cone {
    /// Cone spanned by the given generators; redundant generators are
    /// dropped and the extreme rays are stored in canonical order.
    pub fn from_rays(dim: usize, gens: &[Vec<Int>]) -> Result<Cone> {
        for g in gens {
            if g.len() != dim {
                return Err(ConeError::Invalid(format!(
                    "generator has length {} in ambient rank {dim}",
                    g.len()
                )));
            }
        }
        let gens: Vec<Vec<Int>> = gens
            .iter()
            .map(|g| primitive(g, false))
            .filter(|g| !g.iter().all(|x| x.is_zero()))
            .collect();
        // dual cone: facet normals and span equations
        let (ineqs, eqs) = hrep_extreme_rays(dim, &gens, &[]);
        // pointedness: the lineality of the primal is the kernel of all
        // constraints together
        let mut stacked = ineqs.clone();
        stacked.extend(eqs.iter().cloned());
        if rank_int(&stacked) != dim {
            return Err(ConeError::NotStronglyConvex);
        }
        let (rays, lin) = hrep_extreme_rays(dim, &ineqs, &eqs);
        debug_assert!(lin.is_empty());
        let mut rays = rays;
        rays.sort();
        Ok(Cone { dim, rays, ineqs, eqs })
    }

    /// Cone `{x : ineqs·x >= 0, eqs·x = 0}`; must be strongly convex.
    pub fn from_hrep(dim: usize, ineqs: &[Vec<Int>], eqs: &[Vec<Int>]) -> Result<Cone> {
        let (rays, lin) = hrep_extreme_rays(dim, ineqs, eqs);
        if !lin.is_empty() {
            return Err(ConeError::NotStronglyConvex);
        }
        Cone::from_rays(dim, &rays)
    }

    /// Build from both descriptions, verifying exact mutual containment.
    pub fn from_rays_and_ineqs(dim: usize, gens: &[Vec<Int>], ineqs: &[Vec<Int>]) -> Result<Cone> {
        let from_gens = Cone::from_rays(dim, gens)?;
        let from_ineqs = Cone::from_hrep(dim, ineqs, &[])?;
        if from_gens != from_ineqs {
            return Err(ConeError::DescriptionMismatch);
        }
        Ok(from_gens)
    }

    pub fn zero(dim: usize) -> Cone {
        Cone::from_rays(dim, &[]).expect("zero cone is always valid")
    }

    /// The nonnegative orthant of the ambient space.
    pub fn orthant(dim: usize) -> Cone {
        let gens: Vec<Vec<Int>> = (0..dim)
            .map(|i| {
                let mut v = vec![Int::zero(); dim];
                v[i] = Int::one();
                v
            })
            .collect();
        Cone::from_rays(dim, &gens).expect("orthant is valid")
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn rays(&self) -> &[Vec<Int>] {
        &self.rays
    }

    pub fn ineqs(&self) -> &[Vec<Int>] {
        &self.ineqs
    }

    pub fn eqs(&self) -> &[Vec<Int>] {
        &self.eqs
    }

    /// Dimension of the linear span.
    pub fn span_dim(&self) -> usize {
        rank_int(&self.rays)
    }

    pub fn is_zero_cone(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn contains_int(&self, x: &[Int]) -> bool {
        self.eqs.iter().all(|e| dot_int(e, x).is_zero())
            && self.ineqs.iter().all(|a| !dot_int(a, x).is_negative())
    }

    pub fn contains_rat(&self, x: &[Rat]) -> bool {
        let xi = clear_denominators(x);
        // clear_denominators keeps the direction for nonzero x
        if x.iter().all(|v| v.is_zero()) {
            return true;
        }
        self.contains_int(&xi)
    }

    pub fn contains_cone(&self, other: &Cone) -> bool {
        other.rays.iter().all(|r| self.contains_int(r))
    }

    /// `other` is a face of `self`: spanned by the tight subset of rays at
    /// some set of facet inequalities.
    pub fn has_face(&self, other: &Cone) -> bool {
        if !self.contains_cone(other) || other.dim != self.dim {
            return false;
        }
        let tight: Vec<&Vec<Int>> = self
            .ineqs
            .iter()
            .filter(|a| other.rays.iter().all(|r| dot_int(a, r).is_zero()))
            .collect();
        let sub: Vec<Vec<Int>> = self
            .rays
            .iter()
            .filter(|r| tight.iter().all(|a| dot_int(a, r).is_zero()))
            .cloned()
            .collect();
        let mut face_rays = sub;
        face_rays.sort();
        face_rays == other.rays
    }

    pub fn is_simplicial(&self) -> bool {
        rank_int(&self.rays) == self.rays.len()
    }

    /// Simplicial with generators extending to a lattice basis.
    pub fn is_smooth(&self) -> bool {
        self.is_simplicial() && (self.rays.is_empty() || minor_gcd(&self.rays).is_one())
    }

    /// All faces, including the cone itself and the zero cone.
    pub fn faces(&self) -> Vec<Cone> {
        if self.is_simplicial() {
            // every subset of the rays spans a face
            let n = self.rays.len();
            let mut out = Vec::new();
            for mask in 0..(1usize << n) {
                let sub: Vec<Vec<Int>> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| self.rays[i].clone())
                    .collect();
                out.push(Cone::from_rays(self.dim, &sub).expect("face of valid cone"));
            }
            out.sort_by(cone_order);
            out.dedup();
            return out;
        }
        let mut seen: BTreeSet<Vec<Vec<Int>>> = BTreeSet::new();
        let mut queue = vec![self.clone()];
        let mut out = Vec::new();
        while let Some(c) = queue.pop() {
            if !seen.insert(c.rays.clone()) {
                continue;
            }
            for a in &self.ineqs {
                let sub: Vec<Vec<Int>> = c
                    .rays
                    .iter()
                    .filter(|r| dot_int(a, r).is_zero())
                    .cloned()
                    .collect();
                if sub.len() < c.rays.len() {
                    queue.push(Cone::from_rays(self.dim, &sub).expect("face of valid cone"));
                }
            }
            out.push(c);
        }
        if !seen.contains(&Vec::new()) {
            out.push(Cone::zero(self.dim));
        }
        out.sort_by(cone_order);
        out.dedup();
        out
    }

    /// Faces of codimension one inside the cone.
    pub fn facets(&self) -> Vec<Cone> {
        let d = self.span_dim();
        self.faces()
            .into_iter()
            .filter(|f| f.span_dim() + 1 == d)
            .collect()
    }

    pub fn intersect(&self, other: &Cone) -> Result<Cone> {
        if self.dim != other.dim {
            return Err(ConeError::Invalid("ambient rank mismatch".into()));
        }
        let mut ineqs = self.ineqs.clone();
        ineqs.extend(other.ineqs.iter().cloned());
        let mut eqs = self.eqs.clone();
        eqs.extend(other.eqs.iter().cloned());
        Cone::from_hrep(self.dim, &ineqs, &eqs)
    }

    /// Smallest face of `self` containing the given vector (which must lie
    /// in the cone).
    pub fn minimal_face_containing(&self, x: &[Int]) -> Cone {
        debug_assert!(self.contains_int(x));
        let tight: Vec<&Vec<Int>> = self
            .ineqs
            .iter()
            .filter(|a| dot_int(a, x).is_zero())
            .collect();
        let sub: Vec<Vec<Int>> = self
            .rays
            .iter()
            .filter(|r| tight.iter().all(|a| dot_int(a, r).is_zero()))
            .cloned()
            .collect();
        Cone::from_rays(self.dim, &sub).expect("face of valid cone")
    }

    /// A rational basis of the linear span.
    pub fn span_basis(&self) -> Vec<Vec<Int>> {
        saturated_lattice_basis(&self.rays, self.dim)
    }

    /// Join with an extra ray not in the span.
    pub fn join_ray(&self, ray: &[Int]) -> Result<Cone> {
        let mut gens = self.rays.clone();
        gens.push(ray.to_vec());
        Cone::from_rays(self.dim, &gens)
    }
}

pub fn cone_order(a: &Cone, b: &Cone) -> std::cmp::Ordering {
    (a.rays.len(), &a.rays).cmp(&(b.rays.len(), &b.rays))
}

/// A fan: a finite set of cones closed under taking faces, any two of which
/// intersect in a common face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeComplex {
    dim: usize,
    cones: Vec<Cone>,
    maximal: Vec<usize>,
}

impl ConeComplex {
    pub fn from_max_cones(dim: usize, max: &[Cone]) -> Result<ConeComplex> {
        let mut all: Vec<Cone> = Vec::new();
        for c in max {
            if c.ambient_dim() != dim {
                return Err(ConeError::Invalid("ambient rank mismatch".into()));
            }
            all.extend(c.faces());
        }
        all.sort_by(cone_order);
        all.dedup();
        let maximal: Vec<usize> = (0..all.len())
            .filter(|&i| {
                !(0..all.len()).any(|j| j != i && all[j].contains_cone(&all[i]) && all[j] != all[i])
            })
            .collect();
        Ok(ConeComplex { dim, cones: all, maximal })
    }

    /// The face fan of a single cone.
    pub fn fan_of_cone(c: &Cone) -> ConeComplex {
        ConeComplex::from_max_cones(c.ambient_dim(), std::slice::from_ref(c))
            .expect("face fan of a valid cone")
    }

    pub fn orthant(dim: usize) -> ConeComplex {
        ConeComplex::fan_of_cone(&Cone::orthant(dim))
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn maximal(&self) -> impl Iterator<Item = &Cone> {
        self.maximal.iter().map(|&i| &self.cones[i])
    }

    pub fn maximal_indices(&self) -> &[usize] {
        &self.maximal
    }

    pub fn rays(&self) -> Vec<Vec<Int>> {
        let mut out: Vec<Vec<Int>> = self
            .cones
            .iter()
            .filter(|c| c.span_dim() == 1)
            .map(|c| c.rays()[0].clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn has_cone(&self, c: &Cone) -> bool {
        self.cones.iter().any(|x| x == c)
    }

    pub fn supports_point(&self, x: &[Int]) -> bool {
        self.maximal().any(|c| c.contains_int(x))
    }

    /// Smallest cone of the complex containing `x`, if any.
    pub fn minimal_cone_containing(&self, x: &[Int]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.cones.iter().enumerate() {
            if c.contains_int(x) {
                match best {
                    None => best = Some(i),
                    Some(b) => {
                        if self.cones[b].contains_cone(c) {
                            best = Some(i)
                        }
                    }
                }
            }
        }
        best
    }

    pub fn minimal_cone_containing_cone(&self, c: &Cone) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, candidate) in self.cones.iter().enumerate() {
            if candidate.contains_cone(c) {
                match best {
                    None => best = Some(i),
                    Some(b) => {
                        if self.cones[b].contains_cone(candidate) {
                            best = Some(i)
                        }
                    }
                }
            }
        }
        best
    }

    /// Check the fan condition: pairwise intersections are common faces.
    pub fn verify_fan(&self) -> Result<()> {
        for (i, a) in self.cones.iter().enumerate() {
            for b in self.cones.iter().skip(i + 1) {
                let cap = a.intersect(b)?;
                if !a.has_face(&cap) || !b.has_face(&cap) {
                    return Err(ConeError::Invalid(
                        "pairwise intersection is not a common face".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_simplicial(&self) -> bool {
        self.maximal().all(|c| c.is_simplicial())
    }

    pub fn is_smooth(&self) -> bool {
        self.maximal().all(|c| c.is_smooth())
    }

    /// Restriction to the cones contained in the support of a face-closed
    /// subcomplex `delta`.
    pub fn cones_within(&self, support: &[Cone]) -> Vec<Cone> {
        self.cones
            .iter()
            .filter(|c| support.iter().any(|s| s.contains_cone(c)))
            .cloned()
            .collect()
    }
}

/// A refinement of a cone complex, with each refined maximal cone assigned
/// to the minimal target cone containing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subdivision {
    pub target: ConeComplex,
    pub refined: ConeComplex,
    /// per refined maximal cone (in `refined.maximal` order): index of the
    /// minimal target cone containing it
    pub assignment: Vec<usize>,
}

impl Subdivision {
    pub fn trivial(target: &ConeComplex) -> Subdivision {
        let refined = target.clone();
        let assignment = refined
            .maximal_indices()
            .iter()
            .map(|&mi| {
                target
                    .minimal_cone_containing_cone(&refined.cones()[mi])
                    .expect("maximal cone contains itself")
            })
            .collect();
        Subdivision { target: target.clone(), refined, assignment }
    }

    pub fn is_trivial(&self) -> bool {
        let mut a: Vec<&Cone> = self.target.maximal().collect();
        let mut b: Vec<&Cone> = self.refined.maximal().collect();
        a.sort_by(|x, y| cone_order(x, y));
        b.sort_by(|x, y| cone_order(x, y));
        a == b
    }

    pub fn from_refined(target: &ConeComplex, refined: ConeComplex) -> Result<Subdivision> {
        let assignment = refined
            .maximal_indices()
            .iter()
            .map(|&mi| {
                target
                    .minimal_cone_containing_cone(&refined.cones()[mi])
                    .ok_or(ConeError::Invalid("refined cone escapes the target support".into()))
            })
            .collect::<Result<Vec<usize>>>()?;
        let s = Subdivision { target: target.clone(), refined, assignment };
        s.verify()?;
        Ok(s)
    }

    /// Support equality and exact covering: every refined piece sits inside
    /// its assigned cone, and inside each maximal target cone the refined
    /// pieces tile it (every internal facet of a piece is shared by exactly
    /// two pieces, every outer facet lies in the target boundary).
    pub fn verify(&self) -> Result<()> {
        let refined_max: Vec<&Cone> = self.refined.maximal().collect();
        if refined_max.len() != self.assignment.len() {
            return Err(ConeError::Invalid("assignment length mismatch".into()));
        }
        for (piece, &t) in refined_max.iter().zip(&self.assignment) {
            let tc = &self.target.cones()[t];
            if !tc.contains_cone(piece) {
                return Err(ConeError::Invalid("refined cone not inside assigned cone".into()));
            }
            if self
                .target
                .minimal_cone_containing_cone(piece)
                .map(|m| self.target.cones()[m] != *tc)
                .unwrap_or(true)
            {
                return Err(ConeError::Invalid("assignment is not the minimal cone".into()));
            }
        }
        for tmax in self.target.maximal() {
            let pieces: Vec<&Cone> = refined_max
                .iter()
                .copied()
                .filter(|p| tmax.contains_cone(p))
                .collect();
            covering_check(tmax, &pieces)?;
        }
        Ok(())
    }
}

/// Exact covering test of a cone by same-dimensional pieces forming a
/// complex: no facet of a piece may be exposed in the interior.
fn covering_check(target: &Cone, pieces: &[&Cone]) -> Result<()> {
    let d = target.span_dim();
    let full: Vec<&Cone> = pieces.iter().copied().filter(|p| p.span_dim() == d).collect();
    if d == 0 {
        return Ok(());
    }
    if full.is_empty() {
        return Err(ConeError::Invalid("no full-dimensional piece covers a target cone".into()));
    }
    for piece in &full {
        for facet in piece.facets() {
            // outer facet: tight at some inequality of the target
            let outer = target.ineqs().iter().any(|a| {
                facet.rays().iter().all(|r| dot_int(a, r).is_zero())
                    && !piece.rays().iter().all(|r| dot_int(a, r).is_zero())
            });
            if outer {
                continue;
            }
            let sharing = full.iter().filter(|p| p.has_face(&facet)).count();
            if sharing != 2 {
                return Err(ConeError::Invalid(
                    "internal facet not shared by exactly two pieces".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Stellar subdivision of a complex at a primitive ray in its support.
pub fn star_subdivision(complex: &ConeComplex, ray: &[Int]) -> Result<Subdivision> {
    let ray = primitive(ray, false);
    if ray.iter().all(|x| x.is_zero()) {
        return Err(ConeError::NotARay);
    }
    if !complex.supports_point(&ray) {
        return Err(ConeError::RayOutsideSupport);
    }
    let mut new_max: Vec<Cone> = Vec::new();
    for c in complex.maximal() {
        if !c.contains_int(&ray) {
            new_max.push(c.clone());
            continue;
        }
        for f in c.facets() {
            if f.contains_int(&ray) {
                continue;
            }
            new_max.push(f.join_ray(&ray)?);
        }
    }
    let refined = ConeComplex::from_max_cones(complex.ambient_dim(), &new_max)?;
    Subdivision::from_refined(complex, refined)
}

/// The unique piecewise-linear function on a simplicial refined complex
/// taking value 1 on the primitive generator of `ray` and 0 on all other
/// rays, linear on each maximal cone.
#[derive(Debug, Clone)]
pub struct PlFunction {
    /// one covector per refined maximal cone, in `refined.maximal` order
    pub covectors: Vec<Vec<Rat>>,
}

pub fn phi_function(sub: &Subdivision, ray: &[Int]) -> Result<PlFunction> {
    if !sub.refined.is_simplicial() {
        return Err(ConeError::NotSimplicial);
    }
    let ray = primitive(ray, false);
    if !sub.refined.rays().contains(&ray) {
        return Err(ConeError::NotARay);
    }
    let mut covectors = Vec::new();
    for c in sub.refined.maximal() {
        let rays = c.rays();
        let k = rays.len();
        let vals: Vec<Rat> = rays
            .iter()
            .map(|r| if *r == ray { Rat::one() } else { Rat::zero() })
            .collect();
        // canonical solution in the row space of the ray matrix: f = R^T mu
        // with (R R^T) mu = vals
        let gram: Vec<Vec<Rat>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| Rat::from_integer(dot_int(&rays[i], &rays[j])))
                    .collect()
            })
            .collect();
        let mu = solve_rat(&gram, &vals)
            .ok_or_else(|| ConeError::Invalid("degenerate simplicial cone".into()))?;
        let mut f = vec![Rat::zero(); sub.refined.ambient_dim()];
        for (m, r) in mu.iter().zip(rays) {
            for (fx, rx) in f.iter_mut().zip(r) {
                *fx += m * Rat::from_integer(rx.clone());
            }
        }
        covectors.push(f);
    }
    Ok(PlFunction { covectors })
}

impl PlFunction {
    /// Evaluate at a point of the support.
    pub fn eval(&self, sub: &Subdivision, x: &[Rat]) -> Option<Rat> {
        for (i, c) in sub.refined.maximal().enumerate() {
            if c.contains_rat(x) {
                return Some(dot_rat(&self.covectors[i], x));
            }
        }
        None
    }
}

/// Extends a subdivision of a face-closed subcomplex to the whole complex
/// by repeated stellar subdivision at canonical interior rays, processed in
/// increasing dimension. The restriction to the subcomplex is the input.
pub fn extend_subdivision(
    complex: &ConeComplex,
    delta: &ConeComplex,
    sub_delta: &Subdivision,
) -> Result<Subdivision> {
    for c in delta.cones() {
        if !complex.has_cone(c) {
            return Err(ConeError::NotFaceClosed);
        }
    }
    if sub_delta.target != *delta {
        return Err(ConeError::TargetMismatch);
    }
    sub_delta.verify()?;

    let mut order: Vec<usize> = (0..complex.cones().len()).collect();
    order.sort_by_key(|&i| complex.cones()[i].span_dim());

    // pieces covering each cone of the ambient complex
    let mut covers: Vec<Vec<Cone>> = vec![Vec::new(); complex.cones().len()];
    for &ci in &order {
        let sigma = &complex.cones()[ci];
        if delta.has_cone(sigma) {
            let within: Vec<Cone> = sub_delta
                .refined
                .cones()
                .iter()
                .filter(|t| sigma.contains_cone(t))
                .cloned()
                .collect();
            covers[ci] = maximal_cones_of(&within);
            continue;
        }
        // collect refined pieces of the proper facets
        let mut boundary: Vec<Cone> = Vec::new();
        let mut boundary_trivial = true;
        for f in sigma.facets() {
            let fi = complex
                .cones()
                .iter()
                .position(|c| *c == f)
                .ok_or(ConeError::Invalid("complex not closed under faces".into()))?;
            if covers[fi].len() != 1 || covers[fi][0] != f {
                boundary_trivial = false;
            }
            boundary.extend(covers[fi].iter().cloned());
        }
        if boundary_trivial || sigma.span_dim() <= 1 {
            covers[ci] = vec![sigma.clone()];
            continue;
        }
        let interior: Vec<Int> = (0..sigma.ambient_dim())
            .map(|k| sigma.rays().iter().map(|r| r[k].clone()).sum())
            .collect();
        let v = primitive(&interior, false);
        let mut pieces = Vec::new();
        for b in maximal_cones_of(&boundary) {
            pieces.push(b.join_ray(&v)?);
        }
        covers[ci] = pieces;
    }

    let mut all_max: Vec<Cone> = Vec::new();
    for &mi in complex.maximal_indices() {
        all_max.extend(covers[mi].iter().cloned());
    }
    let refined = ConeComplex::from_max_cones(complex.ambient_dim(), &all_max)?;
    Subdivision::from_refined(complex, refined)
}

fn maximal_cones_of(cones: &[Cone]) -> Vec<Cone> {
    let mut sorted = cones.to_vec();
    sorted.sort_by(cone_order);
    sorted.dedup();
    sorted
        .iter()
        .filter(|c| !sorted.iter().any(|d| *d != **c && d.contains_cone(c)))
        .cloned()
        .collect()
}

/// Restriction of a subdivision of `complex` to a face-closed subcomplex.
pub fn restrict_subdivision(sub: &Subdivision, delta: &ConeComplex) -> Result<Subdivision> {
    for c in delta.cones() {
        if !sub.target.has_cone(c) {
            return Err(ConeError::NotFaceClosed);
        }
    }
    let within: Vec<Cone> = sub
        .refined
        .cones()
        .iter()
        .filter(|t| delta.cones().iter().any(|d| d.contains_cone(t)))
        .cloned()
        .collect();
    let max = maximal_cones_of(&within);
    let refined = ConeComplex::from_max_cones(delta.ambient_dim(), &max)?;
    Subdivision::from_refined(delta, refined)
}

/// Pulls a subdivision of the target back along `x -> map · x`; the source
/// complex must map into the target support.
pub fn preimage_subdivision(
    source: &ConeComplex,
    map: &[Vec<Int>],
    sub: &Subdivision,
) -> Result<Subdivision> {
    let src_dim = source.ambient_dim();
    let tgt_dim = sub.target.ambient_dim();
    if map.len() != tgt_dim || (tgt_dim > 0 && map[0].len() != src_dim) {
        return Err(ConeError::Invalid("map shape mismatch".into()));
    }
    let transport = |covector: &Vec<Int>| -> Vec<Int> {
        (0..src_dim)
            .map(|j| (0..tgt_dim).map(|i| &covector[i] * &map[i][j]).sum())
            .collect()
    };
    let mut pieces: Vec<Cone> = Vec::new();
    for smax in source.maximal() {
        for tmax in sub.refined.maximal() {
            let mut ineqs: Vec<Vec<Int>> = smax.ineqs().to_vec();
            ineqs.extend(tmax.ineqs().iter().map(&transport));
            let mut eqs: Vec<Vec<Int>> = smax.eqs().to_vec();
            eqs.extend(tmax.eqs().iter().map(&transport));
            let piece = Cone::from_hrep(src_dim, &ineqs, &eqs)?;
            if !piece.is_zero_cone() {
                pieces.push(piece);
            }
        }
    }
    if pieces.is_empty() {
        pieces.push(Cone::zero(src_dim));
    }
    let max = maximal_cones_of(&pieces);
    let refined = ConeComplex::from_max_cones(src_dim, &max)?;
    let out = Subdivision::from_refined(source, refined).map_err(|_| ConeError::MapLeavesSupport)?;
    out.verify().map_err(|_| ConeError::MapLeavesSupport)?;
    Ok(out)
}

/// Common refinement of two subdivisions of the same target.
pub fn common_refinement(a: &Subdivision, b: &Subdivision) -> Result<Subdivision> {
    if a.target != b.target {
        return Err(ConeError::TargetMismatch);
    }
    let mut pieces = Vec::new();
    for ca in a.refined.maximal() {
        for cb in b.refined.maximal() {
            let cap = ca.intersect(cb)?;
            pieces.push(cap);
        }
    }
    let max = maximal_cones_of(&pieces);
    let refined = ConeComplex::from_max_cones(a.target.ambient_dim(), &max)?;
    Subdivision::from_refined(&a.target, refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::int;

    fn iv(v: &[i64]) -> Vec<Int> {
        v.iter().map(|&x| int(x)).collect()
    }

    fn cone2(rays: &[&[i64]]) -> Cone {
        let dim = rays.first().map(|r| r.len()).unwrap_or(0);
        Cone::from_rays(dim, &rays.iter().map(|r| iv(r)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn smoothness_checks() {
        assert!(cone2(&[&[1, 0], &[0, 1]]).is_smooth());
        assert!(!cone2(&[&[1, 0], &[1, 2]]).is_smooth());
        // one cone with three rays in rank 2 is not simplicial
        let c = cone2(&[&[1, 0], &[1, 1], &[0, 1]]);
        assert!(c.is_simplicial(), "middle ray is redundant, cone is the quadrant");
        assert_eq!(c.rays().len(), 2);
        // a genuinely non-simplicial cone in rank 3
        let c3 = cone2(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1], &[1, 1, -1]]);
        assert!(!c3.is_simplicial());
        assert!(!c3.is_smooth());
    }

    #[test]
    fn hrep_roundtrip() {
        let c = cone2(&[&[1, 0], &[1, 2]]);
        assert!(c.contains_int(&iv(&[1, 1])));
        assert!(!c.contains_int(&iv(&[0, 1])));
        assert!(!c.contains_int(&iv(&[1, -1])));
        let c2 = Cone::from_hrep(2, c.ineqs(), c.eqs()).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn non_pointed_rejected() {
        let r = Cone::from_rays(2, &[iv(&[1, 0]), iv(&[-1, 0])]);
        assert_eq!(r.unwrap_err(), ConeError::NotStronglyConvex);
    }

    #[test]
    fn star_of_quadrant() {
        let x = ConeComplex::orthant(2);
        let s = star_subdivision(&x, &iv(&[1, 1])).unwrap();
        let max: Vec<&Cone> = s.refined.maximal().collect();
        assert_eq!(max.len(), 2);
        assert!(s.verify().is_ok());
        // star at an existing ray is the identity
        let s_id = star_subdivision(&x, &iv(&[1, 0])).unwrap();
        assert!(s_id.is_trivial());
        // rank 3 at the barycentric ray: three smooth maximal cones
        let x3 = ConeComplex::orthant(3);
        let s3 = star_subdivision(&x3, &iv(&[1, 1, 1])).unwrap();
        let max3: Vec<&Cone> = s3.refined.maximal().collect();
        assert_eq!(max3.len(), 3);
        assert!(max3.iter().all(|c| c.is_smooth()));
    }

    #[test]
    fn ray_outside_support() {
        let x = ConeComplex::orthant(2);
        assert_eq!(
            star_subdivision(&x, &iv(&[-1, 1])).unwrap_err(),
            ConeError::RayOutsideSupport
        );
    }

    #[test]
    fn phi_is_min_on_star() {
        let x = ConeComplex::orthant(2);
        let s = star_subdivision(&x, &iv(&[1, 1])).unwrap();
        let phi = phi_function(&s, &iv(&[1, 1])).unwrap();
        let at = |a: i64, b: i64| {
            phi.eval(&s, &[Rat::from_integer(int(a)), Rat::from_integer(int(b))])
                .unwrap()
        };
        assert_eq!(at(2, 3), Rat::from_integer(int(2)));
        assert_eq!(at(3, 2), Rat::from_integer(int(2)));
        assert_eq!(at(5, 5), Rat::from_integer(int(5)));
        // phi at an original ray of the unsubdivided smooth cone is the
        // dual coordinate
        let trivial = Subdivision::trivial(&x);
        let phi0 = phi_function(&trivial, &iv(&[1, 0])).unwrap();
        assert_eq!(phi0.eval(&trivial, &[Rat::from_integer(int(7)), Rat::from_integer(int(3))]), Some(Rat::from_integer(int(7))));
    }

    #[test]
    fn phi_rank3() {
        let x = ConeComplex::orthant(3);
        let s = star_subdivision(&x, &iv(&[1, 1, 1])).unwrap();
        let phi = phi_function(&s, &iv(&[1, 1, 1])).unwrap();
        let v: Vec<Rat> = [2, 2, 5].iter().map(|&a| Rat::from_integer(int(a))).collect();
        assert_eq!(phi.eval(&s, &v), Some(Rat::from_integer(int(2))));
    }

    #[test]
    fn extend_identity_cases() {
        let x = ConeComplex::orthant(2);
        let s = star_subdivision(&x, &iv(&[1, 1])).unwrap();
        // delta = whole complex returns the subdivision unchanged
        let e = extend_subdivision(&x, &x, &s).unwrap();
        assert_eq!(e.refined, s.refined);
        // delta = a ray with the trivial subdivision extends to the identity
        let ray_complex = ConeComplex::fan_of_cone(&cone2(&[&[1, 0]]));
        let triv = Subdivision::trivial(&ray_complex);
        let e2 = extend_subdivision(&x, &ray_complex, &triv).unwrap();
        assert!(e2.is_trivial());
    }

    #[test]
    fn extend_restricts_to_input() {
        let x = ConeComplex::orthant(3);
        let face = ConeComplex::fan_of_cone(&cone2(&[&[1, 0, 0], &[0, 1, 0]]));
        let s_face = star_subdivision(&face, &iv(&[1, 1, 0])).unwrap();
        let e = extend_subdivision(&x, &face, &s_face).unwrap();
        let r = restrict_subdivision(&e, &face).unwrap();
        assert_eq!(r.refined, s_face.refined);
        assert!(e.verify().is_ok());
    }

    #[test]
    fn preimage_cases() {
        let x = ConeComplex::orthant(2);
        let s = star_subdivision(&x, &iv(&[1, 1])).unwrap();
        // identity map returns the same refined complex
        let id = vec![iv(&[1, 0]), iv(&[0, 1])];
        let p = preimage_subdivision(&x, &id, &s).unwrap();
        assert_eq!(p.refined, s.refined);
        // (a,b) -> a+b onto the ray with the trivial subdivision
        let ray = ConeComplex::fan_of_cone(&cone2(&[&[1]]));
        let triv = Subdivision::trivial(&ray);
        let sum_map = vec![iv(&[1, 1])];
        let p2 = preimage_subdivision(&x, &sum_map, &triv).unwrap();
        assert!(p2.is_trivial());
        // a genuinely subdivided rank-2 target pulled back along a linear map
        let m = vec![iv(&[1, 1]), iv(&[0, 1])];
        let p3 = preimage_subdivision(&x, &m, &s).unwrap();
        assert!(p3.verify().is_ok());
    }

    #[test]
    fn refinement_cases() {
        let x = ConeComplex::orthant(2);
        let s1 = star_subdivision(&x, &iv(&[1, 1])).unwrap();
        let s2 = star_subdivision(&x, &iv(&[1, 2])).unwrap();
        let r = common_refinement(&s1, &s1).unwrap();
        assert_eq!(r.refined, s1.refined);
        let r12 = common_refinement(&s1, &s2).unwrap();
        assert_eq!(r12.refined.maximal().count(), 3);
        let triv = Subdivision::trivial(&x);
        let r1t = common_refinement(&s1, &triv).unwrap();
        assert_eq!(r1t.refined, s1.refined);
    }

    #[test]
    fn covering_detects_gaps() {
        let target = Cone::orthant(2);
        let a = cone2(&[&[1, 0], &[1, 1]]);
        let b = cone2(&[&[1, 1], &[0, 1]]);
        assert!(covering_check(&target, &[&a, &b]).is_ok());
        assert!(covering_check(&target, &[&a]).is_err());
    }
}
