//! Piecewise-polynomial classes on moduli cone stacks.
//!
//! A class assigns to every stratum either a single polynomial in the
//! stratum coordinates (strict) or a subdivision of the stratum cone with
//! one polynomial per maximal refined cone. Classes must be invariant
//! under the stratum automorphisms and compatible with contraction faces;
//! [`validate`] checks exactly that. Ring operations work stratumwise,
//! refining to a common subdivision first, and [`pullback`] substitutes a
//! morphism's coordinate scripts (carrying subdivisions through exact
//! preimages).

use crate::cone::{
    common_refinement, phi_function, preimage_subdivision, star_subdivision, Cone, ConeComplex,
    ConeError, Subdivision,
};
use crate::graph::{GraphError, StableGraph};
use crate::linalg::{saturated_lattice_basis, Int, Rat};
use crate::moduli::{CoordKind, Side, Stack, StackMorphism, StackSignature};
use crate::poly::Poly;
use num::{One, Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum PpError {
    #[error("stack is not pointed")]
    NotPointed,
    #[error("graph does not have exactly one edge")]
    NotOneEdge,
    #[error("class does not live on this stack")]
    BaseMismatch,
    #[error("exponential of a class with nonzero degree-0 part")]
    NonNilpotentExp,
    #[error("degree error: {0}")]
    DegreeError(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, PpError>;

/// Class data on one stratum.
#[derive(Debug, Clone, PartialEq)]
pub enum StratumClass {
    Strict(Poly),
    Subdivided { sub: Subdivision, polys: Vec<Poly> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PPClass {
    pub signature: StackSignature,
    pub strata: Vec<StratumClass>,
}

fn ensure_base(stack: &Stack, class: &PPClass) -> Result<()> {
    if stack.signature != class.signature || stack.strata.len() != class.strata.len() {
        return Err(PpError::BaseMismatch);
    }
    Ok(())
}

impl PPClass {
    pub fn constant(stack: &Stack, c: Rat) -> PPClass {
        PPClass {
            signature: stack.signature,
            strata: stack
                .strata
                .iter()
                .map(|_| StratumClass::Strict(Poly::constant(c.clone())))
                .collect(),
        }
    }

    pub fn zero(stack: &Stack) -> PPClass {
        PPClass::constant(stack, Rat::zero())
    }

    pub fn one(stack: &Stack) -> PPClass {
        PPClass::constant(stack, Rat::one())
    }

    pub fn is_zero(&self) -> bool {
        self.strata.iter().all(|s| match s {
            StratumClass::Strict(p) => p.is_zero(),
            StratumClass::Subdivided { polys, .. } => polys.iter().all(|p| p.is_zero()),
        })
    }

    /// `Some(d)` when every stratum polynomial is homogeneous of the same
    /// degree (zero strata are compatible with any degree).
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut degree: Option<u32> = None;
        for s in &self.strata {
            let polys: Vec<&Poly> = match s {
                StratumClass::Strict(p) => vec![p],
                StratumClass::Subdivided { polys, .. } => polys.iter().collect(),
            };
            for p in polys {
                if p.is_zero() {
                    continue;
                }
                let d = p.homogeneous_degree()?;
                match degree {
                    None => degree = Some(d),
                    Some(prev) if prev != d => return None,
                    _ => {}
                }
            }
        }
        degree.or(Some(0))
    }
}

/// The strict degree-1 class equal to the length of marking `i` on every
/// stratum. Its image in log Chow is minus the i-th psi class.
pub fn length_class(stack: &Stack, i: usize) -> Result<PPClass> {
    if !stack.is_pointed() {
        return Err(PpError::NotPointed);
    }
    let mut strata = Vec::with_capacity(stack.strata.len());
    for s in &stack.strata {
        let c = s
            .coord_index(Side::Only, CoordKind::Leg(i))
            .ok_or_else(|| PpError::Invalid(format!("no marking {i} on this stack")))?;
        strata.push(StratumClass::Strict(Poly::var(c as u32)));
    }
    Ok(PPClass { signature: stack.signature, strata })
}

/// Strict degree-1 boundary class of a one-edge stable graph: on each
/// stratum, the sum of the lengths of the edges whose contraction type
/// matches it.
pub fn boundary_class(stack: &Stack, delta: &StableGraph) -> Result<PPClass> {
    if delta.num_edges() != 1 {
        return Err(PpError::NotOneEdge);
    }
    let (delta_canon, _) = delta.canonicalize()?;
    let mut strata = Vec::with_capacity(stack.strata.len());
    for s in &stack.strata {
        let graph = &s.graphs[0];
        let mut poly = Poly::zero();
        for e in 0..graph.num_edges() {
            let others: std::collections::BTreeSet<usize> =
                (0..graph.num_edges()).filter(|&x| x != e).collect();
            let (contracted, _) = graph.contract_edges(&others);
            let (canon, _) = contracted.canonicalize()?;
            if canon == delta_canon {
                let c = s
                    .coord_index(Side::Only, CoordKind::Edge(e))
                    .expect("edge coordinate");
                poly = poly.add(&Poly::var(c as u32));
            }
        }
        strata.push(StratumClass::Strict(poly));
    }
    Ok(PPClass { signature: stack.signature, strata })
}

// ---- piecewise plumbing --------------------------------------------------

fn orthant_pieces(dim: usize, sc: &StratumClass) -> Vec<(Cone, Poly)> {
    match sc {
        StratumClass::Strict(p) => vec![(Cone::orthant(dim), p.clone())],
        StratumClass::Subdivided { sub, polys } => sub
            .refined
            .maximal()
            .cloned()
            .zip(polys.iter().cloned())
            .collect(),
    }
}

fn interior_point(c: &Cone) -> Vec<Rat> {
    let dim = c.ambient_dim();
    let mut v = vec![Rat::zero(); dim];
    for r in c.rays() {
        for (x, y) in v.iter_mut().zip(r) {
            *x += Rat::from_integer(y.clone());
        }
    }
    v
}

fn piece_poly_at<'a>(pieces: &'a [(Cone, Poly)], point: &[Rat]) -> Option<&'a Poly> {
    pieces
        .iter()
        .find(|(c, _)| c.contains_rat(point))
        .map(|(_, p)| p)
}

/// Equality of two polynomials as functions on the span of a cone.
fn polys_equal_on(c: &Cone, a: &Poly, b: &Poly) -> bool {
    let diff = a.sub(b);
    if diff.is_zero() {
        return true;
    }
    let basis = saturated_lattice_basis(c.rays(), c.ambient_dim());
    let map: BTreeMap<u32, Poly> = (0..c.ambient_dim() as u32)
        .map(|i| {
            let expr = basis.iter().enumerate().fold(Poly::zero(), |acc, (j, bv)| {
                acc.add(
                    &Poly::var(j as u32).scale(&Rat::from_integer(bv[i as usize].clone())),
                )
            });
            (i, expr)
        })
        .collect();
    diff.substitute(&map).is_zero()
}

/// Equality of two piecewise polynomials with the same support, decided on
/// all pairwise intersections.
fn piecewise_equal(a: &[(Cone, Poly)], b: &[(Cone, Poly)]) -> std::result::Result<(), String> {
    for (ca, pa) in a {
        for (cb, pb) in b {
            let cap = ca.intersect(cb).map_err(|e| e.to_string())?;
            if !polys_equal_on(&cap, pa, pb) {
                return Err(format!(
                    "polynomials differ on the cone spanned by {:?}",
                    cap.rays()
                ));
            }
        }
    }
    Ok(())
}

fn stratum_classes_equal(dim: usize, a: &StratumClass, b: &StratumClass) -> bool {
    if let (StratumClass::Strict(pa), StratumClass::Strict(pb)) = (a, b) {
        return pa == pb;
    }
    piecewise_equal(&orthant_pieces(dim, a), &orthant_pieces(dim, b)).is_ok()
}

/// Exact equality of classes as piecewise functions (common-refinement
/// semantics).
pub fn pp_equal(stack: &Stack, a: &PPClass, b: &PPClass) -> Result<bool> {
    ensure_base(stack, a)?;
    ensure_base(stack, b)?;
    for ((s, sa), sb) in stack.strata.iter().zip(&a.strata).zip(&b.strata) {
        if !stratum_classes_equal(s.dim(), sa, sb) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn binary_op(
    stack: &Stack,
    a: &PPClass,
    b: &PPClass,
    op: &dyn Fn(&Poly, &Poly) -> Poly,
) -> Result<PPClass> {
    ensure_base(stack, a)?;
    ensure_base(stack, b)?;
    let mut strata = Vec::with_capacity(stack.strata.len());
    for ((s, sa), sb) in stack.strata.iter().zip(&a.strata).zip(&b.strata) {
        let out = match (sa, sb) {
            (StratumClass::Strict(pa), StratumClass::Strict(pb)) => {
                StratumClass::Strict(op(pa, pb))
            }
            _ => {
                let sub_a = stratum_subdivision(s.dim(), sa);
                let sub_b = stratum_subdivision(s.dim(), sb);
                let joint = common_refinement(&sub_a, &sub_b)?;
                let pieces_a = orthant_pieces(s.dim(), sa);
                let pieces_b = orthant_pieces(s.dim(), sb);
                let mut polys = Vec::new();
                for c in joint.refined.maximal() {
                    let x = interior_point(c);
                    let pa = piece_poly_at(&pieces_a, &x)
                        .ok_or_else(|| PpError::Invalid("piece escaped the support".into()))?;
                    let pb = piece_poly_at(&pieces_b, &x)
                        .ok_or_else(|| PpError::Invalid("piece escaped the support".into()))?;
                    polys.push(op(pa, pb));
                }
                StratumClass::Subdivided { sub: joint, polys }
            }
        };
        strata.push(out);
    }
    Ok(PPClass { signature: stack.signature, strata })
}

fn stratum_subdivision(dim: usize, sc: &StratumClass) -> Subdivision {
    match sc {
        StratumClass::Strict(_) => Subdivision::trivial(&ConeComplex::orthant(dim)),
        StratumClass::Subdivided { sub, .. } => sub.clone(),
    }
}

pub fn add(stack: &Stack, a: &PPClass, b: &PPClass) -> Result<PPClass> {
    binary_op(stack, a, b, &|p, q| p.add(q))
}

pub fn mul(stack: &Stack, a: &PPClass, b: &PPClass) -> Result<PPClass> {
    binary_op(stack, a, b, &|p, q| p.mul(q))
}

pub fn scale(class: &PPClass, k: &Rat) -> PPClass {
    PPClass {
        signature: class.signature,
        strata: class
            .strata
            .iter()
            .map(|s| match s {
                StratumClass::Strict(p) => StratumClass::Strict(p.scale(k)),
                StratumClass::Subdivided { sub, polys } => StratumClass::Subdivided {
                    sub: sub.clone(),
                    polys: polys.iter().map(|p| p.scale(k)).collect(),
                },
            })
            .collect(),
    }
}

pub fn graded_part(class: &PPClass, k: u32) -> PPClass {
    PPClass {
        signature: class.signature,
        strata: class
            .strata
            .iter()
            .map(|s| match s {
                StratumClass::Strict(p) => StratumClass::Strict(p.graded_part(k)),
                StratumClass::Subdivided { sub, polys } => StratumClass::Subdivided {
                    sub: sub.clone(),
                    polys: polys.iter().map(|p| p.graded_part(k)).collect(),
                },
            })
            .collect(),
    }
}

pub fn exp_truncated(stack: &Stack, class: &PPClass, max_degree: u32) -> Result<PPClass> {
    ensure_base(stack, class)?;
    let nilpotent = class.strata.iter().all(|s| match s {
        StratumClass::Strict(p) => p.constant_term().is_zero(),
        StratumClass::Subdivided { polys, .. } => {
            polys.iter().all(|p| p.constant_term().is_zero())
        }
    });
    if !nilpotent {
        return Err(PpError::NonNilpotentExp);
    }
    Ok(PPClass {
        signature: class.signature,
        strata: class
            .strata
            .iter()
            .map(|s| match s {
                StratumClass::Strict(p) => StratumClass::Strict(p.exp_truncated(max_degree)),
                StratumClass::Subdivided { sub, polys } => StratumClass::Subdivided {
                    sub: sub.clone(),
                    polys: polys.iter().map(|p| p.exp_truncated(max_degree)).collect(),
                },
            })
            .collect(),
    })
}

// ---- validation -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub stratum: usize,
    pub detail: String,
}

/// Checks automorphism invariance and face compatibility on every stratum;
/// returns all violations with witnesses.
pub fn validate(stack: &Stack, class: &PPClass) -> Result<Vec<Violation>> {
    ensure_base(stack, class)?;
    let mut violations = Vec::new();
    for (si, (stratum, sc)) in stack.strata.iter().zip(&class.strata).enumerate() {
        // automorphism invariance
        for perm in &stratum.aut_perms {
            let permuted = permute_stratum_class(sc, perm);
            if !stratum_classes_equal(stratum.dim(), sc, &permuted) {
                violations.push(Violation {
                    stratum: si,
                    detail: format!("not invariant under coordinate permutation {perm:?}"),
                });
            }
        }
        // face compatibility
        for f in &stratum.face_maps {
            let target_dim = stack.strata[f.target].dim();
            let restricted = restrict_to_face(stratum.dim(), sc, &f.coord_map, target_dim)?;
            let neighbour = &class.strata[f.target];
            if !stratum_classes_equal(target_dim, &restricted, neighbour) {
                violations.push(Violation {
                    stratum: si,
                    detail: format!(
                        "restriction to the face at coordinate {} disagrees with stratum {}",
                        f.zeroed, f.target
                    ),
                });
            }
        }
    }
    Ok(violations)
}

fn permute_stratum_class(sc: &StratumClass, perm: &[usize]) -> StratumClass {
    let rename = |v: u32| Some(perm[v as usize] as u32);
    match sc {
        StratumClass::Strict(p) => StratumClass::Strict(p.rename(&rename)),
        StratumClass::Subdivided { sub, polys } => {
            // permute each piece cone and its polynomial
            let dim = sub.refined.ambient_dim();
            let pieces: Vec<Cone> = sub
                .refined
                .maximal()
                .map(|c| {
                    let rays: Vec<Vec<Int>> = c
                        .rays()
                        .iter()
                        .map(|r| {
                            let mut out = vec![Int::zero(); dim];
                            for (i, x) in r.iter().enumerate() {
                                out[perm[i]] = x.clone();
                            }
                            out
                        })
                        .collect();
                    Cone::from_rays(dim, &rays).expect("permuted cone valid")
                })
                .collect();
            let refined = ConeComplex::from_max_cones(dim, &pieces).expect("permuted fan");
            let target = sub.target.clone();
            let permuted = Subdivision::from_refined(&target, refined).expect("permuted subdivision");
            // polynomials in the order of the permuted refined maximal cones
            let moved: Vec<(Cone, Poly)> = sub
                .refined
                .maximal()
                .zip(polys)
                .map(|(c, p)| {
                    let rays: Vec<Vec<Int>> = c
                        .rays()
                        .iter()
                        .map(|r| {
                            let mut out = vec![Int::zero(); dim];
                            for (i, x) in r.iter().enumerate() {
                                out[perm[i]] = x.clone();
                            }
                            out
                        })
                        .collect();
                    (
                        Cone::from_rays(dim, &rays).expect("permuted cone valid"),
                        p.rename(&rename),
                    )
                })
                .collect();
            let polys: Vec<Poly> = permuted
                .refined
                .maximal()
                .map(|c| {
                    let x = interior_point(c);
                    piece_poly_at(&moved, &x)
                        .cloned()
                        .expect("permuted piece found")
                })
                .collect();
            StratumClass::Subdivided { sub: permuted, polys }
        }
    }
}

/// Restrict a stratum class to a contraction face and express it in the
/// coordinates of the target stratum.
fn restrict_to_face(
    dim: usize,
    sc: &StratumClass,
    coord_map: &[Option<usize>],
    target_dim: usize,
) -> Result<StratumClass> {
    let rename = |v: u32| coord_map[v as usize].map(|t| t as u32);
    match sc {
        StratumClass::Strict(p) => Ok(StratumClass::Strict(p.rename(&rename))),
        StratumClass::Subdivided { sub, polys } => {
            // intersect pieces with the face, then transport coordinates
            let mut pieces: Vec<(Cone, Poly)> = Vec::new();
            for (c, p) in sub.refined.maximal().zip(polys) {
                let mut rays: Vec<Vec<Int>> = Vec::new();
                // face: zeroed coordinates vanish
                let mut ineqs: Vec<Vec<Int>> = c.ineqs().to_vec();
                let mut eqs: Vec<Vec<Int>> = c.eqs().to_vec();
                for (i, m) in coord_map.iter().enumerate() {
                    if m.is_none() {
                        let mut e = vec![Int::zero(); dim];
                        e[i] = Int::one();
                        eqs.push(e);
                    }
                }
                let face_piece = Cone::from_hrep(dim, &ineqs, &eqs)?;
                for r in face_piece.rays() {
                    let mut out = vec![Int::zero(); target_dim];
                    for (i, x) in r.iter().enumerate() {
                        if let Some(t) = coord_map[i] {
                            out[t] = x.clone();
                        } else if !x.is_zero() {
                            return Err(PpError::Invalid("face piece escapes the face".into()));
                        }
                    }
                    rays.push(out);
                }
                ineqs.clear();
                let mapped = Cone::from_rays(target_dim, &rays)?;
                pieces.push((mapped, p.rename(&rename)));
            }
            let max: Vec<Cone> = pieces.iter().map(|(c, _)| c.clone()).collect();
            let refined = ConeComplex::from_max_cones(target_dim, &max)?;
            let target = ConeComplex::orthant(target_dim);
            let sub = Subdivision::from_refined(&target, refined)?;
            let polys: Vec<Poly> = sub
                .refined
                .maximal()
                .map(|c| {
                    let x = interior_point(c);
                    piece_poly_at(&pieces, &x)
                        .cloned()
                        .ok_or_else(|| PpError::Invalid("face piece not covered".into()))
                })
                .collect::<Result<_>>()?;
            Ok(StratumClass::Subdivided { sub, polys })
        }
    }
}

// ---- pullback ---------------------------------------------------------------

/// Pullback along a stack morphism: per-stratum variable substitution by
/// the script, carrying subdivisions through exact preimages.
pub fn pullback(m: &StackMorphism, class: &PPClass) -> Result<PPClass> {
    ensure_base(&m.target, class)?;
    let mut strata = Vec::with_capacity(m.source.strata.len());
    for (si, sstr) in m.source.strata.iter().enumerate() {
        let tgt = m.stratum_map[si];
        let script = &m.scripts[si];
        let subst: BTreeMap<u32, Poly> = script
            .exprs
            .iter()
            .enumerate()
            .map(|(t, expr)| {
                let poly = expr.iter().fold(Poly::zero(), |acc, (src, coeff)| {
                    acc.add(
                        &Poly::var(*src as u32).scale(&Rat::from_integer(coeff.clone())),
                    )
                });
                (t as u32, poly)
            })
            .collect();
        let out = match &class.strata[tgt] {
            StratumClass::Strict(p) => StratumClass::Strict(p.substitute(&subst)),
            StratumClass::Subdivided { sub, polys } => {
                let src_dim = sstr.dim();
                let matrix = script.matrix(src_dim);
                let source_complex = ConeComplex::orthant(src_dim);
                let pre = preimage_subdivision(&source_complex, &matrix, sub)?;
                let target_pieces: Vec<(Cone, Poly)> = sub
                    .refined
                    .maximal()
                    .cloned()
                    .zip(polys.iter().cloned())
                    .collect();
                let polys: Vec<Poly> = pre
                    .refined
                    .maximal()
                    .map(|c| {
                        let x = interior_point(c);
                        // image of the interior point under the script
                        let y: Vec<Rat> = matrix
                            .iter()
                            .map(|row| {
                                row.iter()
                                    .zip(&x)
                                    .map(|(a, b)| Rat::from_integer(a.clone()) * b)
                                    .sum()
                            })
                            .collect();
                        piece_poly_at(&target_pieces, &y)
                            .map(|p| p.substitute(&subst))
                            .ok_or_else(|| {
                                PpError::Invalid("image point escapes the target pieces".into())
                            })
                    })
                    .collect::<Result<_>>()?;
                StratumClass::Subdivided { sub: pre, polys }
            }
        };
        strata.push(out);
    }
    Ok(PPClass { signature: m.source.signature, strata })
}

/// Exterior product of classes on two single stacks, as a class on the
/// product stack (disjoint-variable polynomial product stratumwise).
pub fn exterior_product(
    left_stack: &Stack,
    right_stack: &Stack,
    product: &Stack,
    a: &PPClass,
    b: &PPClass,
) -> Result<PPClass> {
    ensure_base(left_stack, a)?;
    ensure_base(right_stack, b)?;
    let rlen = right_stack.strata.len();
    let mut strata = Vec::with_capacity(product.strata.len());
    for (li, ls) in left_stack.strata.iter().enumerate() {
        for (ri, rs) in right_stack.strata.iter().enumerate() {
            let llen = ls.dim();
            let pdim = product.strata[li * rlen + ri].dim();
            let shift = |p: &Poly| p.rename(&|v| Some(v + llen as u32));
            let out = match (&a.strata[li], &b.strata[ri]) {
                (StratumClass::Strict(pa), StratumClass::Strict(pb)) => {
                    StratumClass::Strict(pa.mul(&shift(pb)))
                }
                (sa, sb) => {
                    let pieces_a = orthant_pieces(ls.dim(), sa);
                    let pieces_b = orthant_pieces(rs.dim(), sb);
                    let mut pieces: Vec<(Cone, Poly)> = Vec::new();
                    for (ca, pa) in &pieces_a {
                        for (cb, pb) in &pieces_b {
                            let mut rays: Vec<Vec<Int>> = Vec::new();
                            for r in ca.rays() {
                                let mut v = vec![Int::zero(); pdim];
                                v[..llen].clone_from_slice(r);
                                rays.push(v);
                            }
                            for r in cb.rays() {
                                let mut v = vec![Int::zero(); pdim];
                                v[llen..].clone_from_slice(r);
                                rays.push(v);
                            }
                            pieces.push((Cone::from_rays(pdim, &rays)?, pa.mul(&shift(pb))));
                        }
                    }
                    let max: Vec<Cone> = pieces.iter().map(|(c, _)| c.clone()).collect();
                    let refined = ConeComplex::from_max_cones(pdim, &max)?;
                    let target = ConeComplex::orthant(pdim);
                    let sub = Subdivision::from_refined(&target, refined)?;
                    let polys: Vec<Poly> = sub
                        .refined
                        .maximal()
                        .map(|c| {
                            let x = interior_point(c);
                            piece_poly_at(&pieces, &x)
                                .cloned()
                                .ok_or_else(|| PpError::Invalid("product piece missing".into()))
                        })
                        .collect::<Result<_>>()?;
                    StratumClass::Subdivided { sub, polys }
                }
            };
            strata.push(out);
        }
    }
    Ok(PPClass { signature: product.signature, strata })
}

// ---- the degree-g double ramification polynomial ---------------------------

#[derive(Debug, Clone)]
pub struct DrOutcome {
    pub class: PPClass,
    pub warning: Option<String>,
}

/// The degree-`g` part of `exp(1/2 (-sum a_i^2 l_i - L)) * P`, computed
/// exactly on the pointed stack. Inputs `L` (degree one) and `P` are
/// pluggable; a nonzero sum of `a` yields the zero class with a warning.
pub fn dr_polynomial(
    stack: &Stack,
    a: &[i64],
    l_class: &PPClass,
    p_class: &PPClass,
) -> Result<DrOutcome> {
    let StackSignature::Single(sig) = stack.signature else {
        return Err(PpError::Invalid("the evaluator needs a single pointed stack".into()));
    };
    if !sig.pointed {
        return Err(PpError::NotPointed);
    }
    if a.len() != sig.n {
        return Err(PpError::Invalid(format!(
            "slope vector has length {}, expected {}",
            a.len(),
            sig.n
        )));
    }
    ensure_base(stack, l_class)?;
    ensure_base(stack, p_class)?;
    if a.iter().sum::<i64>() != 0 {
        return Ok(DrOutcome {
            class: PPClass::zero(stack),
            warning: Some("slope vector does not sum to zero; the class is zero".into()),
        });
    }
    if !l_class.is_zero() && l_class.homogeneous_degree() != Some(1) {
        return Err(PpError::DegreeError(
            "the linear input must be homogeneous of degree 1".into(),
        ));
    }
    let mut linear = PPClass::zero(stack);
    for (i, &ai) in a.iter().enumerate() {
        let li = length_class(stack, i + 1)?;
        linear = add(stack, &linear, &scale(&li, &Rat::from_integer(Int::from(ai * ai))))?;
    }
    linear = add(stack, &linear, l_class)?;
    let half = Rat::new(Int::from(-1), Int::from(2));
    let exponent = scale(&linear, &half);
    let e = exp_truncated(stack, &exponent, sig.g)?;
    let product = mul(stack, &e, p_class)?;
    Ok(DrOutcome { class: graded_part(&product, sig.g), warning: None })
}

// ---- stack-level star subdivision and the ray support function -------------

/// Star-subdivide every stratum cone at the ray with the given leg
/// coordinates (edges zero). The ray must be nonnegative and nonzero.
pub fn star_subdivide_stack(stack: &Stack, leg_ray: &[Int]) -> Result<Vec<Subdivision>> {
    let StackSignature::Single(sig) = stack.signature else {
        return Err(PpError::Invalid("star subdivision acts on single stacks".into()));
    };
    if !sig.pointed {
        return Err(PpError::NotPointed);
    }
    if leg_ray.len() != sig.n || leg_ray.iter().all(|x| x.is_zero()) {
        return Err(PpError::Invalid("leg ray must be a nonzero vector of length n".into()));
    }
    if leg_ray.iter().any(|x| x.is_negative()) {
        return Err(PpError::Cone(ConeError::RayOutsideSupport));
    }
    let mut subs = Vec::with_capacity(stack.strata.len());
    for s in &stack.strata {
        let dim = s.dim();
        let mut ray = vec![Int::zero(); dim];
        for (j, v) in leg_ray.iter().enumerate() {
            let c = s
                .coord_index(Side::Only, CoordKind::Leg(j + 1))
                .expect("leg coordinate");
            ray[c] = v.clone();
        }
        subs.push(star_subdivision(&ConeComplex::orthant(dim), &ray)?);
    }
    Ok(subs)
}

/// The class of the piecewise-linear function taking value 1 on the given
/// ray of the subdivided stack and 0 on all other rays.
pub fn phi_class(stack: &Stack, subs: &[Subdivision], leg_ray: &[Int]) -> Result<PPClass> {
    let StackSignature::Single(sig) = stack.signature else {
        return Err(PpError::Invalid("phi classes live on single stacks".into()));
    };
    if subs.len() != stack.strata.len() {
        return Err(PpError::BaseMismatch);
    }
    let mut strata = Vec::with_capacity(stack.strata.len());
    for (s, sub) in stack.strata.iter().zip(subs) {
        let dim = s.dim();
        let mut ray = vec![Int::zero(); dim];
        for (j, v) in leg_ray.iter().enumerate() {
            let c = s
                .coord_index(Side::Only, CoordKind::Leg(j + 1))
                .ok_or_else(|| PpError::Invalid(format!("no marking {} on the stack", j + 1)))?;
            ray[c] = v.clone();
        }
        let phi = phi_function(sub, &ray)?;
        let polys: Vec<Poly> = phi
            .covectors
            .iter()
            .map(|f| {
                f.iter().enumerate().fold(Poly::zero(), |acc, (i, c)| {
                    acc.add(&Poly::var(i as u32).scale(c))
                })
            })
            .collect();
        strata.push(StratumClass::Subdivided { sub: sub.clone(), polys });
    }
    let _ = sig;
    Ok(PPClass { signature: stack.signature, strata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Caps;
    use crate::linalg::{int, rat};
    use crate::moduli::{build_moduli, forgetful_morphism, gluing_morphism};

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn length_class_on_03() {
        let stack = build_moduli(0, 3, true, &caps()).unwrap();
        let l1 = length_class(&stack, 1).unwrap();
        assert_eq!(l1.strata.len(), 1);
        let StratumClass::Strict(p) = &l1.strata[0] else { panic!() };
        assert_eq!(*p, Poly::var(0));
        assert!(validate(&stack, &l1).unwrap().is_empty());
        // restricting l_i to the face l_i = 0 kills it
        assert!(p.rename(&|v| (v != 0).then_some(v)).is_zero());
    }

    #[test]
    fn forgetful_pullback_of_length() {
        // tail stratum of (0,4) -> (0,3): l_3 pulls back to l_3 + l_e
        let m = forgetful_morphism(0, 3, &caps()).unwrap();
        let l3 = length_class(&m.target, 3).unwrap();
        let pulled = pullback(&m, &l3).unwrap();
        assert!(validate(&m.source, &pulled).unwrap().is_empty());
        let mut found_tail = false;
        for (si, sstr) in m.source.strata.iter().enumerate() {
            let g = &sstr.graphs[0];
            if g.num_edges() == 1 {
                let v4 = g.leg_vertex(4).unwrap();
                if g.leg_vertex(3) == Some(v4)
                    && (1..=2).all(|m| g.leg_vertex(m) != Some(v4))
                {
                    found_tail = true;
                    let StratumClass::Strict(p) = &pulled.strata[si] else { panic!() };
                    let e = sstr.coord_index(Side::Only, CoordKind::Edge(0)).unwrap();
                    let l = sstr.coord_index(Side::Only, CoordKind::Leg(3)).unwrap();
                    let expected = Poly::var(e as u32).add(&Poly::var(l as u32));
                    assert_eq!(*p, expected, "tail stratum gets l3 + le");
                }
            }
        }
        assert!(found_tail);
    }

    #[test]
    fn boundary_class_cases() {
        let stack = build_moduli(0, 4, true, &caps()).unwrap();
        // take the one-edge graph separating {1,2}|{3,4}
        let delta = stack
            .strata
            .iter()
            .find(|s| {
                let g = &s.graphs[0];
                g.num_edges() == 1 && g.leg_vertex(1) == g.leg_vertex(2)
            })
            .unwrap()
            .graphs[0]
            .clone();
        let b = boundary_class(&stack, &delta).unwrap();
        assert!(validate(&stack, &b).unwrap().is_empty());
        for (si, s) in stack.strata.iter().enumerate() {
            let StratumClass::Strict(p) = &b.strata[si] else { panic!() };
            if s.graphs[0] == delta {
                let e = s.coord_index(Side::Only, CoordKind::Edge(0)).unwrap();
                assert_eq!(*p, Poly::var(e as u32));
            } else if s.graphs[0].is_smooth_graph() {
                assert!(p.is_zero());
            }
        }
    }

    #[test]
    fn boundary_class_sums_same_type_edges() {
        // in a tree distinct edges give distinct splits, so multiple edges
        // of one contraction type need a cycle: on the banana stratum of
        // G_{1,2} both parallel edges contract to the loop-type graph
        let stack = build_moduli(1, 2, true, &caps()).unwrap();
        let delta = stack
            .strata
            .iter()
            .find(|s| {
                let g = &s.graphs[0];
                g.num_edges() == 1 && g.h1() == 1
            })
            .unwrap()
            .graphs[0]
            .clone();
        let b = boundary_class(&stack, &delta).unwrap();
        assert!(validate(&stack, &b).unwrap().is_empty());
        let mut seen = false;
        for (si, s) in stack.strata.iter().enumerate() {
            let g = &s.graphs[0];
            if g.num_edges() == 2 && g.num_vertices() == 2 && g.edges()[0] == g.edges()[1] {
                seen = true;
                let StratumClass::Strict(p) = &b.strata[si] else { panic!() };
                let e0 = s.coord_index(Side::Only, CoordKind::Edge(0)).unwrap();
                let e1 = s.coord_index(Side::Only, CoordKind::Edge(1)).unwrap();
                assert_eq!(*p, Poly::var(e0 as u32).add(&Poly::var(e1 as u32)));
            }
        }
        assert!(seen);
    }

    #[test]
    fn ring_op_identities() {
        let stack = build_moduli(0, 3, true, &caps()).unwrap();
        let l1 = length_class(&stack, 1).unwrap();
        let zero = add(&stack, &l1, &scale(&l1, &rat(-1))).unwrap();
        assert!(zero.is_zero());
        let e = exp_truncated(&stack, &l1, 3).unwrap();
        assert!(pp_equal(&stack, &graded_part(&e, 1), &l1).unwrap());
        let l2 = length_class(&stack, 2).unwrap();
        let prod = mul(&stack, &l1, &l2).unwrap();
        assert_eq!(prod.homogeneous_degree(), Some(2));
    }

    #[test]
    fn validate_flags_face_violation() {
        let stack = build_moduli(1, 1, true, &caps()).unwrap();
        // set the class to l_e on the loop stratum and 1 on the smooth one
        let bad = PPClass {
            signature: stack.signature,
            strata: vec![
                StratumClass::Strict(Poly::one()),
                StratumClass::Strict(Poly::var(0)),
            ],
        };
        let violations = validate(&stack, &bad).unwrap();
        assert!(!violations.is_empty());
    }

    #[test]
    fn gluing_pullback_of_boundary_has_leg_sum() {
        let m = gluing_morphism(0, 2, 0, 2, &caps()).unwrap();
        // boundary class of the glued one-edge graph
        let tgt_stratum = m.stratum_map[0];
        let delta = m.target.strata[tgt_stratum].graphs[0].clone();
        let b = boundary_class(&m.target, &delta).unwrap();
        let pulled = pullback(&m, &b).unwrap();
        let StratumClass::Strict(p) = &pulled.strata[0] else { panic!() };
        let src = &m.source.strata[0];
        let pc = src.coord_index(Side::Left, CoordKind::Leg(3)).unwrap();
        let qc = src.coord_index(Side::Right, CoordKind::Leg(3)).unwrap();
        let expected = Poly::var(pc as u32).add(&Poly::var(qc as u32));
        assert_eq!(*p, expected);
        // pullback of 1 is 1
        let one = PPClass::one(&m.target);
        assert!(pullback(&m, &one).unwrap().is_zero() == false);
        assert!(pp_equal(&m.source, &pullback(&m, &one).unwrap(), &PPClass::one(&m.source)).unwrap());
    }

    #[test]
    fn dr_polynomial_examples() {
        // g = 0: always the constant 1
        let stack03 = build_moduli(0, 3, true, &caps()).unwrap();
        let one = PPClass::one(&stack03);
        let zero = PPClass::zero(&stack03);
        let out = dr_polynomial(&stack03, &[1, -1, 0], &zero, &one).unwrap();
        assert!(out.warning.is_none());
        assert!(pp_equal(&stack03, &out.class, &one).unwrap());
        // nonzero sum: zero class plus warning
        let out = dr_polynomial(&stack03, &[1, 1, 0], &zero, &one).unwrap();
        assert!(out.warning.is_some());
        assert!(out.class.is_zero());

        // g = 1, a = (0,0): degree-1 part of exp(0) is 0
        let stack12 = build_moduli(1, 2, true, &caps()).unwrap();
        let one12 = PPClass::one(&stack12);
        let zero12 = PPClass::zero(&stack12);
        let out = dr_polynomial(&stack12, &[0, 0], &zero12, &one12).unwrap();
        assert!(out.class.is_zero());

        // g = 1, a = (1,-1): -1/2 (l1 + l2)
        let out = dr_polynomial(&stack12, &[1, -1], &zero12, &one12).unwrap();
        let l1 = length_class(&stack12, 1).unwrap();
        let l2 = length_class(&stack12, 2).unwrap();
        let expected = scale(&add(&stack12, &l1, &l2).unwrap(), &(rat(-1) / rat(2)));
        assert!(pp_equal(&stack12, &out.class, &expected).unwrap());
        assert!(validate(&stack12, &out.class).unwrap().is_empty());
    }

    #[test]
    fn phi_class_validates() {
        let stack = build_moduli(1, 2, true, &caps()).unwrap();
        let ray = vec![int(1), int(1)];
        let subs = star_subdivide_stack(&stack, &ray).unwrap();
        let phi = phi_class(&stack, &subs, &ray).unwrap();
        assert!(validate(&stack, &phi).unwrap().is_empty());
        // vanishes on every refined cone not containing the ray
        for (s, (sub, sc)) in stack.strata.iter().zip(subs.iter().zip(&phi.strata)) {
            let StratumClass::Subdivided { polys, .. } = sc else { panic!() };
            let mut ray_full = vec![int(0); s.dim()];
            for (j, v) in ray.iter().enumerate() {
                let c = s.coord_index(Side::Only, CoordKind::Leg(j + 1)).unwrap();
                ray_full[c] = v.clone();
            }
            for (c, p) in sub.refined.maximal().zip(polys) {
                if !c.contains_int(&ray_full) {
                    assert!(polys_equal_on(c, p, &Poly::zero()));
                }
            }
        }
    }

    #[test]
    fn phi_pullback_validates_after_preimage() {
        // pull the subdivided class back along the separating gluing
        let m = gluing_morphism(0, 2, 0, 2, &caps()).unwrap();
        let ray = vec![int(1); 4];
        let subs = star_subdivide_stack(&m.target, &ray).unwrap();
        let phi = phi_class(&m.target, &subs, &ray).unwrap();
        assert!(validate(&m.target, &phi).unwrap().is_empty());
        let pulled = pullback(&m, &phi).unwrap();
        assert!(validate(&m.source, &pulled).unwrap().is_empty());
    }
}
