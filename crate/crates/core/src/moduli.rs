//! Moduli cone stacks of stable graphs and the morphisms between them.
//!
//! A stack has one stratum per canonical stable graph; the stratum cone is
//! the orthant with one labelled coordinate per edge (and per leg when the
//! stack is pointed). Face maps realise single-edge contractions, and
//! automorphisms act by permuting edge coordinates while fixing the legs
//! pointwise. Gluing and forgetful morphisms are per-stratum coordinate
//! substitution scripts with nonnegative integer coefficients.

use crate::graph::{enumerate_stable_graphs, Caps, ForgetScript, GraphError, StableGraph};
use crate::linalg::Int;
use num::One;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SingleSig {
    pub g: u32,
    pub n: usize,
    pub pointed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackSignature {
    Single(SingleSig),
    Product(SingleSig, SingleSig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Only,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CoordKind {
    /// canonical edge index
    Edge(usize),
    /// marking, 1-based
    Leg(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoordLabel {
    pub side: Side,
    pub kind: CoordKind,
}

impl CoordLabel {
    pub fn name(&self) -> String {
        let base = match self.kind {
            CoordKind::Edge(i) => format!("e{i}"),
            CoordKind::Leg(m) => format!("l{m}"),
        };
        match self.side {
            Side::Only => base,
            Side::Left => format!("L.{base}"),
            Side::Right => format!("R.{base}"),
        }
    }
}

/// A single-edge contraction face of a stratum cone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceMap {
    /// the coordinate set to zero (always an edge coordinate)
    pub zeroed: usize,
    /// stratum of the contracted graph
    pub target: usize,
    /// source coordinate -> target coordinate; the zeroed one maps to None
    pub coord_map: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    /// one graph for a single stack, left and right graphs for a product
    pub graphs: Vec<StableGraph>,
    pub digest: String,
    pub coords: Vec<CoordLabel>,
    pub face_maps: Vec<FaceMap>,
    /// generators of the automorphism action on coordinates
    pub aut_perms: Vec<Vec<usize>>,
}

impl Stratum {
    pub fn coord_index(&self, side: Side, kind: CoordKind) -> Option<usize> {
        self.coords
            .iter()
            .position(|c| c.side == side && c.kind == kind)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coord_names(&self) -> Vec<String> {
        self.coords.iter().map(|c| c.name()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stack {
    pub signature: StackSignature,
    pub strata: Vec<Stratum>,
}

impl Stack {
    pub fn is_pointed(&self) -> bool {
        match self.signature {
            StackSignature::Single(s) => s.pointed,
            StackSignature::Product(a, b) => a.pointed && b.pointed,
        }
    }

    pub fn find_stratum(&self, canonical: &StableGraph) -> Option<usize> {
        self.strata
            .iter()
            .position(|s| s.graphs.len() == 1 && &s.graphs[0] == canonical)
    }
}

fn edge_permutation_generators(g: &StableGraph) -> Result<Vec<Vec<usize>>, GraphError> {
    let ne = g.num_edges();
    let mut gens: Vec<Vec<usize>> = Vec::new();
    // vertex automorphisms induce edge permutations (order-preserving on
    // parallel classes)
    for phi in g.vertex_automorphisms()? {
        let mut by_pair: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            std::collections::BTreeMap::new();
        for (i, &(a, b)) in g.edges().iter().enumerate() {
            by_pair.entry((a, b)).or_default().push(i);
        }
        let mut perm = vec![0usize; ne];
        let mut cursor: std::collections::BTreeMap<(usize, usize), usize> =
            std::collections::BTreeMap::new();
        for (i, &(a, b)) in g.edges().iter().enumerate() {
            let (x, y) = (phi[a], phi[b]);
            let pair = (x.min(y), x.max(y));
            let slot = cursor.entry(pair).or_insert(0);
            perm[i] = by_pair[&pair][*slot];
            *slot += 1;
        }
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            gens.push(perm);
        }
    }
    // parallel edges permute freely
    for i in 1..ne {
        if g.edges()[i] == g.edges()[i - 1] {
            let mut perm: Vec<usize> = (0..ne).collect();
            perm.swap(i - 1, i);
            gens.push(perm);
        }
    }
    gens.sort();
    gens.dedup();
    Ok(gens)
}

/// Build the moduli cone stack for the signature.
pub fn build_moduli(g: u32, n: usize, pointed: bool, caps: &Caps) -> Result<Stack, GraphError> {
    let graphs = enumerate_stable_graphs(g, n, caps)?;
    let canonical: Vec<StableGraph> = graphs.iter().map(|(g, _)| g.clone()).collect();
    let mut strata = Vec::with_capacity(canonical.len());
    for graph in &canonical {
        let ne = graph.num_edges();
        let mut coords: Vec<CoordLabel> = (0..ne)
            .map(|i| CoordLabel { side: Side::Only, kind: CoordKind::Edge(i) })
            .collect();
        if pointed {
            coords.extend(
                (1..=n).map(|m| CoordLabel { side: Side::Only, kind: CoordKind::Leg(m) }),
            );
        }
        let aut_perms: Vec<Vec<usize>> = edge_permutation_generators(graph)?
            .into_iter()
            .map(|edge_perm| {
                let mut perm: Vec<usize> = (0..coords.len()).collect();
                for (i, &p) in edge_perm.iter().enumerate() {
                    perm[i] = p;
                }
                perm
            })
            .collect();
        strata.push(Stratum {
            digest: graph.digest()?,
            graphs: vec![graph.clone()],
            coords,
            face_maps: Vec::new(),
            aut_perms,
        });
    }
    // contraction faces
    let mut all_faces: Vec<Vec<FaceMap>> = Vec::with_capacity(strata.len());
    for si in 0..strata.len() {
        let graph = &strata[si].graphs[0];
        let mut faces = Vec::new();
        for e in 0..graph.num_edges() {
            let (contracted, corr) = graph.contract_edges(&BTreeSet::from([e]));
            let (canon, iso) = contracted.canonicalize_with_caps(caps)?;
            let target = strata
                .iter()
                .position(|s| s.graphs[0] == canon)
                .ok_or_else(|| GraphError::Invalid("contraction left the stack".into()))?;
            let coord_map = strata[si]
                .coords
                .iter()
                .map(|c| match c.kind {
                    CoordKind::Edge(i) => {
                        let raw = corr.edge_map[i]?;
                        let tgt_edge = iso.edge_map[raw]?;
                        strata[target].coord_index(Side::Only, CoordKind::Edge(tgt_edge))
                    }
                    CoordKind::Leg(m) => {
                        strata[target].coord_index(Side::Only, CoordKind::Leg(m))
                    }
                })
                .collect();
            faces.push(FaceMap { zeroed: e, target, coord_map });
        }
        all_faces.push(faces);
    }
    for (s, f) in strata.iter_mut().zip(all_faces) {
        s.face_maps = f;
    }
    Ok(Stack {
        signature: StackSignature::Single(SingleSig { g, n, pointed }),
        strata,
    })
}

/// Product of two single stacks, stratum pairs indexed row-major.
pub fn product_stack(left: &Stack, right: &Stack) -> Result<Stack, GraphError> {
    let (StackSignature::Single(ls), StackSignature::Single(rs)) =
        (left.signature, right.signature)
    else {
        return Err(GraphError::Invalid("only products of single stacks are supported".into()));
    };
    let rlen = right.strata.len();
    let mut strata = Vec::with_capacity(left.strata.len() * rlen);
    for ls_ in &left.strata {
        for rs_ in &right.strata {
            let mut coords: Vec<CoordLabel> = ls_
                .coords
                .iter()
                .map(|c| CoordLabel { side: Side::Left, kind: c.kind })
                .collect();
            coords.extend(
                rs_.coords
                    .iter()
                    .map(|c| CoordLabel { side: Side::Right, kind: c.kind }),
            );
            let llen = ls_.coords.len();
            let mut aut_perms = Vec::new();
            for p in &ls_.aut_perms {
                let mut perm: Vec<usize> = (0..coords.len()).collect();
                for (i, &pi) in p.iter().enumerate() {
                    perm[i] = pi;
                }
                aut_perms.push(perm);
            }
            for p in &rs_.aut_perms {
                let mut perm: Vec<usize> = (0..coords.len()).collect();
                for (i, &pi) in p.iter().enumerate() {
                    perm[llen + i] = llen + pi;
                }
                aut_perms.push(perm);
            }
            strata.push(Stratum {
                graphs: vec![ls_.graphs[0].clone(), rs_.graphs[0].clone()],
                digest: format!("{}*{}", ls_.digest, rs_.digest),
                coords,
                face_maps: Vec::new(),
                aut_perms,
            });
        }
    }
    // face maps inside each factor
    let mut all_faces: Vec<Vec<FaceMap>> = vec![Vec::new(); strata.len()];
    for (li, ls_) in left.strata.iter().enumerate() {
        for (ri, rs_) in right.strata.iter().enumerate() {
            let si = li * rlen + ri;
            let llen = ls_.coords.len();
            let mut faces = Vec::new();
            for f in &ls_.face_maps {
                let target = f.target * rlen + ri;
                let tlen = left.strata[f.target].coords.len();
                let mut coord_map: Vec<Option<usize>> = f.coord_map.clone();
                coord_map.extend((0..rs_.coords.len()).map(|k| Some(tlen + k)));
                faces.push(FaceMap { zeroed: f.zeroed, target, coord_map });
            }
            for f in &rs_.face_maps {
                let target = li * rlen + f.target;
                let mut coord_map: Vec<Option<usize>> = (0..llen).map(Some).collect();
                coord_map.extend(f.coord_map.iter().map(|o| o.map(|t| llen + t)));
                faces.push(FaceMap { zeroed: llen + f.zeroed, target, coord_map });
            }
            all_faces[si] = faces;
        }
    }
    for (s, f) in strata.iter_mut().zip(all_faces) {
        s.face_maps = f;
    }
    Ok(Stack { signature: StackSignature::Product(ls, rs), strata })
}

/// A morphism of cone stacks: a stratum map plus, per source stratum, a
/// script expressing every target coordinate as a nonnegative integer
/// combination of source coordinates.
#[derive(Debug, Clone)]
pub struct StackMorphism {
    pub source: Stack,
    pub target: Stack,
    pub stratum_map: Vec<usize>,
    pub scripts: Vec<Script>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    /// per target coordinate: sum of (source coordinate, coefficient)
    pub exprs: Vec<Vec<(usize, Int)>>,
}

impl Script {
    /// Matrix of the linear map source cone -> target cone, rows indexed by
    /// target coordinates.
    pub fn matrix(&self, source_dim: usize) -> Vec<Vec<Int>> {
        self.exprs
            .iter()
            .map(|expr| {
                let mut row = vec![Int::from(0); source_dim];
                for (src, coeff) in expr {
                    row[*src] += coeff;
                }
                row
            })
            .collect()
    }
}

/// Separating gluing: glues leg `n1+1` of the first factor to leg `n2+1`
/// of the second, targeting the `(g1+g2, n1+n2)` stack.
pub fn gluing_morphism(
    g1: u32,
    n1: usize,
    g2: u32,
    n2: usize,
    caps: &Caps,
) -> Result<StackMorphism, GraphError> {
    let left = build_moduli(g1, n1 + 1, true, caps)?;
    let right = build_moduli(g2, n2 + 1, true, caps)?;
    let source = product_stack(&left, &right)?;
    let target = build_moduli(g1 + g2, n1 + n2, true, caps)?;
    let rlen = right.strata.len();
    let mut stratum_map = Vec::new();
    let mut scripts = Vec::new();
    for (li, lstr) in left.strata.iter().enumerate() {
        for (ri, rstr) in right.strata.iter().enumerate() {
            let src = &source.strata[li * rlen + ri];
            let g_left = &lstr.graphs[0];
            let g_right = &rstr.graphs[0];
            let (glued, corr_l, corr_r, new_edge) = g_left.glue(n1 + 1, g_right, n2 + 1)?;
            let (canon, iso) = glued.canonicalize_with_caps(caps)?;
            let tgt = target
                .find_stratum(&canon)
                .ok_or_else(|| GraphError::Invalid("glued graph missing from target".into()))?;
            let tstr = &target.strata[tgt];
            let mut exprs: Vec<Vec<(usize, Int)>> = Vec::with_capacity(tstr.coords.len());
            let canon_new_edge = iso.edge_map[new_edge].expect("new edge survives");
            for c in &tstr.coords {
                let expr = match c.kind {
                    CoordKind::Edge(te) => {
                        if te == canon_new_edge {
                            let p = src
                                .coord_index(Side::Left, CoordKind::Leg(n1 + 1))
                                .expect("glued leg coordinate");
                            let q = src
                                .coord_index(Side::Right, CoordKind::Leg(n2 + 1))
                                .expect("glued leg coordinate");
                            vec![(p, Int::one()), (q, Int::one())]
                        } else {
                            let mut found = None;
                            for i in 0..g_left.num_edges() {
                                if corr_l.edge_map[i].and_then(|r| iso.edge_map[r]) == Some(te) {
                                    found = src.coord_index(Side::Left, CoordKind::Edge(i));
                                }
                            }
                            for i in 0..g_right.num_edges() {
                                if corr_r.edge_map[i].and_then(|r| iso.edge_map[r]) == Some(te) {
                                    found = src.coord_index(Side::Right, CoordKind::Edge(i));
                                }
                            }
                            vec![(found.expect("edge transported"), Int::one())]
                        }
                    }
                    CoordKind::Leg(tm) => {
                        let mut found = None;
                        for m in 1..=n1 + 1 {
                            if corr_l.leg_map[m - 1].map(|x| x + 1) == Some(tm) {
                                found = src.coord_index(Side::Left, CoordKind::Leg(m));
                            }
                        }
                        for m in 1..=n2 + 1 {
                            if corr_r.leg_map[m - 1].map(|x| x + 1) == Some(tm) {
                                found = src.coord_index(Side::Right, CoordKind::Leg(m));
                            }
                        }
                        vec![(found.expect("leg transported"), Int::one())]
                    }
                };
                exprs.push(expr);
            }
            stratum_map.push(tgt);
            scripts.push(Script { exprs });
        }
    }
    Ok(StackMorphism { source, target, stratum_map, scripts })
}

/// Loop gluing `(g-1, n+2) -> (g, n)`, gluing the last two legs.
pub fn loop_gluing_morphism(g: u32, n: usize, caps: &Caps) -> Result<StackMorphism, GraphError> {
    if g == 0 {
        return Err(GraphError::UnstableSignature(0, n));
    }
    let source = build_moduli(g - 1, n + 2, true, caps)?;
    let target = build_moduli(g, n, true, caps)?;
    let mut stratum_map = Vec::new();
    let mut scripts = Vec::new();
    for sstr in &source.strata {
        let graph = &sstr.graphs[0];
        let (glued, corr, new_edge) = graph.glue_loop(n + 1, n + 2)?;
        let (canon, iso) = glued.canonicalize_with_caps(caps)?;
        let tgt = target
            .find_stratum(&canon)
            .ok_or_else(|| GraphError::Invalid("glued graph missing from target".into()))?;
        let tstr = &target.strata[tgt];
        let canon_new_edge = iso.edge_map[new_edge].expect("new edge survives");
        let mut exprs: Vec<Vec<(usize, Int)>> = Vec::with_capacity(tstr.coords.len());
        for c in &tstr.coords {
            let expr = match c.kind {
                CoordKind::Edge(te) => {
                    if te == canon_new_edge {
                        let p = sstr
                            .coord_index(Side::Only, CoordKind::Leg(n + 1))
                            .expect("glued leg coordinate");
                        let q = sstr
                            .coord_index(Side::Only, CoordKind::Leg(n + 2))
                            .expect("glued leg coordinate");
                        vec![(p, Int::one()), (q, Int::one())]
                    } else {
                        let mut found = None;
                        for i in 0..graph.num_edges() {
                            if corr.edge_map[i].and_then(|r| iso.edge_map[r]) == Some(te) {
                                found = sstr.coord_index(Side::Only, CoordKind::Edge(i));
                            }
                        }
                        vec![(found.expect("edge transported"), Int::one())]
                    }
                }
                CoordKind::Leg(tm) => {
                    let mut found = None;
                    for m in 1..=n + 2 {
                        if corr.leg_map[m - 1].map(|x| x + 1) == Some(tm) {
                            found = sstr.coord_index(Side::Only, CoordKind::Leg(m));
                        }
                    }
                    vec![(found.expect("leg transported"), Int::one())]
                }
            };
            exprs.push(expr);
        }
        stratum_map.push(tgt);
        scripts.push(Script { exprs });
    }
    Ok(StackMorphism { source, target, stratum_map, scripts })
}

/// Forgetful morphism `(g, n+1) -> (g, n)` dropping the last marking.
pub fn forgetful_morphism(g: u32, n: usize, caps: &Caps) -> Result<StackMorphism, GraphError> {
    if 2 * g as i64 - 2 + n as i64 <= 0 {
        return Err(GraphError::UnstableSignature(g, n));
    }
    let source = build_moduli(g, n + 1, true, caps)?;
    let target = build_moduli(g, n, true, caps)?;
    let mut stratum_map = Vec::new();
    let mut scripts = Vec::new();
    for sstr in &source.strata {
        let graph = &sstr.graphs[0];
        let (raw, corr, script) = graph.forget_leg(n + 1)?;
        let (canon, iso) = raw.canonicalize_with_caps(caps)?;
        let tgt = target
            .find_stratum(&canon)
            .ok_or_else(|| GraphError::Invalid("forgotten graph missing from target".into()))?;
        let tstr = &target.strata[tgt];
        let mut exprs: Vec<Vec<(usize, Int)>> = Vec::with_capacity(tstr.coords.len());
        for c in &tstr.coords {
            let expr: Vec<(usize, Int)> = match c.kind {
                CoordKind::Edge(te) => {
                    let merged_target = match &script {
                        ForgetScript::Bridge { merged, .. } => iso.edge_map[*merged],
                        _ => None,
                    };
                    if Some(te) == merged_target {
                        let ForgetScript::Bridge { edges: (e1, e2), .. } = script else {
                            unreachable!()
                        };
                        let c1 = sstr
                            .coord_index(Side::Only, CoordKind::Edge(e1))
                            .expect("bridge edge coordinate");
                        let c2 = sstr
                            .coord_index(Side::Only, CoordKind::Edge(e2))
                            .expect("bridge edge coordinate");
                        vec![(c1, Int::one()), (c2, Int::one())]
                    } else {
                        let mut found = None;
                        for i in 0..graph.num_edges() {
                            if corr.edge_map[i].and_then(|r| iso.edge_map[r]) == Some(te) {
                                found = sstr.coord_index(Side::Only, CoordKind::Edge(i));
                            }
                        }
                        vec![(found.expect("edge transported"), Int::one())]
                    }
                }
                CoordKind::Leg(tm) => {
                    // source marking mapping onto tm (markings close up in order)
                    let mut found = None;
                    for m in 1..=n + 1 {
                        if corr.leg_map[m - 1].map(|x| x + 1) == Some(tm) {
                            found = Some(m);
                        }
                    }
                    let m = found.expect("leg transported");
                    let leg_coord = sstr
                        .coord_index(Side::Only, CoordKind::Leg(m))
                        .expect("leg coordinate");
                    match &script {
                        ForgetScript::Tail { leg, edge } if *leg == m => {
                            let e = sstr
                                .coord_index(Side::Only, CoordKind::Edge(*edge))
                                .expect("tail edge coordinate");
                            vec![(leg_coord, Int::one()), (e, Int::one())]
                        }
                        _ => vec![(leg_coord, Int::one())],
                    }
                }
            };
            exprs.push(expr);
        }
        stratum_map.push(tgt);
        scripts.push(Script { exprs });
    }
    Ok(StackMorphism { source, target, stratum_map, scripts })
}

/// The automorphism of the stack induced by a permutation of the markings:
/// `perm[i]` is the image of marking `i+1`.
pub fn leg_permutation_morphism(
    stack: &Stack,
    perm: &[usize],
    caps: &Caps,
) -> Result<StackMorphism, GraphError> {
    let StackSignature::Single(sig) = stack.signature else {
        return Err(GraphError::Invalid("leg permutations act on single stacks".into()));
    };
    if !sig.pointed || perm.len() != sig.n {
        return Err(GraphError::Invalid("permutation length must match the markings".into()));
    }
    let mut inv_perm = vec![0usize; sig.n];
    for (i, &p) in perm.iter().enumerate() {
        inv_perm[p - 1] = i + 1;
    }
    let mut stratum_map = Vec::new();
    let mut scripts = Vec::new();
    for sstr in &stack.strata {
        let graph = &sstr.graphs[0];
        // relabel: new marking j sits where old marking inv_perm(j) sat
        let data = {
            let mut d = graph.to_data();
            d.legs = (1..=sig.n)
                .map(|j| graph.leg_vertex(inv_perm[j - 1]).expect("valid marking"))
                .collect();
            d
        };
        let relabelled = StableGraph::validate(&data)
            .map_err(|e| GraphError::Invalid(format!("relabelled graph invalid: {e:?}")))?;
        let (canon, iso) = relabelled.canonicalize_with_caps(caps)?;
        let tgt = stack
            .find_stratum(&canon)
            .ok_or_else(|| GraphError::Invalid("permuted graph missing from stack".into()))?;
        let tstr = &stack.strata[tgt];
        let mut exprs = Vec::with_capacity(tstr.coords.len());
        for c in &tstr.coords {
            let expr = match c.kind {
                CoordKind::Edge(te) => {
                    let mut found = None;
                    for i in 0..graph.num_edges() {
                        if iso.edge_map[i] == Some(te) {
                            found = sstr.coord_index(Side::Only, CoordKind::Edge(i));
                        }
                    }
                    vec![(found.expect("edge transported"), Int::one())]
                }
                CoordKind::Leg(tm) => {
                    let src = sstr
                        .coord_index(Side::Only, CoordKind::Leg(inv_perm[tm - 1]))
                        .expect("leg coordinate");
                    vec![(src, Int::one())]
                }
            };
            exprs.push(expr);
        }
        stratum_map.push(tgt);
        scripts.push(Script { exprs });
    }
    Ok(StackMorphism {
        source: stack.clone(),
        target: stack.clone(),
        stratum_map,
        scripts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn moduli_03_pointed_is_one_orthant() {
        let stack = build_moduli(0, 3, true, &caps()).unwrap();
        assert_eq!(stack.strata.len(), 1);
        assert_eq!(stack.strata[0].dim(), 3);
        assert!(stack.strata[0].face_maps.is_empty());
    }

    #[test]
    fn moduli_11_pointed() {
        let stack = build_moduli(1, 1, true, &caps()).unwrap();
        assert_eq!(stack.strata.len(), 2);
        let dims: Vec<usize> = stack.strata.iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![1, 2]);
        // the loop stratum contracts onto the smooth one
        let loop_str = &stack.strata[1];
        assert_eq!(loop_str.face_maps.len(), 1);
        assert_eq!(loop_str.face_maps[0].target, 0);
        // the loop's half-edge swap acts trivially on the edge coordinate
        assert!(loop_str.aut_perms.is_empty());
    }

    #[test]
    fn moduli_04_unpointed() {
        let stack = build_moduli(0, 4, false, &caps()).unwrap();
        assert_eq!(stack.strata.len(), 4);
        let dims: Vec<usize> = stack.strata.iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![0, 1, 1, 1]);
    }

    #[test]
    fn pointed_splits_as_unpointed_plus_legs() {
        // product decomposition, stratumwise
        for (g, n) in [(0, 4), (1, 1), (1, 2)] {
            let pointed = build_moduli(g, n, true, &caps()).unwrap();
            let unpointed = build_moduli(g, n, false, &caps()).unwrap();
            assert_eq!(pointed.strata.len(), unpointed.strata.len());
            for (p, u) in pointed.strata.iter().zip(&unpointed.strata) {
                assert_eq!(p.graphs, u.graphs);
                assert_eq!(p.dim(), u.dim() + n);
                assert_eq!(p.face_maps.len(), u.face_maps.len());
                for (pf, uf) in p.face_maps.iter().zip(&u.face_maps) {
                    assert_eq!(pf.target, uf.target);
                    assert_eq!(pf.zeroed, uf.zeroed);
                    assert_eq!(&pf.coord_map[..u.dim()], &uf.coord_map[..]);
                }
            }
        }
    }

    #[test]
    fn gluing_script_adds_leg_lengths() {
        let m = gluing_morphism(0, 2, 0, 2, &caps()).unwrap();
        // single product stratum (smooth x smooth) -> the {1,2}|{3,4} graph
        assert_eq!(m.source.strata.len(), 1);
        let tgt = m.stratum_map[0];
        let tstr = &m.target.strata[tgt];
        assert_eq!(tstr.graphs[0].num_edges(), 1);
        // the new-edge expression is l_p + l_q
        let script = &m.scripts[0];
        let edge_coord = tstr.coord_index(Side::Only, CoordKind::Edge(0)).unwrap();
        let expr = &script.exprs[edge_coord];
        assert_eq!(expr.len(), 2);
        let p = m.source.strata[0]
            .coord_index(Side::Left, CoordKind::Leg(3))
            .unwrap();
        let q = m.source.strata[0]
            .coord_index(Side::Right, CoordKind::Leg(3))
            .unwrap();
        let vars: Vec<usize> = expr.iter().map(|(v, _)| *v).collect();
        assert!(vars.contains(&p) && vars.contains(&q));
    }

    #[test]
    fn loop_gluing_03_to_11() {
        let m = loop_gluing_morphism(1, 1, &caps()).unwrap();
        assert_eq!(m.source.strata.len(), 1);
        let tgt = m.stratum_map[0];
        assert_eq!(m.target.strata[tgt].graphs[0].num_edges(), 1);
        let tstr = &m.target.strata[tgt];
        let edge_coord = tstr.coord_index(Side::Only, CoordKind::Edge(0)).unwrap();
        assert_eq!(m.scripts[0].exprs[edge_coord].len(), 2);
    }

    #[test]
    fn forgetful_scripts() {
        let m = forgetful_morphism(0, 3, &caps()).unwrap();
        // source strata with legs {j,4} alone on a tail use the tail rule
        let mut seen_tail = false;
        for (si, sstr) in m.source.strata.iter().enumerate() {
            let g = &sstr.graphs[0];
            if g.num_edges() != 1 {
                continue;
            }
            let v4 = g.leg_vertex(4).unwrap();
            let mates: Vec<usize> = (1..=3).filter(|&m| g.leg_vertex(m) == Some(v4)).collect();
            if mates.len() == 1 {
                seen_tail = true;
                let tstr = &m.target.strata[m.stratum_map[si]];
                assert!(tstr.graphs[0].is_smooth_graph());
                let mate = mates[0];
                let leg_coord = tstr
                    .coord_index(Side::Only, CoordKind::Leg(mate))
                    .unwrap();
                assert_eq!(m.scripts[si].exprs[leg_coord].len(), 2, "tail rule l := l + e");
            }
        }
        assert!(seen_tail);
    }
}
