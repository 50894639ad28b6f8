//! Stable decorated dual graphs: validation, canonical forms, enumeration,
//! contraction, gluing and leg-forgetting.
//!
//! A stable graph is a connected multigraph with genus-decorated vertices
//! and an ordered list of legs (markings), every vertex satisfying
//! `2 g(v) - 2 + n(v) > 0`. These graphs index the strata of the moduli
//! cone stacks built in [`crate::moduli`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph is not connected")]
    NotConnected,
    #[error("vertex {0} violates stability 2g-2+n > 0")]
    UnstableVertex(usize),
    #[error("declared genus {declared} differs from computed genus {computed}")]
    GenusMismatch { declared: u32, computed: u32 },
    #[error("half-edge structure has an invalid involution")]
    BadInvolution,
    #[error("leg list is inconsistent: {0}")]
    LegCountMismatch(String),
    #[error("signature (g,n)=({0},{1}) is unstable")]
    UnstableSignature(u32, usize),
    #[error("configured resource cap exceeded: {0}")]
    ResourceBound(String),
    #[error("marking {0} is not a leg of the graph")]
    NotALeg(usize),
    #[error("the two legs coincide")]
    SameLeg,
    #[error("forgetting the leg leaves an unstable signature")]
    ResultUnstable,
    #[error("invalid graph data: {0}")]
    Invalid(String),
}

/// Enumeration and canonicalisation caps.
#[derive(Debug, Clone, Copy)]
pub struct Caps {
    pub max_vertices: usize,
    pub max_edges: usize,
    pub max_canon_candidates: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_vertices: 12, max_edges: 14, max_canon_candidates: 1_000_000 }
    }
}

/// Raw graph data as exchanged over the JSON interface.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphData {
    pub genus: u32,
    pub vertices: Vec<VertexData>,
    pub edges: Vec<(usize, usize)>,
    pub legs: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct VertexData {
    pub id: usize,
    pub genus: u32,
}

/// A validated stable graph. Vertices are `0..num_vertices`, edges are
/// unordered pairs `(min, max)` and `legs[i]` is the vertex carrying
/// marking `i+1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StableGraph {
    genus: u32,
    vertex_genus: Vec<u32>,
    edges: Vec<(usize, usize)>,
    legs: Vec<usize>,
}

/// Vertex/edge/leg transport along a graph operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    pub vertex_map: Vec<usize>,
    /// source edge -> surviving edge of the result (None = contracted or consumed)
    pub edge_map: Vec<Option<usize>>,
    /// source marking (0-based) -> marking of the result
    pub leg_map: Vec<Option<usize>>,
}

impl Correspondence {
    /// `other ∘ self`.
    pub fn then(&self, other: &Correspondence) -> Correspondence {
        Correspondence {
            vertex_map: self.vertex_map.iter().map(|&v| other.vertex_map[v]).collect(),
            edge_map: self
                .edge_map
                .iter()
                .map(|e| e.and_then(|i| other.edge_map[i]))
                .collect(),
            leg_map: self
                .leg_map
                .iter()
                .map(|l| l.and_then(|i| other.leg_map[i]))
                .collect(),
        }
    }
}

/// Substitution emitted by `forget_leg`, consumed by piecewise-polynomial
/// pullback. Edge/leg references are in source labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForgetScript {
    Identity,
    /// rational tail: the surviving leg absorbs the tail edge length
    Tail { leg: usize, edge: usize },
    /// rational bridge: the two edges merge into one of summed length;
    /// `merged` is the new edge in the output labelling
    Bridge { edges: (usize, usize), merged: usize },
}

impl StableGraph {
    /// Validate raw data, reporting every violated condition.
    pub fn validate(data: &GraphData) -> Result<StableGraph, Vec<GraphError>> {
        let mut errors = Vec::new();
        let nv = data.vertices.len();
        let ids: BTreeSet<usize> = data.vertices.iter().map(|v| v.id).collect();
        if ids.len() != nv || ids.iter().max().map(|&m| m + 1) != Some(nv) && nv > 0 {
            return Err(vec![GraphError::Invalid(
                "vertex ids must be exactly 0..num_vertices".into(),
            )]);
        }
        if nv == 0 {
            return Err(vec![GraphError::Invalid("graph has no vertices".into())]);
        }
        let mut vertex_genus = vec![0u32; nv];
        for v in &data.vertices {
            vertex_genus[v.id] = v.genus;
        }
        for &(a, b) in &data.edges {
            if a >= nv || b >= nv {
                errors.push(GraphError::Invalid(format!("edge ({a},{b}) out of range")));
            }
        }
        for &l in &data.legs {
            if l >= nv {
                errors.push(GraphError::LegCountMismatch(format!("leg vertex {l} out of range")));
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let g = StableGraph {
            genus: data.genus,
            vertex_genus,
            edges: data.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
            legs: data.legs.clone(),
        };
        if !g.is_connected() {
            errors.push(GraphError::NotConnected);
        }
        for v in 0..nv {
            if !g.vertex_stable(v) {
                errors.push(GraphError::UnstableVertex(v));
            }
        }
        let computed = g.computed_genus();
        if computed != data.genus {
            errors.push(GraphError::GenusMismatch { declared: data.genus, computed });
        }
        if errors.is_empty() {
            Ok(g)
        } else {
            Err(errors)
        }
    }

    /// Construct from explicit half-edge data: `incidence[h]` is the vertex
    /// of half-edge `h`, `involution[h]` its partner, and `legs` lists the
    /// involution-fixed half-edges in marking order.
    pub fn from_half_edges(
        genus: u32,
        vertex_genus: Vec<u32>,
        incidence: Vec<usize>,
        involution: Vec<usize>,
        legs: Vec<usize>,
    ) -> Result<StableGraph, Vec<GraphError>> {
        let h = incidence.len();
        let mut errors = Vec::new();
        if involution.len() != h {
            return Err(vec![GraphError::BadInvolution]);
        }
        for x in 0..h {
            if involution[x] >= h || involution[involution[x]] != x {
                errors.push(GraphError::BadInvolution);
                break;
            }
        }
        let fixed: BTreeSet<usize> = (0..h).filter(|&x| involution[x] == x).collect();
        let leg_set: BTreeSet<usize> = legs.iter().copied().collect();
        if fixed != leg_set || leg_set.len() != legs.len() {
            errors.push(GraphError::LegCountMismatch(
                "legs must be exactly the involution-fixed half-edges".into(),
            ));
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut edges = Vec::new();
        for x in 0..h {
            let y = involution[x];
            if y > x {
                edges.push((incidence[x].min(incidence[y]), incidence[x].max(incidence[y])));
            }
        }
        let data = GraphData {
            genus,
            vertices: vertex_genus
                .iter()
                .enumerate()
                .map(|(id, &genus)| VertexData { id, genus })
                .collect(),
            edges,
            legs: legs.iter().map(|&l| incidence[l]).collect(),
        };
        StableGraph::validate(&data)
    }

    pub fn to_data(&self) -> GraphData {
        GraphData {
            genus: self.genus,
            vertices: self
                .vertex_genus
                .iter()
                .enumerate()
                .map(|(id, &genus)| VertexData { id, genus })
                .collect(),
            edges: self.edges.clone(),
            legs: self.legs.clone(),
        }
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_genus.len()
    }

    pub fn vertex_genus(&self, v: usize) -> u32 {
        self.vertex_genus[v]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_legs(&self) -> usize {
        self.legs.len()
    }

    /// Vertex carrying marking `i` (1-based).
    pub fn leg_vertex(&self, marking: usize) -> Option<usize> {
        self.legs.get(marking - 1).copied()
    }

    pub fn legs(&self) -> &[usize] {
        &self.legs
    }

    pub fn is_smooth_graph(&self) -> bool {
        self.edges.is_empty()
    }

    /// Number of half-edges at `v` (loops count twice), legs included.
    pub fn valence(&self, v: usize) -> usize {
        let mut n = 0;
        for &(a, b) in &self.edges {
            if a == v {
                n += 1;
            }
            if b == v {
                n += 1;
            }
        }
        n + self.legs.iter().filter(|&&l| l == v).count()
    }

    fn vertex_stable(&self, v: usize) -> bool {
        2 * self.vertex_genus[v] as i64 - 2 + self.valence(v) as i64 > 0
    }

    fn is_connected(&self) -> bool {
        let nv = self.num_vertices();
        if nv == 0 {
            return false;
        }
        let mut seen = vec![false; nv];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn computed_genus(&self) -> u32 {
        let h1 = self.edges.len() as i64 - self.num_vertices() as i64 + 1;
        (self.vertex_genus.iter().map(|&g| g as i64).sum::<i64>() + h1) as u32
    }

    /// First Betti number of the underlying graph.
    pub fn h1(&self) -> u32 {
        (self.edges.len() as i64 - self.num_vertices() as i64 + 1) as u32
    }

    // ---- canonical form ----------------------------------------------

    /// Stable colour refinement; colours are canonical byte strings, equal
    /// across isomorphic graphs.
    fn wl_colors(&self) -> Vec<Vec<u8>> {
        let nv = self.num_vertices();
        let mut colors: Vec<Vec<u8>> = (0..nv)
            .map(|v| {
                let mut legs_at: Vec<usize> =
                    (0..self.legs.len()).filter(|&i| self.legs[i] == v).collect();
                legs_at.sort_unstable();
                let loops = self.edges.iter().filter(|&&(a, b)| a == v && b == v).count();
                let mut c = Vec::new();
                push_u32(&mut c, self.vertex_genus[v]);
                push_u32(&mut c, loops as u32);
                push_u32(&mut c, self.valence(v) as u32);
                push_u32(&mut c, legs_at.len() as u32);
                for l in legs_at {
                    push_u32(&mut c, l as u32);
                }
                c
            })
            .collect();
        loop {
            let mut next_raw: Vec<Vec<u8>> = Vec::with_capacity(nv);
            for v in 0..nv {
                let mut nb: Vec<&Vec<u8>> = Vec::new();
                for &(a, b) in &self.edges {
                    if a == v && b != v {
                        nb.push(&colors[b]);
                    } else if b == v && a != v {
                        nb.push(&colors[a]);
                    }
                }
                nb.sort();
                let mut c = colors[v].clone();
                for n in nb {
                    c.push(0xff);
                    c.extend_from_slice(n);
                }
                next_raw.push(c);
            }
            // re-intern to keep colour strings short and canonical
            let mut distinct: Vec<&Vec<u8>> = next_raw.iter().collect();
            distinct.sort();
            distinct.dedup();
            let index: BTreeMap<&Vec<u8>, u32> =
                distinct.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
            let next: Vec<Vec<u8>> = next_raw
                .iter()
                .map(|c| {
                    let mut v = Vec::with_capacity(4);
                    push_u32(&mut v, index[c]);
                    v
                })
                .collect();
            let part_old = partition_of(&colors);
            let part_new = partition_of(&next);
            if part_new == part_old {
                return colors;
            }
            colors = next;
        }
    }

    fn encoding_under(&self, phi: &[usize]) -> Vec<u8> {
        let nv = self.num_vertices();
        let mut inv = vec![0usize; nv];
        for (v, &img) in phi.iter().enumerate() {
            inv[img] = v;
        }
        let mut out = Vec::new();
        push_u32(&mut out, nv as u32);
        push_u32(&mut out, self.legs.len() as u32);
        push_u32(&mut out, self.genus);
        for new in 0..nv {
            push_u32(&mut out, self.vertex_genus[inv[new]]);
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (phi[a], phi[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        edges.sort_unstable();
        push_u32(&mut out, edges.len() as u32);
        for (a, b) in edges {
            push_u32(&mut out, a as u32);
            push_u32(&mut out, b as u32);
        }
        for &l in &self.legs {
            push_u32(&mut out, phi[l] as u32);
        }
        out
    }

    /// Canonical relabelling: minimises a byte encoding over all vertex
    /// permutations compatible with the stable colouring.
    pub fn canonicalize(&self) -> Result<(StableGraph, Correspondence), GraphError> {
        self.canonicalize_with_caps(&Caps::default())
    }

    pub fn canonicalize_with_caps(
        &self,
        caps: &Caps,
    ) -> Result<(StableGraph, Correspondence), GraphError> {
        let nv = self.num_vertices();
        let colors = self.wl_colors();
        // group vertices by colour, classes ordered by colour bytes
        let mut classes: BTreeMap<&Vec<u8>, Vec<usize>> = BTreeMap::new();
        for (v, c) in colors.iter().enumerate() {
            classes.entry(c).or_default().push(v);
        }
        let class_lists: Vec<Vec<usize>> = classes.into_values().collect();
        let mut count: usize = 1;
        for c in &class_lists {
            count = count.saturating_mul(factorial_capped(c.len(), caps.max_canon_candidates));
            if count > caps.max_canon_candidates {
                return Err(GraphError::ResourceBound(format!(
                    "canonical form search exceeds {} candidates",
                    caps.max_canon_candidates
                )));
            }
        }

        let mut best: Option<(Vec<u8>, Vec<usize>)> = None;
        let mut aut_count: u64 = 0;
        let mut perms_per_class: Vec<Vec<Vec<usize>>> = Vec::new();
        for c in &class_lists {
            perms_per_class.push(permutations(c));
        }
        let mut choice = vec![0usize; class_lists.len()];
        loop {
            // assemble phi: class blocks occupy consecutive new ids
            let mut phi = vec![0usize; nv];
            let mut next_id = 0;
            for (ci, perms) in perms_per_class.iter().enumerate() {
                for &v in &perms[choice[ci]] {
                    phi[v] = next_id;
                    next_id += 1;
                }
            }
            let enc = self.encoding_under(&phi);
            match &best {
                None => {
                    best = Some((enc, phi));
                    aut_count = 1;
                }
                Some((b, _)) => {
                    use std::cmp::Ordering::*;
                    match enc.cmp(b) {
                        Less => {
                            best = Some((enc, phi));
                            aut_count = 1;
                        }
                        Equal => aut_count += 1,
                        Greater => {}
                    }
                }
            }
            // advance the mixed-radix counter
            let mut i = 0;
            loop {
                if i == choice.len() {
                    let (_, phi) = best.expect("at least one candidate");
                    return Ok(self.finish_canonical(phi, aut_count));
                }
                choice[i] += 1;
                if choice[i] < perms_per_class[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn finish_canonical(&self, phi: Vec<usize>, _aut: u64) -> (StableGraph, Correspondence) {
        let nv = self.num_vertices();
        let mut inv = vec![0usize; nv];
        for (v, &img) in phi.iter().enumerate() {
            inv[img] = v;
        }
        let vertex_genus: Vec<u32> = (0..nv).map(|new| self.vertex_genus[inv[new]]).collect();
        let mut mapped: Vec<((usize, usize), usize)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let (x, y) = (phi[a], phi[b]);
                ((x.min(y), x.max(y)), i)
            })
            .collect();
        mapped.sort();
        let edges: Vec<(usize, usize)> = mapped.iter().map(|&(e, _)| e).collect();
        let mut edge_map = vec![None; self.edges.len()];
        for (new_idx, &(_, old_idx)) in mapped.iter().enumerate() {
            edge_map[old_idx] = Some(new_idx);
        }
        let legs: Vec<usize> = self.legs.iter().map(|&l| phi[l]).collect();
        let canon = StableGraph { genus: self.genus, vertex_genus, edges, legs };
        let corr = Correspondence {
            vertex_map: phi,
            edge_map,
            leg_map: (0..self.legs.len()).map(Some).collect(),
        };
        (canon, corr)
    }

    /// Automorphism group order (half-edge level, legs fixed pointwise).
    pub fn aut_order(&self) -> Result<u64, GraphError> {
        let nv = self.num_vertices();
        let colors = self.wl_colors();
        let mut classes: BTreeMap<&Vec<u8>, Vec<usize>> = BTreeMap::new();
        for (v, c) in colors.iter().enumerate() {
            classes.entry(c).or_default().push(v);
        }
        let class_lists: Vec<Vec<usize>> = classes.into_values().collect();
        let caps = Caps::default();
        let mut total: usize = 1;
        for c in &class_lists {
            total = total.saturating_mul(factorial_capped(c.len(), caps.max_canon_candidates));
            if total > caps.max_canon_candidates {
                return Err(GraphError::ResourceBound("automorphism search too large".into()));
            }
        }
        let reference = self.encoding_under(&(0..nv).collect::<Vec<_>>());
        let mut perms_per_class: Vec<Vec<Vec<usize>>> = Vec::new();
        for c in &class_lists {
            perms_per_class.push(permutations(c));
        }
        // count vertex permutations preserving the labelled structure
        let mut vertex_auts: u64 = 0;
        let mut choice = vec![0usize; class_lists.len()];
        'outer: loop {
            let mut phi = vec![0usize; nv];
            for (ci, perms) in perms_per_class.iter().enumerate() {
                // class members map within the class, in the chosen order
                let base = &class_lists[ci];
                for (slot, &v) in perms[choice[ci]].iter().enumerate() {
                    phi[v] = base[slot];
                }
            }
            if self.encoding_under(&phi) == reference {
                vertex_auts += 1;
            }
            let mut i = 0;
            loop {
                if i == choice.len() {
                    break 'outer;
                }
                choice[i] += 1;
                if choice[i] < perms_per_class[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
        // half-edge degrees of freedom over any vertex automorphism:
        // parallel edges permute freely, each loop's half-edges swap
        let mut pair_mult: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for &(a, b) in &self.edges {
            *pair_mult.entry((a, b)).or_insert(0) += 1;
        }
        let mut factor: u64 = 1;
        for (&(a, b), &m) in &pair_mult {
            factor *= factorial_u64(m);
            if a == b {
                factor *= 2u64.pow(m as u32);
            }
        }
        Ok(vertex_auts * factor)
    }

    /// All vertex automorphisms (legs fixed) as vertex permutations.
    pub fn vertex_automorphisms(&self) -> Result<Vec<Vec<usize>>, GraphError> {
        let nv = self.num_vertices();
        let colors = self.wl_colors();
        let mut classes: BTreeMap<&Vec<u8>, Vec<usize>> = BTreeMap::new();
        for (v, c) in colors.iter().enumerate() {
            classes.entry(c).or_default().push(v);
        }
        let class_lists: Vec<Vec<usize>> = classes.into_values().collect();
        let reference = self.encoding_under(&(0..nv).collect::<Vec<_>>());
        let mut perms_per_class: Vec<Vec<Vec<usize>>> = Vec::new();
        for c in &class_lists {
            perms_per_class.push(permutations(c));
        }
        let mut out = Vec::new();
        let mut choice = vec![0usize; class_lists.len()];
        'outer: loop {
            let mut phi = vec![0usize; nv];
            for (ci, perms) in perms_per_class.iter().enumerate() {
                let base = &class_lists[ci];
                for (slot, &v) in perms[choice[ci]].iter().enumerate() {
                    phi[v] = base[slot];
                }
            }
            if self.encoding_under(&phi) == reference {
                out.push(phi);
            }
            let mut i = 0;
            loop {
                if i == choice.len() {
                    break 'outer;
                }
                choice[i] += 1;
                if choice[i] < perms_per_class[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
        Ok(out)
    }

    /// Hex digest of the canonical-form bytes, for golden tests and CLI
    /// cross-references.
    pub fn digest(&self) -> Result<String, GraphError> {
        let (canon, _) = self.canonicalize()?;
        let nv = canon.num_vertices();
        let enc = canon.encoding_under(&(0..nv).collect::<Vec<_>>());
        let mut hasher = Sha256::new();
        hasher.update(&enc);
        let out = hasher.finalize();
        Ok(out.iter().map(|b| format!("{b:02x}")).collect())
    }

    // ---- surgery ------------------------------------------------------

    /// Contract a set of edges. Loops raise the vertex genus, non-loops
    /// merge their endpoints summing genera; simultaneous contraction of a
    /// cycle adds its first Betti number to the merged vertex.
    pub fn contract_edges(&self, contracted: &BTreeSet<usize>) -> (StableGraph, Correspondence) {
        let nv = self.num_vertices();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut Vec<usize>, v: usize) -> usize {
            if parent[v] != v {
                let r = find(parent, parent[v]);
                parent[v] = r;
            }
            parent[v]
        }
        for &ei in contracted {
            let (a, b) = self.edges[ei];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        // components in order of their smallest member
        let mut comp_of = vec![usize::MAX; nv];
        let mut comp_members: Vec<Vec<usize>> = Vec::new();
        for v in 0..nv {
            let r = find(&mut parent, v);
            if comp_of[r] == usize::MAX {
                comp_of[r] = comp_members.len();
                comp_members.push(Vec::new());
            }
            comp_of[v] = comp_of[r];
            comp_members[comp_of[v]].push(v);
        }
        let mut vertex_genus: Vec<u32> = comp_members
            .iter()
            .map(|m| m.iter().map(|&v| self.vertex_genus[v]).sum())
            .collect();
        // h1 of each contracted component
        let mut comp_edge_count = vec![0i64; comp_members.len()];
        for &ei in contracted {
            let (a, _) = self.edges[ei];
            comp_edge_count[comp_of[a]] += 1;
        }
        for (ci, members) in comp_members.iter().enumerate() {
            let h1 = comp_edge_count[ci] - members.len() as i64 + 1;
            vertex_genus[ci] += h1 as u32;
        }
        let mut edges = Vec::new();
        let mut edge_map = vec![None; self.edges.len()];
        for (ei, &(a, b)) in self.edges.iter().enumerate() {
            if contracted.contains(&ei) {
                continue;
            }
            let (x, y) = (comp_of[a], comp_of[b]);
            edge_map[ei] = Some(edges.len());
            edges.push((x.min(y), x.max(y)));
        }
        let legs: Vec<usize> = self.legs.iter().map(|&l| comp_of[l]).collect();
        let out = StableGraph { genus: self.genus, vertex_genus, edges, legs };
        debug_assert_eq!(out.computed_genus(), self.genus);
        let corr = Correspondence {
            vertex_map: comp_of,
            edge_map,
            leg_map: (0..self.legs.len()).map(Some).collect(),
        };
        (out, corr)
    }

    /// Glue marking `p` of `self` to marking `q` of `other` by a new edge.
    /// Legs of the result: remaining legs of `self`, then of `other`.
    pub fn glue(
        &self,
        p: usize,
        other: &StableGraph,
        q: usize,
    ) -> Result<(StableGraph, Correspondence, Correspondence, usize), GraphError> {
        let vp = self.leg_vertex(p).ok_or(GraphError::NotALeg(p))?;
        let vq = other.leg_vertex(q).ok_or(GraphError::NotALeg(q))?;
        let off = self.num_vertices();
        let mut vertex_genus = self.vertex_genus.clone();
        vertex_genus.extend(other.vertex_genus.iter().copied());
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(a, b)| (a + off, b + off)));
        let new_edge = edges.len();
        edges.push((vp.min(vq + off), vp.max(vq + off)));
        let mut legs = Vec::new();
        let mut left_leg_map = vec![None; self.num_legs()];
        for (i, &l) in self.legs.iter().enumerate() {
            if i + 1 != p {
                left_leg_map[i] = Some(legs.len());
                legs.push(l);
            }
        }
        let mut right_leg_map = vec![None; other.num_legs()];
        for (i, &l) in other.legs.iter().enumerate() {
            if i + 1 != q {
                right_leg_map[i] = Some(legs.len());
                legs.push(l + off);
            }
        }
        let out = StableGraph {
            genus: self.genus + other.genus,
            vertex_genus,
            edges,
            legs,
        };
        debug_assert_eq!(out.computed_genus(), out.genus);
        let left = Correspondence {
            vertex_map: (0..self.num_vertices()).collect(),
            edge_map: (0..self.num_edges()).map(Some).collect(),
            leg_map: left_leg_map,
        };
        let right = Correspondence {
            vertex_map: (0..other.num_vertices()).map(|v| v + off).collect(),
            edge_map: (0..other.num_edges()).map(|e| Some(e + self.num_edges())).collect(),
            leg_map: right_leg_map,
        };
        Ok((out, left, right, new_edge))
    }

    /// Glue two distinct markings of the same connected graph; the genus
    /// rises by one.
    pub fn glue_loop(
        &self,
        p: usize,
        q: usize,
    ) -> Result<(StableGraph, Correspondence, usize), GraphError> {
        if p == q {
            return Err(GraphError::SameLeg);
        }
        let vp = self.leg_vertex(p).ok_or(GraphError::NotALeg(p))?;
        let vq = self.leg_vertex(q).ok_or(GraphError::NotALeg(q))?;
        let mut edges = self.edges.clone();
        let new_edge = edges.len();
        edges.push((vp.min(vq), vp.max(vq)));
        let mut legs = Vec::new();
        let mut leg_map = vec![None; self.num_legs()];
        for (i, &l) in self.legs.iter().enumerate() {
            if i + 1 != p && i + 1 != q {
                leg_map[i] = Some(legs.len());
                legs.push(l);
            }
        }
        let out = StableGraph {
            genus: self.genus + 1,
            vertex_genus: self.vertex_genus.clone(),
            edges,
            legs,
        };
        debug_assert_eq!(out.computed_genus(), out.genus);
        let corr = Correspondence {
            vertex_map: (0..self.num_vertices()).collect(),
            edge_map: (0..self.num_edges()).map(Some).collect(),
            leg_map,
        };
        Ok((out, corr, new_edge))
    }

    /// Forget marking `k`, stabilising a rational tail or bridge if the
    /// incident vertex drops below stability. Remaining markings close up
    /// in order.
    pub fn forget_leg(
        &self,
        k: usize,
    ) -> Result<(StableGraph, Correspondence, ForgetScript), GraphError> {
        let v = self.leg_vertex(k).ok_or(GraphError::NotALeg(k))?;
        let n = self.num_legs();
        if 2 * self.genus as i64 - 2 + (n as i64 - 1) <= 0 {
            return Err(GraphError::ResultUnstable);
        }
        let remaining_valence = self.valence(v) - 1;
        let unstable = self.vertex_genus[v] == 0 && remaining_valence == 2;
        if !unstable {
            let mut legs = Vec::new();
            let mut leg_map = vec![None; n];
            for (i, &l) in self.legs.iter().enumerate() {
                if i + 1 != k {
                    leg_map[i] = Some(legs.len());
                    legs.push(l);
                }
            }
            let out = StableGraph {
                genus: self.genus,
                vertex_genus: self.vertex_genus.clone(),
                edges: self.edges.clone(),
                legs,
            };
            let corr = Correspondence {
                vertex_map: (0..self.num_vertices()).collect(),
                edge_map: (0..self.num_edges()).map(Some).collect(),
                leg_map,
            };
            return Ok((out, corr, ForgetScript::Identity));
        }
        // the destabilised vertex keeps exactly two half-edges
        let incident: Vec<usize> = (0..self.num_edges())
            .filter(|&e| self.edges[e].0 == v || self.edges[e].1 == v)
            .collect();
        let other_legs: Vec<usize> = (0..n)
            .filter(|&i| i + 1 != k && self.legs[i] == v)
            .collect();
        match (incident.len(), other_legs.len()) {
            (2, 0) => {
                // rational bridge: drop v, merge the two edges
                let (e1, e2) = (incident[0], incident[1]);
                let u1 = other_end(self.edges[e1], v);
                let u2 = other_end(self.edges[e2], v);
                let mut vertex_genus = Vec::new();
                let mut vmap = vec![usize::MAX; self.num_vertices()];
                for w in 0..self.num_vertices() {
                    if w != v {
                        vmap[w] = vertex_genus.len();
                        vertex_genus.push(self.vertex_genus[w]);
                    }
                }
                let mut edges = Vec::new();
                let mut edge_map = vec![None; self.num_edges()];
                for (ei, &(a, b)) in self.edges.iter().enumerate() {
                    if ei == e1 || ei == e2 {
                        continue;
                    }
                    edge_map[ei] = Some(edges.len());
                    edges.push((vmap[a].min(vmap[b]), vmap[a].max(vmap[b])));
                }
                let merged = edges.len();
                edges.push((vmap[u1].min(vmap[u2]), vmap[u1].max(vmap[u2])));
                let mut legs = Vec::new();
                let mut leg_map = vec![None; n];
                for (i, &l) in self.legs.iter().enumerate() {
                    if i + 1 != k {
                        leg_map[i] = Some(legs.len());
                        legs.push(vmap[l]);
                    }
                }
                let out = StableGraph { genus: self.genus, vertex_genus, edges, legs };
                debug_assert_eq!(out.computed_genus(), self.genus);
                let mut vertex_map = vmap;
                vertex_map[v] = usize::MAX; // dropped
                let corr = Correspondence { vertex_map, edge_map, leg_map };
                Ok((out, corr, ForgetScript::Bridge { edges: (e1, e2), merged }))
            }
            (1, 1) => {
                // rational tail: the surviving leg migrates across the edge
                let e = incident[0];
                let j = other_legs[0];
                let u = other_end(self.edges[e], v);
                let mut vertex_genus = Vec::new();
                let mut vmap = vec![usize::MAX; self.num_vertices()];
                for w in 0..self.num_vertices() {
                    if w != v {
                        vmap[w] = vertex_genus.len();
                        vertex_genus.push(self.vertex_genus[w]);
                    }
                }
                let mut edges = Vec::new();
                let mut edge_map = vec![None; self.num_edges()];
                for (ei, &(a, b)) in self.edges.iter().enumerate() {
                    if ei == e {
                        continue;
                    }
                    edge_map[ei] = Some(edges.len());
                    edges.push((vmap[a].min(vmap[b]), vmap[a].max(vmap[b])));
                }
                let mut legs = Vec::new();
                let mut leg_map = vec![None; n];
                for (i, &l) in self.legs.iter().enumerate() {
                    if i + 1 == k {
                        continue;
                    }
                    leg_map[i] = Some(legs.len());
                    if i == j {
                        legs.push(vmap[u]);
                    } else {
                        legs.push(vmap[l]);
                    }
                }
                let out = StableGraph { genus: self.genus, vertex_genus, edges, legs };
                debug_assert_eq!(out.computed_genus(), self.genus);
                let mut vertex_map = vmap;
                vertex_map[v] = usize::MAX;
                let corr = Correspondence { vertex_map, edge_map, leg_map };
                Ok((out, corr, ForgetScript::Tail { leg: j + 1, edge: e }))
            }
            _ => {
                // two legs and no edges forces a single vertex, which the
                // signature precondition already rejects
                Err(GraphError::ResultUnstable)
            }
        }
    }
}

fn other_end(edge: (usize, usize), v: usize) -> usize {
    if edge.0 == v {
        edge.1
    } else {
        edge.0
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn partition_of(colors: &[Vec<u8>]) -> Vec<Vec<usize>> {
    let mut m: BTreeMap<&Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (v, c) in colors.iter().enumerate() {
        m.entry(c).or_default().push(v);
    }
    m.into_values().collect()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    let mut f: usize = 1;
    for i in 2..=n {
        f = f.saturating_mul(i);
        if f > cap {
            return f;
        }
    }
    f
}

fn factorial_u64(n: u64) -> u64 {
    (2..=n).product::<u64>().max(1)
}

/// Enumerate all canonical stable graphs of the signature, paired with the
/// order of their automorphism groups, in deterministic order
/// (edge count, then canonical bytes).
pub fn enumerate_stable_graphs(
    g: u32,
    n: usize,
    caps: &Caps,
) -> Result<Vec<(StableGraph, u64)>, GraphError> {
    if 2 * g as i64 - 2 + n as i64 <= 0 {
        return Err(GraphError::UnstableSignature(g, n));
    }
    let max_v = (2 * g as i64 - 2 + n as i64) as usize;
    let max_e = 3 * g as i64 - 3 + n as i64;
    if max_v > caps.max_vertices || max_e > caps.max_edges as i64 {
        return Err(GraphError::ResourceBound(format!(
            "signature ({g},{n}) needs up to {max_v} vertices and {max_e} edges"
        )));
    }
    let mut seen: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut out: Vec<(StableGraph, u64)> = Vec::new();
    for nv in 1..=max_v {
        for genus_vec in compositions_bounded(g, nv) {
            let sum: u32 = genus_vec.iter().sum();
            let ne = g as i64 - sum as i64 + nv as i64 - 1;
            if ne < 0 || ne > caps.max_edges as i64 {
                continue;
            }
            let ne = ne as usize;
            let pairs: Vec<(usize, usize)> = (0..nv)
                .flat_map(|a| (a..nv).map(move |b| (a, b)))
                .collect();
            for edge_choice in multisets(pairs.len(), ne) {
                let edges: Vec<(usize, usize)> =
                    edge_choice.iter().map(|&i| pairs[i]).collect();
                for leg_choice in tuples(nv, n) {
                    let cand = StableGraph {
                        genus: g,
                        vertex_genus: genus_vec.clone(),
                        edges: edges.clone(),
                        legs: leg_choice,
                    };
                    if !cand.is_connected() {
                        continue;
                    }
                    if !(0..nv).all(|v| cand.vertex_stable(v)) {
                        continue;
                    }
                    let (canon, _) = cand.canonicalize_with_caps(caps)?;
                    let enc = canon.encoding_under(&(0..nv).collect::<Vec<_>>());
                    if seen.insert(enc) {
                        let aut = canon.aut_order()?;
                        out.push((canon, aut));
                    }
                }
            }
        }
    }
    out.sort_by_key(|(g, _)| {
        let nv = g.num_vertices();
        (g.num_edges(), g.encoding_under(&(0..nv).collect::<Vec<_>>()))
    });
    Ok(out)
}

fn compositions_bounded(total: u32, parts: usize) -> Vec<Vec<u32>> {
    // all vectors of length `parts` with entries summing to at most `total`
    fn rec(remaining: u32, parts: usize, acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            out.push(acc.clone());
            return;
        }
        for x in 0..=remaining {
            acc.push(x);
            rec(remaining - x, parts - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

fn multisets(slots: usize, count: usize) -> Vec<Vec<usize>> {
    // nondecreasing index sequences of the given length
    fn rec(slots: usize, count: usize, start: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if count == 0 {
            out.push(acc.clone());
            return;
        }
        for i in start..slots {
            acc.push(i);
            rec(slots, count - 1, i, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    if slots == 0 && count > 0 {
        return out;
    }
    rec(slots, count, 0, &mut Vec::new(), &mut out);
    out
}

fn tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for t in &out {
            for x in 0..base {
                let mut t2 = t.clone();
                t2.push(x);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(genus: u32, vg: &[u32], edges: &[(usize, usize)], legs: &[usize]) -> GraphData {
        GraphData {
            genus,
            vertices: vg.iter().enumerate().map(|(id, &g)| VertexData { id, genus: g }).collect(),
            edges: edges.to_vec(),
            legs: legs.to_vec(),
        }
    }

    #[test]
    fn validate_examples() {
        // smooth (0,3)
        assert!(StableGraph::validate(&data(0, &[0], &[], &[0, 0, 0])).is_ok());
        // a genus-0 vertex with two legs is unstable
        let err = StableGraph::validate(&data(0, &[0], &[], &[0, 0])).unwrap_err();
        assert!(err.contains(&GraphError::UnstableVertex(0)));
        // loop with one leg, declared genus 1
        assert!(StableGraph::validate(&data(1, &[0], &[(0, 0)], &[0])).is_ok());
        // wrong declared genus reported
        let err = StableGraph::validate(&data(2, &[0], &[(0, 0)], &[0])).unwrap_err();
        assert!(matches!(err[0], GraphError::GenusMismatch { .. }));
    }

    #[test]
    fn bad_involution_reported() {
        // involution[0] = 1, involution[1] = 0 but then involution[2] -> 0 breaks it
        let r = StableGraph::from_half_edges(0, vec![0], vec![0, 0, 0], vec![1, 0, 0], vec![2]);
        assert!(r.unwrap_err().contains(&GraphError::BadInvolution));
    }

    #[test]
    fn half_edge_roundtrip() {
        // loop plus one leg on a single vertex
        let g = StableGraph::from_half_edges(1, vec![0], vec![0, 0, 0], vec![1, 0, 2], vec![2])
            .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_legs(), 1);
    }

    #[test]
    fn enumerate_small_signatures() {
        let caps = Caps::default();
        assert_eq!(enumerate_stable_graphs(0, 3, &caps).unwrap().len(), 1);
        assert_eq!(enumerate_stable_graphs(0, 4, &caps).unwrap().len(), 4);
        assert_eq!(enumerate_stable_graphs(1, 1, &caps).unwrap().len(), 2);
        assert_eq!(enumerate_stable_graphs(1, 2, &caps).unwrap().len(), 5);
        assert!(matches!(
            enumerate_stable_graphs(0, 2, &caps),
            Err(GraphError::UnstableSignature(0, 2))
        ));
    }

    #[test]
    fn aut_orders() {
        let caps = Caps::default();
        // G_{1,1}: smooth vertex (|Aut|=1), loop (|Aut|=2 from the half-edge swap)
        let graphs = enumerate_stable_graphs(1, 1, &caps).unwrap();
        let orders: Vec<u64> = graphs.iter().map(|(_, a)| *a).collect();
        assert_eq!(orders, vec![1, 2]);
        // banana with split legs: swapping the two parallel edges
        let banana = StableGraph::validate(&data(1, &[0, 0], &[(0, 1), (0, 1)], &[0, 1])).unwrap();
        assert_eq!(banana.aut_order().unwrap(), 2);
    }

    #[test]
    fn contraction_examples() {
        let banana =
            StableGraph::validate(&data(1, &[0, 0], &[(0, 1), (0, 1)], &[0, 1])).unwrap();
        let (c, corr) = banana.contract_edges(&BTreeSet::from([0]));
        assert_eq!(c.num_vertices(), 1);
        assert_eq!(c.num_edges(), 1);
        assert_eq!(c.edges()[0], (0, 0));
        assert_eq!(c.genus(), 1);
        assert_eq!(corr.edge_map, vec![None, Some(0)]);
        // empty contraction is the identity
        let (id, _) = banana.contract_edges(&BTreeSet::new());
        assert_eq!(id, banana);
        // contracting everything yields the one-vertex graph of total genus
        let (pt, _) = banana.contract_edges(&BTreeSet::from([0, 1]));
        assert_eq!(pt.num_vertices(), 1);
        assert_eq!(pt.vertex_genus(0), 1);
        assert_eq!(pt.num_edges(), 0);
    }

    #[test]
    fn gluing_examples() {
        let m03 = StableGraph::validate(&data(0, &[0], &[], &[0, 0, 0])).unwrap();
        let (glued, _, _, new_edge) = m03.glue(3, &m03, 1).unwrap();
        assert_eq!(glued.genus(), 0);
        assert_eq!(glued.num_vertices(), 2);
        assert_eq!(glued.num_edges(), 1);
        assert_eq!(glued.num_legs(), 4);
        // separates {1,2} | {3,4}
        assert_eq!(glued.legs(), &[0, 0, 1, 1]);
        assert_eq!(new_edge, 0);

        let m11 = StableGraph::validate(&data(1, &[1], &[], &[0])).unwrap();
        let (g12, _, _, _) = m11.glue(1, &m03, 1).unwrap();
        assert_eq!((g12.genus(), g12.num_legs()), (1, 2));
        assert_eq!(g12.num_vertices(), 2);

        // gluing then contracting the new edge merges the vertices
        let (contracted, _) = glued.contract_edges(&BTreeSet::from([new_edge]));
        assert_eq!(contracted.num_vertices(), 1);
        assert_eq!(contracted.num_legs(), 4);
    }

    #[test]
    fn loop_gluing_examples() {
        let m03 = StableGraph::validate(&data(0, &[0], &[], &[0, 0, 0])).unwrap();
        let (g, _, _) = m03.glue_loop(2, 3).unwrap();
        assert_eq!((g.genus(), g.num_legs(), g.num_edges()), (1, 1, 1));
        assert_eq!(g.edges()[0], (0, 0));
        assert_eq!(m03.glue_loop(2, 2).unwrap_err(), GraphError::SameLeg);

        let m04 = StableGraph::validate(&data(0, &[0], &[], &[0, 0, 0, 0])).unwrap();
        let (g2, _, new_edge) = m04.glue_loop(3, 4).unwrap();
        assert_eq!((g2.genus(), g2.num_legs()), (1, 2));
        // contracting the new loop raises the vertex genus
        let (c, _) = g2.contract_edges(&BTreeSet::from([new_edge]));
        assert_eq!(c.vertex_genus(0), 1);
    }

    #[test]
    fn forget_examples() {
        // one-edge graph in G_{0,4}, legs {1,2} on v0 and {3,4} on v1
        let g04 =
            StableGraph::validate(&data(0, &[0, 0], &[(0, 1)], &[0, 0, 1, 1])).unwrap();
        let (out, _, script) = g04.forget_leg(4).unwrap();
        assert_eq!(out.num_vertices(), 1);
        assert_eq!(out.num_legs(), 3);
        assert_eq!(script, ForgetScript::Tail { leg: 3, edge: 0 });

        // smooth (1,2) keeps its vertex stable
        let m12 = StableGraph::validate(&data(1, &[1], &[], &[0, 0])).unwrap();
        let (_, _, script) = m12.forget_leg(2).unwrap();
        assert_eq!(script, ForgetScript::Identity);

        // chain with the only middle marking forgotten: bridge rule
        let chain = StableGraph::validate(&data(
            2,
            &[1, 0, 1],
            &[(0, 1), (1, 2)],
            &[1],
        ))
        .unwrap();
        let (out, _, script) = chain.forget_leg(1).unwrap();
        assert_eq!(script, ForgetScript::Bridge { edges: (0, 1), merged: 0 });
        assert_eq!(out.num_vertices(), 2);
        assert_eq!(out.num_edges(), 1);

        // unstable target signature is rejected
        let m11 = StableGraph::validate(&data(1, &[1], &[], &[0])).unwrap();
        assert_eq!(m11.forget_leg(1).unwrap_err(), GraphError::ResultUnstable);
    }

    #[test]
    fn canonical_is_isomorphism_invariant() {
        // same graph with vertices relabelled
        let a = StableGraph::validate(&data(1, &[1, 0], &[(0, 1)], &[1, 1])).unwrap();
        let b = StableGraph::validate(&data(1, &[0, 1], &[(0, 1)], &[0, 0])).unwrap();
        let (ca, _) = a.canonicalize().unwrap();
        let (cb, _) = b.canonicalize().unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        // canonicalisation is idempotent
        let (caa, _) = ca.canonicalize().unwrap();
        assert_eq!(ca, caa);
    }
}
