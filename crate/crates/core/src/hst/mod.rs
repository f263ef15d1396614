//! Exact β-HSTs and embeddings of metric points into their leaves.
//!
//! Nodes carry integer heights; the label of a node at height `h` is
//! `beta^(h-1)`, so leaves (height 0) sit at `1/beta` and every child is
//! exactly one level below its parent. The distance between two embedded
//! points is the label of the least common ancestor of their leaves. Heights
//! stay integral so merges can line levels up exactly.

pub mod json;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricSpace, TRIANGLE_RTOL};

pub type NodeId = usize;

pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstNode {
    pub height: u32,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Embedded point index; only leaves carry one.
    pub point: Option<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HstError {
    #[error("point {0} is not embedded")]
    PointNotEmbedded(usize),
    #[error("point {0} appears on more than one leaf")]
    DuplicatePoint(usize),
    #[error("invalid tree: {0}")]
    Invalid(HstViolation),
    #[error("metric is not an ultrametric with power-of-two distances")]
    NotExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    EmptyTree,
    /// A child is not exactly one level below its parent.
    HeightSkip,
    /// A childless node above height 0, or a node at height 0 with children.
    LeafNotAtZero,
    /// A leaf that carries no point.
    PointlessLeaf,
    /// An internal node that carries a point.
    InternalPoint,
    /// Parent/child links disagree.
    BrokenLink,
}

/// First violation found, with the child-index path from the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HstViolation {
    pub kind: ViolationKind,
    pub path: Vec<usize>,
}

impl std::fmt::Display for HstViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} at root", self.kind)?;
        for p in &self.path {
            write!(f, "/{p}")?;
        }
        Ok(())
    }
}

/// Arena-backed β-HST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hst {
    beta: f64,
    nodes: Vec<HstNode>,
    root: NodeId,
}

impl Hst {
    /// A tree with only a root at `height` and no point.
    pub fn with_root(beta: f64, height: u32) -> Self {
        Hst {
            beta,
            nodes: vec![HstNode { height, parent: None, children: Vec::new(), point: None }],
            root: 0,
        }
    }

    /// One leaf holding `point`.
    pub fn single_leaf(beta: f64, point: usize) -> Self {
        let mut t = Self::with_root(beta, 0);
        t.nodes[0].point = Some(point);
        t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[HstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &HstNode {
        &self.nodes[id]
    }

    pub fn height(&self, id: NodeId) -> u32 {
        self.nodes[id].height
    }

    pub fn root_height(&self) -> u32 {
        self.nodes[self.root].height
    }

    /// `beta^(h-1)`.
    pub fn eta_at(&self, height: u32) -> f64 {
        self.beta.powi(height as i32 - 1)
    }

    pub fn eta(&self, id: NodeId) -> f64 {
        self.eta_at(self.nodes[id].height)
    }

    /// Append a child below `parent`; heights are the caller's business.
    pub fn add_child(&mut self, parent: NodeId, height: u32, point: Option<usize>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(HstNode { height, parent: Some(parent), children: Vec::new(), point });
        self.nodes[parent].children.push(id);
        id
    }

    /// Hang a unary chain below `parent` ending in a height-0 leaf with
    /// `point`. Returns the leaf.
    pub fn add_chain_to_leaf(&mut self, parent: NodeId, point: usize) -> NodeId {
        let mut at = parent;
        let mut h = self.nodes[parent].height;
        while h > 1 {
            h -= 1;
            at = self.add_child(at, h, None);
        }
        self.add_child(at, 0, Some(point))
    }

    /// Put unary nodes above the root until it reaches `height`.
    pub fn raise_root_to(&mut self, height: u32) {
        while self.root_height() < height {
            let h = self.root_height() + 1;
            let id = self.nodes.len();
            self.nodes.push(HstNode { height: h, parent: None, children: vec![self.root], point: None });
            self.nodes[self.root].parent = Some(id);
            self.root = id;
        }
    }

    /// Deep-copy the subtree of `other` rooted at `src` below `parent` of
    /// `self`. Returns the id of the copy's root.
    pub fn graft_copy(&mut self, parent: NodeId, other: &Hst, src: NodeId) -> NodeId {
        let n = &other.nodes[src];
        let id = self.add_child(parent, n.height, n.point);
        for &c in &n.children {
            self.graft_copy(id, other, c);
        }
        id
    }

    /// Ancestor chain of `id` up to and including the root.
    pub fn path_to_root(&self, mut id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        while let Some(p) = self.nodes[id].parent {
            out.push(p);
            id = p;
        }
        out
    }

    pub fn lca(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while a != b {
            let (ha, hb) = (self.height(a), self.height(b));
            if ha <= hb {
                match self.nodes[a].parent {
                    Some(p) => a = p,
                    None => break,
                }
            }
            if hb <= ha {
                match self.nodes[b].parent {
                    Some(p) => b = p,
                    None => break,
                }
            }
        }
        a
    }

    fn child_path(&self, mut id: NodeId) -> Vec<usize> {
        let mut path = Vec::new();
        while let Some(p) = self.nodes[id].parent {
            let pos = self.nodes[p].children.iter().position(|&c| c == id).unwrap_or(usize::MAX);
            path.push(pos);
            id = p;
        }
        path.reverse();
        path
    }

    /// Check the exact β-HST invariants: heights drop by one per edge, leaves
    /// sit at height 0 and carry a point, internal nodes carry none.
    pub fn validate(&self) -> Result<(), HstViolation> {
        if self.nodes.is_empty() {
            return Err(HstViolation { kind: ViolationKind::EmptyTree, path: vec![] });
        }
        // Walk from the root so paths are reported top-down, first hit wins.
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let fail = |kind| Err(HstViolation { kind, path: self.child_path(id) });
            if node.children.is_empty() {
                if node.height != 0 {
                    return fail(ViolationKind::LeafNotAtZero);
                }
                if node.point.is_none() {
                    return fail(ViolationKind::PointlessLeaf);
                }
            } else {
                if node.height == 0 {
                    return fail(ViolationKind::LeafNotAtZero);
                }
                if node.point.is_some() {
                    return fail(ViolationKind::InternalPoint);
                }
            }
            for &c in node.children.iter().rev() {
                if self.nodes[c].parent != Some(id) {
                    return Err(HstViolation { kind: ViolationKind::BrokenLink, path: self.child_path(id) });
                }
                if self.nodes[c].height + 1 != node.height {
                    return Err(HstViolation { kind: ViolationKind::HeightSkip, path: self.child_path(c) });
                }
                stack.push(c);
            }
        }
        Ok(())
    }

    /// Leaves reachable from the root, in depth-first order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.children.is_empty() {
                out.push(id);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }
}

/// Free-function form of [`Hst::validate`].
pub fn validate_hst(t: &Hst) -> Result<(), HstViolation> {
    t.validate()
}

/// Injective map from point indices to leaves of an [`Hst`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstEmbedding {
    tree: Hst,
    leaf_of: BTreeMap<usize, NodeId>,
}

impl HstEmbedding {
    /// Index the point-carrying leaves of `tree`.
    pub fn from_tree(tree: Hst) -> Result<Self, HstError> {
        let mut leaf_of = BTreeMap::new();
        for leaf in tree.leaves() {
            if let Some(p) = tree.nodes[leaf].point {
                if leaf_of.insert(p, leaf).is_some() {
                    return Err(HstError::DuplicatePoint(p));
                }
            }
        }
        Ok(HstEmbedding { tree, leaf_of })
    }

    pub fn singleton(beta: f64, point: usize) -> Self {
        Self::from_tree(Hst::single_leaf(beta, point)).expect("one leaf")
    }

    pub fn tree(&self) -> &Hst {
        &self.tree
    }

    pub fn into_tree(self) -> Hst {
        self.tree
    }

    pub fn beta(&self) -> f64 {
        self.tree.beta
    }

    /// Embedded points, ascending.
    pub fn domain(&self) -> Vec<usize> {
        self.leaf_of.keys().copied().collect()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.leaf_of.contains_key(&p)
    }

    pub fn leaf(&self, p: usize) -> Result<NodeId, HstError> {
        self.leaf_of.get(&p).copied().ok_or(HstError::PointNotEmbedded(p))
    }

    /// Label of the least common ancestor of the two leaves; 0 when `x == y`.
    pub fn distance(&self, x: usize, y: usize) -> Result<f64, HstError> {
        let a = self.leaf(x)?;
        let b = self.leaf(y)?;
        if x == y {
            return Ok(0.0);
        }
        Ok(self.tree.eta(self.tree.lca(a, b)))
    }

    /// Height of the LCA of the two points' leaves.
    pub fn lca_height(&self, x: usize, y: usize) -> Result<u32, HstError> {
        let a = self.leaf(x)?;
        let b = self.leaf(y)?;
        Ok(self.tree.height(self.tree.lca(a, b)))
    }

    /// Pairwise distances over `domain()`, row-major.
    pub fn distance_matrix(&self) -> (Vec<usize>, Vec<Vec<f64>>) {
        let dom = self.domain();
        let rows = dom
            .iter()
            .map(|&x| dom.iter().map(|&y| self.distance(x, y).expect("in domain")).collect())
            .collect();
        (dom, rows)
    }

    /// The induced metric, labelled from `labels` (indexed by point).
    pub fn induced_metric(&self, labels: &[String]) -> MetricSpace {
        let (dom, rows) = self.distance_matrix();
        let l = dom.iter().map(|&p| labels[p].clone()).collect();
        MetricSpace::from_labeled(l, rows).expect("HST distances form a metric")
    }

    /// Drop `points` from the embedding: their leaves are removed along with
    /// internal nodes left without leaves. Distances among the survivors are
    /// unchanged.
    pub fn without_points(&self, points: &[usize]) -> HstEmbedding {
        let keep: Vec<usize> = self.domain().into_iter().filter(|p| !points.contains(p)).collect();
        self.restrict(&keep)
    }

    /// Restriction to `keep` (points not embedded are ignored).
    pub fn restrict(&self, keep: &[usize]) -> HstEmbedding {
        fn rebuild(src: &Hst, id: NodeId, keep: &[usize], dst: &mut Hst, parent: Option<NodeId>) -> bool {
            let node = &src.nodes[id];
            if node.children.is_empty() {
                let Some(p) = node.point else { return false };
                if !keep.contains(&p) {
                    return false;
                }
            } else if !subtree_has(src, id, keep) {
                return false;
            }
            let me = match parent {
                Some(par) => dst.add_child(par, node.height, node.point),
                None => {
                    dst.nodes[0].height = node.height;
                    dst.nodes[0].point = node.point;
                    0
                }
            };
            for &c in &node.children {
                rebuild(src, c, keep, dst, Some(me));
            }
            true
        }
        fn subtree_has(src: &Hst, id: NodeId, keep: &[usize]) -> bool {
            let node = &src.nodes[id];
            match node.point {
                Some(p) if node.children.is_empty() => keep.contains(&p),
                _ => node.children.iter().any(|&c| subtree_has(src, c, keep)),
            }
        }
        let mut dst = Hst::with_root(self.tree.beta, self.tree.root_height());
        if !rebuild(&self.tree, self.tree.root, keep, &mut dst, None) {
            // nothing kept: an empty shell root
            dst.nodes[0].point = None;
        }
        HstEmbedding::from_tree(dst).expect("restriction keeps injectivity")
    }
}

/// Free-function form of [`HstEmbedding::distance`].
pub fn hst_distance(e: &HstEmbedding, x: usize, y: usize) -> Result<f64, HstError> {
    e.distance(x, y)
}

/// Multiply every pairwise distance by `beta^t`: all heights move up by `t`
/// and each leaf grows a unary chain of `t` nodes so leaves stay at height 0.
pub fn scale_up(e: &HstEmbedding, t: u32) -> HstEmbedding {
    if t == 0 {
        return e.clone();
    }
    let src = &e.tree;
    let mut nodes: Vec<HstNode> = src
        .nodes
        .iter()
        .map(|n| HstNode { height: n.height + t, parent: n.parent, children: n.children.clone(), point: n.point })
        .collect();
    let old_len = nodes.len();
    for id in 0..old_len {
        if !nodes[id].children.is_empty() {
            continue;
        }
        let point = nodes[id].point.take();
        let mut at = id;
        for h in (0..t).rev() {
            let nid = nodes.len();
            nodes.push(HstNode { height: h, parent: Some(at), children: Vec::new(), point: None });
            nodes[at].children.push(nid);
            at = nid;
        }
        nodes[at].point = point;
    }
    let tree = Hst { beta: src.beta, nodes, root: src.root };
    HstEmbedding::from_tree(tree).expect("scaling preserves injectivity")
}

/// The exact 2-HST of an ultrametric on `domain` whose distances are all
/// powers of two (at least 1).
pub fn hst_from_ultrametric(m: &MetricSpace, domain: &[usize]) -> Result<HstEmbedding, HstError> {
    fn build(m: &MetricSpace, t: &mut Hst, node: NodeId, members: Vec<usize>) {
        let h = t.height(node);
        let limit = 2f64.powi(h as i32 - 2);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for p in members {
            match groups.iter_mut().find(|g| m.d(g[0], p) <= limit) {
                Some(g) => g.push(p),
                None => groups.push(vec![p]),
            }
        }
        for g in groups {
            if g.len() == 1 {
                t.add_chain_to_leaf(node, g[0]);
            } else if h > 1 {
                let c = t.add_child(node, h - 1, None);
                build(m, t, c, g);
            }
        }
    }
    let (&first, rest) = domain.split_first().ok_or(HstError::NotExact)?;
    if rest.is_empty() {
        return Ok(HstEmbedding::singleton(DEFAULT_BETA, first));
    }
    let diam = m.diameter_of(domain);
    let top = diam.log2().round().max(0.0) as u32 + 1;
    let mut t = Hst::with_root(DEFAULT_BETA, top);
    build(m, &mut t, 0, domain.to_vec());
    let e = HstEmbedding::from_tree(t)?;
    for &i in domain {
        if e.domain().len() != domain.len() {
            return Err(HstError::NotExact);
        }
        for &j in domain {
            if e.distance(i, j)? != m.d(i, j) {
                return Err(HstError::NotExact);
            }
        }
    }
    Ok(e)
}

/// Strong triangle inequality `d(x,y) <= max(d(x,z), d(z,y))` on every
/// triple, with relative tolerance `1e-9 * diameter`.
pub fn is_ultrametric(m: &MetricSpace) -> bool {
    let n = m.n();
    let tol = TRIANGLE_RTOL * m.diameter();
    for x in 0..n {
        for y in (x + 1)..n {
            let dxy = m.d(x, y);
            for z in 0..n {
                if dxy > m.d(x, z).max(m.d(z, y)) + tol {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Root at height 3 over two height-2 subtrees; `a`,`b` share a height-1
    /// parent, `c` hangs under the other subtree.
    pub(crate) fn sample_tree() -> HstEmbedding {
        let mut t = Hst::with_root(2.0, 3);
        let l = t.add_child(0, 2, None);
        let r = t.add_child(0, 2, None);
        let lp = t.add_child(l, 1, None);
        t.add_child(lp, 0, Some(0));
        t.add_child(lp, 0, Some(1));
        t.add_chain_to_leaf(r, 2);
        HstEmbedding::from_tree(t).unwrap()
    }

    #[test]
    fn distance_rules() {
        let e = sample_tree();
        assert_eq!(e.distance(0, 0).unwrap(), 0.0);
        assert_eq!(e.distance(0, 1).unwrap(), 1.0);
        assert_eq!(e.distance(0, 2).unwrap(), 4.0);
        assert_eq!(e.distance(0, 9), Err(HstError::PointNotEmbedded(9)));
    }

    #[test]
    fn lca_height_three_by_parent_walk() {
        let e = sample_tree();
        // independent walk: collect ancestors of leaf(0), first shared one from leaf(2)
        let t = e.tree();
        let up0 = t.path_to_root(e.leaf(0).unwrap());
        let lca = t.path_to_root(e.leaf(2).unwrap()).into_iter().find(|a| up0.contains(a)).unwrap();
        assert_eq!(t.height(lca), 3);
        assert_eq!(e.distance(0, 2).unwrap(), 2f64.powi(2));
    }

    #[test]
    fn validation() {
        assert!(Hst::single_leaf(2.0, 0).validate().is_ok());
        assert!(sample_tree().tree().validate().is_ok());

        let mut skip = Hst::with_root(2.0, 2);
        skip.add_child(0, 0, Some(0));
        assert_eq!(skip.validate().unwrap_err().kind, ViolationKind::HeightSkip);

        let mut high_leaf = Hst::with_root(2.0, 2);
        let mid = high_leaf.add_child(0, 1, None);
        high_leaf.add_child(mid, 0, Some(0));
        high_leaf.add_child(0, 1, Some(1));
        let v = high_leaf.validate().unwrap_err();
        assert_eq!(v.kind, ViolationKind::LeafNotAtZero);
        assert_eq!(v.path, vec![1]);

        let mut pointless = Hst::with_root(2.0, 1);
        pointless.add_child(0, 0, None);
        assert_eq!(pointless.validate().unwrap_err().kind, ViolationKind::PointlessLeaf);

        let empty = Hst { beta: 2.0, nodes: vec![], root: 0 };
        assert_eq!(empty.validate().unwrap_err().kind, ViolationKind::EmptyTree);
    }

    #[test]
    fn scale_up_multiplies_by_beta_power() {
        let e = sample_tree();
        assert_eq!(scale_up(&e, 0), e);
        let s = scale_up(&e, 2);
        assert!(s.tree().validate().is_ok());
        assert_eq!(s.distance(0, 1).unwrap(), 4.0);
        let (_, before) = e.distance_matrix();
        let (_, after) = scale_up(&e, 3).distance_matrix();
        for (r0, r1) in before.iter().zip(&after) {
            for (a, b) in r0.iter().zip(r1) {
                assert_eq!(*b, 8.0 * a);
            }
        }
    }

    #[test]
    fn ultrametric_checks() {
        let path = MetricSpace::validate(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        assert!(!is_ultrametric(&path));
        assert!(is_ultrametric(&MetricSpace::validate(vec![vec![0.0]]).unwrap()));
        let labels: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
        assert!(is_ultrametric(&sample_tree().induced_metric(&labels)));
    }

    #[test]
    fn restriction_keeps_distances() {
        let e = sample_tree();
        let r = e.without_points(&[1]);
        assert!(r.tree().validate().is_ok());
        assert_eq!(r.domain(), vec![0, 2]);
        assert_eq!(r.distance(0, 2).unwrap(), 4.0);
    }
}
