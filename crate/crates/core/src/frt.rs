//! Embedding samplers and the FRT baseline (random-permutation, random-radius
//! hierarchical clustering into 2-HSTs).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::{Hst, HstEmbedding, HstError, NodeId};
use crate::metric::MetricSpace;
use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("sampler domain is empty")]
    EmptyDomain,
    #[error(transparent)]
    Hst(#[from] HstError),
    #[error("sampler failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Frt,
    Nested,
    Deterministic,
    RoundingBased,
    UserSupplied,
}

/// A seeded source of expanding HST embeddings of a fixed domain.
pub trait EmbeddingSampler: Send + Sync {
    fn kind(&self) -> SamplerKind;
    /// Embedded point indices, ascending.
    fn domain(&self) -> &[usize];
    fn sample(&self, seed: u64) -> Result<HstEmbedding, SamplerError>;
}

pub struct FrtSampler<'a> {
    metric: &'a MetricSpace,
    domain: Vec<usize>,
}

impl<'a> FrtSampler<'a> {
    pub fn new(metric: &'a MetricSpace, mut domain: Vec<usize>) -> Self {
        domain.sort_unstable();
        domain.dedup();
        FrtSampler { metric, domain }
    }

    pub fn full(metric: &'a MetricSpace) -> Self {
        Self::new(metric, (0..metric.n()).collect())
    }
}

impl EmbeddingSampler for FrtSampler<'_> {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Frt
    }

    fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn sample(&self, seed: u64) -> Result<HstEmbedding, SamplerError> {
        frt_sample(self.metric, &self.domain, seed)
    }
}

/// One FRT draw over `domain` (indices into `m`).
///
/// A permutation and a radius multiplier `b0 in [1, 2)` are drawn once. The
/// cluster at level `i` is cut into the groups of points whose first center
/// (in permutation order) lies within `b0 * 2^(i-2)`; a level-`i` node sits
/// at height `i + 2`, i.e. label `2^(i+1)`, which exceeds the cluster
/// diameter, so every draw is non-contracting. Level `ceil(log2 diam) + 1`
/// is the root.
pub fn frt_sample(m: &MetricSpace, domain: &[usize], seed: u64) -> Result<HstEmbedding, SamplerError> {
    if domain.is_empty() {
        return Err(SamplerError::EmptyDomain);
    }
    if domain.len() == 1 {
        return Ok(HstEmbedding::singleton(2.0, domain[0]));
    }
    let mut rng = rng_from_seed(seed);
    let mut order = domain.to_vec();
    order.sort_unstable();
    order.shuffle(&mut rng);
    let b0 = 1.0 + rng.gen::<f64>();

    let diam = m.diameter_of(domain);
    let top = diam.log2().ceil().max(0.0) as u32 + 1;
    let mut tree = Hst::with_root(2.0, top + 2);
    let mut members = domain.to_vec();
    members.sort_unstable();
    split(m, &order, b0, &mut tree, 0, top, members);
    Ok(HstEmbedding::from_tree(tree)?)
}

/// `node` holds `members` at `level`; build its subtree.
fn split(m: &MetricSpace, order: &[usize], b0: f64, tree: &mut Hst, node: NodeId, level: u32, members: Vec<usize>) {
    if members.len() == 1 {
        tree.add_chain_to_leaf(node, members[0]);
        return;
    }
    debug_assert!(level >= 1, "distinct points survive below level 1");
    let radius = b0 * 2f64.powi(level as i32 - 2);
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &p in &members {
        let rank = order
            .iter()
            .position(|&c| m.d(p, c) <= radius)
            .expect("every point is its own candidate center");
        match groups.iter_mut().find(|(r, _)| *r == rank) {
            Some((_, g)) => g.push(p),
            None => groups.push((rank, vec![p])),
        }
    }
    groups.sort_by_key(|(r, _)| *r);
    let h = tree.height(node) - 1;
    for (_, g) in groups {
        let child = tree.add_child(node, h, None);
        split(m, order, b0, tree, child, level - 1, g);
    }
}

/// Always returns the same embedding.
pub struct FixedSampler {
    embedding: HstEmbedding,
    domain: Vec<usize>,
}

impl FixedSampler {
    pub fn new(embedding: HstEmbedding) -> Self {
        let domain = embedding.domain();
        FixedSampler { embedding, domain }
    }
}

impl EmbeddingSampler for FixedSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Deterministic
    }

    fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn sample(&self, _seed: u64) -> Result<HstEmbedding, SamplerError> {
        Ok(self.embedding.clone())
    }
}

/// Deterministic one-leaf embedding of `x`.
pub fn singleton_sampler(x: usize) -> FixedSampler {
    FixedSampler::new(HstEmbedding::singleton(2.0, x))
}

/// A user-supplied finite distribution over embeddings of a common domain.
pub struct ListSampler {
    items: Vec<(f64, HstEmbedding)>,
    domain: Vec<usize>,
}

impl ListSampler {
    pub fn new(items: Vec<(f64, HstEmbedding)>) -> Result<Self, SamplerError> {
        let first = items.first().ok_or(SamplerError::EmptyDomain)?;
        let domain = first.1.domain();
        if items.iter().any(|(_, e)| e.domain() != domain) {
            return Err(SamplerError::Failed("embeddings disagree on their domain".into()));
        }
        let total: f64 = items.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-9 || items.iter().any(|(p, _)| *p < 0.0) {
            return Err(SamplerError::Failed(format!("probabilities sum to {total}")));
        }
        Ok(ListSampler { items, domain })
    }

    pub fn items(&self) -> &[(f64, HstEmbedding)] {
        &self.items
    }
}

impl EmbeddingSampler for ListSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::UserSupplied
    }

    fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn sample(&self, seed: u64) -> Result<HstEmbedding, SamplerError> {
        let u: f64 = rng_from_seed(seed).gen();
        let mut acc = 0.0;
        for (p, e) in &self.items {
            acc += p;
            if u < acc {
                return Ok(e.clone());
            }
        }
        Ok(self.items.last().expect("nonempty").1.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique(n: usize) -> MetricSpace {
        MetricSpace::validate((0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect())
            .unwrap()
    }

    #[test]
    fn single_point() {
        let m = clique(1);
        let e = frt_sample(&m, &[0], 3).unwrap();
        assert_eq!(e.domain(), vec![0]);
        assert!(e.tree().validate().is_ok());
    }

    #[test]
    fn two_points_unit_distance() {
        // diam 1 -> top level 1 (height 3, label 4); level-0 radius b0/2 < 1
        // splits the pair. Enumerated by hand over both permutations and
        // every b0 in [1, 2): the LCA is always the root, so d = 4.
        let m = clique(2);
        for seed in 0..50 {
            let e = frt_sample(&m, &[0, 1], seed).unwrap();
            let d = e.distance(0, 1).unwrap();
            assert!((1.0..=4.0).contains(&d));
            assert_eq!(d, 4.0);
        }
    }

    #[test]
    fn k8_non_contracting_and_bounded() {
        let m = clique(8);
        let dom: Vec<usize> = (0..8).collect();
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..200 {
            let e = frt_sample(&m, &dom, seed).unwrap();
            assert!(e.tree().validate().is_ok());
            for i in 0..8 {
                for j in (i + 1)..8 {
                    let d = e.distance(i, j).unwrap();
                    assert!(d >= 1.0);
                    total += d;
                    count += 1.0;
                }
            }
        }
        let mean = total / count;
        assert!(mean <= 8.0);
        // regression baseline: every clique pair separates right under the root
        assert_eq!(mean, 4.0);
    }

    #[test]
    fn same_seed_same_tree() {
        let m = MetricSpace::from_graph(&[("a", "b", 1.0), ("b", "c", 2.0), ("c", "d", 3.0), ("d", "a", 1.5)])
            .unwrap();
        let s = FrtSampler::full(&m);
        assert_eq!(s.sample(11).unwrap(), s.sample(11).unwrap());
    }

    #[test]
    fn singleton_sampler_is_deterministic() {
        let s = singleton_sampler(4);
        let a = s.sample(1).unwrap();
        assert_eq!(a, s.sample(2).unwrap());
        assert_eq!(a.domain(), vec![4]);
        assert_eq!(s.kind(), SamplerKind::Deterministic);
    }

    #[test]
    fn list_sampler_validates_probabilities() {
        let e = HstEmbedding::singleton(2.0, 0);
        assert!(ListSampler::new(vec![(0.5, e.clone())]).is_err());
        let s = ListSampler::new(vec![(0.5, e.clone()), (0.5, e)]).unwrap();
        assert_eq!(s.sample(0).unwrap().domain(), vec![0]);
    }
}
