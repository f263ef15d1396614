//! Nested composition: extend an embedding of a subset `S` to all of `X`.
//!
//! Points outside `S` are grouped around random centers (radius `b` times
//! the distance to their nearest `S` point, `b ~ U[2, 4]`), each group is
//! embedded on its own together with the center's nearest `S` point, and the
//! pieces are merged into the sampled embedding of `S` one by one. The
//! result is finally scaled by 4 so no pair is contracted.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frt::{frt_sample, EmbeddingSampler, SamplerError, SamplerKind};
use crate::hst::{scale_up, HstEmbedding};
use crate::merge::{merge_hst, MergeError};
use crate::metric::{MetricSpace, Subset};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Default constant in front of the all-pairs distortion bound.
pub const DEFAULT_ZETA: f64 = 723.0;

/// Regression constant used for the default per-subset distortion of FRT.
pub const FRT_DISTORTION_CONSTANT: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NestedError {
    #[error("subset S is empty")]
    EmptyS,
    #[error("sampler for S covers {found:?}, expected {expected:?}")]
    DomainMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("sampler failure: {0}")]
    SamplerFailure(#[from] SamplerError),
    #[error("merge precondition violated: {0}")]
    MergePreconditionViolated(#[from] MergeError),
}

/// Produces embeddings of arbitrary small subsets of the metric.
pub trait FamilyRule: Send + Sync {
    fn sample(&self, metric: &MetricSpace, domain: &[usize], seed: u64) -> Result<HstEmbedding, SamplerError>;
}

/// FRT on the restricted metric; a single point gets a one-leaf tree.
pub struct FrtFamily;

impl FamilyRule for FrtFamily {
    fn sample(&self, metric: &MetricSpace, domain: &[usize], seed: u64) -> Result<HstEmbedding, SamplerError> {
        frt_sample(metric, domain, seed)
    }
}

/// Default distortion of the subset family for subsets of size up to `k + 1`.
pub fn default_family_distortion(k: usize) -> f64 {
    FRT_DISTORTION_CONSTANT * ((k + 2) as f64).log2()
}

pub struct Assortment<'a> {
    pub metric: &'a MetricSpace,
    pub s: Subset,
    pub sampler_s: Box<dyn EmbeddingSampler + 'a>,
    pub family: Box<dyn FamilyRule + 'a>,
    /// Expected distortion of `sampler_s`.
    pub c_s: f64,
}

impl<'a> Assortment<'a> {
    pub fn new(metric: &'a MetricSpace, s: Subset, sampler_s: Box<dyn EmbeddingSampler + 'a>, c_s: f64) -> Self {
        Assortment { metric, s, sampler_s, family: Box::new(FrtFamily), c_s }
    }

    /// Points outside `S`, ascending.
    pub fn outliers(&self) -> Vec<usize> {
        self.s.complement(self.metric).members().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: usize,
    pub members: Vec<usize>,
}

/// The random partition of `K` drawn by one composition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedTrace {
    pub b: f64,
    /// Centers in the order they were visited.
    pub pi: Vec<usize>,
    pub gamma: BTreeMap<usize, usize>,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone)]
pub struct NestedOutput {
    /// Scaled embedding, expanding on every pair.
    pub embedding: HstEmbedding,
    /// The merged embedding before scaling.
    pub unscaled: HstEmbedding,
    pub trace: NestedTrace,
}

/// Closest point of `s` to `u`; ties go to the lowest index.
pub fn nearest_anchor(m: &MetricSpace, s: &Subset, u: usize) -> Result<usize, NestedError> {
    let mut best: Option<usize> = None;
    for &v in s.members() {
        if best.map_or(true, |b| m.d(u, v) < m.d(u, b)) {
            best = Some(v);
        }
    }
    best.ok_or(NestedError::EmptyS)
}

/// Draw the partition of `K` from the partition seed alone.
pub fn draw_partition(m: &MetricSpace, s: &Subset, partition_seed: u64) -> Result<NestedTrace, NestedError> {
    if s.is_empty() {
        return Err(NestedError::EmptyS);
    }
    let k = s.complement(m).members().to_vec();
    let mut gamma = BTreeMap::new();
    for &u in &k {
        gamma.insert(u, nearest_anchor(m, s, u)?);
    }
    let mut rng = rng_from_seed(partition_seed);
    let b = 2.0 + 2.0 * rng.gen::<f64>();
    let mut pi = k.clone();
    pi.shuffle(&mut rng);

    let mut left = k;
    let mut clusters = Vec::new();
    for &u in &pi {
        let (members, rest): (Vec<usize>, Vec<usize>) =
            left.iter().partition(|&&v| m.d(v, u) <= b * m.d(v, gamma[&v]));
        left = rest;
        if !members.is_empty() {
            clusters.push(Cluster { center: u, members });
        }
    }
    Ok(NestedTrace { b, pi, gamma, clusters })
}

/// One composition draw; the embedding and partition streams both derive
/// from `seed`.
pub fn nested_compose(a: &Assortment<'_>, seed: u64) -> Result<NestedOutput, NestedError> {
    nested_compose_with(a, derive_seed(seed, stream::EMBEDDING, 0), derive_seed(seed, stream::PARTITION, 0))
}

/// Composition with the two streams seeded separately. The trace depends
/// only on `(metric, S, partition_seed)`.
pub fn nested_compose_with(
    a: &Assortment<'_>,
    embedding_seed: u64,
    partition_seed: u64,
) -> Result<NestedOutput, NestedError> {
    if a.s.is_empty() {
        return Err(NestedError::EmptyS);
    }
    if a.sampler_s.domain() != a.s.members() {
        return Err(NestedError::DomainMismatch {
            expected: a.s.members().to_vec(),
            found: a.sampler_s.domain().to_vec(),
        });
    }
    let mut alpha = a.sampler_s.sample(derive_seed(embedding_seed, stream::EMBEDDING, 0))?;
    let trace = draw_partition(a.metric, &a.s, partition_seed)?;
    for (i, c) in trace.clusters.iter().enumerate() {
        let anchor = trace.gamma[&c.center];
        let mut domain = c.members.clone();
        domain.push(anchor);
        domain.sort_unstable();
        let piece = a.family.sample(a.metric, &domain, derive_seed(embedding_seed, stream::EMBEDDING, i as u64 + 1))?;
        alpha = merge_hst(&alpha, &piece)?;
    }
    Ok(NestedOutput { embedding: scale_up(&alpha, 2), unscaled: alpha, trace })
}

/// Nested composition as a sampler over all of `X`.
pub struct NestedSampler<'a> {
    assortment: Assortment<'a>,
    domain: Vec<usize>,
}

impl<'a> NestedSampler<'a> {
    pub fn new(assortment: Assortment<'a>) -> Self {
        let domain = (0..assortment.metric.n()).collect();
        NestedSampler { assortment, domain }
    }

    pub fn assortment(&self) -> &Assortment<'a> {
        &self.assortment
    }
}

impl EmbeddingSampler for NestedSampler<'_> {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Nested
    }

    fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn sample(&self, seed: u64) -> Result<HstEmbedding, SamplerError> {
        nested_compose(&self.assortment, seed)
            .map(|o| o.embedding)
            .map_err(|e| match e {
                NestedError::SamplerFailure(s) => s,
                other => SamplerError::Failed(other.to_string()),
            })
    }
}
