//! Monte-Carlo distortion estimates, an exhaustive outlier oracle for small
//! instances, and closed-form bound calculators.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::frt::{EmbeddingSampler, SamplerError, SamplerKind};
use crate::lp::{build_lp, log2_sq, solve, SolveError, SolveOptions};
use crate::metric::MetricSpace;
use crate::rng::{derive_seed, stream};

/// Largest instance the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_N: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("need at least two points to measure distortion")]
    NoPairs,
    #[error("sampler failure: {0}")]
    SamplerFailure(#[from] SamplerError),
    #[error("sampled embedding misses point {0}")]
    MissingPoint(usize),
    #[error("exhaustive search limited to {BRUTE_FORCE_MAX_N} points, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStat {
    pub a: usize,
    pub b: usize,
    pub d: f64,
    /// Sample mean of `d_alpha(a, b) / d(a, b)`.
    pub mean_ratio: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    pub sampler: SamplerKind,
    pub samples: usize,
    pub seed: u64,
    /// Seeds actually handed to the sampler, in draw order.
    pub sample_seeds: Vec<u64>,
    pub pairs: Vec<PairStat>,
    /// Largest per-pair mean ratio: the empirical expected distortion.
    pub max_mean_ratio: f64,
    pub max_pair: (usize, usize),
    pub per_sample_max_expansion: Vec<f64>,
    pub per_sample_min_ratio: Vec<f64>,
    /// Smallest ratio seen in any sample; at least 1 for expanding samplers.
    pub min_ratio: f64,
}

impl DistortionReport {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairStat> {
        let (a, b) = (a.min(b), a.max(b));
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }

    /// `pair,d,mean_ratio` rows, pairs written as `label-label`.
    pub fn to_csv(&self, m: &MetricSpace) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pair", "d", "mean_ratio"]).expect("in-memory write");
        for p in &self.pairs {
            w.write_record([format!("{}-{}", m.label(p.a), m.label(p.b)), p.d.to_string(), p.mean_ratio.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Distortion over every pair of the sampler's domain.
pub fn estimate_distortion(
    sampler: &dyn EmbeddingSampler,
    m: &MetricSpace,
    samples: usize,
    seed: u64,
) -> Result<DistortionReport, EvalError> {
    estimate_distortion_on(sampler, m, sampler.domain(), samples, seed)
}

/// Distortion over the pairs of `points` only (e.g. the non-outliers of a
/// sampler that embeds everything). Sample `s` uses
/// `derive_seed(seed, SAMPLE, s)`; the result does not depend on the thread
/// count.
pub fn estimate_distortion_on(
    sampler: &dyn EmbeddingSampler,
    m: &MetricSpace,
    points: &[usize],
    samples: usize,
    seed: u64,
) -> Result<DistortionReport, EvalError> {
    if samples < 2 {
        return Err(EvalError::TooFewSamples(samples));
    }
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let pairs: Vec<(usize, usize)> =
        pts.iter().enumerate().flat_map(|(i, &a)| pts[i + 1..].iter().map(move |&b| (a, b))).collect();
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let seeds: Vec<u64> = (0..samples as u64).map(|s| derive_seed(seed, stream::SAMPLE, s)).collect();
    let ratios: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| {
            let e = sampler.sample(s)?;
            pairs
                .iter()
                .map(|&(a, b)| {
                    let da = e.distance(a, b).map_err(|_| EvalError::MissingPoint(if e.contains(a) { b } else { a }))?;
                    Ok(da / m.d(a, b))
                })
                .collect::<Result<Vec<f64>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;

    let count = samples as f64;
    let mut stats = Vec::with_capacity(pairs.len());
    let (mut max_mean_ratio, mut max_pair) = (f64::NEG_INFINITY, pairs[0]);
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let mean = ratios.iter().map(|r| r[p]).sum::<f64>() / count;
        let var = ratios.iter().map(|r| (r[p] - mean).powi(2)).sum::<f64>() / (count - 1.0);
        if mean > max_mean_ratio {
            (max_mean_ratio, max_pair) = (mean, (a, b));
        }
        stats.push(PairStat { a, b, d: m.d(a, b), mean_ratio: mean, std_err: (var / count).sqrt() });
    }
    let per_sample_max_expansion: Vec<f64> = ratios.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let per_sample_min_ratio: Vec<f64> = ratios.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    Ok(DistortionReport {
        sampler: sampler.kind(),
        samples,
        seed,
        sample_seeds: seeds,
        pairs: stats,
        max_mean_ratio,
        max_pair,
        min_ratio: per_sample_min_ratio.iter().copied().fold(f64::INFINITY, f64::min),
        per_sample_max_expansion,
        per_sample_min_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    /// Smallest certified outlier set (first in lexicographic order among
    /// those of its size).
    pub outliers: Vec<usize>,
    /// Subsets tried, including the certified one.
    pub checked: usize,
}

/// Smallest `K` (up to `max_k` points) for which the outlier LP at
/// distortion `c` and budget `|K|` is feasible with its outlier variables
/// pinned to the indicator of `K`. `Ok(None)` when no such set exists.
pub fn brute_force_best_outliers(
    m: &MetricSpace,
    c: f64,
    max_k: usize,
    zeta: f64,
    opts: &SolveOptions,
) -> Result<Option<BruteForceResult>, EvalError> {
    let n = m.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(EvalError::TooLarge(n));
    }
    let mut checked = 0;
    for size in 0..=max_k.min(n) {
        let mut model = build_lp(m, c, size, zeta, None);
        for set in combinations(n, size) {
            for i in 0..n {
                let v = if set.contains(&i) { 1.0 } else { 0.0 };
                model.program.lower[i] = v;
                model.program.upper[i] = v;
            }
            checked += 1;
            match solve(&model.program, opts) {
                Ok(_) => return Ok(Some(BruteForceResult { outliers: set, checked })),
                Err(SolveError::Infeasible { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(None)
}

/// All `size`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    if size > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..size).rev().find(|&i| cur[i] < n - size + i) else {
            return out;
        };
        cur[i] += 1;
        for j in (i + 1)..size {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// `H_k = 1 + 1/2 + .. + 1/k`.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Expected expansion bound for nested composition:
/// `(125 c_S + 116 c_X) H_k`.
pub fn nested_expansion_bound(c_s: f64, c_x: f64, k: usize) -> f64 {
    (125.0 * c_s + 116.0 * c_x) * harmonic(k)
}

/// All-pairs distortion bound `zeta (c_S log k + log^2 k)`, logs base 2 with
/// `k` floored at 2.
pub fn nested_all_pairs_bound(zeta: f64, c_s: f64, k: usize) -> f64 {
    let l = (k.max(2) as f64).log2();
    zeta * (c_s * l + l * l)
}

/// Per-pair bound on a rounded embedding:
/// `8 (4 + zeta log^2 k (delta_j + delta_j')) c`.
pub fn rounding_pair_bound(zeta: f64, c: f64, k: usize, delta_j: f64, delta_jp: f64) -> f64 {
    8.0 * (4.0 + zeta * log2_sq(k) * (delta_j + delta_jp)) * c
}
