//! Shared instance builders for benchmarks.

use nestree_core::metric::{gen_planted_outliers, gen_random_metric, gen_random_ultrametric};
use nestree_core::{frt_sample, hst_from_ultrametric, HstEmbedding, MetricSpace};

pub fn random_metric(n: usize) -> MetricSpace {
    gen_random_metric(n, 20.0, n as u64).expect("generator accepts n >= 1")
}

/// A core ultrametric on the first `core` points plus `far` distant points.
pub fn planted(core: usize, far: usize) -> MetricSpace {
    gen_planted_outliers(core, far, 7).expect("planted generator")
}

/// Two trees of `half + 1` leaves each, sharing point 0.
pub fn merge_pair(half: usize) -> (HstEmbedding, HstEmbedding) {
    let n = 2 * half + 1;
    let z1: Vec<usize> = (0..=half).collect();
    let z2: Vec<usize> = std::iter::once(0).chain(half + 1..n).collect();
    let a = frt_sample(&random_metric(n), &z1, 1).expect("frt");
    let u = gen_random_ultrametric(n, 2).expect("ultrametric");
    let b = hst_from_ultrametric(&u, &z2).expect("exact tree");
    (a, b)
}
