//! From an outlier-LP solution to a sampler of HST embeddings plus a fixed
//! outlier set.
//!
//! Sampling works level by level, largest radius first: random centers with
//! random thresholds claim every unassigned point of their ball whose
//! assignment value reaches the threshold. The level partitions are then
//! intersected top-down into a tree.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::frt::{EmbeddingSampler, SamplerError, SamplerKind};
use crate::hst::{Hst, HstEmbedding, DEFAULT_BETA};
use crate::lp::{build_lp, log2_sq, solve, LpModel, SolveError, SolveOptions};
use crate::metric::MetricSpace;
use crate::nested::DEFAULT_ZETA;
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Multiplier of the per-level draw cap `c' * n * ln(diam / eps')`.
pub const DEFAULT_C_PRIME: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundingError {
    #[error("level {level} leaves point {point} unassigned")]
    PartitionNotCovering { level: usize, point: usize },
    #[error("no tested k reached v_k <= k")]
    AllInfeasible,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weights must cover every point")]
    WeightCount,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Center of every point at every level (`levels[ri][j]`, radii ascending),
/// or the star fallback when some level ran out of draws.
#[derive(Debug, Clone, PartialEq)]
pub enum Partitions {
    Levels(Vec<Vec<usize>>),
    Fallback,
}

/// Per level and center, the ball members with their assignment values.
#[derive(Debug, Clone)]
pub struct RoundingTables {
    n: usize,
    radii: Vec<f64>,
    diam: f64,
    /// `claims[ri][i]`: `(j, x_ij)` for `j` in the ball of `i`.
    claims: Vec<Vec<Vec<(usize, f64)>>>,
}

impl RoundingTables {
    pub fn new(model: &LpModel, values: &[f64], diam: f64) -> Self {
        let n = model.n();
        let claims = (0..model.radii.len())
            .map(|ri| {
                (0..n)
                    .map(|i| {
                        model
                            .ball(i, ri)
                            .iter()
                            .map(|&j| (j, values[model.x(i, j, ri).expect("ball member")]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        RoundingTables { n, radii: model.radii.clone(), diam, claims }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Per-level cap on center draws.
    pub fn draw_cap(&self, eps_prime: f64, c_prime: f64) -> usize {
        (c_prime * self.n as f64 * (self.diam.max(1.0) / eps_prime).ln()).ceil().max(1.0) as usize
    }

    pub fn round(&self, seed: u64, eps_prime: f64, c_prime: f64) -> Partitions {
        let n = self.n;
        let cap = self.draw_cap(eps_prime, c_prime);
        let mut rng = rng_from_seed(derive_seed(seed, stream::PARTITION, 0));
        let mut levels = vec![Vec::new(); self.radii.len()];
        for ri in (0..self.radii.len()).rev() {
            let mut center = vec![usize::MAX; n];
            let mut left = n;
            let mut draws = 0;
            while left > 0 {
                if draws == cap {
                    return Partitions::Fallback;
                }
                draws += 1;
                let i = rng.gen_range(0..n);
                // (0, 1] so that zero-valued entries never claim
                let ell = 1.0 - rng.gen::<f64>();
                for &(j, x) in &self.claims[ri][i] {
                    if center[j] == usize::MAX && x >= ell {
                        center[j] = i;
                        left -= 1;
                    }
                }
            }
            levels[ri] = center;
        }
        Partitions::Levels(levels)
    }
}

pub fn round_partitions(model: &LpModel, values: &[f64], diam: f64, seed: u64, eps_prime: f64) -> Partitions {
    RoundingTables::new(model, values, diam).round(seed, eps_prime, DEFAULT_C_PRIME)
}

/// Tree of nested level partitions. A part at radius `r` becomes a node of
/// label `2r`; below radius 1 every point gets its own leaf. If the top level
/// has several parts, a root one level higher joins them. The fallback is a
/// star with every distance `2 * max radius`.
pub fn partitions_to_hst(radii: &[f64], n: usize, parts: &Partitions) -> Result<HstEmbedding, RoundingError> {
    let top = radii.len() - 1;
    // a level-r part sits at height log2(r) + 2, i.e. ri + 2
    let height = |ri: usize| ri as u32 + 2;
    let levels = match parts {
        Partitions::Fallback => {
            let mut t = Hst::with_root(DEFAULT_BETA, height(top));
            for p in 0..n {
                t.add_chain_to_leaf(0, p);
            }
            return Ok(HstEmbedding::from_tree(t).expect("distinct leaves"));
        }
        Partitions::Levels(l) => l,
    };
    for (level, centers) in levels.iter().enumerate() {
        if let Some(point) = (0..n).find(|&j| centers.get(j).map_or(true, |&c| c >= n)) {
            return Err(RoundingError::PartitionNotCovering { level, point });
        }
    }
    let split = |members: &[usize], ri: usize| -> Vec<Vec<usize>> {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for &j in members {
            let c = levels[ri][j];
            match groups.iter_mut().find(|(g, _)| *g == c) {
                Some((_, g)) => g.push(j),
                None => groups.push((c, vec![j])),
            }
        }
        groups.into_iter().map(|(_, g)| g).collect()
    };
    let all: Vec<usize> = (0..n).collect();
    let top_parts = split(&all, top);
    let (mut t, mut stack) = if top_parts.len() == 1 {
        (Hst::with_root(DEFAULT_BETA, height(top)), vec![(0, top, all)])
    } else {
        let mut t = Hst::with_root(DEFAULT_BETA, height(top) + 1);
        let mut stack = Vec::new();
        for g in top_parts {
            let id = t.add_child(0, height(top), None);
            stack.push((id, top, g));
        }
        (t, stack)
    };
    // (node, level it represents, members); children come from level - 1
    while let Some((node, ri, members)) = stack.pop() {
        if ri == 0 {
            for j in members {
                t.add_chain_to_leaf(node, j);
            }
            continue;
        }
        for g in split(&members, ri - 1) {
            let id = t.add_child(node, height(ri - 1), None);
            stack.push((id, ri - 1, g));
        }
    }
    Ok(HstEmbedding::from_tree(t).expect("every point lands on one leaf"))
}

/// Draws rounded embeddings of all of `X` from a fixed LP solution.
#[derive(Debug, Clone)]
pub struct RoundingSampler {
    tables: Arc<RoundingTables>,
    domain: Vec<usize>,
    pub eps_prime: f64,
    pub c_prime: f64,
}

pub struct RoundedSample {
    pub embedding: HstEmbedding,
    pub fallback: bool,
}

impl RoundingSampler {
    pub fn new(tables: RoundingTables, eps_prime: f64, c_prime: f64) -> Self {
        let domain = (0..tables.n).collect();
        RoundingSampler { tables: Arc::new(tables), domain, eps_prime, c_prime }
    }

    pub fn sample_detailed(&self, seed: u64) -> RoundedSample {
        let parts = self.tables.round(seed, self.eps_prime, self.c_prime);
        let fallback = parts == Partitions::Fallback;
        let embedding =
            partitions_to_hst(&self.tables.radii, self.tables.n, &parts).expect("rounding covers every level");
        RoundedSample { embedding, fallback }
    }
}

impl EmbeddingSampler for RoundingSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::RoundingBased
    }

    fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn sample(&self, seed: u64) -> Result<HstEmbedding, SamplerError> {
        Ok(self.sample_detailed(seed).embedding)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutlierConfig {
    pub c: f64,
    pub eps: f64,
    pub zeta: f64,
    pub c_prime: f64,
    /// Budgets to try; `None` means `1..=n`.
    pub k_values: Option<Vec<usize>>,
    pub seed: u64,
    #[serde(skip)]
    pub solve: SolveOptions,
}

impl OutlierConfig {
    pub fn new(c: f64, eps: f64) -> Self {
        OutlierConfig {
            c,
            eps,
            zeta: DEFAULT_ZETA,
            c_prime: DEFAULT_C_PRIME,
            k_values: None,
            seed: 0,
            solve: SolveOptions::default(),
        }
    }
}

/// `eps / (16 zeta log2(max(k, 2))^2)`.
pub fn delta_threshold(eps: f64, zeta: f64, k: usize) -> f64 {
    eps / (16.0 * zeta * log2_sq(k))
}

#[derive(Debug, Clone, Serialize)]
pub struct KStat {
    pub k: usize,
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutlierStats {
    pub columns: usize,
    pub rows: usize,
    pub solves: Vec<KStat>,
}

#[derive(Debug, Clone)]
pub struct OutlierResult {
    pub k_star: usize,
    pub delta_star: f64,
    pub outliers: Vec<usize>,
    pub lp_objective: f64,
    /// LP values of the outlier variables for the chosen budget.
    pub deltas: Vec<f64>,
    pub config: OutlierConfig,
    pub stats: OutlierStats,
    pub sampler: RoundingSampler,
}

impl OutlierResult {
    /// Sample `i` of the run, seeded from the configured master seed.
    pub fn sample(&self, i: u64) -> RoundedSample {
        self.sampler.sample_detailed(derive_seed(self.config.seed, stream::SAMPLE, i))
    }

    pub fn to_json(&self, m: &MetricSpace) -> serde_json::Value {
        serde_json::json!({
            "k_star": self.k_star,
            "delta_star": self.delta_star,
            "outliers": self.outliers.iter().map(|&i| m.label(i)).collect::<Vec<_>>(),
            "lp_objective": self.lp_objective,
            "config": self.config,
            "stats": self.stats,
        })
    }
}

/// Solve the outlier LP over a range of budgets `k`, keep one, and threshold
/// its outlier variables. Unweighted: the first `k` with `v_k <= k`.
/// Weighted: the `k` minimizing `v_k log^2 k`, ties to the smaller `k`.
pub fn outlier_embed(m: &MetricSpace, weights: Option<&[f64]>, cfg: &OutlierConfig) -> Result<OutlierResult, RoundingError> {
    if !(cfg.c >= 1.0) {
        return Err(RoundingError::InvalidConfig(format!("c = {} must be at least 1", cfg.c)));
    }
    if !(cfg.eps > 0.0 && cfg.eps <= 1.0) {
        return Err(RoundingError::InvalidConfig(format!("eps = {} must lie in (0, 1]", cfg.eps)));
    }
    if let Some(w) = weights {
        if w.len() != m.n() || w.iter().any(|x| !(*x >= 0.0)) {
            return Err(RoundingError::WeightCount);
        }
    }
    let ks: Vec<usize> = cfg.k_values.clone().unwrap_or_else(|| (1..=m.n()).collect());
    let mut solves = Vec::new();
    let mut best: Option<(usize, f64, LpModel, Vec<f64>)> = None;
    for &k in &ks {
        let model = build_lp(m, cfg.c, k, cfg.zeta, weights);
        let sol = solve(&model.program, &cfg.solve)?;
        solves.push(KStat { k, objective: sol.objective, seconds: sol.seconds });
        let v = sol.objective.max(0.0);
        match weights {
            None => {
                if v <= k as f64 + 1e-9 {
                    best = Some((k, v, model, sol.values));
                    break;
                }
            }
            Some(_) => {
                let score = v * log2_sq(k);
                if best.as_ref().map_or(true, |(bk, bv, _, _)| score < bv * log2_sq(*bk)) {
                    best = Some((k, v, model, sol.values));
                }
            }
        }
    }
    let (k_star, lp_objective, model, values) = best.ok_or(RoundingError::AllInfeasible)?;
    let delta_star = delta_threshold(cfg.eps, cfg.zeta, k_star);
    let deltas: Vec<f64> = (0..m.n()).map(|i| values[model.delta(i)]).collect();
    let outliers = (0..m.n()).filter(|&i| deltas[i] >= delta_star).collect();
    let tables = RoundingTables::new(&model, &values, m.diameter());
    let sizes = model.sizes();
    Ok(OutlierResult {
        k_star,
        delta_star,
        outliers,
        lp_objective,
        deltas,
        config: cfg.clone(),
        stats: OutlierStats { columns: model.program.num_cols(), rows: sizes.rows, solves },
        sampler: RoundingSampler::new(tables, cfg.eps / 2.0, cfg.c_prime),
    })
}
