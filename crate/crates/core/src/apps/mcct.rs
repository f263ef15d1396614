//! Minimum communication cost trees with outliers, on ultrametric inputs.
//!
//! LP over unordered pairs `i < j`:
//! `min sum x_ij r_ij d(i,j)` s.t. `delta_i + delta_j + x_ij >= 1`,
//! `sum delta <= k`, everything in `[0, 1]`. Points with `delta >= 1/3` are
//! dropped; since the input is already a tree metric, dropping them is just
//! deleting their leaves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::{hst_from_ultrametric, is_ultrametric, HstEmbedding};
use crate::lp::{solve, LinearProgram, Sense, SolveError, SolveOptions};
use crate::metric::MetricSpace;

/// Slack on the `1/3` cut, so an LP value of `0.33333333333` still counts.
pub const THRESHOLD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McctError {
    #[error("input metric is not an ultrametric")]
    NotUltrametric,
    #[error("outlier LP could not be solved: {0}")]
    LpInfeasible(SolveError),
    #[error("bad demand: {0}")]
    BadDemand(String),
}

#[derive(Debug, Clone)]
pub struct McctInstance {
    pub metric: MetricSpace,
    /// Symmetric, nonnegative, zero diagonal.
    pub demands: Vec<Vec<f64>>,
    pub k: usize,
}

/// A demand entry as read from a file: endpoints by label or index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointRef {
    Index(usize),
    Label(String),
}

impl PointRef {
    pub fn resolve(&self, m: &MetricSpace) -> Option<usize> {
        match self {
            PointRef::Index(i) => (*i < m.n()).then_some(*i),
            PointRef::Label(l) => m.index_of(l),
        }
    }
}

impl std::fmt::Display for PointRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointRef::Index(i) => write!(f, "{i}"),
            PointRef::Label(l) => write!(f, "{l}"),
        }
    }
}

/// `{"demands": [[u, v, r], ...]}`; repeated pairs add up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandsFile {
    pub demands: Vec<(PointRef, PointRef, f64)>,
}

impl McctInstance {
    pub fn new(metric: MetricSpace, demands: Vec<Vec<f64>>, k: usize) -> Result<Self, McctError> {
        let n = metric.n();
        if demands.len() != n || demands.iter().any(|r| r.len() != n) {
            return Err(McctError::BadDemand(format!("demand matrix must be {n} x {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let r = demands[i][j];
                if !(r >= 0.0 && r.is_finite()) || r != demands[j][i] {
                    return Err(McctError::BadDemand(format!("entry ({i}, {j})")));
                }
            }
        }
        Ok(McctInstance { metric, demands, k })
    }

    pub fn from_file(metric: MetricSpace, file: &DemandsFile, k: usize) -> Result<Self, McctError> {
        let n = metric.n();
        let mut r = vec![vec![0.0; n]; n];
        for (a, b, w) in &file.demands {
            let i = a.resolve(&metric).ok_or_else(|| McctError::BadDemand(format!("unknown point {a}")))?;
            let j = b.resolve(&metric).ok_or_else(|| McctError::BadDemand(format!("unknown point {b}")))?;
            if i == j {
                continue;
            }
            r[i][j] += w;
            r[j][i] += w;
        }
        Self::new(metric, r, k)
    }

    /// `sum_{i<j, both kept} r_ij d(i,j)`.
    pub fn cost_without(&self, removed: &[usize]) -> f64 {
        let n = self.metric.n();
        let mut gone = vec![false; n];
        for &i in removed {
            gone[i] = true;
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                if !gone[i] && !gone[j] {
                    total += self.demands[i][j] * self.metric.d(i, j);
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct McctSolution {
    pub outliers: Vec<usize>,
    pub survivors: Vec<usize>,
    /// The exact tree on the survivors, when all their distances are powers
    /// of two; otherwise the survivors' induced ultrametric is the answer.
    pub tree: Option<HstEmbedding>,
    pub cost: f64,
    pub lp_objective: f64,
    pub deltas: Vec<f64>,
}

pub fn mcct_outlier(inst: &McctInstance, opts: &SolveOptions) -> Result<McctSolution, McctError> {
    let m = &inst.metric;
    if !is_ultrametric(m) {
        return Err(McctError::NotUltrametric);
    }
    let n = m.n();
    let mut p = LinearProgram::default();
    for i in 0..n {
        p.add_col(format!("delta_{i}"), 0.0, 1.0, 0.0);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let x = p.add_col(format!("x_{i}_{j}"), 0.0, 1.0, inst.demands[i][j] * m.d(i, j));
            p.add_row(format!("pair_{i}_{j}"), vec![(i, 1.0), (j, 1.0), (x, 1.0)], Sense::Ge, 1.0);
        }
    }
    p.add_row("budget".into(), (0..n).map(|i| (i, 1.0)).collect(), Sense::Le, inst.k as f64);
    let sol = solve(&p, opts).map_err(McctError::LpInfeasible)?;
    let deltas = sol.values[..n].to_vec();
    let (outliers, survivors): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| deltas[i] >= 1.0 / 3.0 - THRESHOLD_TOL);
    let tree = hst_from_ultrametric(m, &survivors).ok();
    Ok(McctSolution {
        cost: inst.cost_without(&outliers),
        outliers,
        survivors,
        tree,
        lp_objective: sol.objective,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{gen_random_metric, gen_random_ultrametric};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_demands(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let mut r = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..5.0f64).round() };
                r[i][j] = w;
                r[j][i] = w;
            }
        }
        r
    }

    /// Cheapest cost over every outlier set of size at most `k`.
    fn brute_force(inst: &McctInstance) -> f64 {
        let n = inst.metric.n();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize <= inst.k {
                let removed: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
                best = best.min(inst.cost_without(&removed));
            }
        }
        best
    }

    #[test]
    fn zero_budget_keeps_everything() {
        let m = gen_random_ultrametric(5, 1).unwrap();
        let inst = McctInstance::new(m, random_demands(5, 2), 0).unwrap();
        let s = mcct_outlier(&inst, &SolveOptions::default()).unwrap();
        assert!(s.outliers.is_empty());
        assert_eq!(s.cost, inst.cost_without(&[]));
        assert!((s.lp_objective - s.cost).abs() < 1e-7);
        assert_eq!(s.tree.unwrap().domain(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn full_budget_costs_nothing() {
        let m = gen_random_ultrametric(5, 3).unwrap();
        let inst = McctInstance::new(m, random_demands(5, 4), 5).unwrap();
        let s = mcct_outlier(&inst, &SolveOptions::default()).unwrap();
        assert!(s.lp_objective.abs() < 1e-7);
        assert!(s.cost <= 3.0 * s.lp_objective + 1e-7);
    }

    #[test]
    fn heavy_leaf_is_removed() {
        let m = gen_random_ultrametric(5, 7).unwrap();
        let mut r = vec![vec![0.0; 5]; 5];
        for j in 0..5 {
            for i in 0..5 {
                if i != j {
                    r[i][j] = if i == 2 || j == 2 { 100.0 } else { 1.0 };
                }
            }
        }
        let inst = McctInstance::new(m, r, 1).unwrap();
        let s = mcct_outlier(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(s.outliers, vec![2]);
        assert!((s.cost - brute_force(&inst)).abs() < 1e-9);
    }

    #[test]
    fn bounds_against_exhaustive_search() {
        for seed in 0..30u64 {
            let n = 5 + (seed % 3) as usize;
            let m = gen_random_ultrametric(n, seed).unwrap();
            let k = 1 + (seed % 2) as usize;
            let inst = McctInstance::new(m, random_demands(n, seed + 100), k).unwrap();
            let s = mcct_outlier(&inst, &SolveOptions::default()).unwrap();
            let opt = brute_force(&inst);
            assert!(s.outliers.len() <= 3 * k);
            assert!(s.lp_objective <= opt + 1e-7);
            assert!(s.cost <= 3.0 * s.lp_objective + 1e-7, "seed {seed}");
            let t = s.tree.as_ref().unwrap();
            for &i in &s.survivors {
                for &j in &s.survivors {
                    assert_eq!(t.distance(i, j).unwrap(), inst.metric.d(i, j));
                }
            }
        }
    }

    #[test]
    fn rejects_general_metrics() {
        let m = (0..20).map(|s| gen_random_metric(6, 9.0, s).unwrap()).find(|m| !is_ultrametric(m)).unwrap();
        let inst = McctInstance::new(m, vec![vec![0.0; 6]; 6], 1).unwrap();
        assert_eq!(mcct_outlier(&inst, &SolveOptions::default()).unwrap_err(), McctError::NotUltrametric);
    }

    #[test]
    fn demand_file() {
        let m = gen_random_ultrametric(3, 0).unwrap();
        let f: DemandsFile = serde_json::from_str(r#"{"demands": [["t0", "t1", 2.0], [1, 2, 1.5], ["t0", 1, 1.0]]}"#).unwrap();
        let inst = McctInstance::from_file(m.clone(), &f, 0).unwrap();
        assert_eq!(inst.demands[0][1], 3.0);
        assert_eq!(inst.demands[2][1], 1.5);
        let bad: DemandsFile = serde_json::from_str(r#"{"demands": [["zz", 1, 1.0]]}"#).unwrap();
        assert!(matches!(McctInstance::from_file(m, &bad, 0), Err(McctError::BadDemand(_))));
    }
}
