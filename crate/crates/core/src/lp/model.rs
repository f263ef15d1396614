//! The outlier HST LP and its witness construction.
//!
//! Variables, over the radius ladder `M = {1, 2, 4, .., 2^ceil(log2 diam)}`
//! and balls `B_i(r) = {j : d(i, j) <= r}`:
//! - `delta_i in [0, 1]`: how much point `i` is an outlier,
//! - `x_i_j_rR >= 0` for `j in B_i(r)`: `j` is assigned to center `i` at level `r`,
//! - `z_i_j_jp_rR >= 0` for `j < jp` both in `B_i(r)`: both assigned to `i`,
//! - `g_j_jp_rR in [0, 1]`: `j` and `jp` are separated at level `r`.
//!
//! Rows, in this order: a distortion row per pair, two `z <= x` rows per `z`,
//! a covering row per pair and level, an assignment row per point and
//! level, and `g = 1` pins for levels below the pair's distance.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use super::program::{LinearProgram, Sense, Violation};
use crate::hst::HstEmbedding;
use crate::metric::{MetricSpace, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Distortion,
    Joint,
    Cover,
    Assign,
    Pin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpParams {
    pub c: f64,
    pub k: usize,
    pub zeta: f64,
    pub weights: Option<Vec<f64>>,
}

/// `log2(max(k, 2))`, squared.
pub fn log2_sq(k: usize) -> f64 {
    let l = (k.max(2) as f64).log2();
    l * l
}

/// `{1, 2, 4, .., 2^ceil(log2 diam)}`.
pub fn radius_ladder(diam: f64) -> Vec<f64> {
    let top = diam.max(1.0).log2().ceil() as i32;
    (0..=top).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSizes {
    pub delta: usize,
    pub x: usize,
    pub z: usize,
    pub gamma: usize,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct LpModel {
    pub program: LinearProgram,
    pub params: LpParams,
    pub radii: Vec<f64>,
    pub row_kinds: Vec<RowKind>,
    n: usize,
    /// `ball[ri][i]`: ascending members of `B_i(radii[ri])`.
    ball: Vec<Vec<Vec<usize>>>,
    x: HashMap<(usize, usize, usize), usize>,
    z: HashMap<(usize, usize, usize, usize), usize>,
    gamma_start: usize,
}

fn pair_index(n: usize, j: usize, jp: usize) -> usize {
    debug_assert!(j < jp);
    j * n - j * (j + 1) / 2 + (jp - j - 1)
}

impl LpModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self, i: usize) -> usize {
        i
    }

    pub fn x(&self, i: usize, j: usize, ri: usize) -> Option<usize> {
        self.x.get(&(i, j, ri)).copied()
    }

    pub fn z(&self, i: usize, j: usize, jp: usize, ri: usize) -> Option<usize> {
        self.z.get(&(i, j.min(jp), j.max(jp), ri)).copied()
    }

    pub fn gamma(&self, j: usize, jp: usize, ri: usize) -> usize {
        let (a, b) = (j.min(jp), j.max(jp));
        self.gamma_start + pair_index(self.n, a, b) * self.radii.len() + ri
    }

    pub fn ball(&self, i: usize, ri: usize) -> &[usize] {
        &self.ball[ri][i]
    }

    pub fn sizes(&self) -> ModelSizes {
        ModelSizes {
            delta: self.n,
            x: self.x.len(),
            z: self.z.len(),
            gamma: self.n * (self.n - 1) / 2 * self.radii.len(),
            rows: self.program.num_rows(),
        }
    }
}

pub fn build_lp(m: &MetricSpace, c: f64, k: usize, zeta: f64, weights: Option<&[f64]>) -> LpModel {
    let n = m.n();
    let radii = radius_ladder(m.diameter());
    let nr = radii.len();
    let mut p = LinearProgram::default();
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        p.add_col(format!("delta_{i}"), 0.0, 1.0, w);
    }
    let ball: Vec<Vec<Vec<usize>>> =
        radii.iter().map(|&r| (0..n).map(|i| (0..n).filter(|&j| m.d(i, j) <= r).collect()).collect()).collect();
    let mut x = HashMap::new();
    let mut z = HashMap::new();
    for (ri, &r) in radii.iter().enumerate() {
        for i in 0..n {
            for &j in &ball[ri][i] {
                x.insert((i, j, ri), p.add_col(format!("x_{i}_{j}_r{r}"), 0.0, f64::INFINITY, 0.0));
            }
        }
        for i in 0..n {
            let b = &ball[ri][i];
            for (a, &j) in b.iter().enumerate() {
                for &jp in &b[a + 1..] {
                    z.insert((i, j, jp, ri), p.add_col(format!("z_{i}_{j}_{jp}_r{r}"), 0.0, f64::INFINITY, 0.0));
                }
            }
        }
    }
    let gamma_start = p.num_cols();
    for j in 0..n {
        for jp in (j + 1)..n {
            for &r in &radii {
                p.add_col(format!("g_{j}_{jp}_r{r}"), 0.0, 1.0, 0.0);
            }
        }
    }
    let mut model = LpModel {
        program: p,
        params: LpParams { c, k, zeta, weights: weights.map(<[f64]>::to_vec) },
        radii: radii.clone(),
        row_kinds: Vec::new(),
        n,
        ball,
        x,
        z,
        gamma_start,
    };

    let slack = zeta * c * log2_sq(k);
    let mut rows: Vec<(RowKind, String, Vec<(usize, f64)>, Sense, f64)> = Vec::new();
    for j in 0..n {
        for jp in (j + 1)..n {
            let d = m.d(j, jp);
            let mut coeffs: Vec<(usize, f64)> = (0..nr).map(|ri| (model.gamma(j, jp, ri), radii[ri])).collect();
            coeffs.push((j, -slack * d));
            coeffs.push((jp, -slack * d));
            rows.push((RowKind::Distortion, format!("dist_{j}_{jp}"), coeffs, Sense::Le, 4.0 * c * d));
        }
    }
    let mut zs: Vec<(&(usize, usize, usize, usize), &usize)> = model.z.iter().collect();
    zs.sort_by_key(|(_, &col)| col);
    for (&(i, j, jp, ri), &col) in zs {
        let r = radii[ri];
        for q in [j, jp] {
            rows.push((
                RowKind::Joint,
                format!("joint_{i}_{j}_{jp}_r{r}_{q}"),
                vec![(col, 1.0), (model.x[&(i, q, ri)], -1.0)],
                Sense::Le,
                0.0,
            ));
        }
    }
    for j in 0..n {
        for jp in (j + 1)..n {
            for (ri, &r) in radii.iter().enumerate() {
                let mut coeffs: Vec<(usize, f64)> =
                    (0..n).filter_map(|i| model.z(i, j, jp, ri).map(|col| (col, 1.0))).collect();
                coeffs.push((model.gamma(j, jp, ri), 1.0));
                rows.push((RowKind::Cover, format!("cover_{j}_{jp}_r{r}"), coeffs, Sense::Ge, 1.0));
            }
        }
    }
    for (ri, &r) in radii.iter().enumerate() {
        for j in 0..n {
            let coeffs = (0..n).filter_map(|i| model.x(i, j, ri).map(|col| (col, 1.0))).collect();
            rows.push((RowKind::Assign, format!("assign_{j}_r{r}"), coeffs, Sense::Eq, 1.0));
        }
    }
    for j in 0..n {
        for jp in (j + 1)..n {
            for (ri, &r) in radii.iter().enumerate() {
                if r < m.d(j, jp) {
                    rows.push((
                        RowKind::Pin,
                        format!("pin_{j}_{jp}_r{r}"),
                        vec![(model.gamma(j, jp, ri), 1.0)],
                        Sense::Eq,
                        1.0,
                    ));
                }
            }
        }
    }
    for (kind, name, coeffs, sense, rhs) in rows {
        model.program.add_row(name, coeffs, sense, rhs);
        model.row_kinds.push(kind);
    }
    model
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WitnessError {
    #[error("embedding contracts pair ({0}, {1})")]
    NotNonContracting(usize, usize),
    #[error("probabilities sum to {0}")]
    ProbabilitiesDontSum(f64),
    #[error("embedding does not cover point {0}")]
    MissingPoint(usize),
}

/// Row violations split into distortion rows (which depend on how good the
/// distribution is) and everything else (which every non-contracting
/// distribution satisfies).
#[derive(Debug, Clone, Default, Serialize)]
pub struct FeasibilityReport {
    pub distortion: Vec<Violation>,
    pub structural: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.distortion.is_empty() && self.structural.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub values: Vec<f64>,
    pub objective: f64,
    pub report: FeasibilityReport,
}

/// Assignment induced by a finite distribution over embeddings of all of `X`
/// with outliers `outliers`: at level `r`, a point's cluster is its highest
/// ancestor with label at most `r`, represented by the cluster's smallest
/// point.
pub fn witness_from_distribution(
    m: &MetricSpace,
    dist: &[(f64, HstEmbedding)],
    outliers: &Subset,
    model: &LpModel,
    tol: f64,
) -> Result<Witness, WitnessError> {
    let n = m.n();
    let total: f64 = dist.iter().map(|(p, _)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(WitnessError::ProbabilitiesDontSum(total));
    }
    let mut v = vec![0.0; model.program.num_cols()];
    for &i in outliers.members() {
        v[model.delta(i)] = 1.0;
    }
    for (p, e) in dist {
        let leaves = (0..n).map(|j| e.leaf(j).map_err(|_| WitnessError::MissingPoint(j))).collect::<Result<Vec<_>, _>>()?;
        for j in 0..n {
            for jp in (j + 1)..n {
                if e.distance(j, jp).expect("covered") < m.d(j, jp) {
                    return Err(WitnessError::NotNonContracting(j, jp));
                }
            }
        }
        let t = e.tree();
        for (ri, &r) in model.radii.iter().enumerate() {
            let cluster: Vec<usize> = leaves
                .iter()
                .map(|&leaf| {
                    let mut node = leaf;
                    while let Some(par) = t.node(node).parent {
                        if t.eta(par) > r {
                            break;
                        }
                        node = par;
                    }
                    node
                })
                .collect();
            let mut rep: HashMap<usize, usize> = HashMap::new();
            for j in 0..n {
                rep.entry(cluster[j]).or_insert(j);
            }
            for j in 0..n {
                let i = rep[&cluster[j]];
                let col = model.x(i, j, ri).expect("non-contraction keeps cluster members in the ball");
                v[col] += p;
                for jp in (j + 1)..n {
                    if cluster[jp] == cluster[j] {
                        v[model.z(i, j, jp, ri).expect("both in ball")] += p;
                    } else {
                        v[model.gamma(j, jp, ri)] += p;
                    }
                }
            }
        }
    }
    let mut report = FeasibilityReport::default();
    for (row, kind) in model.program.rows.iter().zip(&model.row_kinds) {
        let amount = row.violation(&v);
        if amount > tol {
            let item = Violation { name: row.name.clone(), amount };
            if *kind == RowKind::Distortion {
                report.distortion.push(item);
            } else {
                report.structural.push(item);
            }
        }
    }
    for j in 0..v.len() {
        let p = &model.program;
        let amount = (p.lower[j] - v[j]).max(v[j] - p.upper[j]).max(0.0);
        if amount > tol {
            report.structural.push(Violation { name: format!("bound {}", p.col_names[j]), amount });
        }
    }
    Ok(Witness { objective: model.program.objective_value(&v), values: v, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frt::frt_sample;
    use crate::hst::{hst_from_ultrametric, Hst};
    use crate::lp::solver::{solve, SolveOptions};
    use crate::metric::{gen_random_metric, gen_random_ultrametric};

    fn k2() -> MetricSpace {
        MetricSpace::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn two_point_counts() {
        let model = build_lp(&k2(), 1.0, 0, 723.0, None);
        assert_eq!(model.radii, vec![1.0]);
        let s = model.sizes();
        assert_eq!((s.delta, s.x, s.z, s.gamma), (2, 4, 2, 1));
        // 1 distortion, 4 joint, 1 cover, 2 assign, no pins
        assert_eq!(s.rows, 8);
        assert!(!model.row_kinds.contains(&RowKind::Pin));
        assert_eq!(model.program.col_names[0], "delta_0");
        assert_eq!(model.program.col_names[2], "x_0_0_r1");
    }

    #[test]
    fn degenerate_k_keeps_finite_slack() {
        assert_eq!(log2_sq(0), 1.0);
        assert_eq!(log2_sq(1), 1.0);
        assert_eq!(log2_sq(4), 4.0);
        let model = build_lp(&k2(), 1.0, 1, 723.0, None);
        assert!(model.program.rows[0].coeffs.iter().all(|(_, a)| a.is_finite()));
    }

    #[test]
    fn closed_form_sizes() {
        let m = gen_random_metric(6, 5.0, 3).unwrap();
        let model = build_lp(&m, 2.0, 2, 723.0, None);
        let nr = model.radii.len();
        let mut x = 0;
        let mut z = 0;
        let mut pins = 0;
        for &r in &model.radii {
            for i in 0..6 {
                let b = (0..6).filter(|&j| m.d(i, j) <= r).count();
                x += b;
                z += b * (b - 1) / 2;
            }
            for j in 0..6 {
                for jp in (j + 1)..6 {
                    pins += (r < m.d(j, jp)) as usize;
                }
            }
        }
        let s = model.sizes();
        assert_eq!((s.x, s.z, s.gamma), (x, z, 15 * nr));
        assert_eq!(model.program.num_cols(), 6 + x + z + 15 * nr);
        let assign = model.row_kinds.iter().filter(|k| **k == RowKind::Assign).count();
        assert_eq!(assign, 6 * nr);
        assert_eq!(s.rows, 15 + 2 * z + 15 * nr + 6 * nr + pins);
    }

    #[test]
    fn star_assignment_rows() {
        let m = MetricSpace::from_graph(&[("c", "a", 1.0), ("c", "b", 1.0), ("c", "d", 1.0)]).unwrap();
        let model = build_lp(&m, 1.0, 1, 723.0, None);
        let assign = model.row_kinds.iter().filter(|k| **k == RowKind::Assign).count();
        assert_eq!(assign, 4 * model.radii.len());
    }

    #[test]
    fn deterministic_layout() {
        let m = gen_random_metric(5, 4.0, 8).unwrap();
        let a = build_lp(&m, 1.5, 2, 723.0, None);
        let b = build_lp(&m, 1.5, 2, 723.0, None);
        assert_eq!(a.program, b.program);
    }

    #[test]
    fn hst_metric_identity_witness() {
        let m = gen_random_ultrametric(6, 4).unwrap();
        let e = hst_from_ultrametric(&m, &[0, 1, 2, 3, 4, 5]).unwrap();
        let model = build_lp(&m, 1.0, 0, 723.0, None);
        let w = witness_from_distribution(&m, &[(1.0, e)], &Subset::new(&m, vec![]).unwrap(), &model, 1e-7).unwrap();
        assert!(w.report.feasible(), "{:?}", w.report);
        assert_eq!(w.objective, 0.0);
        let sol = solve(&model.program, &SolveOptions::default()).unwrap();
        assert!(sol.objective <= 1e-7);
    }

    #[test]
    fn all_outliers_witness() {
        let m = gen_random_metric(5, 3.0, 1).unwrap();
        let model = build_lp(&m, 1.0, 5, 723.0, None);
        let e = frt_sample(&m, &[0, 1, 2, 3, 4], 9).unwrap();
        let w = witness_from_distribution(&m, &[(1.0, e)], &Subset::full(&m), &model, 1e-7).unwrap();
        assert!(w.report.feasible());
        assert_eq!(w.objective, 5.0);
    }

    #[test]
    fn witness_errors() {
        let m = k2();
        let model = build_lp(&m, 1.0, 0, 723.0, None);
        let e = frt_sample(&m, &[0, 1], 0).unwrap();
        let none = Subset::new(&m, vec![]).unwrap();
        assert_eq!(
            witness_from_distribution(&m, &[(0.5, e.clone())], &none, &model, 1e-7).unwrap_err(),
            WitnessError::ProbabilitiesDontSum(0.5)
        );
        let mut t2 = Hst::with_root(2.0, 1);
        t2.add_child(0, 0, Some(0));
        t2.add_child(0, 0, Some(1));
        let half = HstEmbedding::from_tree(t2).unwrap();
        // distance 1 at height 1 is fine; scale the metric up to break it
        let far = MetricSpace::from_labeled(vec!["a".into(), "b".into()], vec![vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap();
        let model_far = build_lp(&far, 1.0, 0, 723.0, None);
        assert_eq!(
            witness_from_distribution(&far, &[(1.0, half)], &none, &model_far, 1e-7).unwrap_err(),
            WitnessError::NotNonContracting(0, 1)
        );
    }
}
