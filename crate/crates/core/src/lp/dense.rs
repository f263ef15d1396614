//! Dense two-phase primal simplex with Bland's rule.
//!
//! Columns are shifted to their lower bounds (or mirrored at their upper
//! bound, or split when free), finite upper bounds become extra rows, and
//! every row gets a slack and, where the slack cannot start basic, an
//! artificial. Phase 1 minimizes the artificials; phase 2 the real cost.

use super::program::{LinearProgram, Sense};
use super::solver::SolveError;

pub const PIVOT_TOL: f64 = 1e-9;
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct DenseResult {
    pub values: Vec<f64>,
    pub pivots: usize,
    /// Phase 2 stopped at the iteration cap; `values` is feasible but maybe
    /// not optimal.
    pub limit_hit: bool,
}

#[derive(Clone, Copy)]
enum Map {
    /// x = shift + y
    Shift(usize, f64),
    /// x = top - y
    Mirror(usize, f64),
    /// x = y+ - y-
    Split(usize, usize),
}

struct Tableau {
    t: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        let clean = |row: &mut Vec<f64>, f: f64| {
            for j in 0..=w {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < 1e-13 { 0.0 } else { v };
            }
        };
        for i in 0..self.t.len() {
            if i != r {
                let f = self.t[i][c];
                if f != 0.0 {
                    clean(&mut self.t[i], f);
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            clean(&mut self.obj, f);
        }
        self.t[r][c] = 1.0;
        self.basis[r] = c;
    }

    /// Run Bland's rule over columns `< allowed` until optimal, unbounded,
    /// or out of iterations. Returns `Ok(true)` when optimal.
    fn run(&mut self, allowed: usize, iters: &mut usize, max_iter: usize) -> Result<bool, SolveError> {
        let w = self.width;
        loop {
            let Some(c) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            if *iters >= max_iter {
                return Ok(false);
            }
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.t[i][w] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(SolveError::Unbounded);
            };
            self.pivot(r, c);
            *iters += 1;
        }
    }
}

pub fn solve_dense(p: &LinearProgram, max_iter: usize) -> Result<DenseResult, SolveError> {
    let n = p.num_cols();
    // column substitution
    let mut maps = Vec::with_capacity(n);
    let mut ny = 0;
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo > hi {
            return Err(SolveError::Infeasible { row: Some(format!("bound {}", p.col_names[j])) });
        }
        let m = if lo.is_finite() {
            Map::Shift(ny, lo)
        } else if hi.is_finite() {
            Map::Mirror(ny, hi)
        } else {
            ny += 1;
            Map::Split(ny - 1, ny)
        };
        ny += 1;
        maps.push(m);
    }

    // rows over y: (name, dense coeffs, sense, rhs)
    let mut rows: Vec<(String, Vec<f64>, Sense, f64)> = Vec::new();
    for row in &p.rows {
        let mut a = vec![0.0; ny];
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            match maps[j] {
                Map::Shift(y, s) => {
                    a[y] += v;
                    rhs -= v * s;
                }
                Map::Mirror(y, top) => {
                    a[y] -= v;
                    rhs -= v * top;
                }
                Map::Split(y1, y2) => {
                    a[y1] += v;
                    a[y2] -= v;
                }
            }
        }
        rows.push((row.name.clone(), a, row.sense, rhs));
    }
    for j in 0..n {
        if let Map::Shift(y, s) = maps[j] {
            if p.upper[j].is_finite() {
                let mut a = vec![0.0; ny];
                a[y] = 1.0;
                rows.push((format!("bound {}", p.col_names[j]), a, Sense::Le, p.upper[j] - s));
            }
        }
    }

    let m = rows.len();
    let ns = rows.iter().filter(|r| r.2 != Sense::Eq).count();
    // artificials are needed wherever the slack can't start basic
    let mut needs_art = Vec::with_capacity(m);
    for r in &rows {
        let flip = r.3 < 0.0;
        let slack_plus = match r.2 {
            Sense::Le => !flip,
            Sense::Ge => flip,
            Sense::Eq => false,
        };
        needs_art.push(!slack_plus);
    }
    let na = needs_art.iter().filter(|&&b| b).count();
    let width = ny + ns + na;
    let art_start = ny + ns;

    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0; m];
    let mut slack = ny;
    let mut art = art_start;
    let mut art_row = Vec::new();
    for (i, (_, a, sense, rhs)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for y in 0..ny {
            t[i][y] = sign * a[y];
        }
        t[i][width] = sign * rhs;
        match sense {
            Sense::Le => {
                t[i][slack] = sign;
                basis[i] = slack;
                slack += 1;
            }
            Sense::Ge => {
                t[i][slack] = -sign;
                basis[i] = slack;
                slack += 1;
            }
            Sense::Eq => {}
        }
        if needs_art[i] {
            t[i][art] = 1.0;
            basis[i] = art;
            art_row.push(i);
            art += 1;
        }
    }

    let mut tab = Tableau { t, obj: vec![0.0; width + 1], basis, width };
    let mut iters = 0;

    // phase 1
    for j in art_start..width {
        tab.obj[j] = 1.0;
    }
    for &i in &art_row {
        for j in 0..=width {
            tab.obj[j] -= tab.t[i][j];
        }
    }
    if !tab.run(width, &mut iters, max_iter)? {
        return Err(SolveError::IterationLimit);
    }
    let scale = rows.iter().map(|r| r.3.abs()).fold(1.0, f64::max);
    if -tab.obj[width] > FEAS_TOL * scale {
        let worst = (0..m)
            .filter(|&i| tab.basis[i] >= art_start)
            .max_by(|&a, &b| tab.t[a][width].total_cmp(&tab.t[b][width]));
        return Err(SolveError::Infeasible { row: worst.map(|i| rows[i].0.clone()) });
    }
    for i in 0..m {
        if tab.basis[i] >= art_start {
            if let Some(c) = (0..art_start).find(|&c| tab.t[i][c].abs() > PIVOT_TOL) {
                tab.pivot(i, c);
            }
        }
    }

    // phase 2
    let mut cost = vec![0.0; width + 1];
    for j in 0..n {
        let c = p.objective[j];
        match maps[j] {
            Map::Shift(y, _) => cost[y] += c,
            Map::Mirror(y, _) => cost[y] -= c,
            Map::Split(y1, y2) => {
                cost[y1] += c;
                cost[y2] -= c;
            }
        }
    }
    tab.obj = cost;
    for i in 0..m {
        let cb = tab.obj[tab.basis[i]];
        if cb != 0.0 && tab.basis[i] < art_start {
            for j in 0..=width {
                tab.obj[j] -= cb * tab.t[i][j];
            }
        }
    }
    let optimal = tab.run(art_start, &mut iters, max_iter)?;

    let mut y = vec![0.0; width];
    for i in 0..m {
        y[tab.basis[i]] = tab.t[i][width];
    }
    let values = maps
        .iter()
        .map(|m| match *m {
            Map::Shift(k, s) => s + y[k],
            Map::Mirror(k, top) => top - y[k],
            Map::Split(a, b) => y[a] - y[b],
        })
        .collect();
    Ok(DenseResult { values, pivots: iters, limit_hit: !optimal })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(cols: &[(f64, f64, f64)], rows: &[(&[(usize, f64)], Sense, f64)]) -> LinearProgram {
        let mut p = LinearProgram::default();
        for (j, &(lo, hi, c)) in cols.iter().enumerate() {
            p.add_col(format!("x{j}"), lo, hi, c);
        }
        for (i, (coeffs, s, rhs)) in rows.iter().enumerate() {
            p.add_row(format!("r{i}"), coeffs.to_vec(), *s, *rhs);
        }
        p
    }

    #[test]
    fn one_variable() {
        let p = lp(&[(0.0, f64::INFINITY, 1.0)], &[(&[(0, 1.0)], Sense::Ge, 3.0)]);
        let r = solve_dense(&p, 1000).unwrap();
        assert!((r.values[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory() {
        let p = lp(&[(f64::NEG_INFINITY, f64::INFINITY, 0.0)], &[(&[(0, 1.0)], Sense::Le, 0.0), (&[(0, 1.0)], Sense::Ge, 1.0)]);
        match solve_dense(&p, 1000) {
            Err(SolveError::Infeasible { row }) => assert!(row.is_some()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded() {
        let p = lp(&[(0.0, f64::INFINITY, -1.0)], &[]);
        assert!(matches!(solve_dense(&p, 1000), Err(SolveError::Unbounded)));
    }

    #[test]
    fn textbook_max() {
        // max 3a + 5b s.t. a <= 4, 2b <= 12, 3a + 2b <= 18 -> (2, 6), value 36
        let p = lp(
            &[(0.0, f64::INFINITY, -3.0), (0.0, f64::INFINITY, -5.0)],
            &[(&[(0, 1.0)], Sense::Le, 4.0), (&[(1, 2.0)], Sense::Le, 12.0), (&[(0, 3.0), (1, 2.0)], Sense::Le, 18.0)],
        );
        let r = solve_dense(&p, 1000).unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-9 && (r.values[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_mirror_and_free() {
        // min x0 - x1 + x2 with x0 in [-2, 5], x1 <= 3 (no lower), x2 free,
        // x2 >= x0 - 1, x1 >= -4
        let p = lp(
            &[(-2.0, 5.0, 1.0), (f64::NEG_INFINITY, 3.0, -1.0), (f64::NEG_INFINITY, f64::INFINITY, 1.0)],
            &[(&[(2, 1.0), (0, -1.0)], Sense::Ge, -1.0), (&[(1, 1.0)], Sense::Ge, -4.0)],
        );
        let r = solve_dense(&p, 1000).unwrap();
        assert_eq!(r.values.len(), 3);
        assert!((p.objective_value(&r.values) - (-2.0 - 3.0 - 3.0)).abs() < 1e-9);
        assert!(p.violations(&r.values, 1e-9).is_empty());
    }

    #[test]
    fn degenerate_equalities() {
        // duplicated equality rows leave an artificial stuck at zero
        let p = lp(
            &[(0.0, 1.0, 1.0), (0.0, 1.0, 2.0)],
            &[(&[(0, 1.0), (1, 1.0)], Sense::Eq, 1.0), (&[(0, 2.0), (1, 2.0)], Sense::Eq, 2.0)],
        );
        let r = solve_dense(&p, 1000).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-9 && r.values[1].abs() < 1e-9);
    }

    #[test]
    fn iteration_cap() {
        let p = lp(
            &[(0.0, f64::INFINITY, -3.0), (0.0, f64::INFINITY, -5.0)],
            &[(&[(0, 1.0)], Sense::Le, 4.0), (&[(1, 2.0)], Sense::Le, 12.0), (&[(0, 3.0), (1, 2.0)], Sense::Le, 18.0)],
        );
        let r = solve_dense(&p, 1).unwrap();
        assert!(r.limit_hit);
        assert!(p.violations(&r.values, 1e-9).is_empty());
    }
}
