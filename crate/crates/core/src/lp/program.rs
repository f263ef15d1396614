//! A plain linear program: bounded columns, sparse rows, minimization.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// How far `x` is from satisfying this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `min objective . x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub col_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub name: String,
    pub amount: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpFormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
}

impl LinearProgram {
    pub fn add_col(&mut self, name: String, lower: f64, upper: f64, cost: f64) -> usize {
        self.col_names.push(name);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(cost);
        self.col_names.len() - 1
    }

    pub fn add_row(&mut self, name: String, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { name, coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.col_names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Rows and bounds violated by more than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (j, name) in self.col_names.iter().enumerate() {
            let amount = (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0);
            if amount > tol {
                out.push(Violation { name: format!("bound {name}"), amount });
            }
        }
        for row in &self.rows {
            let amount = row.violation(x);
            if amount > tol {
                out.push(Violation { name: row.name.clone(), amount });
            }
        }
        out
    }

    /// CPLEX-style LP text.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("Minimize\n obj:");
        let terms: Vec<(usize, f64)> =
            self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, c)| (j, *c)).collect();
        if terms.is_empty() {
            // the format needs at least one term
            let _ = write!(out, " 0 {}", self.col_names.first().map_or("x", String::as_str));
        } else {
            self.write_terms(&mut out, &terms);
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name);
            self.write_terms(&mut out, &row.coeffs);
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, name) in self.col_names.iter().enumerate() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    let _ = writeln!(out, " {lo} <= {name} <= {hi}");
                }
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {lo}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {hi}");
                }
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
            }
        }
        out.push_str("End\n");
        out
    }

    fn write_terms(&self, out: &mut String, terms: &[(usize, f64)]) {
        for &(j, a) in terms {
            let sign = if a < 0.0 { '-' } else { '+' };
            let _ = write!(out, " {sign} {} {}", a.abs(), self.col_names[j]);
        }
    }

    /// `name value` per line.
    pub fn solution_to_string(&self, x: &[f64]) -> String {
        let mut out = String::new();
        for (name, v) in self.col_names.iter().zip(x) {
            let _ = writeln!(out, "{name} {v}");
        }
        out
    }

    /// Parse `name value` lines; columns not mentioned are 0. Blank lines and
    /// `#` comments are skipped.
    pub fn parse_solution(&self, text: &str) -> Result<Vec<f64>, LpFormatError> {
        let index: HashMap<&str, usize> = self.col_names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
        let mut x = vec![0.0; self.num_cols()];
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(LpFormatError::Parse { line: i + 1, msg: "expected `name value`".into() });
            };
            let j = *index.get(name).ok_or_else(|| LpFormatError::UnknownVariable(name.to_string()))?;
            x[j] = value
                .parse()
                .map_err(|e: std::num::ParseFloatError| LpFormatError::Parse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LinearProgram {
        let mut p = LinearProgram::default();
        let x = p.add_col("x".into(), 0.0, f64::INFINITY, 1.0);
        let y = p.add_col("y".into(), 0.0, 1.0, -2.0);
        p.add_row("r1".into(), vec![(x, 1.0), (y, 1.0)], Sense::Ge, 3.0);
        p
    }

    #[test]
    fn lp_text() {
        let s = tiny().to_lp_string();
        assert_eq!(
            s,
            "Minimize\n obj: + 1 x - 2 y\nSubject To\n r1: + 1 x + 1 y >= 3\nBounds\n x >= 0\n 0 <= y <= 1\nEnd\n"
        );
    }

    #[test]
    fn solution_round_trip() {
        let p = tiny();
        let x = vec![2.0, 1.0];
        let back = p.parse_solution(&p.solution_to_string(&x)).unwrap();
        assert_eq!(back, x);
        assert!(p.violations(&back, 1e-7).is_empty());
        assert_eq!(p.violations(&[0.0, 2.0], 1e-7).len(), 2);
        assert_eq!(p.parse_solution("z 1"), Err(LpFormatError::UnknownVariable("z".into())));
        assert!(matches!(p.parse_solution("x"), Err(LpFormatError::Parse { line: 1, .. })));
    }
}
