//! Finite metric spaces: validation, normalization, restriction and graph
//! ingestion.
//!
//! A [`MetricSpace`] is always normalized so the smallest distance between
//! distinct points is at least 1; the divisor applied at ingestion is kept in
//! [`MetricSpace::scale`].

mod generators;
pub mod io;

pub use generators::{
    compose, gen_expander_clique, gen_expander_clique_sized, gen_planted_outliers, gen_random_metric,
    gen_random_ultrametric,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the triangle inequality and ultrametric checks.
pub const TRIANGLE_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("distance matrix is not square (row {row} has {len} entries, expected {n})")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("distance matrix is empty")]
    Empty,
    #[error("label count {labels} does not match matrix size {n}")]
    LabelMismatch { labels: usize, n: usize },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("non-finite distance at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("negative distance at ({0}, {1})")]
    NegativeDistance(usize, usize),
    #[error("nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),
    #[error("asymmetric matrix: d({0},{1}) != d({1},{0})")]
    AsymmetricMatrix(usize, usize),
    #[error("zero distance between distinct points {0} and {1}")]
    ZeroOffDiagonal(usize, usize),
    #[error("triangle inequality violated: d({i},{k}) > d({i},{j}) + d({j},{k})")]
    TriangleViolation { i: usize, j: usize, k: usize },
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("nonpositive edge weight {weight} on ({u}, {v})")]
    NonpositiveWeight { u: String, v: String, weight: f64 },
    #[error("composition requires beta >= 1/2, got {0}")]
    BetaTooSmall(f64),
    #[error("composition needs one block per point: {blocks} blocks for {points} points")]
    BlockCountMismatch { blocks: usize, points: usize },
    #[error("outer metric of a composition must have minimum distance exactly 1")]
    OuterNotUnitMin,
    #[error("generator needs n >= 8, got {0}")]
    TooSmall(usize),
    #[error("point index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("unknown point label {0:?}")]
    UnknownLabel(String),
    #[error("subset members must be distinct")]
    DuplicateMember,
}

/// Symmetric distance matrix over labelled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    n: usize,
    scale: f64,
}

impl MetricSpace {
    /// Validate a raw matrix with default labels `p0, p1, ...`.
    pub fn validate(raw: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let labels = (0..raw.len()).map(|i| format!("p{i}")).collect();
        Self::from_labeled(labels, raw)
    }

    /// Validate a raw matrix and normalize it so the minimum positive
    /// distance is at least 1.
    pub fn from_labeled(labels: Vec<String>, raw: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let n = raw.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        if labels.len() != n {
            return Err(MetricError::LabelMismatch { labels: labels.len(), n });
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.clone(), i).is_some() {
                return Err(MetricError::DuplicateLabel(l.clone()));
            }
        }
        let mut dist = Vec::with_capacity(n * n);
        for (row, r) in raw.iter().enumerate() {
            if r.len() != n {
                return Err(MetricError::NotSquare { row, len: r.len(), n });
            }
            dist.extend_from_slice(r);
        }
        for i in 0..n {
            for j in 0..n {
                let v = dist[i * n + j];
                if !v.is_finite() {
                    return Err(MetricError::NonFinite(i, j));
                }
                if v < 0.0 {
                    return Err(MetricError::NegativeDistance(i, j));
                }
            }
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(MetricError::NonzeroDiagonal(i));
            }
            for j in (i + 1)..n {
                if dist[i * n + j] != dist[j * n + i] {
                    return Err(MetricError::AsymmetricMatrix(i, j));
                }
                if dist[i * n + j] == 0.0 {
                    return Err(MetricError::ZeroOffDiagonal(i, j));
                }
            }
        }
        let mut m = MetricSpace { labels, dist, n, scale: 1.0 };
        let min = m.min_distance();
        if min < 1.0 {
            for v in m.dist.iter_mut() {
                *v /= min;
            }
            m.scale = min;
        }
        m.check_triangle()?;
        Ok(m)
    }

    /// Re-run validation on an existing space. The returned scale composes
    /// with the original one.
    pub fn revalidate(&self) -> Result<Self, MetricError> {
        let mut m = Self::from_labeled(self.labels.clone(), self.to_rows())?;
        m.scale *= self.scale;
        Ok(m)
    }

    /// Build from already-normalized data without re-normalizing. Used by
    /// restriction, where minimum distance can only grow.
    fn from_parts_unchecked(labels: Vec<String>, dist: Vec<f64>, scale: f64) -> Self {
        let n = labels.len();
        MetricSpace { labels, dist, n, scale }
    }

    fn check_triangle(&self) -> Result<(), MetricError> {
        let n = self.n;
        let tol = TRIANGLE_RTOL * self.diameter();
        for i in 0..n {
            for j in 0..n {
                let dij = self.dist[i * n + j];
                for k in 0..n {
                    if self.dist[i * n + k] > dij + self.dist[j * n + k] + tol {
                        return Err(MetricError::TriangleViolation { i, j, k });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Normalization divisor applied at ingestion (1 when none was needed).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Diameter over a subset of points.
    pub fn diameter_of(&self, members: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                best = best.max(self.d(i, j));
            }
        }
        best
    }

    /// Smallest distance between distinct points; `+inf` for a single point.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                best = best.min(self.d(i, j));
            }
        }
        best
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Metric induced on `subset`, with labels carried over.
    pub fn restrict(&self, subset: &Subset) -> MetricSpace {
        let members = subset.members();
        let k = members.len();
        let mut dist = Vec::with_capacity(k * k);
        for &i in members {
            for &j in members {
                dist.push(self.d(i, j));
            }
        }
        let labels = members.iter().map(|&i| self.labels[i].clone()).collect();
        MetricSpace::from_parts_unchecked(labels, dist, self.scale)
    }

    /// All-pairs shortest paths over a weighted undirected graph given as
    /// labelled edges. Labels are numbered in order of first appearance.
    pub fn from_graph<S: AsRef<str>>(edges: &[(S, S, f64)]) -> Result<Self, MetricError> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut id = |s: &str, labels: &mut Vec<String>| -> usize {
            *index.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                labels.len() - 1
            })
        };
        let mut parsed = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            let (u, v) = (u.as_ref(), v.as_ref());
            if !(*w > 0.0) || !w.is_finite() {
                return Err(MetricError::NonpositiveWeight {
                    u: u.to_string(),
                    v: v.to_string(),
                    weight: *w,
                });
            }
            let a = id(u, &mut labels);
            let b = id(v, &mut labels);
            parsed.push((a, b, *w));
        }
        let n = labels.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        let rows = floyd_warshall(n, &parsed);
        if rows.iter().flatten().any(|d| d.is_infinite()) {
            return Err(MetricError::DisconnectedGraph);
        }
        Self::from_labeled(labels, rows)
    }
}

/// Dense Floyd–Warshall over `n` nodes. Self-loops are ignored; parallel
/// edges keep the lighter weight.
pub(crate) fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in edges {
        if a != b && w < d[a][b] {
            d[a][b] = w;
            d[b][a] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k][j];
                if cand < d[i][j] {
                    d[i][j] = cand;
                }
            }
        }
    }
    d
}

/// Sorted, distinct set of point indices of some parent metric.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subset {
    members: Vec<usize>,
}

impl Subset {
    pub fn new(m: &MetricSpace, mut members: Vec<usize>) -> Result<Self, MetricError> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(MetricError::DuplicateMember);
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= m.n()) {
            return Err(MetricError::IndexOutOfRange(bad));
        }
        Ok(Subset { members })
    }

    pub fn from_labels<S: AsRef<str>>(m: &MetricSpace, labels: &[S]) -> Result<Self, MetricError> {
        let idx = labels
            .iter()
            .map(|l| m.index_of(l.as_ref()).ok_or_else(|| MetricError::UnknownLabel(l.as_ref().into())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(m, idx)
    }

    pub fn full(m: &MetricSpace) -> Self {
        Subset { members: (0..m.n()).collect() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    /// Points of the parent metric not in this subset.
    pub fn complement(&self, m: &MetricSpace) -> Subset {
        Subset { members: (0..m.n()).filter(|&i| !self.contains(i)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let m = MetricSpace::validate(vec![vec![0.0]]).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.scale(), 1.0);
    }

    #[test]
    fn already_normalized() {
        let m = MetricSpace::validate(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(m.d(0, 1), 2.0);
        assert_eq!(m.scale(), 1.0);
    }

    #[test]
    fn normalizes_by_min_distance() {
        let m = MetricSpace::validate(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(m.scale(), 0.5);
        assert_eq!(m.min_distance(), 1.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(
            MetricSpace::validate(vec![vec![0.0, 1.0], vec![2.0, 0.0]]),
            Err(MetricError::AsymmetricMatrix(0, 1))
        );
        assert_eq!(
            MetricSpace::validate(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(MetricError::NegativeDistance(0, 1))
        );
        assert_eq!(
            MetricSpace::validate(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
            Err(MetricError::ZeroOffDiagonal(0, 1))
        );
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(matches!(
            MetricSpace::validate(bad),
            Err(MetricError::TriangleViolation { .. })
        ));
    }

    #[test]
    fn triangle_violation_reports_the_triple() {
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        match MetricSpace::validate(bad) {
            Err(MetricError::TriangleViolation { i, j, k }) => {
                assert_eq!((i, j, k), (0, 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graph_path_metric() {
        let m = MetricSpace::from_graph(&[("a", "b", 1.0), ("b", "c", 1.0)]).unwrap();
        assert_eq!(m.d(m.index_of("a").unwrap(), m.index_of("c").unwrap()), 2.0);
    }

    #[test]
    fn graph_triangle_takes_shortest_path() {
        // Oracle: by hand, the 3-edge is beaten by the two-hop route 1 + 1.
        let m = MetricSpace::from_graph(&[("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 3.0)]).unwrap();
        assert_eq!(m.d(0, 2), 2.0);
    }

    #[test]
    fn graph_clique() {
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((format!("v{i}"), format!("v{j}"), 1.0));
            }
        }
        let m = MetricSpace::from_graph(&edges).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.d(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn graph_errors() {
        assert_eq!(
            MetricSpace::from_graph(&[("a", "b", 1.0), ("c", "d", 1.0)]),
            Err(MetricError::DisconnectedGraph)
        );
        assert!(matches!(
            MetricSpace::from_graph(&[("a", "b", 0.0)]),
            Err(MetricError::NonpositiveWeight { .. })
        ));
    }

    #[test]
    fn revalidate_is_idempotent() {
        let m = MetricSpace::validate(vec![vec![0.0, 0.25, 0.5], vec![0.25, 0.0, 0.5], vec![0.5, 0.5, 0.0]])
            .unwrap();
        let again = m.revalidate().unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn restriction_keeps_distances() {
        let m = MetricSpace::from_graph(&[("a", "b", 1.0), ("b", "c", 2.0), ("c", "d", 1.0)]).unwrap();
        let s = Subset::new(&m, vec![3, 0]).unwrap();
        let r = m.restrict(&s);
        assert_eq!(r.labels(), &["a".to_string(), "d".to_string()]);
        assert_eq!(r.d(0, 1), 4.0);
        assert!(r.revalidate().is_ok());
    }

    #[test]
    fn subset_rejects_duplicates() {
        let m = MetricSpace::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(Subset::new(&m, vec![1, 1]), Err(MetricError::DuplicateMember));
        assert_eq!(Subset::new(&m, vec![2]), Err(MetricError::IndexOutOfRange(2)));
    }
}
