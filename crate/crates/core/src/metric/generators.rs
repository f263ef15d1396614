//! Instance generators: metric composition and the expander-plus-clique
//! family, whose expander side is a small set of points worth discarding.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{floyd_warshall, MetricError, MetricSpace};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Composition of `outer` with one block per outer point.
///
/// Points of block `x` keep their block distances; points of different blocks
/// `x != y` sit at `beta * diam * outer.d(x, y)`, where `diam` is the largest
/// block diameter (taken as 1 when every block is a single point). The result
/// goes through normal validation, so when `beta * diam < 1` it comes back
/// rescaled and [`MetricSpace::scale`] records the divisor.
pub fn compose(outer: &MetricSpace, blocks: &[MetricSpace], beta: f64) -> Result<MetricSpace, MetricError> {
    if !(beta >= 0.5) {
        return Err(MetricError::BetaTooSmall(beta));
    }
    if blocks.len() != outer.n() {
        return Err(MetricError::BlockCountMismatch { blocks: blocks.len(), points: outer.n() });
    }
    if outer.n() > 1 && (outer.min_distance() - 1.0).abs() > 1e-12 {
        return Err(MetricError::OuterNotUnitMin);
    }
    let mut diam = blocks.iter().map(MetricSpace::diameter).fold(0.0, f64::max);
    if diam == 0.0 {
        diam = 1.0;
    }
    // (block, local index) for every composed point
    let points: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(x, b)| (0..b.n()).map(move |u| (x, u)))
        .collect();
    let labels = points
        .iter()
        .map(|&(x, u)| format!("{}/{}", outer.label(x), blocks[x].label(u)))
        .collect();
    let rows = points
        .iter()
        .map(|&(x, u)| {
            points
                .iter()
                .map(|&(y, v)| if x == y { blocks[x].d(u, v) } else { beta * diam * outer.d(x, y) })
                .collect()
        })
        .collect();
    MetricSpace::from_labeled(labels, rows)
}

/// Expander-plus-clique metric on `n` points: `ceil(log2 n)` expander-side
/// points and a unit clique on the rest, joined by one unit edge.
pub fn gen_expander_clique(n: usize, seed: u64) -> Result<MetricSpace, MetricError> {
    if n < 8 {
        return Err(MetricError::TooSmall(n));
    }
    let e = (n as f64).log2().ceil() as usize;
    gen_expander_clique_sized(e, n - e, seed)
}

/// Same family with explicit part sizes. The expander side is a uniformly
/// random simple graph of degree 3 (configuration model with rejection; one
/// vertex drops to degree 2 when `3 * expander` is odd), or the complete graph
/// when `expander <= 4`. The bridge leaves a seeded random expander vertex and
/// lands on clique vertex `c0`.
pub fn gen_expander_clique_sized(expander: usize, clique: usize, seed: u64) -> Result<MetricSpace, MetricError> {
    if expander == 0 || clique == 0 {
        return Err(MetricError::TooSmall(expander + clique));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::GENERATOR, 0));
    let mut edges: Vec<(usize, usize, f64)> = random_cubic(expander, &mut rng)
        .into_iter()
        .map(|(a, b)| (a, b, 1.0))
        .collect();
    for i in 0..clique {
        for j in (i + 1)..clique {
            edges.push((expander + i, expander + j, 1.0));
        }
    }
    let bridge = rng.gen_range(0..expander);
    edges.push((bridge, expander, 1.0));
    let n = expander + clique;
    let rows = floyd_warshall(n, &edges);
    let labels = (0..expander)
        .map(|i| format!("e{i}"))
        .chain((0..clique).map(|i| format!("c{i}")))
        .collect();
    MetricSpace::from_labeled(labels, rows)
}

/// Shortest-path metric of a complete graph on `n` points with independent
/// edge weights drawn uniformly from `[1, max_weight]`.
pub fn gen_random_metric(n: usize, max_weight: f64, seed: u64) -> Result<MetricSpace, MetricError> {
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::GENERATOR, 1));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, rng.gen_range(1.0..=max_weight.max(1.0))));
        }
    }
    let labels = (0..n).map(|i| format!("p{i}")).collect();
    MetricSpace::from_labeled(labels, floyd_warshall(n, &edges))
}

/// Random ultrametric on `n` points whose distances are powers of two: the
/// point set is split recursively into 2 or 3 random groups, and a pair split
/// at a node of height `h` sits at distance `2^(h-1)`.
pub fn gen_random_ultrametric(n: usize, seed: u64) -> Result<MetricSpace, MetricError> {
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::GENERATOR, 2));
    let mut rows = vec![vec![0.0; n]; n];
    let mut points: Vec<usize> = (0..n).collect();
    points.shuffle(&mut rng);
    let top = 1 + n.next_power_of_two().trailing_zeros();
    let mut stack = vec![(points, top)];
    while let Some((group, h)) = stack.pop() {
        if group.len() < 2 {
            continue;
        }
        let parts = if h <= 1 { group.len() } else { rng.gen_range(2..=3).min(group.len()) };
        let mut split: Vec<Vec<usize>> = vec![Vec::new(); parts];
        for (i, &p) in group.iter().enumerate() {
            let slot = if i < parts { i } else { rng.gen_range(0..parts) };
            split[slot].push(p);
        }
        let d = 2f64.powi(h as i32 - 1);
        for a in 0..parts {
            for b in (a + 1)..parts {
                for &x in &split[a] {
                    for &y in &split[b] {
                        rows[x][y] = d;
                        rows[y][x] = d;
                    }
                }
            }
        }
        let drop = if h > 2 && rng.gen_bool(0.3) { 2 } else { 1 };
        stack.extend(split.into_iter().map(|g| (g, h.saturating_sub(drop).max(1))));
    }
    let labels = (0..n).map(|i| format!("t{i}")).collect();
    MetricSpace::from_labeled(labels, rows)
}

/// An ultrametric core on `core` points plus `far` extra points appended at
/// the end, with `D` twice the core diameter. An extra point sits at
/// `D + U[0, 1)` from each core point (the jitter stays below the smallest
/// core distance) and at `D * (1 + U[0, 1))` from other extras, so the extras
/// break ultrametricity without breaking the triangle inequality.
pub fn gen_planted_outliers(core: usize, far: usize, seed: u64) -> Result<MetricSpace, MetricError> {
    let base = gen_random_ultrametric(core, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, stream::GENERATOR, 3));
    let n = core + far;
    let big = 2.0 * base.diameter().max(1.0);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = if j < core {
                base.d(i, j)
            } else if i < core {
                big + rng.gen::<f64>()
            } else {
                big * (1.0 + rng.gen::<f64>())
            };
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    let labels = (0..core).map(|i| format!("t{i}")).chain((0..far).map(|i| format!("o{i}"))).collect();
    MetricSpace::from_labeled(labels, rows)
}

fn random_cubic<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n <= 4 {
        let mut e = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                e.push((i, j));
            }
        }
        return e;
    }
    let mut degrees = vec![3usize; n];
    if (3 * n) % 2 == 1 {
        degrees[n - 1] = 2;
    }
    let stubs: Vec<usize> = degrees.iter().enumerate().flat_map(|(v, &d)| std::iter::repeat(v).take(d)).collect();
    loop {
        let mut s = stubs.clone();
        s.shuffle(rng);
        let mut set = BTreeSet::new();
        let ok = s.chunks(2).all(|p| {
            let (a, b) = (p[0].min(p[1]), p[0].max(p[1]));
            a != b && set.insert((a, b))
        });
        if ok && connected(n, &set) {
            return set.into_iter().collect();
        }
    }
}

fn connected(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            comps -= 1;
        }
    }
    comps == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point() -> MetricSpace {
        MetricSpace::from_labeled(vec!["x".into()], vec![vec![0.0]]).unwrap()
    }

    fn clique(n: usize, prefix: &str) -> MetricSpace {
        let labels = (0..n).map(|i| format!("{prefix}{i}")).collect();
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        MetricSpace::from_labeled(labels, rows).unwrap()
    }

    #[test]
    fn singleton_blocks_use_unit_diameter_floor() {
        let outer = MetricSpace::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let m = compose(&outer, &[point(), point()], 0.5).unwrap();
        // Formula: 0.5 * 1 * 1 = 0.5, then normalized back to 1.
        assert_eq!(m.d(0, 1) * m.scale(), 0.5);
        assert_eq!(m.d(0, 1), 1.0);
    }

    #[test]
    fn two_cliques_at_distance_two() {
        let outer = MetricSpace::validate(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        // outer min distance is 2, so rescale first to meet the unit-min rule
        assert_eq!(compose(&outer, &[clique(3, "a"), clique(3, "b")], 1.0), Err(MetricError::OuterNotUnitMin));
    }

    #[test]
    fn composition_formula_over_all_pairs() {
        // outer K2 with unit distance, blocks K3 (diameter 1), beta = 2:
        // cross = 2 * 1 * 1 = 2, intra = 1. Checked over all 15 pairs.
        let outer = MetricSpace::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let m = compose(&outer, &[clique(3, "a"), clique(3, "b")], 2.0).unwrap();
        assert_eq!(m.n(), 6);
        assert_eq!(m.scale(), 1.0);
        let mut pairs = 0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let expect = if i / 3 == j / 3 { 1.0 } else { 2.0 };
                assert_eq!(m.d(i, j), expect, "pair {i},{j}");
                pairs += 1;
            }
        }
        assert_eq!(pairs, 15);
    }

    #[test]
    fn composition_errors() {
        let outer = MetricSpace::validate(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(compose(&outer, &[point(), point()], 0.4), Err(MetricError::BetaTooSmall(0.4)));
        assert_eq!(
            compose(&outer, &[point()], 1.0),
            Err(MetricError::BlockCountMismatch { blocks: 1, points: 2 })
        );
    }

    #[test]
    fn expander_clique_n8() {
        let m = gen_expander_clique(8, 1).unwrap();
        assert_eq!(m.n(), 8);
        let e: Vec<_> = m.labels().iter().filter(|l| l.starts_with('e')).collect();
        assert_eq!(e.len(), 3);
        for i in 3..8 {
            for j in (i + 1)..8 {
                assert_eq!(m.d(i, j), 1.0);
            }
        }
    }

    #[test]
    fn expander_clique_seeds() {
        let a = gen_expander_clique(16, 1).unwrap();
        let differs = (2..12).any(|s| gen_expander_clique(16, s).unwrap() != a);
        assert!(differs);
        let b = gen_expander_clique(16, 5).unwrap();
        for i in 4..16 {
            for j in 4..16 {
                assert_eq!(a.d(i, j), b.d(i, j));
            }
        }
        assert_eq!(gen_expander_clique(16, 1).unwrap(), a);
    }

    #[test]
    fn larger_expander_is_cubic() {
        let mut rng = rng_from_seed(3);
        let edges = random_cubic(10, &mut rng);
        let mut deg = [0; 10];
        for (a, b) in edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        assert!(deg.iter().all(|&d| d == 3));
    }

    #[test]
    fn random_metric_is_valid_and_seeded() {
        let m = gen_random_metric(9, 5.0, 4).unwrap();
        assert_eq!(m.n(), 9);
        assert_eq!(m, gen_random_metric(9, 5.0, 4).unwrap());
        assert!(m.revalidate().is_ok());
    }

    #[test]
    fn random_ultrametric() {
        for seed in 0..20 {
            let m = gen_random_ultrametric(10, seed).unwrap();
            assert!(crate::hst::is_ultrametric(&m));
            assert!(m.min_distance() >= 1.0);
            for i in 0..10 {
                for j in (i + 1)..10 {
                    assert_eq!(m.d(i, j).log2().fract(), 0.0);
                }
            }
        }
    }

    #[test]
    fn planted_outliers_keep_triangle_inequality() {
        for seed in 0..10 {
            let m = gen_planted_outliers(8, 3, seed).unwrap();
            assert_eq!(m.n(), 11);
            assert!(m.revalidate().is_ok());
            assert_eq!(m.label(10), "o2");
        }
    }

    #[test]
    fn too_small() {
        assert_eq!(gen_expander_clique(4, 0), Err(MetricError::TooSmall(4)));
    }
}
