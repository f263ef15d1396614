//! Buy-at-bulk and dial-a-ride over outlier embeddings.
//!
//! Every point gets the weight `w_x = sum of OPT_i over requests touching x`.
//! For each distortion target on a halving ladder, a weighted outlier
//! embedding splits the requests into those clear of the outliers (solved on
//! the sampled tree) and the rest (solved on a fresh FRT tree or naively,
//! whichever is cheaper). The cheapest rung wins.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mcct::PointRef;
use crate::frt::{frt_sample, SamplerError};
use crate::hst::{HstEmbedding, NodeId};
use crate::lp::SolveOptions;
use crate::metric::MetricSpace;
use crate::nested::{DEFAULT_ZETA, FRT_DISTORTION_CONSTANT};
use crate::rng::{derive_seed, stream};
use crate::rounding::{outlier_embed, OutlierConfig, RoundingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("unknown point {0}")]
    UnknownPoint(String),
    #[error("invalid cost table: {0}")]
    InvalidCostTable(String),
    #[error("invalid request {index}: {msg}")]
    InvalidRequest { index: usize, msg: String },
    #[error("need at least two points")]
    TooSmall,
    #[error("oracle failed: {0}")]
    OracleFailure(String),
    #[error(transparent)]
    Outlier(#[from] RoundingError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Concave nondecreasing piecewise-linear cost through the origin and the
/// given breakpoints, extended past the last one with the last slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTable {
    points: Vec<(f64, f64)>,
}

impl CostTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, AppError> {
        let bad = |m: String| Err(AppError::InvalidCostTable(m));
        if points.iter().any(|(l, c)| !(l.is_finite() && c.is_finite() && *l > 0.0 && *c >= 0.0)) {
            return bad("breakpoints need positive finite loads and nonnegative costs".into());
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return bad("repeated load".into());
        }
        let t = CostTable { points };
        if (t.eval(1.0) - 1.0).abs() > 1e-12 {
            return bad(format!("g(1) = {}, expected 1", t.eval(1.0)));
        }
        let mut prev = (0.0, 0.0);
        let mut slope = f64::INFINITY;
        for &(l, c) in &t.points {
            let s = (c - prev.1) / (l - prev.0);
            if s < 0.0 {
                return bad(format!("decreasing at load {l}"));
            }
            if s > slope + 1e-12 {
                return bad(format!("not concave at load {l}"));
            }
            slope = s;
            prev = (l, c);
        }
        for &(a, _) in &t.points {
            for &(b, _) in &t.points {
                if t.eval(a + b) > t.eval(a) + t.eval(b) + 1e-9 {
                    return bad(format!("g({}) > g({a}) + g({b})", a + b));
                }
            }
        }
        Ok(t)
    }

    /// `g(x) = x`.
    pub fn linear() -> Self {
        CostTable { points: vec![(1.0, 1.0)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, load: f64) -> f64 {
        if load <= 0.0 {
            return 0.0;
        }
        let mut prev = (0.0, 0.0);
        for (i, &(l, c)) in self.points.iter().enumerate() {
            if load <= l {
                return prev.1 + (c - prev.1) * (load - prev.0) / (l - prev.0);
            }
            if i + 1 == self.points.len() {
                return c + (c - prev.1) / (l - prev.0) * (load - l);
            }
            prev = (l, c);
        }
        unreachable!("table is never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    BuyAtBulk { g: CostTable },
    DialARide { capacity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub s: usize,
    pub t: usize,
    pub d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestJson {
    pub s: PointRef,
    pub t: PointRef,
    #[serde(default = "one")]
    pub d: f64,
}

fn one() -> f64 {
    1.0
}

/// `{"requests": [{"s", "t", "d"}], "capacity": .., "g": [[load, cost], ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestsFile {
    pub requests: Vec<RequestJson>,
    #[serde(default)]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub g: Option<Vec<(f64, f64)>>,
}

impl RequestsFile {
    pub fn resolve(&self, m: &MetricSpace) -> Result<Vec<Request>, AppError> {
        self.requests
            .iter()
            .map(|r| {
                let s = r.s.resolve(m).ok_or_else(|| AppError::UnknownPoint(r.s.to_string()))?;
                let t = r.t.resolve(m).ok_or_else(|| AppError::UnknownPoint(r.t.to_string()))?;
                Ok(Request { s, t, d: r.d })
            })
            .collect()
    }

    pub fn buy_at_bulk(&self) -> Result<Problem, AppError> {
        let g = match &self.g {
            Some(p) => CostTable::new(p.clone())?,
            None => CostTable::linear(),
        };
        Ok(Problem::BuyAtBulk { g })
    }

    pub fn dial_a_ride(&self) -> Result<Problem, AppError> {
        let capacity = self.capacity.unwrap_or(1.0);
        if !(capacity >= 1.0 && capacity.is_finite()) {
            return Err(AppError::InvalidRequest { index: 0, msg: format!("capacity {capacity} must be at least 1") });
        }
        Ok(Problem::DialARide { capacity })
    }
}

fn check_requests(m: &MetricSpace, problem: &Problem, reqs: &[Request]) -> Result<(), AppError> {
    for (index, r) in reqs.iter().enumerate() {
        for p in [r.s, r.t] {
            if p >= m.n() {
                return Err(AppError::UnknownPoint(p.to_string()));
            }
        }
        if !(r.d >= 1.0 && r.d.is_finite()) {
            return Err(AppError::InvalidRequest { index, msg: format!("demand {} must be at least 1", r.d) });
        }
        if let Problem::DialARide { capacity } = problem {
            if r.d > *capacity {
                return Err(AppError::InvalidRequest { index, msg: format!("demand {} exceeds capacity {capacity}", r.d) });
            }
        }
    }
    Ok(())
}

/// Cost of serving request `r` alone.
pub fn per_request_opt(m: &MetricSpace, problem: &Problem, r: &Request) -> Result<f64, AppError> {
    if r.s >= m.n() || r.t >= m.n() {
        return Err(AppError::UnknownPoint(r.s.max(r.t).to_string()));
    }
    Ok(match problem {
        Problem::BuyAtBulk { g } => m.d(r.s, r.t) * g.eval(r.d),
        Problem::DialARide { .. } => m.d(r.s, r.t),
    })
}

/// `w_x`: summed single-request costs of the requests with `x` as an endpoint.
pub fn point_weights(m: &MetricSpace, problem: &Problem, reqs: &[Request]) -> Result<Vec<f64>, AppError> {
    let mut w = vec![0.0; m.n()];
    for r in reqs {
        let c = per_request_opt(m, problem, r)?;
        w[r.s] += c;
        if r.t != r.s {
            w[r.t] += c;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub point: usize,
    pub request: usize,
    pub pickup: bool,
}

/// A solution in the input metric. Request indices refer to the full
/// request list.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plan {
    /// One walk `s, .., t` per request.
    Paths(Vec<(usize, Vec<usize>)>),
    Schedule(Vec<Stop>),
}

impl Plan {
    fn append(&mut self, other: Plan) {
        match (self, other) {
            (Plan::Paths(a), Plan::Paths(b)) => a.extend(b),
            (Plan::Schedule(a), Plan::Schedule(b)) => a.extend(b),
            _ => unreachable!("plans of one problem share a shape"),
        }
    }

    fn empty_like(problem: &Problem) -> Plan {
        match problem {
            Problem::BuyAtBulk { .. } => Plan::Paths(Vec::new()),
            Problem::DialARide { .. } => Plan::Schedule(Vec::new()),
        }
    }
}

/// Cost of a plan in the input metric. Buy-at-bulk capacity is bought per
/// unordered point pair on the summed load of every walk using it.
pub fn plan_cost(m: &MetricSpace, problem: &Problem, reqs: &[Request], plan: &Plan) -> f64 {
    match (problem, plan) {
        (Problem::BuyAtBulk { g }, Plan::Paths(paths)) => {
            let mut load: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (ri, walk) in paths {
                for w in walk.windows(2) {
                    if w[0] != w[1] {
                        *load.entry((w[0].min(w[1]), w[0].max(w[1]))).or_default() += reqs[*ri].d;
                    }
                }
            }
            load.iter().fold(0.0, |acc, (&(a, b), &l)| acc + m.d(a, b) * g.eval(l))
        }
        (_, Plan::Schedule(stops)) => stops.windows(2).fold(0.0, |acc, w| acc + m.d(w[0].point, w[1].point)),
        _ => f64::NAN,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("stop {0} is not at the request's endpoint")]
    WrongPlace(usize),
    #[error("request {0} dropped before pickup")]
    DropBeforePickup(usize),
    #[error("request {0} not served exactly once")]
    NotServed(usize),
    #[error("van load {load} out of range at stop {stop}")]
    Load { stop: usize, load: f64 },
}

/// Checks that `stops` serves exactly the requests in `served`, each picked
/// up at its source before being dropped at its target, with the van load in
/// `[0, capacity]` throughout.
pub fn validate_schedule(reqs: &[Request], served: &[usize], capacity: f64, stops: &[Stop]) -> Result<(), ScheduleError> {
    let mut state: HashMap<usize, u8> = served.iter().map(|&i| (i, 0)).collect();
    let mut load = 0.0;
    for (k, st) in stops.iter().enumerate() {
        let r = &reqs[st.request];
        let s = state.get_mut(&st.request).ok_or(ScheduleError::NotServed(st.request))?;
        if st.pickup {
            if *s != 0 || st.point != r.s {
                return Err(if *s != 0 { ScheduleError::NotServed(st.request) } else { ScheduleError::WrongPlace(k) });
            }
            *s = 1;
            load += r.d;
        } else {
            if *s != 1 {
                return Err(ScheduleError::DropBeforePickup(st.request));
            }
            if st.point != r.t {
                return Err(ScheduleError::WrongPlace(k));
            }
            *s = 2;
            load -= r.d;
        }
        if load < -1e-9 || load > capacity + 1e-9 {
            return Err(ScheduleError::Load { stop: k, load });
        }
    }
    match state.iter().find(|(_, &s)| s != 2) {
        Some((&i, _)) => Err(ScheduleError::NotServed(i)),
        None => Ok(()),
    }
}

/// Serve `served` one request at a time, in the given order, directly in
/// the metric. Buy-at-bulk: every request on its own direct edge.
pub fn naive_plan(problem: &Problem, reqs: &[Request], served: &[usize]) -> Plan {
    match problem {
        Problem::BuyAtBulk { .. } => Plan::Paths(served.iter().map(|&i| (i, vec![reqs[i].s, reqs[i].t])).collect()),
        Problem::DialARide { .. } => Plan::Schedule(
            served
                .iter()
                .flat_map(|&i| {
                    [Stop { point: reqs[i].s, request: i, pickup: true }, Stop { point: reqs[i].t, request: i, pickup: false }]
                })
                .collect(),
        ),
    }
}

/// Edge weights of an HST viewed as a weighted tree: a node at label `eta`
/// sits `eta / 2` above the leaves, so the edge to its parent has length
/// `(eta(parent) - eta(node)) / 2` (leaves count as 0), and leaf-to-leaf
/// path lengths equal the HST distance.
pub fn edge_length(t: &HstEmbedding, node: NodeId) -> f64 {
    let tree = t.tree();
    let above = |v: NodeId| if tree.height(v) == 0 { 0.0 } else { tree.eta(v) / 2.0 };
    match tree.node(node).parent {
        Some(p) => above(p) - above(node),
        None => 0.0,
    }
}

/// Nodes (each standing for the edge to its parent) on the tree path
/// between the leaves of `a` and `b`, upward from `a` then downward to `b`.
fn tree_path(t: &HstEmbedding, a: usize, b: usize) -> Result<(Vec<NodeId>, Vec<NodeId>), AppError> {
    let la = t.leaf(a).map_err(|_| AppError::OracleFailure(format!("point {a} not in tree")))?;
    let lb = t.leaf(b).map_err(|_| AppError::OracleFailure(format!("point {b} not in tree")))?;
    let tree = t.tree();
    let top = tree.lca(la, lb);
    let up = |mut v: NodeId| {
        let mut out = Vec::new();
        while v != top {
            out.push(v);
            v = tree.node(v).parent.expect("below the lca");
        }
        out
    };
    let (ua, mut ub) = (up(la), up(lb));
    ub.reverse();
    Ok((ua, ub))
}

/// `sum_e len(e) g(load(e))` with every request routed on its unique tree path.
pub fn tree_bulk_cost(t: &HstEmbedding, g: &CostTable, reqs: &[Request], served: &[usize]) -> Result<f64, AppError> {
    let mut load: HashMap<NodeId, f64> = HashMap::new();
    for &i in served {
        let (ua, ub) = tree_path(t, reqs[i].s, reqs[i].t)?;
        for v in ua.into_iter().chain(ub) {
            *load.entry(v).or_default() += reqs[i].d;
        }
    }
    Ok(load.iter().fold(0.0, |acc, (&v, &l)| acc + edge_length(t, v) * g.eval(l)))
}

/// Solves a request subset on an HST over (at least) the subset's endpoints
/// and returns a plan in the input metric.
pub trait TreeOracle: Send + Sync {
    fn solve(&self, problem: &Problem, tree: &HstEmbedding, reqs: &[Request], served: &[usize]) -> Result<Plan, AppError>;
}

/// Buy-at-bulk: the unique tree path, with every internal node replaced by
/// the smallest point below it. Dial-a-ride: one request at a time, in
/// tree (depth-first) order of the sources.
pub struct DefaultOracle;

fn subtree_min(t: &HstEmbedding) -> Vec<usize> {
    let tree = t.tree();
    let mut best = vec![usize::MAX; tree.nodes().len()];
    for p in t.domain() {
        let mut v = t.leaf(p).expect("domain point");
        loop {
            best[v] = best[v].min(p);
            match tree.node(v).parent {
                Some(u) => v = u,
                None => break,
            }
        }
    }
    best
}

fn dfs_rank(t: &HstEmbedding) -> HashMap<usize, usize> {
    let tree = t.tree();
    let mut rank = HashMap::new();
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        if let Some(p) = tree.node(v).point {
            rank.insert(p, rank.len());
        }
        stack.extend(tree.node(v).children.iter().rev());
    }
    rank
}

impl TreeOracle for DefaultOracle {
    fn solve(&self, problem: &Problem, tree: &HstEmbedding, reqs: &[Request], served: &[usize]) -> Result<Plan, AppError> {
        match problem {
            Problem::BuyAtBulk { .. } => {
                let rep = subtree_min(tree);
                let mut paths = Vec::with_capacity(served.len());
                for &i in served {
                    let (ua, ub) = tree_path(tree, reqs[i].s, reqs[i].t)?;
                    let mut walk = vec![reqs[i].s];
                    // parents of the upward nodes, then the downward nodes
                    for &v in &ua {
                        walk.push(rep[tree.tree().node(v).parent.expect("below the lca")]);
                    }
                    walk.extend(ub.iter().map(|&v| rep[v]));
                    walk.dedup();
                    paths.push((i, walk));
                }
                Ok(Plan::Paths(paths))
            }
            Problem::DialARide { .. } => {
                let rank = dfs_rank(tree);
                let mut order = served.to_vec();
                for &i in &order {
                    for p in [reqs[i].s, reqs[i].t] {
                        if !rank.contains_key(&p) {
                            return Err(AppError::OracleFailure(format!("point {p} not in tree")));
                        }
                    }
                }
                order.sort_by_key(|&i| (rank[&reqs[i].s], rank[&reqs[i].t], i));
                Ok(naive_plan(problem, reqs, &order))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterLoopConfig {
    pub eps: f64,
    /// Multiplier in the distortion ladder `eta log2 n / 2^i`.
    pub eta: f64,
    pub zeta: f64,
    pub seed: u64,
    /// Outlier budgets tried per rung; `None` means `1..=n`.
    pub k_values: Option<Vec<usize>>,
    #[serde(skip)]
    pub solve: SolveOptions,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        OuterLoopConfig {
            eps: 1.0,
            eta: FRT_DISTORTION_CONSTANT,
            zeta: DEFAULT_ZETA,
            seed: 0,
            k_values: None,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rung {
    pub index: usize,
    pub c: f64,
    pub k_star: usize,
    pub outliers: Vec<usize>,
    /// `w(K)` for this rung's outlier set.
    pub outlier_weight: f64,
    pub clear_requests: usize,
    pub touched_requests: usize,
    /// Requests clear of the outliers, solved on the sampled tree.
    pub sol1: f64,
    /// Outlier-touching requests on a fresh tree over their endpoints.
    pub sol2: Option<f64>,
    /// Outlier-touching requests served naively.
    pub sol3: f64,
    /// Cost of the combined plan.
    pub total: f64,
    pub used_naive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppSolution {
    pub cost: f64,
    /// Rung of the winning plan; `None` when serving everything naively won.
    pub chosen: Option<usize>,
    pub naive_cost: f64,
    pub opt_single: Vec<f64>,
    pub weights: Vec<f64>,
    pub rungs: Vec<Rung>,
    pub plan: Plan,
}

/// `eta log2 n / 2^i` for `i = 0..=floor(log2 log2 n)`, floored at 1.
pub fn distortion_ladder(n: usize, eta: f64) -> Vec<f64> {
    let l = (n.max(2) as f64).log2();
    let rungs = l.log2().floor().max(0.0) as usize;
    (0..=rungs).map(|i| (eta * l / 2f64.powi(i as i32)).max(1.0)).collect()
}

pub fn app_outer_loop(
    m: &MetricSpace,
    problem: &Problem,
    reqs: &[Request],
    oracle: &dyn TreeOracle,
    cfg: &OuterLoopConfig,
) -> Result<AppSolution, AppError> {
    let n = m.n();
    if n < 2 {
        return Err(AppError::TooSmall);
    }
    check_requests(m, problem, reqs)?;
    let opt_single = reqs.iter().map(|r| per_request_opt(m, problem, r)).collect::<Result<Vec<_>, _>>()?;
    let weights = point_weights(m, problem, reqs)?;
    let all: Vec<usize> = (0..reqs.len()).collect();
    let naive = naive_plan(problem, reqs, &all);
    let naive_cost = plan_cost(m, problem, reqs, &naive);
    if let Problem::DialARide { capacity } = problem {
        if let Plan::Schedule(s) = &naive {
            validate_schedule(reqs, &all, *capacity, s).map_err(|e| AppError::OracleFailure(e.to_string()))?;
        }
    }

    let ladder = distortion_ladder(n, cfg.eta);
    let rungs: Vec<(Rung, Plan)> = ladder
        .par_iter()
        .enumerate()
        .map(|(i, &c)| run_rung(m, problem, reqs, oracle, cfg, &weights, i, c))
        .collect::<Result<_, _>>()?;

    let mut best: (f64, Option<usize>, Plan) = (naive_cost, None, naive);
    let mut report = Vec::with_capacity(rungs.len());
    for (r, plan) in rungs {
        if r.total < best.0 {
            best = (r.total, Some(r.index), plan);
        }
        report.push(r);
    }
    Ok(AppSolution { cost: best.0, chosen: best.1, naive_cost, opt_single, weights, rungs: report, plan: best.2 })
}

#[allow(clippy::too_many_arguments)]
fn run_rung(
    m: &MetricSpace,
    problem: &Problem,
    reqs: &[Request],
    oracle: &dyn TreeOracle,
    cfg: &OuterLoopConfig,
    weights: &[f64],
    i: usize,
    c: f64,
) -> Result<(Rung, Plan), AppError> {
    let mut oc = OutlierConfig::new(c, cfg.eps);
    oc.zeta = cfg.zeta;
    oc.k_values = cfg.k_values.clone();
    oc.seed = derive_seed(cfg.seed, stream::SAMPLE, i as u64);
    oc.solve = cfg.solve.clone();
    let res = outlier_embed(m, Some(weights), &oc)?;
    let mut is_out = vec![false; m.n()];
    for &x in &res.outliers {
        is_out[x] = true;
    }
    let (touched, clear): (Vec<usize>, Vec<usize>) = (0..reqs.len()).partition(|&j| is_out[reqs[j].s] || is_out[reqs[j].t]);

    let tree = res.sample(0).embedding.without_points(&res.outliers);
    let mut plan = if clear.is_empty() { Plan::empty_like(problem) } else { oracle.solve(problem, &tree, reqs, &clear)? };
    let sol1 = plan_cost(m, problem, reqs, &plan);

    let naive = naive_plan(problem, reqs, &touched);
    let sol3 = plan_cost(m, problem, reqs, &naive);
    let mut sol2 = None;
    let mut rest = naive;
    if !touched.is_empty() {
        let mut pts: Vec<usize> = touched.iter().flat_map(|&j| [reqs[j].s, reqs[j].t]).collect();
        pts.sort_unstable();
        pts.dedup();
        let fresh = frt_sample(m, &pts, derive_seed(cfg.seed, stream::EMBEDDING, i as u64))?;
        let p2 = oracle.solve(problem, &fresh, reqs, &touched)?;
        let c2 = plan_cost(m, problem, reqs, &p2);
        sol2 = Some(c2);
        if c2 < sol3 {
            rest = p2;
        }
    }
    let used_naive = sol2.is_none_or(|c2| c2 >= sol3);
    plan.append(rest);
    if let (Problem::DialARide { capacity }, Plan::Schedule(s)) = (problem, &plan) {
        let all: Vec<usize> = clear.iter().chain(&touched).copied().collect();
        validate_schedule(reqs, &all, *capacity, s).map_err(|e| AppError::OracleFailure(e.to_string()))?;
    }
    let total = plan_cost(m, problem, reqs, &plan);
    let rung = Rung {
        index: i,
        c,
        k_star: res.k_star,
        outlier_weight: res.outliers.iter().fold(0.0, |acc, &x| acc + weights[x]),
        outliers: res.outliers,
        clear_requests: clear.len(),
        touched_requests: touched.len(),
        sol1,
        sol2,
        sol3,
        total,
        used_naive,
    };
    Ok((rung, plan))
}
