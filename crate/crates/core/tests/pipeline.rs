//! End-to-end runs through the public API.

use nestree_core::apps::{app_outer_loop, naive_plan, plan_cost, DefaultOracle, OuterLoopConfig, Problem, Request};
use nestree_core::eval::estimate_distortion_on;
use nestree_core::metric::gen_planted_outliers;
use nestree_core::metric::io::{from_json_str, to_json_value};
use nestree_core::{hst_from_ultrametric, outlier_embed, EmbeddingSampler, OutlierConfig};

#[test]
fn planted_instance_round_trip() {
    let m = gen_planted_outliers(7, 2, 3).unwrap();
    let back = from_json_str(&to_json_value(&m).to_string()).unwrap();
    assert_eq!(back.to_rows(), m.to_rows());

    let mut cfg = OutlierConfig::new(1.0, 1.0);
    cfg.seed = 5;
    let res = outlier_embed(&back, None, &cfg).unwrap();
    assert_eq!(res.sampler.domain().len(), m.n());
    let keep: Vec<usize> = (0..m.n()).filter(|p| !res.outliers.contains(p)).collect();
    let report = estimate_distortion_on(&res.sampler, &m, &keep, 40, 9).unwrap();
    assert!(report.min_ratio >= 1.0);
    assert!(report.max_mean_ratio <= 33.0);

    // same seed, same outcome
    let again = outlier_embed(&back, None, &cfg).unwrap();
    assert_eq!(again.outliers, res.outliers);
    assert_eq!(again.sample(3).embedding, res.sample(3).embedding);
}

#[test]
fn core_tree_is_exact() {
    let m = gen_planted_outliers(6, 1, 11).unwrap();
    let core: Vec<usize> = (0..6).collect();
    let t = hst_from_ultrametric(&m, &core).unwrap();
    for &i in &core {
        for &j in &core {
            assert_eq!(t.distance(i, j).unwrap(), m.d(i, j));
        }
    }
}

#[test]
fn dial_a_ride_end_to_end() {
    let m = gen_planted_outliers(6, 2, 4).unwrap();
    let reqs: Vec<Request> = (0..5).map(|i| Request { s: i, t: (i + 3) % m.n(), d: 1.0 }).collect();
    let problem = Problem::DialARide { capacity: 2.0 };
    let sol = app_outer_loop(&m, &problem, &reqs, &DefaultOracle, &OuterLoopConfig::default()).unwrap();
    let all: Vec<usize> = (0..reqs.len()).collect();
    let naive = plan_cost(&m, &problem, &reqs, &naive_plan(&problem, &reqs, &all));
    assert!(sol.cost <= naive + 1e-9);
    assert_eq!(plan_cost(&m, &problem, &reqs, &sol.plan), sol.cost);
}
