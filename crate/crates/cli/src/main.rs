use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use nestree_core::apps::{
    app_outer_loop, mcct_outlier, DefaultOracle, DemandsFile, McctInstance, OuterLoopConfig, Plan, PointRef,
    RequestsFile,
};
use nestree_core::eval::{estimate_distortion, estimate_distortion_on, DistortionReport};
use nestree_core::hst::json::to_json;
use nestree_core::metric::{self, io as metric_io};
use nestree_core::nested::{default_family_distortion, nested_compose, NestedSampler, DEFAULT_ZETA};
use nestree_core::rng::{derive_seed, stream};
use nestree_core::{
    frt_sample, outlier_embed, Assortment, FrtSampler, MetricSpace, NestedTrace, OutlierConfig, Subset,
};

#[derive(Parser, Serialize)]
#[command(name = "nestree", version, about = "HST embeddings with outlier sets")]
struct Cli {
    /// Master seed; drawn from entropy and printed to stderr when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling and LP solves (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Check a metric file and print its normalized form.
    Validate { metric: PathBuf },
    /// Generate an instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Sample one embedding.
    Embed {
        #[command(subcommand)]
        kind: EmbedKind,
    },
    /// Find an outlier set and sample embeddings of the rest.
    OutlierEmbed(OutlierArgs),
    /// Estimate the expected distortion of a sampler.
    Evaluate(EvaluateArgs),
    /// Minimum communication cost tree with outliers (ultrametric input).
    Mcct {
        metric: PathBuf,
        #[arg(long)]
        demands: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Buy-at-bulk or dial-a-ride through outlier embeddings.
    App {
        problem: AppProblem,
        metric: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_ZETA)]
        zeta: f64,
        /// Largest outlier budget tried per rung (default: all of them).
        #[arg(long)]
        k_max: Option<usize>,
    },
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
enum GenKind {
    /// Random outer metric with a random block substituted at every point.
    Composition {
        #[arg(long, default_value_t = 3)]
        outer: usize,
        #[arg(long, default_value_t = 3)]
        block: usize,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
    },
    /// Small expander joined to a clique by one edge.
    ExpanderClique {
        #[arg(long)]
        n: usize,
    },
    /// Shortest-path metric of a randomly weighted complete graph.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10.0)]
        max_weight: f64,
    },
    /// Random ultrametric with power-of-two distances.
    Ultrametric {
        #[arg(long)]
        n: usize,
    },
    /// Ultrametric core plus far-away points at the end.
    Planted {
        #[arg(long)]
        core: usize,
        #[arg(long)]
        far: usize,
    },
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
enum EmbedKind {
    /// One FRT tree over the whole metric.
    Frt {
        metric: PathBuf,
    },
    /// Nested composition around a distinguished subset embedded by FRT.
    Nested {
        metric: PathBuf,
        /// Labels of the distinguished subset (JSON array or one per line).
        #[arg(long)]
        subset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ZETA)]
        zeta: f64,
    },
}

#[derive(Args, Serialize)]
struct OutlierArgs {
    metric: PathBuf,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    eps: f64,
    /// Point weights: JSON array, or an object mapping labels to weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_ZETA)]
    zeta: f64,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    metric: PathBuf,
    #[arg(long, value_enum)]
    sampler: SamplerChoice,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Distinguished subset for `nested`.
    #[arg(long)]
    subset: Option<PathBuf>,
    /// Distortion target for `outlier`.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_ZETA)]
    zeta: f64,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SamplerChoice {
    Frt,
    Nested,
    Outlier,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AppProblem {
    BuyAtBulk,
    DialARide,
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("{}", json!({ "error": e.to_string() }));
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            if !out.ends_with('\n') {
                let _ = stdout.write_all(b"\n");
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            use clap::CommandFactory;
            Cli::command().error(clap::error::ErrorKind::ArgumentConflict, msg).exit()
        }
        Err(Failure::Domain(e)) => {
            let causes: Vec<String> = e.chain().skip(1).map(ToString::to_string).collect();
            eprintln!("{}", json!({ "error": e.to_string(), "causes": causes }));
            ExitCode::from(1)
        }
    }
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

/// Everything that determined this run: the parsed arguments and the seed
/// actually used.
fn config(cli: &Cli, seed: Option<u64>) -> Value {
    let mut v = serde_json::to_value(cli).expect("plain arguments");
    v["seed"] = json!(seed);
    v
}

fn json_only(cli: &Cli) -> Result<(), Failure> {
    match cli.format {
        Format::Json => Ok(()),
        Format::Csv => Err(Failure::Usage("--format csv is only available for validate, gen and evaluate".into())),
    }
}

fn load(path: &Path) -> anyhow::Result<MetricSpace> {
    metric_io::load(path).with_context(|| format!("loading metric {}", path.display()))
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("plain data")
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { metric } => {
            let m = load(metric)?;
            if cli.format == Format::Csv {
                return Ok(metric_io::to_csv_string(&m));
            }
            Ok(pretty(&json!({
                "config": config(cli, None),
                "valid": true,
                "n": m.n(),
                "scale": m.scale(),
                "diameter": m.diameter(),
                "labels": m.labels(),
                "dist": m.to_rows(),
            })))
        }
        Command::Gen { kind } => {
            let s = seed(cli);
            let m = generate(kind, s)?;
            if cli.format == Format::Csv {
                return Ok(metric_io::to_csv_string(&m));
            }
            let mut v = metric_io::to_json_value(&m);
            v["config"] = config(cli, Some(s));
            Ok(pretty(&v))
        }
        Command::Embed { kind } => {
            json_only(cli)?;
            let s = seed(cli);
            match kind {
                EmbedKind::Frt { metric } => {
                    let m = load(metric)?;
                    let e = frt_sample(&m, &(0..m.n()).collect::<Vec<_>>(), s).map_err(anyhow::Error::from)?;
                    Ok(pretty(&json!({ "config": config(cli, Some(s)), "tree": to_json(&e, m.labels()) })))
                }
                EmbedKind::Nested { metric, subset, zeta } => {
                    let m = load(metric)?;
                    let sub = read_subset(&m, subset)?;
                    let k = m.n() - sub.len();
                    let a = Assortment::new(
                        &m,
                        sub.clone(),
                        Box::new(FrtSampler::new(&m, sub.members().to_vec())),
                        default_family_distortion(sub.len()),
                    );
                    let out = nested_compose(&a, s).map_err(anyhow::Error::from)?;
                    Ok(pretty(&json!({
                        "config": config(cli, Some(s)),
                        "tree": to_json(&out.embedding, m.labels()),
                        "trace": trace_json(&m, &out.trace),
                        "bounds": {
                            "all_pairs": nestree_core::eval::nested_all_pairs_bound(*zeta, a.c_s, k),
                            "expansion": nestree_core::eval::nested_expansion_bound(a.c_s, default_family_distortion(k), k),
                        },
                    })))
                }
            }
        }
        Command::OutlierEmbed(args) => {
            json_only(cli)?;
            let s = seed(cli);
            let m = load(&args.metric)?;
            let weights = args.weights.as_deref().map(|p| read_weights(&m, p)).transpose()?;
            let mut cfg = OutlierConfig::new(args.c, args.eps);
            cfg.zeta = args.zeta;
            cfg.seed = s;
            cfg.k_values = args.k_max.map(|k| (1..=k.min(m.n())).collect());
            let res = outlier_embed(&m, weights.as_deref(), &cfg).map_err(anyhow::Error::from)?;
            let mut v = res.to_json(&m);
            v["deltas"] = json!(res.deltas);
            v["samples"] = (0..args.samples as u64)
                .map(|i| {
                    let r = res.sample(i);
                    json!({ "fallback": r.fallback, "tree": to_json(&r.embedding, m.labels()) })
                })
                .collect();
            v["config"] = config(cli, Some(s));
            Ok(pretty(&v))
        }
        Command::Evaluate(args) => evaluate(cli, args),
        Command::Mcct { metric, demands, k } => {
            json_only(cli)?;
            let m = load(metric)?;
            let file: DemandsFile = serde_json::from_str(&read(demands)?).context("parsing demands")?;
            let inst = McctInstance::from_file(m, &file, *k).map_err(anyhow::Error::from)?;
            let sol = mcct_outlier(&inst, &Default::default()).map_err(anyhow::Error::from)?;
            let m = &inst.metric;
            Ok(pretty(&json!({
                "config": config(cli, None),
                "outliers": labels(m, &sol.outliers),
                "cost": sol.cost,
                "lp_objective": sol.lp_objective,
                "deltas": sol.deltas,
                "tree": sol.tree.as_ref().map(|t| to_json(t, m.labels())),
            })))
        }
        Command::App { problem, metric, requests, eps, zeta, k_max } => {
            json_only(cli)?;
            let s = seed(cli);
            let m = load(metric)?;
            let file: RequestsFile = serde_json::from_str(&read(requests)?).context("parsing requests")?;
            let reqs = file.resolve(&m).map_err(anyhow::Error::from)?;
            let p = match problem {
                AppProblem::BuyAtBulk => file.buy_at_bulk(),
                AppProblem::DialARide => file.dial_a_ride(),
            }
            .map_err(anyhow::Error::from)?;
            let cfg = OuterLoopConfig {
                eps: *eps,
                zeta: *zeta,
                seed: s,
                k_values: k_max.map(|k| (1..=k.min(m.n())).collect()),
                ..OuterLoopConfig::default()
            };
            let sol = app_outer_loop(&m, &p, &reqs, &DefaultOracle, &cfg).map_err(anyhow::Error::from)?;
            let rungs: Vec<Value> = sol
                .rungs
                .iter()
                .map(|r| {
                    let mut v = serde_json::to_value(r).expect("plain data");
                    v["outliers"] = json!(labels(&m, &r.outliers));
                    v
                })
                .collect();
            let plan = match &sol.plan {
                Plan::Paths(paths) => json!({ "paths": paths.iter().map(|(i, w)| json!({ "request": i, "walk": labels(&m, w) })).collect::<Vec<_>>() }),
                Plan::Schedule(stops) => json!({ "schedule": stops.iter().map(|st| json!({ "point": m.label(st.point), "request": st.request, "pickup": st.pickup })).collect::<Vec<_>>() }),
            };
            Ok(pretty(&json!({
                "config": config(cli, Some(s)),
                "problem": p,
                "cost": sol.cost,
                "chosen_rung": sol.chosen,
                "naive_cost": sol.naive_cost,
                "opt_single": sol.opt_single,
                "weights": sol.weights,
                "rungs": rungs,
                "plan": plan,
            })))
        }
    }
}

fn labels(m: &MetricSpace, pts: &[usize]) -> Vec<String> {
    pts.iter().map(|&i| m.label(i).to_string()).collect()
}

fn trace_json(m: &MetricSpace, t: &NestedTrace) -> Value {
    json!({
        "b": t.b,
        "pi": labels(m, &t.pi),
        "gamma": t.gamma.iter().map(|(&u, &v)| (m.label(u).to_string(), json!(m.label(v)))).collect::<serde_json::Map<_, _>>(),
        "clusters": t.clusters.iter().map(|c| json!({ "center": m.label(c.center), "members": labels(m, &c.members) })).collect::<Vec<_>>(),
    })
}

fn generate(kind: &GenKind, s: u64) -> anyhow::Result<MetricSpace> {
    Ok(match kind {
        GenKind::Composition { outer, block, beta } => {
            let o = metric::gen_random_metric(*outer, 4.0, derive_seed(s, stream::GENERATOR, 10))?;
            // composition wants the outer metric's closest pair at exactly 1
            let min = o.min_distance();
            let rows = o.to_rows().into_iter().map(|r| r.into_iter().map(|d| d / min).collect()).collect();
            let o = MetricSpace::from_labeled(o.labels().to_vec(), rows)?;
            let blocks = (0..*outer)
                .map(|i| metric::gen_random_metric(*block, 4.0, derive_seed(s, stream::GENERATOR, 11 + i as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            metric::compose(&o, &blocks, *beta)?
        }
        GenKind::ExpanderClique { n } => metric::gen_expander_clique(*n, s)?,
        GenKind::Random { n, max_weight } => metric::gen_random_metric(*n, *max_weight, s)?,
        GenKind::Ultrametric { n } => metric::gen_random_ultrametric(*n, s)?,
        GenKind::Planted { core, far } => metric::gen_planted_outliers(*core, *far, s)?,
    })
}

fn read_subset(m: &MetricSpace, path: &Path) -> anyhow::Result<Subset> {
    let text = read(path)?;
    let refs: Vec<PointRef> = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| PointRef::Label(l.to_string()))
            .collect(),
    };
    let members = refs
        .iter()
        .map(|r| r.resolve(m).ok_or_else(|| anyhow!("unknown point {r} in subset")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Subset::new(m, members)?)
}

fn read_weights(m: &MetricSpace, path: &Path) -> anyhow::Result<Vec<f64>> {
    let v: Value = serde_json::from_str(&read(path)?).context("parsing weights")?;
    match v {
        Value::Array(_) => Ok(serde_json::from_value(v)?),
        Value::Object(map) => {
            let mut w = vec![0.0; m.n()];
            for (label, x) in map {
                let i = m.index_of(&label).ok_or_else(|| anyhow!("unknown point {label:?} in weights"))?;
                w[i] = x.as_f64().ok_or_else(|| anyhow!("weight for {label:?} is not a number"))?;
            }
            Ok(w)
        }
        _ => bail!("weights must be an array or an object"),
    }
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Outcome {
    let s = seed(cli);
    let m = load(&args.metric)?;
    let (report, extra): (DistortionReport, Value) = match args.sampler {
        SamplerChoice::Frt => {
            (estimate_distortion(&FrtSampler::full(&m), &m, args.samples, s).map_err(anyhow::Error::from)?, Value::Null)
        }
        SamplerChoice::Nested => {
            let path = args.subset.as_ref().ok_or_else(|| Failure::Usage("--sampler nested needs --subset".into()))?;
            let sub = read_subset(&m, path)?;
            let a = Assortment::new(
                &m,
                sub.clone(),
                Box::new(FrtSampler::new(&m, sub.members().to_vec())),
                default_family_distortion(sub.len()),
            );
            let sampler = NestedSampler::new(a);
            (estimate_distortion(&sampler, &m, args.samples, s).map_err(anyhow::Error::from)?, Value::Null)
        }
        SamplerChoice::Outlier => {
            let c = args.c.ok_or_else(|| Failure::Usage("--sampler outlier needs --c".into()))?;
            let mut cfg = OutlierConfig::new(c, args.eps);
            cfg.zeta = args.zeta;
            cfg.seed = s;
            cfg.k_values = args.k_max.map(|k| (1..=k.min(m.n())).collect());
            let res = outlier_embed(&m, None, &cfg).map_err(anyhow::Error::from)?;
            let keep: Vec<usize> = (0..m.n()).filter(|i| !res.outliers.contains(i)).collect();
            let r = estimate_distortion_on(&res.sampler, &m, &keep, args.samples, s).map_err(anyhow::Error::from)?;
            (r, res.to_json(&m))
        }
    };
    if cli.format == Format::Csv {
        return Ok(report.to_csv(&m));
    }
    let mut v = serde_json::to_value(&report).expect("plain data");
    v["config"] = config(cli, Some(s));
    if !extra.is_null() {
        v["outlier_result"] = extra;
    }
    Ok(pretty(&v))
}
