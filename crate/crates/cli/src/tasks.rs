//! One runner per subcommand: load inputs, call the library, emit reports.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use pbskit_core::gen::{example_instance, gen_cqdp, gen_points, gen_random_partition, GenError, GenSpec, PointSet};
use pbskit_core::kmeans;
use pbskit_core::{
    bound_chain_report, dual_ascent, evaluate_lr, partition_relaxation, pseudo_basic_step_pair,
    solve_to_optimality, AscentConfig, BlockStatus, ChainOpts, Cqdp, DualError, KMeansError,
    KMeansProblem, Limits, MiqcpFormat, ModelError, MultiplierSet, Partition, PartitionError,
    SolverConfig, StepRule, SubproblemPartition,
};
use serde_json::{json, Map, Value};

use crate::report::{read_text, write_text, Failure, ReportCtx};
use crate::{
    DualArgs, ExportArgs, GenArgs, GenPointsArgs, KmeansLbArgs, KmeansUbArgs, PbsScanArgs,
    PrelaxArgs, SolveArgs,
};

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn internal_err(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        config_err(e)
    }
}

impl From<GenError> for Failure {
    fn from(e: GenError) -> Self {
        match e {
            GenError::ResampleBudget(..) => internal_err(e),
            _ => config_err(e),
        }
    }
}

impl From<DualError> for Failure {
    fn from(e: DualError) -> Self {
        match e {
            DualError::SumViolation(_) | DualError::Mismatch(_) => config_err(e),
            _ => internal_err(e),
        }
    }
}

impl From<PartitionError> for Failure {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::ChainViolation { .. } => Failure::Chain(e.to_string()),
            PartitionError::Model(m) => m.into(),
            PartitionError::Dual(d) => d.into(),
            PartitionError::Kernel(_) => internal_err(e),
        }
    }
}

impl From<KMeansError> for Failure {
    fn from(e: KMeansError) -> Self {
        match e {
            KMeansError::BadGap { .. } => Failure::Chain(e.to_string()),
            _ => config_err(e),
        }
    }
}

fn install_thread_pool(threads: usize) -> Result<(), Failure> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(internal_err)
}

fn time_limit(seconds: Option<f64>) -> Result<Option<Duration>, Failure> {
    match seconds {
        None => Ok(None),
        Some(s) if s > 0.0 && s.is_finite() => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(Failure::Config(format!("time limit must be positive, got {s}"))),
    }
}

fn load_program(path: &str) -> Result<(Cqdp, String), Failure> {
    let text = read_text(path)?;
    let program = Cqdp::from_json_str(&text)?;
    Ok((program, text))
}

// Multipliers come from a file or default to the uniform split of c.
fn load_multipliers(
    path: Option<&String>,
    program: &Cqdp,
    ctx: &mut ReportCtx,
) -> Result<MultiplierSet, Failure> {
    match path {
        Some(p) => {
            let text = read_text(p)?;
            ctx.content("multipliers", &text);
            Ok(MultiplierSet::from_json_str(&text)?)
        }
        None => {
            ctx.field("multipliers", "uniform");
            Ok(MultiplierSet::uniform(program))
        }
    }
}

// Partition specs: "singletons", "rand:minMerges,maxBlock", or a JSON file.
fn load_cqdp_partition(
    spec: &str,
    program: &Cqdp,
    seed: u64,
    ctx: &mut ReportCtx,
) -> Result<Partition, Failure> {
    if spec == "singletons" {
        ctx.field("partition", spec);
        return Ok(Partition::singletons(program));
    }
    if let Some(rest) = spec.strip_prefix("rand:") {
        ctx.field("partition", spec);
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| Failure::Config(format!("expected rand:minMerges,maxBlock, got {spec}")))?;
        let min_merges: usize = a.trim().parse().map_err(config_err)?;
        let max_block: usize = b.trim().parse().map_err(config_err)?;
        return Ok(gen_random_partition(program.k(), min_merges, max_block, seed)?);
    }
    if spec.starts_with("alg1:") || spec.starts_with("alg2:") {
        return Err(Failure::Config(format!(
            "partition spec {spec} applies to clustering tasks only"
        )));
    }
    let text = read_text(spec)?;
    ctx.content("partition", &text);
    let partition = Partition::from_json_str(&text)?;
    partition.validate_for(program)?;
    Ok(partition)
}

fn status_str(s: BlockStatus) -> &'static str {
    match s {
        BlockStatus::Optimal => "optimal",
        BlockStatus::TimeLimit => "time_limit",
        BlockStatus::Infeasible => "infeasible",
    }
}

fn exact_status_str(s: kmeans::ExactStatus) -> &'static str {
    match s {
        kmeans::ExactStatus::Optimal => "optimal",
        kmeans::ExactStatus::TimeLimit => "time_limit",
    }
}

fn multipliers_json(m: &MultiplierSet) -> Value {
    serde_json::from_str(&m.to_json_string()).unwrap()
}

fn partition_json(p: &Partition) -> Value {
    json!(p
        .blocks
        .iter()
        .map(|b| b.iter().map(|id| id.0).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn blocks_json(detail: &pbskit_core::PartitionBound) -> Value {
    json!(detail
        .blocks
        .iter()
        .map(|b| {
            let chosen: BTreeMap<String, usize> =
                b.chosen.iter().map(|(id, &i)| (id.to_string(), i)).collect();
            json!({
                "ids": b.block.iter().map(|id| id.0).collect::<Vec<_>>(),
                "value": b.value,
                "incumbent_value": b.incumbent_value,
                "chosen": chosen,
                "status": status_str(b.status),
                "nodes_explored": b.nodes_explored,
            })
        })
        .collect::<Vec<_>>())
}

pub fn gen(args: &GenArgs) -> Result<(), Failure> {
    let spec = GenSpec::new(args.n, args.k, args.d, args.seed);
    let program = gen_cqdp(&spec)?;
    log::info!("generated instance n={} K={} D={}", args.n, args.k, args.d);
    write_text(args.out.as_ref(), &format!("{}\n", program.to_json_string()))
}

pub fn gen_points_task(args: &GenPointsArgs) -> Result<(), Failure> {
    if args.k == 0 || args.n < args.k {
        return Err(Failure::Config(format!(
            "need n >= K >= 1, got n = {}, K = {}",
            args.n, args.k
        )));
    }
    if !(args.spread >= 0.0 && args.spread.is_finite()) {
        return Err(Failure::Config(format!("spread must be nonnegative, got {}", args.spread)));
    }
    let points = gen_points(args.n, args.d, args.k, args.spread, args.seed);
    write_text(args.out.as_ref(), &points.to_csv())
}

pub fn example(out: Option<&PathBuf>) -> Result<(), Failure> {
    write_text(out, &format!("{}\n", example_instance().to_json_string()))
}

fn parse_step(spec: &str) -> Result<StepRule, Failure> {
    if spec == "diminishing" {
        return Ok(StepRule::Diminishing);
    }
    if let Some(ub) = spec.strip_prefix("polyak:") {
        let upper_bound: f64 = ub.trim().parse().map_err(config_err)?;
        return Ok(StepRule::Polyak { upper_bound });
    }
    Err(Failure::Config(format!(
        "expected diminishing or polyak:<upper bound>, got {spec}"
    )))
}

pub fn dual(args: &DualArgs) -> Result<(), Failure> {
    let mut ctx = ReportCtx::new("dual", args.seed);
    let (program, text) = load_program(&args.instance)?;
    ctx.content("instance", &text);
    let start = match &args.multipliers {
        Some(_) => Some(load_multipliers(args.multipliers.as_ref(), &program, &mut ctx)?),
        None => {
            ctx.field("multipliers", "uniform");
            None
        }
    };
    ctx.field("iters", args.iters);
    ctx.field("step", &args.step);
    ctx.field("tol", args.tol);
    let cfg = AscentConfig {
        max_iter: args.iters,
        step: parse_step(&args.step)?,
        tol: args.tol,
        start,
        ..AscentConfig::default()
    };
    let trace = dual_ascent(&program, &cfg)?;
    log::info!("dual ascent best value {}", trace.best_value);
    if let Some(p) = &args.trace {
        write_text(Some(p), &trace.to_csv())?;
    }
    let deviation = trace.best_multipliers.sum_deviation_inf(&program.c);
    let mut body = Map::new();
    body.insert("best_value".into(), json!(trace.best_value));
    body.insert("iterations".into(), json!(trace.iterates.len()));
    body.insert("sum_deviation_inf".into(), json!(deviation));
    body.insert("multipliers".into(), multipliers_json(&trace.best_multipliers));
    let summary = [
        ("best_value", trace.best_value.to_string()),
        ("iterations", trace.iterates.len().to_string()),
    ];
    ctx.finish(body, &summary, args.out.as_ref())
}

pub fn prelax(args: &PrelaxArgs) -> Result<(), Failure> {
    install_thread_pool(args.threads)?;
    let mut ctx = ReportCtx::new("prelax", args.seed);
    let (program, text) = load_program(&args.instance)?;
    ctx.content("instance", &text);
    let multipliers = load_multipliers(args.multipliers.as_ref(), &program, &mut ctx)?;
    let partition = load_cqdp_partition(&args.partition, &program, args.seed, &mut ctx)?;
    let limits = Limits {
        time: time_limit(args.block_time_limit)?,
        nodes: args.node_limit,
    };
    ctx.field("block_time_limit", fmt_opt(args.block_time_limit));
    ctx.field("node_limit", fmt_opt(args.node_limit));
    ctx.field("chain", args.chain);
    let mut body = Map::new();
    let mut summary: Vec<(&str, String)> = Vec::new();
    if args.chain {
        ctx.field("skip_z_star", args.skip_z_star);
        ctx.field("iters", args.iters);
        let opts = ChainOpts {
            limits,
            ascent: AscentConfig {
                max_iter: args.iters,
                ..AscentConfig::default()
            },
            skip_z_star: args.skip_z_star,
        };
        let report = bound_chain_report(&program, &multipliers, &partition, &opts)?;
        log::info!(
            "chain: partition bound {} over plain bound {}",
            report.l_partition,
            report.lr_plain
        );
        body.insert("lr_plain".into(), json!(report.lr_plain));
        body.insert("l_partition".into(), json!(report.l_partition));
        body.insert("z_post_bs_dual".into(), json!(report.z_post_bs_dual));
        body.insert("lr_hull".into(), json!(report.lr_hull));
        body.insert("z_star".into(), json!(report.z_star));
        body.insert("improvement_fraction".into(), json!(report.improvement_fraction));
        body.insert("partition".into(), partition_json(&report.detail.partition));
        body.insert("blocks".into(), blocks_json(&report.detail));
        summary.push(("l_partition", report.l_partition.to_string()));
        summary.push(("lr_plain", report.lr_plain.to_string()));
        summary.push((
            "improvement_fraction",
            report
                .improvement_fraction
                .map_or_else(|| "".into(), |f| f.to_string()),
        ));
    } else {
        let bound = partition_relaxation(&program, &multipliers, &partition, &limits, &SolverConfig::default())?;
        log::info!("partition relaxation total {}", bound.total);
        body.insert("total".into(), json!(bound.total));
        body.insert("partition".into(), partition_json(&bound.partition));
        body.insert("blocks".into(), blocks_json(&bound));
        summary.push(("total", bound.total.to_string()));
        summary.push(("blocks", bound.blocks.len().to_string()));
    }
    ctx.finish(body, &summary, args.out.as_ref())
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".into(), |x| x.to_string())
}

pub fn pbs_scan(args: &PbsScanArgs) -> Result<(), Failure> {
    use rayon::prelude::*;
    install_thread_pool(args.threads)?;
    let mut ctx = ReportCtx::new("pbs-scan", args.seed);
    let (program, text) = load_program(&args.instance)?;
    ctx.content("instance", &text);
    // Merges are judged at near-optimal multipliers; find them if not given.
    let multipliers = match &args.multipliers {
        Some(_) => load_multipliers(args.multipliers.as_ref(), &program, &mut ctx)?,
        None => {
            ctx.field("multipliers", "ascent");
            ctx.field("iters", args.iters);
            let cfg = AscentConfig {
                max_iter: args.iters,
                ..AscentConfig::default()
            };
            dual_ascent(&program, &cfg)?.best_multipliers
        }
    };
    let limits = Limits {
        time: time_limit(args.block_time_limit)?,
        nodes: args.node_limit,
    };
    ctx.field("block_time_limit", fmt_opt(args.block_time_limit));
    ctx.field("node_limit", fmt_opt(args.node_limit));
    let cfg = SolverConfig::default();
    let base = evaluate_lr(&program, &multipliers, &cfg)?;
    let ids = program.ids();
    let mut pairs = Vec::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            pairs.push((a, b));
        }
    }
    // Pairs are independent; evaluate in parallel, keep deterministic order.
    let results: Vec<_> = pairs
        .par_iter()
        .map(|&(a, b)| pseudo_basic_step_pair(&program, &multipliers, a, b, &limits, &cfg))
        .collect::<Result<_, _>>()?;
    let mut ranked: Vec<_> = pairs.iter().zip(&results).collect();
    ranked.sort_by(|(pa, ra), (pb, rb)| {
        rb.delta_lb
            .total_cmp(&ra.delta_lb)
            .then(pa.0 .0.cmp(&pb.0 .0))
            .then(pa.1 .0.cmp(&pb.1 .0))
    });
    log::info!(
        "scanned {} pairs, best delta {}",
        ranked.len(),
        ranked.first().map_or(0.0, |(_, r)| r.delta_lb)
    );
    let mut body = Map::new();
    body.insert("base_value".into(), json!(base.total));
    body.insert(
        "pairs".into(),
        json!(ranked
            .iter()
            .map(|(&(a, b), r)| json!({
                "pair": [a.0, b.0],
                "value": r.detail.total,
                "delta_lb": r.delta_lb,
            }))
            .collect::<Vec<_>>()),
    );
    let (best_pair, best_delta) = ranked
        .first()
        .map(|(&(a, b), r)| (format!("{}-{}", a.0, b.0), r.delta_lb))
        .unwrap_or_default();
    let summary = [
        ("base_value", base.total.to_string()),
        ("best_pair", best_pair),
        ("best_delta_lb", best_delta.to_string()),
    ];
    ctx.finish(body, &summary, args.out.as_ref())
}

pub fn solve(args: &SolveArgs) -> Result<(), Failure> {
    let mut ctx = ReportCtx::new("solve", args.seed);
    let (program, text) = load_program(&args.instance)?;
    ctx.content("instance", &text);
    let limits = Limits {
        time: time_limit(args.time_limit)?,
        nodes: args.node_limit,
    };
    ctx.field("time_limit", fmt_opt(args.time_limit));
    ctx.field("node_limit", fmt_opt(args.node_limit));
    let res = solve_to_optimality(&program, &limits, &SolverConfig::default())?;
    log::info!("solve finished with status {}", status_str(res.status));
    let mut body = Map::new();
    body.insert("value".into(), json!(res.value));
    body.insert("point".into(), json!(res.point));
    body.insert("status".into(), json!(status_str(res.status)));
    let summary = [
        ("value", res.value.to_string()),
        ("status", status_str(res.status).to_string()),
    ];
    ctx.finish(body, &summary, args.out.as_ref())
}

fn load_points(path: &str, k: usize, ctx: &mut ReportCtx) -> Result<(KMeansProblem, String), Failure> {
    let text = read_text(path)?;
    let set = PointSet::from_csv(&text)?;
    let problem = KMeansProblem::new(set.points, k)?;
    ctx.content("points", &text);
    ctx.field("K", k);
    Ok((problem, text))
}

pub fn kmeans_ub(args: &KmeansUbArgs) -> Result<(), Failure> {
    let mut ctx = ReportCtx::new("kmeans-ub", args.seed);
    let (problem, _) = load_points(&args.points, args.k, &mut ctx)?;
    ctx.field("replications", args.replications);
    let cl = kmeans::lloyd(&problem, args.replications, args.seed);
    log::info!("best of {} replications: sse {}", args.replications, cl.sse);
    let mut body = Map::new();
    body.insert("sse".into(), json!(cl.sse));
    body.insert("n".into(), json!(problem.n()));
    body.insert("dim".into(), json!(problem.dim()));
    body.insert("k".into(), json!(problem.k));
    // Cluster labels are reported 1-based to match the id convention.
    body.insert(
        "assignment".into(),
        json!(cl.assignment.iter().map(|a| a + 1).collect::<Vec<_>>()),
    );
    body.insert("centroids".into(), json!(cl.centroids));
    let summary = [("sse", cl.sse.to_string())];
    ctx.finish(body, &summary, args.out.as_ref())
}

// Point partition specs: "alg1:S", "alg2:blockSize", or a JSON file with
// zero-based point indices.
fn load_point_partition(
    spec: &str,
    problem: &KMeansProblem,
    warm: &kmeans::Clustering,
    seed: u64,
    ctx: &mut ReportCtx,
) -> Result<SubproblemPartition, Failure> {
    if let Some(s) = spec.strip_prefix("alg1:") {
        ctx.field("partition", spec);
        let s: usize = s.trim().parse().map_err(config_err)?;
        if s == 0 {
            return Err(Failure::Config("alg1 needs at least one block".into()));
        }
        return Ok(kmeans::det_partition(warm, s));
    }
    if let Some(bs) = spec.strip_prefix("alg2:") {
        ctx.field("partition", spec);
        let bs: usize = bs.trim().parse().map_err(config_err)?;
        if bs == 0 {
            return Err(Failure::Config("alg2 needs a positive block size".into()));
        }
        return Ok(kmeans::rand_partition(problem.n(), bs, seed));
    }
    if spec == "singletons" || spec.starts_with("rand:") {
        return Err(Failure::Config(format!(
            "partition spec {spec} applies to disjunctive programs only"
        )));
    }
    let text = read_text(spec)?;
    ctx.content("partition", &text);
    #[derive(serde::Deserialize)]
    struct BlocksJson {
        blocks: Vec<Vec<usize>>,
    }
    let parsed: BlocksJson = serde_json::from_str(&text).map_err(config_err)?;
    Ok(SubproblemPartition { blocks: parsed.blocks })
}

pub fn kmeans_lb(args: &KmeansLbArgs) -> Result<(), Failure> {
    install_thread_pool(args.threads)?;
    let mut ctx = ReportCtx::new("kmeans-lb", args.seed);
    let (problem, _) = load_points(&args.points, args.k, &mut ctx)?;
    ctx.field("replications", args.replications);
    let warm = kmeans::lloyd(&problem, args.replications, args.seed);
    let partition = load_point_partition(&args.partition, &problem, &warm, args.seed, &mut ctx)?;
    let limits = Limits {
        time: time_limit(Some(args.block_time_limit))?,
        nodes: args.node_limit,
    };
    ctx.field("block_time_limit", args.block_time_limit);
    ctx.field("node_limit", fmt_opt(args.node_limit));
    let bound = kmeans::kmeans_lower_bound(&problem, &partition, &limits)?;
    let ub = warm.sse;
    let gap = kmeans::gap_closed(bound.lb, ub)?;
    log::info!("lb {} against ub {}: gap closed {}", bound.lb, ub, gap);
    let mut body = Map::new();
    body.insert("lb".into(), json!(bound.lb));
    body.insert("ub".into(), json!(ub));
    body.insert("gap_closed".into(), json!(gap));
    body.insert("partition".into(), json!(partition.blocks));
    body.insert(
        "per_block".into(),
        json!(partition
            .blocks
            .iter()
            .zip(&bound.per_block)
            .map(|(ids, b)| json!({
                "size": ids.len(),
                "lb": b.lb,
                "ub": b.ub,
                "status": exact_status_str(b.status),
            }))
            .collect::<Vec<_>>()),
    );
    let summary = [
        ("lb", bound.lb.to_string()),
        ("ub", ub.to_string()),
        ("gap_closed", gap.to_string()),
    ];
    ctx.finish(body, &summary, args.out.as_ref())
}

pub fn export(args: &ExportArgs) -> Result<(), Failure> {
    let mut ctx = ReportCtx::new("export", args.seed);
    let (problem, _) = load_points(&args.points, args.k, &mut ctx)?;
    let format = match args.format.as_str() {
        "bigm" => MiqcpFormat::BigM,
        "hull" => MiqcpFormat::Hull,
        other => return Err(Failure::Config(format!("unknown format {other}, expected bigm or hull"))),
    };
    ctx.field("format", &args.format);
    ctx.field("symmetry", args.symmetry);
    ctx.field("nonempty", args.nonempty);
    let opts = kmeans::ExportOpts {
        symmetry: args.symmetry,
        nonempty: args.nonempty,
    };
    let ex = kmeans::export_miqcp(&problem, format, &opts);
    log::info!(
        "exported {} linear and {} quadratic rows",
        ex.stats.linear_rows,
        ex.stats.quad_rows
    );
    write_text(args.out.as_ref(), &ex.text)?;
    if args.report.is_some() {
        let mut body = Map::new();
        body.insert("format".into(), json!(args.format));
        body.insert(
            "stats".into(),
            json!({
                "binaries": ex.stats.binaries,
                "continuous": ex.stats.continuous,
                "linear_rows": ex.stats.linear_rows,
                "quad_rows": ex.stats.quad_rows,
            }),
        );
        body.insert("big_m".into(), json!(ex.big_m));
        body.insert("bounds".into(), json!(ex.bounds));
        let summary = [
            ("binaries", ex.stats.binaries.to_string()),
            ("linear_rows", ex.stats.linear_rows.to_string()),
            ("quad_rows", ex.stats.quad_rows.to_string()),
        ];
        ctx.finish(body, &summary, args.report.as_ref())?;
    }
    Ok(())
}
